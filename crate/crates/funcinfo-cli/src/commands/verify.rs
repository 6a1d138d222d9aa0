//! `funcinfo verify`: self-contained checks that the estimators honour the
//! theory they implement.
//!
//! Each check prints one `[pass]`/`[fail]` line with the numbers behind the
//! verdict; any failure makes the command exit nonzero. The hidden
//! `--tamper` flag negates estimated scores before the comparisons run,
//! demonstrating that the checks can actually fail.

use funcinfo::data::{generate, SyntheticSpec};
use funcinfo::eval::spearman;
use funcinfo::explain::{
    feature_contributions, fisher_independent, functional_entropy_mc, smoothgrad_sq,
    subset_contributions, Attribution, EstimatorConfig, SubsetMode,
};
use funcinfo::gaussian::{GaussianMeasure, Partition, SpdMatrix};
use funcinfo::model::{
    predict_class, train, AffineReparam, AnalyticFunction, MlpModel, TrainConfig,
};
use funcinfo::rng::{fill_standard_normal, stream_rng, uniform_index};
use ndarray::{Array1, Array2};

use crate::config::{VerifyArgs, VerifyConfig};
use crate::error::CliError;

/// Fraction of bound trials that must hold for the entropy-bound checks.
const BOUND_PASS_RATE: f64 = 0.99;
/// Relative tolerance for the closed-form exponential comparisons.
const ANALYTIC_REL_TOL: f64 = 0.05;
/// Absolute tolerance (scaled by the total) for exact algebraic identities.
const IDENTITY_TOL: f64 = 1e-10;

pub fn run(args: VerifyArgs) -> Result<(), CliError> {
    let (cfg, _meta) = args.resolve()?;
    let mut report = Report::default();

    check_analytic_entropy(&cfg, &mut report)?;
    check_exponential_equality(&cfg, &mut report)?;
    check_entropy_bound(&cfg, false, &mut report)?;
    check_entropy_bound(&cfg, true, &mut report)?;
    check_decomposition(&cfg, &mut report)?;
    check_change_of_variables(&cfg, &mut report)?;
    check_determinism(&cfg, &mut report)?;
    check_conditional_closed_form(&cfg, &mut report)?;
    check_rank_correlation(&cfg, &mut report)?;

    if report.failures == 0 {
        println!("all {} checks passed", report.total);
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "{} of {} verification checks failed",
            report.failures, report.total
        )))
    }
}

#[derive(Default)]
struct Report {
    total: usize,
    failures: usize,
}

impl Report {
    fn record(&mut self, name: &str, passed: bool, detail: String) {
        self.total += 1;
        if !passed {
            self.failures += 1;
        }
        println!("[{}] {name}: {detail}", if passed { "pass" } else { "fail" });
    }
}

/// The tamper hook: with `--tamper` every estimated score is negated, which
/// must break the decomposition, the entropy bounds, and the closed-form
/// comparisons below.
fn doctored(mut a: Attribution, cfg: &VerifyConfig) -> Attribution {
    if cfg.tamper {
        a.scores.mapv_inplace(|v| -v);
    }
    a
}

/// Information total as the sum of the per-feature scores. The checks use
/// the decomposed form so a tampered score vector cannot hide behind an
/// independently computed scalar.
fn half_total(a: &Attribution) -> f64 {
    0.5 * a.scores.sum()
}

/// Entropy of `exp(z)` under two closed-form measures: `N(0,1)` gives
/// `0.5 * exp(0.5) ~ 0.8244` and `N(1,4)` gives `2 * exp(3) ~ 40.17`.
fn check_analytic_entropy(cfg: &VerifyConfig, report: &mut Report) -> Result<(), CliError> {
    let f = AnalyticFunction::ExpSum { weights: Array1::from_elem(1, 1.0) };
    let ecfg = EstimatorConfig { samples: cfg.analytic_samples, seed: cfg.seed, ..Default::default() };

    let standard = GaussianMeasure::standard(Array1::zeros(1))?;
    let est = functional_entropy_mc(&f, 0, &standard, &ecfg)?;
    let analytic = 0.5 * 0.5f64.exp();
    let rel = (est.value - analytic).abs() / analytic;
    report.record(
        "entropy-exponential-standard",
        rel <= ANALYTIC_REL_TOL,
        format!("analytic {analytic:.4}, estimate {:.4}, rel err {rel:.4}", est.value),
    );

    let shifted = GaussianMeasure::isotropic(Array1::from_elem(1, 1.0), 4.0)?;
    let est = functional_entropy_mc(&f, 0, &shifted, &ecfg)?;
    let analytic = 2.0 * 3.0f64.exp();
    let rel = (est.value - analytic).abs() / analytic;
    report.record(
        "entropy-exponential-scaled",
        rel <= ANALYTIC_REL_TOL,
        format!("analytic {analytic:.2}, estimate {:.2}, rel err {rel:.4}", est.value),
    );
    Ok(())
}

/// For `f(z) = exp(w . z)` under `N(x, S)` the entropy bound is tight: half
/// the normalized information equals `0.5 * s2 * exp(m + s2/2)` with
/// `m = w . x` and `s2 = w' S w`.
fn check_exponential_equality(cfg: &VerifyConfig, report: &mut Report) -> Result<(), CliError> {
    let w = Array1::from_vec(vec![0.8, -0.5, 0.3]);
    let x = Array1::from_vec(vec![0.2, 0.1, -0.3]);
    let entries = Array2::from_shape_vec(
        (3, 3),
        vec![0.9, 0.2, -0.1, 0.2, 0.7, 0.15, -0.1, 0.15, 0.8],
    )
    .expect("static shape");
    let sigma = SpdMatrix::new(entries)?;

    let m = w.dot(&x);
    let s2 = w.dot(&sigma.matvec(&w.view()));
    let analytic = 0.5 * s2 * (m + 0.5 * s2).exp();

    let f = AnalyticFunction::ExpSum { weights: w };
    let g = GaussianMeasure::full(x, sigma)?;
    let ecfg = EstimatorConfig {
        samples: cfg.analytic_samples,
        seed: cfg.seed,
        normalize_by_f: true,
        ..Default::default()
    };
    let att = doctored(feature_contributions(&f, 0, &g, &ecfg)?, cfg);
    let half = half_total(&att);
    let rel = (half - analytic).abs() / analytic;
    report.record(
        "exponential-equality-case",
        rel <= ANALYTIC_REL_TOL,
        format!("analytic entropy {analytic:.4}, half information {half:.4}, rel err {rel:.4}"),
    );
    Ok(())
}

/// A fresh randomly initialized network plus a query point, drawn from the
/// per-trial stream.
fn random_trial(
    cfg: &VerifyConfig,
    trial: usize,
) -> Result<(MlpModel, Array1<f64>, usize), CliError> {
    let mut rng = stream_rng(cfg.seed, 1_000 + trial as u64);
    let d = 2 + uniform_index(&mut rng, 7);
    let classes = 3;
    let model = MlpModel::new(&[d, 10, classes], cfg.seed.wrapping_add(trial as u64))?;
    let mut x = vec![0.0; d];
    fill_standard_normal(&mut rng, &mut x);
    let class = uniform_index(&mut rng, classes);
    Ok((model, Array1::from_vec(x), class))
}

/// Random well-conditioned covariance for the dependent-measure checks.
fn random_spd(cfg: &VerifyConfig, trial: usize, d: usize) -> Result<SpdMatrix, CliError> {
    let mut rng = stream_rng(cfg.seed, 2_000 + trial as u64);
    let mut a = vec![0.0; d * d];
    fill_standard_normal(&mut rng, &mut a);
    let a = Array2::from_shape_vec((d, d), a).expect("consistent shape");
    let mut s = a.dot(&a.t()) / d as f64;
    for i in 0..d {
        s[[i, i]] += 0.1;
    }
    Ok(SpdMatrix::new(s)?)
}

/// Entropy never exceeds half the information. Checked on random small
/// networks, either under the unit-covariance measure or under random
/// dependent covariances with the density-normalized scores.
fn check_entropy_bound(
    cfg: &VerifyConfig,
    dependent: bool,
    report: &mut Report,
) -> Result<(), CliError> {
    let mut held = 0usize;
    for trial in 0..cfg.trials {
        let (model, x, class) = random_trial(cfg, trial)?;
        let ecfg = EstimatorConfig {
            samples: cfg.samples,
            seed: cfg.seed.wrapping_add(trial as u64),
            normalize_by_f: dependent,
            ..Default::default()
        };
        let (g, att) = if dependent {
            let sigma = random_spd(cfg, trial, x.len())?;
            let g = GaussianMeasure::full(x.clone(), sigma)?;
            let att = feature_contributions(&model, class, &g, &ecfg)?;
            (g, att)
        } else {
            let g = GaussianMeasure::standard(x.clone())?;
            let att = fisher_independent(&model, class, &x, &ecfg)?;
            (g, att)
        };
        let att = doctored(att, cfg);
        let ent = functional_entropy_mc(&model, class, &g, &ecfg)?;
        let slack = 3.0
            * (ent.std_error.powi(2) + (0.5 * att.total_std_error.unwrap_or(0.0)).powi(2)).sqrt();
        if half_total(&att) >= ent.value - slack {
            held += 1;
        }
    }
    let needed = (BOUND_PASS_RATE * cfg.trials as f64).ceil() as usize;
    let name = if dependent { "entropy-bound-dependent" } else { "entropy-bound-independent" };
    report.record(
        name,
        held >= needed,
        format!("bound held in {held}/{} trials (need {needed})", cfg.trials),
    );
    Ok(())
}

/// The per-feature scores must sum to the reported total exactly (same
/// arithmetic, two reduction orders), in both normalization modes.
fn check_decomposition(cfg: &VerifyConfig, report: &mut Report) -> Result<(), CliError> {
    let (model, x, class) = random_trial(cfg, 0)?;
    let sigma = random_spd(cfg, 0, x.len())?;
    let g = GaussianMeasure::full(x, sigma)?;
    let mut worst = 0.0f64;
    for normalize in [false, true] {
        let ecfg = EstimatorConfig {
            samples: cfg.samples,
            seed: cfg.seed,
            normalize_by_f: normalize,
            ..Default::default()
        };
        let att = doctored(feature_contributions(&model, class, &g, &ecfg)?, cfg);
        let total = att.total.unwrap_or(f64::NAN);
        let gap = (att.scores.sum() - total).abs() / total.abs().max(1.0);
        worst = worst.max(gap);
    }
    report.record(
        "score-decomposition",
        worst.is_finite() && worst <= IDENTITY_TOL,
        format!("worst relative gap {worst:.2e} (tolerance {IDENTITY_TOL:.0e})"),
    );
    Ok(())
}

/// Estimating under `N(x, S)` must agree with estimating the composition
/// `u -> f(x + L u)` under `N(0, I)`: both consume the same standard-normal
/// draws, so the totals agree to reduction-order noise.
fn check_change_of_variables(cfg: &VerifyConfig, report: &mut Report) -> Result<(), CliError> {
    let (model, x, class) = random_trial(cfg, 1)?;
    let d = x.len();
    let sigma = random_spd(cfg, 1, d)?;
    let factor = sigma.factor()?.clone();
    let ecfg = EstimatorConfig { samples: cfg.samples, seed: cfg.seed, ..Default::default() };

    let g_full = GaussianMeasure::full(x.clone(), sigma)?;
    let direct = feature_contributions(&model, class, &g_full, &ecfg)?;

    let reparam = AffineReparam::new(&model, x, factor)?;
    let g_std = GaussianMeasure::standard(Array1::zeros(d))?;
    let substituted = feature_contributions(&reparam, class, &g_std, &ecfg)?;

    let a = direct.total.unwrap_or(f64::NAN);
    let b = substituted.total.unwrap_or(f64::NAN);
    let gap = (a - b).abs() / a.abs().max(1.0);
    report.record(
        "change-of-variables",
        gap.is_finite() && gap <= IDENTITY_TOL,
        format!("totals {a:.6e} vs {b:.6e}, relative gap {gap:.2e}"),
    );
    Ok(())
}

/// Identical configuration and inputs must reproduce identical estimates,
/// bit for bit.
fn check_determinism(cfg: &VerifyConfig, report: &mut Report) -> Result<(), CliError> {
    let (model, x, class) = random_trial(cfg, 2)?;
    let sigma = random_spd(cfg, 2, x.len())?;
    let g = GaussianMeasure::full(x, sigma)?;
    let ecfg = EstimatorConfig { samples: cfg.samples, seed: cfg.seed, ..Default::default() };
    let first = feature_contributions(&model, class, &g, &ecfg)?;
    let second = feature_contributions(&model, class, &g, &ecfg)?;
    let same = first.scores == second.scores
        && first.std_errors == second.std_errors
        && first.total == second.total;
    report.record(
        "determinism",
        same,
        if same { "repeated run is bit-identical".into() } else { "repeated run diverged".into() },
    );
    Ok(())
}

/// Conditioning `exp(z1 + z2)` with correlated coordinates on `x2 = 0`
/// leaves a one-dimensional measure `N(0, 0.75)`, whose normalized score
/// has the closed form `0.75 * exp(0.375)`.
fn check_conditional_closed_form(cfg: &VerifyConfig, report: &mut Report) -> Result<(), CliError> {
    let f = AnalyticFunction::ExpSum { weights: Array1::from_elem(2, 1.0) };
    let entries =
        Array2::from_shape_vec((2, 2), vec![1.0, 0.5, 0.5, 1.0]).expect("static shape");
    let g = GaussianMeasure::full(Array1::zeros(2), SpdMatrix::new(entries)?)?;
    let p = Partition::complementary(2, vec![0])?;
    let ecfg = EstimatorConfig {
        samples: cfg.analytic_samples,
        seed: cfg.seed,
        normalize_by_f: true,
        ..Default::default()
    };
    let att =
        doctored(subset_contributions(&f, 0, &g, &p, &ecfg, SubsetMode::ConditionOnInput)?, cfg);
    let analytic = 0.75 * 0.375f64.exp();
    let gap = (att.scores[0] - analytic).abs();
    let slack = 3.0 * att.std_errors[0];
    report.record(
        "conditional-closed-form",
        gap <= slack,
        format!("analytic {analytic:.4}, estimate {:.4}, |gap| {gap:.2e} <= 3se {slack:.2e}", att.scores[0]),
    );
    Ok(())
}

/// With unit covariance and density normalization, our scores rank features
/// like squared average gradients; a strongly coupled covariance must break
/// that agreement.
fn check_rank_correlation(cfg: &VerifyConfig, report: &mut Report) -> Result<(), CliError> {
    let d = 10;
    let spec = SyntheticSpec::isotropic_blobs(d, 3, &[0, 1, 2], 2.0, 1.0, 300, cfg.seed)?;
    let (data, _) = generate(&spec)?;
    let mut model = MlpModel::new(&[d, 16, 3], cfg.seed)?;
    train(
        &mut model,
        &data,
        &TrainConfig { epochs: 40, learning_rate: 0.05, batch_size: 32, seed: cfg.seed },
    )?;

    // Strongly coupled covariance: every pair of features correlated at 0.9
    // with unequal variances, so the matrix-weighted scores mix coordinates.
    let mut coupled = Array2::from_elem((d, d), 0.9);
    for i in 0..d {
        coupled[[i, i]] = 1.0;
    }
    let scales = Array1::from_shape_fn(d, |i| 0.5 + 0.35 * i as f64);
    for i in 0..d {
        for j in 0..d {
            coupled[[i, j]] *= scales[i] * scales[j];
        }
    }

    let ecfg = EstimatorConfig {
        samples: cfg.samples,
        seed: cfg.seed,
        normalize_by_f: true,
        ..Default::default()
    };
    let points = 20.min(data.num_examples());
    let (mut rho_identity, mut rho_coupled) = (0.0, 0.0);
    for i in 0..points {
        let x = data.features().row(i).to_owned();
        let class = predict_class(&model, &x.view())?;

        let ours = doctored(
            feature_contributions(
                &model,
                class,
                &GaussianMeasure::standard(x.clone())?,
                &ecfg,
            )?,
            cfg,
        );
        let baseline = smoothgrad_sq(&model, class, &x, 1.0, &ecfg)?;
        let base = baseline.scores.as_slice().expect("contiguous scores");
        rho_identity += spearman(ours.scores.as_slice().expect("contiguous scores"), base)?;

        let g = GaussianMeasure::full(x, SpdMatrix::new(coupled.clone())?)?;
        let ours_coupled = doctored(feature_contributions(&model, class, &g, &ecfg)?, cfg);
        rho_coupled += spearman(ours_coupled.scores.as_slice().expect("contiguous scores"), base)?;
    }
    rho_identity /= points as f64;
    rho_coupled /= points as f64;
    report.record(
        "rank-correlation-identity",
        rho_identity > 0.9,
        format!("mean Spearman {rho_identity:.3} (need > 0.9)"),
    );
    report.record(
        "rank-correlation-coupled",
        rho_coupled < 0.6,
        format!("mean Spearman {rho_coupled:.3} (need < 0.6)"),
    );
    Ok(())
}
