//! `funcinfo evaluate`: the negative-perturbation protocol over a dataset.
//!
//! For every method, per-example attributions are computed for the ground
//! truth class and for the predicted class. Features are then masked from
//! least to most important — importance being the score magnitude, since
//! signed methods mark influence in both directions — and three curves are
//! traced per method: accuracy against the stored labels, accuracy against
//! the unmasked predictions, and consistency. The last two are the same
//! quantity by definition and the output keeps both rows as a built-in
//! cross-check.

use std::io::Write;
use std::path::Path;

use funcinfo::data::{load_csv, load_layout, LabeledDataset, Layout};
use funcinfo::eval::{
    auc, posthoc_accuracy, posthoc_consistency, score_matrix, write_curves_csv,
    write_summary_csv, Masker, PerturbationCurve, Target,
};
use funcinfo::explain::{aggregate_token_scores, EstimatorConfig};
use funcinfo::model::{load_checkpoint, predict_class, DecisionFunction};
use funcinfo::ToolMeta;
use ndarray::{Array1, Array2};

use crate::commands::{resolve_sigma_sq, Estimators};
use crate::config::{EvaluateArgs, EvaluateConfig, Method};
use crate::error::CliError;

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let (cfg, meta) = args.resolve()?;
    let stored = load_checkpoint(&cfg.model)?;
    let f = stored.as_decision_function();
    let data = load_csv(&cfg.data)?;
    if data.dim() != f.num_features() {
        return Err(CliError::Config(format!(
            "model expects {} features but the dataset has {}",
            f.num_features(),
            data.dim()
        )));
    }
    // The limit bounds which rows get attributed and masked; covariance
    // estimation still sees the whole dataset so every class keeps its
    // examples.
    let rows = cfg.limit.map_or(data.num_examples(), |l| l.min(data.num_examples()));
    if rows == 0 {
        return Err(CliError::Config("no examples to evaluate".into()));
    }

    let layout = match &cfg.layout {
        Some(p) => load_layout(p)?,
        None => Layout::Raw,
    };
    let masker = match &layout {
        Layout::Tokens(t) => Masker::ReplaceTokenRows {
            layout: *t,
            replacement: Array1::from_elem(t.dims, cfg.mask_value),
        },
        _ => Masker::ReplaceWithValue(cfg.mask_value),
    };

    let est_cfg = EstimatorConfig {
        samples: cfg.samples,
        seed: cfg.seed,
        value_floor: 1e-12,
        normalize_by_f: cfg.normalize,
    };
    let est = Estimators::new(
        f,
        &data,
        cfg.scheme,
        cfg.jitter,
        resolve_sigma_sq(cfg.sigma_sq, &data)?,
        est_cfg,
        None,
    );

    let mut curves = Vec::new();
    for &method in &cfg.methods {
        let gt = attribution_matrix(&est, method, &data, rows, &layout, ClassChoice::Label)?;
        let pred =
            attribution_matrix(&est, method, &data, rows, &layout, ClassChoice::Predicted)?;
        curves.extend(trace_method_curves(
            f,
            &data,
            rows,
            method,
            &gt,
            &pred,
            &cfg.fractions,
            &masker,
        )?);
    }

    write_with_meta(&cfg.curves_out, &meta, &cfg, |w| write_curves_csv(w, &curves))?;
    write_with_meta(&cfg.summary_out, &meta, &cfg, |w| write_summary_csv(w, &curves))?;

    println!("evaluated {} methods on {rows} examples", cfg.methods.len());
    for c in &curves {
        println!("{} / {} / {}: auc {}", c.method, c.target, c.metric, c.auc()?);
    }
    println!("curves: {}", cfg.curves_out.display());
    println!("summary: {}", cfg.summary_out.display());
    Ok(())
}

enum ClassChoice {
    Label,
    Predicted,
}

/// One score row per example, for the chosen class, aggregated to tokens
/// when the layout calls for it, and flattened to magnitudes so that the
/// masking order reflects importance rather than sign.
fn attribution_matrix(
    est: &Estimators,
    method: Method,
    data: &LabeledDataset,
    count: usize,
    layout: &Layout,
    choice: ClassChoice,
) -> Result<Array2<f64>, CliError> {
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let x = data.features().row(i).to_owned();
        let class = match choice {
            ClassChoice::Label => data.labels()[i],
            ClassChoice::Predicted => predict_class(est.f, &x.view())?,
        };
        let a = est.scores(method, &x, class, i as u64)?;
        let scores = match layout {
            Layout::Tokens(t) => aggregate_token_scores(&a.scores.view(), t)?,
            _ => a.scores,
        };
        rows.push(scores.mapv(f64::abs));
    }
    Ok(score_matrix(&rows)?)
}

#[allow(clippy::too_many_arguments)]
fn trace_method_curves(
    f: &dyn DecisionFunction,
    data: &LabeledDataset,
    count: usize,
    method: Method,
    gt_scores: &Array2<f64>,
    pred_scores: &Array2<f64>,
    fractions: &[f64],
    masker: &Masker,
) -> Result<Vec<PerturbationCurve>, CliError> {
    let features = data.features().slice(ndarray::s![..count, ..]);
    let labels = &data.labels()[..count];
    let mut acc_label = Vec::with_capacity(fractions.len());
    let mut acc_pred = Vec::with_capacity(fractions.len());
    let mut consistency = Vec::with_capacity(fractions.len());
    for &q in fractions {
        acc_label.push(posthoc_accuracy(
            f,
            &features,
            labels,
            &gt_scores.view(),
            q,
            masker,
            Target::Label,
        )?);
        acc_pred.push(posthoc_accuracy(
            f,
            &features,
            labels,
            &pred_scores.view(),
            q,
            masker,
            Target::Predicted,
        )?);
        consistency.push(posthoc_consistency(f, &features, &pred_scores.view(), q, masker)?);
    }
    let curve = |target: &str, metric: &str, values: Vec<f64>| PerturbationCurve {
        method: method.as_str().to_string(),
        target: target.to_string(),
        metric: metric.to_string(),
        fractions: fractions.to_vec(),
        values,
    };
    // AUC is validated here so a degenerate fraction grid surfaces before
    // any file is written.
    let out = vec![
        curve("label", "accuracy", acc_label),
        curve("predicted", "accuracy", acc_pred),
        curve("predicted", "consistency", consistency),
    ];
    for c in &out {
        auc(&c.fractions, &c.values)?;
    }
    Ok(out)
}

/// Writes a `#`-prefixed JSON metadata line (tool version, config hash, and
/// the protocol choices a reader needs to interpret the numbers) followed
/// by the CSV body.
fn write_with_meta(
    path: &Path,
    meta: &ToolMeta,
    cfg: &EvaluateConfig,
    body: impl FnOnce(&mut dyn Write) -> Result<(), funcinfo::eval::EvalError>,
) -> Result<(), CliError> {
    let header = serde_json::json!({
        "tool_version": meta.tool_version,
        "config_hash": meta.config_hash,
        "mask_order": "ascending score magnitude",
        "tie_break": "lower feature index",
        "anchor_fraction_zero": cfg.fractions.first() == Some(&0.0),
    });
    let mut out = Vec::new();
    writeln!(out, "# {header}")?;
    body(&mut out)?;
    std::fs::write(path, out)?;
    Ok(())
}
