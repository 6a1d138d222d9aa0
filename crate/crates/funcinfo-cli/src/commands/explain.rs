//! `funcinfo explain`: one attribution for one example, exported as CSV
//! and optionally rendered as a graymap heatmap for image layouts.

use std::io::Write;

use funcinfo::covariance::load_covariance;
use funcinfo::data::{load_csv, load_layout, Layout};
use funcinfo::explain::{subset_contributions, write_attribution_csv, EstimatorConfig, SubsetMode};
use funcinfo::gaussian::{GaussianMeasure, Partition};
use funcinfo::model::{load_checkpoint, predict_class};

use crate::commands::{resolve_sigma_sq, Estimators};
use crate::config::{ClassTarget, ExplainArgs, Method, SubsetModeArg};
use crate::error::CliError;
use crate::pgm;

pub fn run(args: ExplainArgs) -> Result<(), CliError> {
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
    if cfg.index >= data.num_examples() {
        return Err(CliError::Config(format!(
            "example index {} out of range for {} rows",
            cfg.index,
            data.num_examples()
        )));
    }
    let x = data.features().row(cfg.index).to_owned();
    let class = match cfg.class {
        ClassTarget::Predicted => predict_class(f, &x.view())?,
        ClassTarget::Fixed(c) => {
            if c >= f.num_classes() {
                return Err(CliError::Config(format!(
                    "class {c} out of range for a {}-class model",
                    f.num_classes()
                )));
            }
            c
        }
    };

    let loaded = match &cfg.covariance {
        Some(path) => Some(load_covariance(path)?.0),
        None => None,
    };
    let est_cfg = EstimatorConfig {
        samples: cfg.samples,
        seed: cfg.seed,
        value_floor: cfg.value_floor,
        normalize_by_f: cfg.normalize,
    };
    let est = Estimators::new(
        f,
        &data,
        cfg.scheme,
        cfg.jitter,
        resolve_sigma_sq(cfg.sigma_sq, &data)?,
        est_cfg,
        loaded,
    );

    let attribution = match &cfg.subset {
        None => est.scores(cfg.method, &x, class, 0)?,
        Some(subset) => {
            if cfg.method != Method::Ours {
                return Err(CliError::Config(
                    "--subset only applies to the covariance-weighted method (ours)".into(),
                ));
            }
            let p = Partition::complementary(data.dim(), subset.clone())?;
            let cov = est.class_covariance(class)?;
            let g = GaussianMeasure::full(x.clone(), cov)?;
            let mode = match cfg.subset_mode {
                SubsetModeArg::Condition => SubsetMode::ConditionOnInput,
                SubsetModeArg::Marginalize => SubsetMode::MarginalizeOverComplement,
            };
            subset_contributions(f, class, &g, &p, &est.cfg, mode)?
        }
    };

    let scheme_tag = match cfg.method {
        Method::Ours => Some(cfg.scheme.tag()),
        _ => None,
    };
    let mut buf = Vec::new();
    write_attribution_csv(&mut buf, &attribution, scheme_tag.as_deref(), Some(&meta))?;
    std::fs::File::create(&cfg.out)?.write_all(&buf)?;
    println!(
        "method {} class {class}: wrote {} scores to {}",
        cfg.method,
        attribution.scores.len(),
        cfg.out.display()
    );
    if let Some(total) = attribution.total {
        println!("total: {total}");
    }

    if let Some(heatmap_path) = &cfg.heatmap {
        let layout_path = cfg.layout.as_ref().ok_or_else(|| {
            CliError::Config("--heatmap needs --layout describing the image geometry".into())
        })?;
        let layout = match load_layout(layout_path)? {
            Layout::Image(img) => img,
            other => {
                return Err(CliError::Config(format!(
                    "heatmaps need an image layout, got {other:?}"
                )))
            }
        };
        let bytes = pgm::render_heatmap(&attribution.scores.view(), &layout)?;
        let comment = serde_json::to_string(&meta).expect("metadata is plain data");
        pgm::write_pgm(heatmap_path, &layout, &bytes, &comment)?;
        println!("heatmap: {}", heatmap_path.display());
    }
    Ok(())
}
