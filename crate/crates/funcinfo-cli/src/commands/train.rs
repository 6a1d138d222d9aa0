//! `funcinfo train`: fit a multilayer perceptron and write a checkpoint
//! plus its per-epoch loss trace.

use std::io::Write;

use funcinfo::data::{format_float, load_csv};
use funcinfo::model::{self, save_checkpoint, MlpModel, StoredModel, TrainConfig};
use funcinfo::ToolMeta;

use crate::config::TrainArgs;
use crate::error::CliError;

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let (cfg, meta) = args.resolve()?;
    let data = load_csv(&cfg.data)?;

    let mut widths = Vec::with_capacity(cfg.hidden.len() + 2);
    widths.push(data.dim());
    widths.extend_from_slice(&cfg.hidden);
    widths.push(data.num_classes());

    let mut mlp = MlpModel::new(&widths, cfg.seed)?;
    let trace = model::train(
        &mut mlp,
        &data,
        &TrainConfig {
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
        },
    )?;
    let accuracy = model::accuracy(&mlp, &data)?;

    save_checkpoint(&cfg.out, &StoredModel::Mlp(mlp), Some(&meta))?;
    write_loss_trace(&cfg.loss_out, &trace, &meta)?;

    println!("trained {widths:?} on {} examples", data.num_examples());
    println!("train accuracy: {accuracy}");
    println!("checkpoint: {}", cfg.out.display());
    println!("loss trace: {}", cfg.loss_out.display());
    Ok(())
}

fn write_loss_trace(
    path: &std::path::Path,
    trace: &[f64],
    meta: &ToolMeta,
) -> Result<(), CliError> {
    let mut out = Vec::new();
    writeln!(
        out,
        "# {}",
        serde_json::to_string(meta).expect("metadata is plain data")
    )?;
    writeln!(out, "epoch,mean_nll")?;
    for (epoch, loss) in trace.iter().enumerate() {
        writeln!(out, "{},{}", epoch + 1, format_float(*loss))?;
    }
    std::fs::write(path, out)?;
    Ok(())
}
