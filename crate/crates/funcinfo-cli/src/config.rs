//! Flag and config-file handling.
//!
//! Every command accepts `--config <file>` pointing at a TOML file with a
//! section named after the command; explicit flags override file values,
//! which override built-in defaults. The seed additionally falls back to
//! the `FUNCINFO_SEED` environment variable (the only setting read from
//! the environment). Each command's fully resolved parameter set is
//! serialized and hashed, and the first 16 hex characters of that digest
//! travel in every output file's metadata header, so a result can always
//! be traced to the exact configuration that produced it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use funcinfo::covariance::{CovarianceScheme, DEFAULT_JITTER};
use funcinfo::ToolMeta;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Attribution method selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Covariance-weighted gradient scores (the in-house method).
    Ours,
    Smoothgrad,
    SmoothgradSq,
    Vargrad,
    Random,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Smoothgrad => "smoothgrad",
            Method::SmoothgradSq => "smoothgrad_sq",
            Method::Vargrad => "vargrad",
            Method::Random => "random",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ours" => Ok(Method::Ours),
            "smoothgrad" => Ok(Method::Smoothgrad),
            "smoothgrad_sq" => Ok(Method::SmoothgradSq),
            "vargrad" => Ok(Method::Vargrad),
            "random" => Ok(Method::Random),
            other => Err(format!(
                "unknown method {other:?} (expected ours, smoothgrad, smoothgrad_sq, vargrad or random)"
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which class an attribution explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassTarget {
    /// The model's own argmax on the unmasked example.
    Predicted,
    Fixed(usize),
}

impl FromStr for ClassTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "predicted" {
            return Ok(ClassTarget::Predicted);
        }
        s.parse::<usize>()
            .map(ClassTarget::Fixed)
            .map_err(|_| format!("class must be an index or \"predicted\", got {s:?}"))
    }
}

impl fmt::Display for ClassTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassTarget::Predicted => f.write_str("predicted"),
            ClassTarget::Fixed(c) => write!(f, "{c}"),
        }
    }
}

impl Serialize for ClassTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|e| CliError::Config(format!("bad {what} entry {p:?}: {e}")))
        })
        .collect()
}

fn env_seed() -> Option<u64> {
    std::env::var("FUNCINFO_SEED").ok().and_then(|v| v.parse().ok())
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::Config(format!("missing required setting {flag} (flag or config file)"))
    })
}

fn require_file(path: PathBuf, what: &str) -> Result<PathBuf, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{what} {} does not exist or is not a file",
            path.display()
        )));
    }
    Ok(path)
}

/// First 16 hex characters of the SHA-256 of the resolved config, prefixed
/// with the command name so identical parameter sets of different commands
/// hash apart.
fn config_hash<T: Serialize>(command: &str, resolved: &T) -> String {
    let payload = serde_json::to_string(&serde_json::json!({
        "command": command,
        "config": resolved,
    }))
    .expect("resolved configs are plain data");
    let digest = Sha256::digest(payload.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

pub fn tool_meta<T: Serialize>(command: &str, resolved: &T) -> ToolMeta {
    ToolMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(command, resolved),
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", p.display()))
            })?;
            toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("malformed config {}: {e}", p.display())))
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    explain: ExplainSection,
    #[serde(default)]
    evaluate: EvaluateSection,
    #[serde(default)]
    verify: VerifySection,
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct TrainArgs {
    /// TOML config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training dataset CSV (features..., integer label).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss-trace CSV output path (defaults next to the checkpoint).
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
    /// Comma-separated hidden layer widths, e.g. 32,16.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed (default also readable from FUNCINFO_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    loss_out: Option<PathBuf>,
    hidden: Option<Vec<usize>>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct TrainConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub loss_out: PathBuf,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainArgs {
    pub fn resolve(self) -> Result<(TrainConfig, ToolMeta), CliError> {
        let file = load_file_config(self.config.as_deref())?.train;
        let data = require(self.data.or(file.data), "--data")?;
        let data = require_file(data, "dataset")?;
        let out = self.out.or(file.out).unwrap_or_else(|| PathBuf::from("model.json"));
        let loss_out = self
            .loss_out
            .or(file.loss_out)
            .unwrap_or_else(|| out.with_extension("loss.csv"));
        let hidden = match self.hidden {
            Some(s) => parse_list(&s, "hidden width")?,
            None => file.hidden.unwrap_or_else(|| vec![16]),
        };
        let cfg = TrainConfig {
            data,
            out,
            loss_out,
            hidden,
            epochs: self.epochs.or(file.epochs).unwrap_or(30),
            learning_rate: self.learning_rate.or(file.learning_rate).unwrap_or(0.1),
            batch_size: self.batch_size.or(file.batch_size).unwrap_or(32),
            seed: self.seed.or(file.seed).or_else(env_seed).unwrap_or(0),
        };
        let meta = tool_meta("train", &cfg);
        Ok((cfg, meta))
    }
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ExplainArgs {
    /// TOML config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model checkpoint to explain.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset CSV providing the example and the covariance pool.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Row index of the example to explain.
    #[arg(long)]
    pub index: Option<usize>,
    /// ours | smoothgrad | smoothgrad_sq | vargrad | random.
    #[arg(long)]
    pub method: Option<String>,
    /// Class to explain: an index or "predicted".
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed (default also readable from FUNCINFO_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Covariance scheme tag: full | diagonal | shared-block:b=B,g=G |
    /// identity:sigma_sq=V.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Relative diagonal jitter for covariance estimation.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Load the covariance from this file instead of estimating it.
    #[arg(long)]
    pub covariance: Option<PathBuf>,
    /// Isotropic noise variance for the gradient baselines
    /// (default 0.01 * feature range squared).
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    /// Divide per-draw summands by max(f, value floor).
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub normalize: bool,
    #[arg(long)]
    pub value_floor: Option<f64>,
    /// Restrict scoring to these feature indices (comma-separated).
    #[arg(long)]
    pub subset: Option<String>,
    /// How the complement of --subset is treated: condition | marginalize.
    #[arg(long)]
    pub subset_mode: Option<String>,
    /// Attribution CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also render a portable-graymap heatmap (image layouts only).
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// Layout sidecar describing the feature geometry.
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainSection {
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    index: Option<usize>,
    method: Option<String>,
    class: Option<String>,
    samples: Option<usize>,
    seed: Option<u64>,
    scheme: Option<String>,
    jitter: Option<f64>,
    covariance: Option<PathBuf>,
    sigma_sq: Option<f64>,
    normalize: Option<bool>,
    value_floor: Option<f64>,
    subset: Option<Vec<usize>>,
    subset_mode: Option<String>,
    out: Option<PathBuf>,
    heatmap: Option<PathBuf>,
    layout: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetModeArg {
    Condition,
    Marginalize,
}

impl FromStr for SubsetModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "condition" => Ok(SubsetModeArg::Condition),
            "marginalize" => Ok(SubsetModeArg::Marginalize),
            other => Err(format!(
                "unknown subset mode {other:?} (expected condition or marginalize)"
            )),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ExplainConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    pub index: usize,
    pub method: Method,
    pub class: ClassTarget,
    pub samples: usize,
    pub seed: u64,
    #[serde(serialize_with = "serialize_scheme")]
    pub scheme: CovarianceScheme,
    pub jitter: f64,
    pub covariance: Option<PathBuf>,
    pub sigma_sq: Option<f64>,
    pub normalize: bool,
    pub value_floor: f64,
    pub subset: Option<Vec<usize>>,
    pub subset_mode: SubsetModeArg,
    pub out: PathBuf,
    pub heatmap: Option<PathBuf>,
    pub layout: Option<PathBuf>,
}

fn serialize_scheme<S: serde::Serializer>(
    scheme: &CovarianceScheme,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.serialize_str(&scheme.tag())
}

fn parse_scheme(s: &str) -> Result<CovarianceScheme, CliError> {
    s.parse::<CovarianceScheme>().map_err(|e| CliError::Config(e.to_string()))
}

impl ExplainArgs {
    pub fn resolve(self) -> Result<(ExplainConfig, ToolMeta), CliError> {
        let file = load_file_config(self.config.as_deref())?.explain;
        let model = require_file(require(self.model.or(file.model), "--model")?, "model")?;
        let data = require_file(require(self.data.or(file.data), "--data")?, "dataset")?;
        let method = match self.method.or(file.method) {
            Some(m) => m.parse::<Method>().map_err(CliError::Config)?,
            None => Method::Ours,
        };
        let class = match self.class.or(file.class) {
            Some(c) => c.parse::<ClassTarget>().map_err(CliError::Config)?,
            None => ClassTarget::Predicted,
        };
        let scheme = parse_scheme(
            &self.scheme.or(file.scheme).unwrap_or_else(|| "full".to_string()),
        )?;
        let subset = match self.subset {
            Some(s) => Some(parse_list(&s, "subset index")?),
            None => file.subset,
        };
        let subset_mode = match self.subset_mode.or(file.subset_mode) {
            Some(m) => m.parse::<SubsetModeArg>().map_err(CliError::Config)?,
            None => SubsetModeArg::Condition,
        };
        let covariance = match self.covariance.or(file.covariance) {
            Some(p) => Some(require_file(p, "covariance file")?),
            None => None,
        };
        let cfg = ExplainConfig {
            model,
            data,
            index: self.index.or(file.index).unwrap_or(0),
            method,
            class,
            samples: self.samples.or(file.samples).unwrap_or(64),
            seed: self.seed.or(file.seed).or_else(env_seed).unwrap_or(0),
            scheme,
            jitter: self.jitter.or(file.jitter).unwrap_or(DEFAULT_JITTER),
            covariance,
            sigma_sq: self.sigma_sq.or(file.sigma_sq),
            normalize: self.normalize || file.normalize.unwrap_or(false),
            value_floor: self.value_floor.or(file.value_floor).unwrap_or(1e-12),
            subset,
            subset_mode,
            out: self.out.or(file.out).unwrap_or_else(|| PathBuf::from("attribution.csv")),
            heatmap: self.heatmap.or(file.heatmap),
            layout: self.layout.or(file.layout),
        };
        let meta = tool_meta("explain", &cfg);
        Ok((cfg, meta))
    }
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct EvaluateArgs {
    /// TOML config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated methods to evaluate.
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated masking fractions in [0, 1], strictly increasing.
    #[arg(long)]
    pub fractions: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed (default also readable from FUNCINFO_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Covariance scheme tag for the in-house method.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Isotropic noise variance for the gradient baselines.
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    /// Divide per-draw summands by max(f, value floor).
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub normalize: bool,
    /// Replacement value for masked features (or token rows).
    #[arg(long)]
    pub mask_value: Option<f64>,
    /// Evaluate only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Layout sidecar; token layouts switch to whole-token masking.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Long-form curve CSV output path.
    #[arg(long)]
    pub curves_out: Option<PathBuf>,
    /// Per-method AUC summary CSV output path.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateSection {
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    methods: Option<Vec<String>>,
    fractions: Option<Vec<f64>>,
    samples: Option<usize>,
    seed: Option<u64>,
    scheme: Option<String>,
    jitter: Option<f64>,
    sigma_sq: Option<f64>,
    normalize: Option<bool>,
    mask_value: Option<f64>,
    limit: Option<usize>,
    layout: Option<PathBuf>,
    curves_out: Option<PathBuf>,
    summary_out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct EvaluateConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    pub methods: Vec<Method>,
    pub fractions: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    #[serde(serialize_with = "serialize_scheme")]
    pub scheme: CovarianceScheme,
    pub jitter: f64,
    pub sigma_sq: Option<f64>,
    pub normalize: bool,
    pub mask_value: f64,
    pub limit: Option<usize>,
    pub layout: Option<PathBuf>,
    pub curves_out: PathBuf,
    pub summary_out: PathBuf,
}

impl EvaluateArgs {
    pub fn resolve(self) -> Result<(EvaluateConfig, ToolMeta), CliError> {
        let file = load_file_config(self.config.as_deref())?.evaluate;
        let model = require_file(require(self.model.or(file.model), "--model")?, "model")?;
        let data = require_file(require(self.data.or(file.data), "--data")?, "dataset")?;
        let methods: Vec<Method> = match self.methods {
            Some(s) => parse_list::<Method>(&s, "method")
                .map_err(|e| CliError::Config(e.to_string()))?,
            None => match file.methods {
                Some(list) => list
                    .iter()
                    .map(|m| m.parse::<Method>().map_err(CliError::Config))
                    .collect::<Result<_, _>>()?,
                None => vec![
                    Method::Ours,
                    Method::Smoothgrad,
                    Method::SmoothgradSq,
                    Method::Vargrad,
                    Method::Random,
                ],
            },
        };
        if methods.is_empty() {
            return Err(CliError::Config("need at least one method".into()));
        }
        let fractions = match self.fractions {
            Some(s) => parse_list::<f64>(&s, "fraction")?,
            None => file.fractions.unwrap_or_else(funcinfo::eval::default_fractions),
        };
        let scheme = parse_scheme(
            &self.scheme.or(file.scheme).unwrap_or_else(|| "full".to_string()),
        )?;
        let cfg = EvaluateConfig {
            model,
            data,
            methods,
            fractions,
            samples: self.samples.or(file.samples).unwrap_or(64),
            seed: self.seed.or(file.seed).or_else(env_seed).unwrap_or(0),
            scheme,
            jitter: self.jitter.or(file.jitter).unwrap_or(DEFAULT_JITTER),
            sigma_sq: self.sigma_sq.or(file.sigma_sq),
            normalize: self.normalize || file.normalize.unwrap_or(false),
            mask_value: self.mask_value.or(file.mask_value).unwrap_or(0.0),
            limit: self.limit.or(file.limit),
            layout: self.layout.or(file.layout),
            curves_out: self
                .curves_out
                .or(file.curves_out)
                .unwrap_or_else(|| PathBuf::from("curves.csv")),
            summary_out: self
                .summary_out
                .or(file.summary_out)
                .unwrap_or_else(|| PathBuf::from("summary.csv")),
        };
        let meta = tool_meta("evaluate", &cfg);
        Ok((cfg, meta))
    }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct VerifyArgs {
    /// TOML config file; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed (default also readable from FUNCINFO_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trials for the entropy-bound checks.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Monte-Carlo samples per trial.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Monte-Carlo samples for the closed-form exponential checks.
    #[arg(long)]
    pub analytic_samples: Option<usize>,
    /// Test hook: negate attribution scores to prove the checks can fail.
    #[arg(long, hide = true, action = clap::ArgAction::SetTrue)]
    pub tamper: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifySection {
    seed: Option<u64>,
    trials: Option<usize>,
    samples: Option<usize>,
    analytic_samples: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub trials: usize,
    pub samples: usize,
    pub analytic_samples: usize,
    pub tamper: bool,
}

impl VerifyArgs {
    pub fn resolve(self) -> Result<(VerifyConfig, ToolMeta), CliError> {
        let file = load_file_config(self.config.as_deref())?.verify;
        let cfg = VerifyConfig {
            seed: self.seed.or(file.seed).or_else(env_seed).unwrap_or(0),
            trials: self.trials.or(file.trials).unwrap_or(100),
            samples: self.samples.or(file.samples).unwrap_or(4000),
            analytic_samples: self.analytic_samples.or(file.analytic_samples).unwrap_or(200_000),
            tamper: self.tamper,
        };
        let meta = tool_meta("verify", &cfg);
        Ok((cfg, meta))
    }
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct CompareArgs {
    /// First attribution CSV.
    #[arg(long)]
    pub left: PathBuf,
    /// Second attribution CSV.
    #[arg(long)]
    pub right: PathBuf,
}
