//! Commands behind the `cpforest` binary.
//!
//! Each command is deterministic given its [`RunConfig`]; no timestamps or
//! timings are written to output files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines;
use crate::data::{self, CsvSchema, DataError};
use crate::equivalence::{self, Fault, SuiteSummary};
use crate::forest::{
    Forest, ForestParams, ForestSummary, ForestTrainer, Method, ModelError, TrainError,
};
use crate::policy_eval::{self, EvalError, EvalReport};
use crate::synth::{self, DgpConfig, SynthError, SyntheticDataset};

/// Commented template holding every default.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

pub const POLICY_LABEL: &str = "Causal-policy forest";
pub const PLUGIN_LABEL: &str = "Plug-in causal forest";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training: {0}")]
    Train(#[from] TrainError),
    #[error("verification failed: {failed} of {trials} instances")]
    Verification { failed: usize, trials: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(msg) => CliError::Config(msg),
            SynthError::Data(d) => CliError::Data(d),
        }
    }
}

impl CliError {
    /// 2 config, 3 data or model input, 4 training, 5 verification, 1 other I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Model(_) | CliError::Eval(_) => 3,
            CliError::Train(_) => 4,
            CliError::Verification { .. } => 5,
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub plugin: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { plugin: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Seed of the held-out draw.
    pub seed: u64,
    /// Held-out rows; defaults to `dgp.n`.
    pub n: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { seed: 99, n: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training threads; `0` uses every core.
    pub threads: usize,
    pub dgp: DgpConfig,
    pub forest: ForestParams,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.dgp.validate()?;
        cfg.forest
            .tree
            .validate(cfg.dgp.p)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn eval_dgp(&self) -> DgpConfig {
        self.dgp
            .with_seed(self.eval.seed)
            .with_n(self.eval.n.unwrap_or(self.dgp.n))
    }

    fn threads(&self) -> Option<usize> {
        (self.threads > 0).then_some(self.threads)
    }

    pub fn train_path(&self) -> PathBuf {
        self.output.dir.join("train.csv")
    }

    pub fn eval_path(&self) -> PathBuf {
        self.output.dir.join("eval.csv")
    }

    pub fn policy_model_path(&self) -> PathBuf {
        self.output.dir.join("policy_forest.json")
    }

    pub fn plugin_model_path(&self) -> PathBuf {
        self.output.dir.join("plugin_forest.json")
    }

    fn ensure_output_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.output.dir).map_err(|source| CliError::Io {
            path: self.output.dir.clone(),
            source,
        })
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutcome {
    pub train_path: PathBuf,
    pub eval_path: PathBuf,
    pub train_oracle_value: f64,
    pub eval_oracle_value: f64,
}

/// Writes `train.csv` and `eval.csv` with ground-truth columns.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutcome, CliError> {
    cfg.ensure_output_dir()?;
    let train = synth::generate(&cfg.dgp)?;
    let eval = synth::generate(&cfg.eval_dgp())?;
    train.write_csv(cfg.train_path())?;
    eval.write_csv(cfg.eval_path())?;
    Ok(SimulateOutcome {
        train_path: cfg.train_path(),
        eval_path: cfg.eval_path(),
        train_oracle_value: policy_eval::policy_value(&train.first_best(), &train.tau0)?,
        eval_oracle_value: policy_eval::policy_value(&eval.first_best(), &eval.tau0)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy_path: PathBuf,
    pub policy_summary: ForestSummary,
    pub plugin: Option<(PathBuf, ForestSummary)>,
}

/// Trains the causal-policy forest (and the plug-in baseline when enabled)
/// on the CSV at `data_path` and writes the model files.
pub fn cmd_train(cfg: &RunConfig, data_path: &Path) -> Result<TrainOutcome, CliError> {
    cfg.ensure_output_dir()?;
    let ds = data::load_csv(data_path, &CsvSchema::default())?;
    let trainer = ForestTrainer::new(cfg.forest).threads(cfg.threads());
    let policy = trainer.clone().method(Method::Policy).fit(&ds)?;
    policy.save(cfg.policy_model_path())?;
    let plugin = if cfg.baseline.plugin {
        let f = trainer.method(Method::Plugin).fit(&ds)?;
        f.save(cfg.plugin_model_path())?;
        Some((cfg.plugin_model_path(), f.summary()))
    } else {
        None
    };
    Ok(TrainOutcome {
        policy_path: cfg.policy_model_path(),
        policy_summary: policy.summary(),
        plugin,
    })
}

/// Writes `action,vote` per input row. For plug-in forests, and for policy
/// forests using `tau_mean`, the `vote` column holds the mean `τ̂`.
pub fn cmd_predict(
    model_path: &Path,
    input: &Path,
    output: &Path,
    aggregate: Option<crate::forest::Aggregation>,
) -> Result<usize, CliError> {
    let mut forest = Forest::load(model_path)?;
    if let Some(rule) = aggregate {
        forest = forest.with_aggregation(rule);
    }
    let xs = data::load_covariates_csv(input, &CsvSchema::default())?;
    let scores = forest.predict_scores(xs.view())?;
    let mut out = String::from("action,vote\n");
    for s in &scores {
        out.push_str(&format!("{},{}\n", u8::from(*s >= 0.0), s));
    }
    write_file(output, out)?;
    Ok(scores.len())
}

/// Builds the comparison report on the held-out CSV and writes
/// `report.csv` and `report.txt`.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    policy_model: &Path,
    plugin_model: Option<&Path>,
    eval_path: &Path,
) -> Result<EvalReport, CliError> {
    cfg.ensure_output_dir()?;
    let sd = SyntheticDataset::load_csv(eval_path)?;
    let xs = sd.base.covariates();
    let policy = Forest::load(policy_model)?.with_aggregation(cfg.forest.aggregate);
    let policy_assign = policy.predict_policies(xs)?;
    let mut methods: Vec<(&str, Vec<u8>)> = vec![(POLICY_LABEL, policy_assign)];
    if let Some(path) = plugin_model {
        let plugin = Forest::load(path)?;
        methods.insert(0, (PLUGIN_LABEL, plugin.predict_policies(xs)?));
    }
    let named: Vec<(&str, &[u8])> = methods.iter().map(|(n, a)| (*n, a.as_slice())).collect();
    let report = EvalReport::build(&sd, &named)?;
    write_file(&cfg.output.dir.join("report.csv"), report.to_csv())?;
    write_file(&cfg.output.dir.join("report.txt"), report.to_string())?;
    Ok(report)
}

/// Runs the randomized equivalence suite; any failing instance is an error.
pub fn cmd_verify_theorem(
    trials: usize,
    seed: u64,
    fault: Option<Fault>,
) -> Result<SuiteSummary, CliError> {
    let summary = equivalence::run_suite(trials, seed, fault);
    if !summary.all_passed() {
        return Err(CliError::Verification {
            failed: summary.failed,
            trials: summary.trials,
        });
    }
    Ok(summary)
}

/// Trains the plug-in baseline directly; see [`baselines::train_plugin_forest`].
pub fn train_plugin(ds: &data::Dataset, params: &ForestParams) -> Result<Forest, CliError> {
    Ok(baselines::train_plugin_forest(ds, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_template_matches_defaults() {
        assert_eq!(
            RunConfig::from_toml(DEFAULT_CONFIG).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn config_errors_map_to_code_2() {
        let err = RunConfig::from_toml("[dgp]\nepsilon = 0.7\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::from_toml("[forest]\nbogus = 1\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::from_toml("[forest.tree]\nmtry = 11\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg =
            RunConfig::from_toml("[forest]\nn_trees = 5\naggregate = \"tau_mean\"\n").unwrap();
        assert_eq!(cfg.forest.n_trees, 5);
        assert_eq!(cfg.forest.aggregate, crate::forest::Aggregation::TauMean);
        assert_eq!(cfg.dgp, DgpConfig::default());
        assert_eq!(cfg.eval_dgp().n, cfg.dgp.n);
    }

    #[test]
    fn verification_failure_code() {
        let err = cmd_verify_theorem(20, 1, Some(Fault::SignFlip)).unwrap_err();
        assert_eq!(err.exit_code(), 5);
        assert_eq!(cmd_verify_theorem(0, 1, None).unwrap().trials, 0);
    }
}
