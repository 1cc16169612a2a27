//! Run configuration: JSON file keys overlaid by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use semctx_core::embedding::RemoteEmbeddingConfig;
use semctx_core::features::Layout;
use semctx_core::icl::{ScenarioConfig, ScenarioId};
use semctx_core::policy::RemoteChatConfig;
use semctx_core::presentation::ContextMode;
use semctx_core::toyenv::{ToyEnvConfig, DEFAULT_T};

pub const DEFAULT_ALPHAS: [f64; 3] = [0.3, 0.5, 1.0];
pub const DEFAULT_RUNS: usize = 15;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_OUT: &str = "out";
pub const SYNTHETIC_TOOLS: usize = 200;
pub const SYNTHETIC_QUERIES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Exp1,
    Exp2,
    Icl,
    Fireact,
}

impl Experiment {
    pub fn code(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Icl => "icl",
            Experiment::Fireact => "fireact",
        }
    }

    fn is_bandit(self) -> bool {
        matches!(self, Experiment::Exp1 | Experiment::Exp2)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Oracle,
    Random,
    Match,
    Remote,
}

/// Keys accepted in the JSON config file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub t: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub agents: Option<Vec<Layout>>,
    pub modes: Option<Vec<ContextMode>>,
    pub backend: Option<BackendKind>,
    pub k: Option<usize>,
    /// Replaces the built-in toy environment.
    pub env: Option<ToyEnvConfig>,
    pub scenario: Option<ScenarioId>,
    /// Replaces built-in scenarios with the same id.
    pub scenarios: Option<Vec<ScenarioConfig>>,
    pub remote: Option<RemoteChatConfig>,
    pub embedding: Option<RemoteEmbeddingConfig>,
    pub catalog: Option<PathBuf>,
    pub queries: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Values given on the command line; `None` defers to the file, then defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub t: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub modes: Option<Vec<ContextMode>>,
    pub backend: Option<BackendKind>,
    pub k: Option<usize>,
    pub scenario: Option<ScenarioId>,
    pub catalog: Option<PathBuf>,
    pub queries: Option<PathBuf>,
}

/// Fully resolved configuration. Its JSON form is what the manifest hashes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub base_seed: u64,
    pub n_runs: usize,
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    // bandit experiments
    pub agents: Vec<Layout>,
    pub alphas: Vec<f64>,
    pub lambda_reg: f64,
    pub env: Option<ToyEnvConfig>,
    // icl and fireact
    pub modes: Vec<ContextMode>,
    pub backend: BackendKind,
    pub scenarios: Vec<ScenarioConfig>,
    pub remote: Option<RemoteChatConfig>,
    pub k: usize,
    pub embedding: Option<RemoteEmbeddingConfig>,
    pub catalog: Option<PathBuf>,
    pub queries: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for `experiment` with nothing overridden.
    pub fn defaults(experiment: Experiment) -> Result<Self> {
        Self::resolve(experiment, FileConfig::default(), Overrides::default())
    }

    pub fn resolve(experiment: Experiment, file: FileConfig, flags: Overrides) -> Result<Self> {
        let bandit = experiment.is_bandit();
        let reject = |given: bool, flag: &str| -> Result<()> {
            if given {
                bail!("`{flag}` does not apply to {experiment}");
            }
            Ok(())
        };
        if bandit {
            reject(flags.modes.is_some() || file.modes.is_some(), "mode")?;
            reject(flags.backend.is_some() || file.backend.is_some(), "backend")?;
            reject(flags.k.is_some() || file.k.is_some(), "k")?;
            reject(flags.scenario.is_some() || file.scenario.is_some(), "scenario")?;
            reject(flags.catalog.is_some() || file.catalog.is_some(), "catalog")?;
        } else {
            reject(flags.alpha.is_some() || file.alpha.is_some(), "alpha")?;
            reject(flags.t.is_some() || file.t.is_some(), "t")?;
            reject(flags.lambda.is_some() || file.lambda.is_some(), "lambda")?;
            reject(file.env.is_some(), "env")?;
            reject(file.agents.is_some(), "agents")?;
        }
        if experiment == Experiment::Fireact {
            reject(flags.runs.is_some() || file.runs.is_some(), "runs")?;
        }
        if experiment != Experiment::Icl {
            reject(flags.scenario.is_some() || file.scenario.is_some(), "scenario")?;
        }
        if experiment != Experiment::Fireact {
            reject(flags.k.is_some() || file.k.is_some(), "k")?;
            reject(flags.catalog.is_some() || file.catalog.is_some(), "catalog")?;
            reject(flags.queries.is_some() || file.queries.is_some(), "queries")?;
        }

        let alphas = flags.alpha.or(file.alpha).unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
        if alphas.is_empty() || alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            bail!("alpha values must be finite and >= 0, got {alphas:?}");
        }
        let lambda_reg = flags.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA);
        if !(lambda_reg.is_finite() && lambda_reg > 0.0) {
            bail!("lambda must be > 0, got {lambda_reg}");
        }
        let runs = flags.runs.or(file.runs);
        if runs == Some(0) {
            bail!("--runs must be at least 1");
        }
        let t = flags.t.or(file.t);
        if t == Some(0) {
            bail!("--t must be at least 1");
        }
        let env = match (experiment, file.env, t) {
            (Experiment::Exp1 | Experiment::Exp2, Some(_), Some(_)) => {
                bail!("--t cannot be combined with an explicit env in the config file")
            }
            (_, Some(env), None) => Some(env),
            (Experiment::Exp1, None, t) => Some(ToyEnvConfig::static_multi_context(t.unwrap_or(DEFAULT_T))),
            (Experiment::Exp2, None, t) => {
                let total = t.unwrap_or(DEFAULT_T);
                if total < 4 {
                    bail!("exp2 needs --t of at least 4 (four phases)");
                }
                Some(ToyEnvConfig::continual(total / 4))
            }
            _ => None,
        };
        if let Some(env) = &env {
            env.validate().context("invalid env")?;
        }

        let scenario_filter = flags.scenario.or(file.scenario);
        let mut scenarios: Vec<ScenarioConfig> = if experiment == Experiment::Icl {
            ScenarioId::ALL
                .iter()
                .filter(|id| scenario_filter.is_none_or(|f| f == **id))
                .map(|id| ScenarioConfig::builtin(*id))
                .collect()
        } else {
            Vec::new()
        };
        for custom in file.scenarios.unwrap_or_default() {
            if let Some(slot) = scenarios.iter_mut().find(|s| s.id == custom.id) {
                *slot = custom;
            }
        }
        for s in &mut scenarios {
            if let Some(n) = runs {
                s.trials = n;
            }
            s.validate().with_context(|| format!("invalid scenario {}", s.id))?;
        }

        let backend = flags.backend.or(file.backend).unwrap_or(BackendKind::Match);
        let remote = match backend {
            BackendKind::Remote => {
                let cfg = file.remote.unwrap_or_default().with_env();
                cfg.validate()?;
                Some(cfg)
            }
            _ => None,
        };
        let k = flags.k.or(file.k).unwrap_or(semctx_core::fireact::DEFAULT_K);
        if k == 0 {
            bail!("--k must be at least 1");
        }
        let catalog = flags.catalog.or(file.catalog);
        let queries = flags.queries.or(file.queries);
        if catalog.is_some() != queries.is_some() {
            bail!("--catalog and --queries must be given together");
        }
        let jobs = flags.jobs.or(file.jobs);
        if jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }

        Ok(Self {
            experiment,
            base_seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            n_runs: runs.unwrap_or(DEFAULT_RUNS),
            jobs,
            output_dir: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            agents: file.agents.unwrap_or_else(|| vec![Layout::Semantic, Layout::OneHot]),
            alphas: if bandit { alphas } else { Vec::new() },
            lambda_reg,
            env,
            modes: if bandit {
                Vec::new()
            } else {
                flags.modes.or(file.modes).unwrap_or_else(|| ContextMode::ALL.to_vec())
            },
            backend,
            scenarios,
            remote,
            k,
            embedding: file.embedding,
            catalog,
            queries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_protocol() {
        let c = RunConfig::defaults(Experiment::Exp1).unwrap();
        assert_eq!(c.alphas, vec![0.3, 0.5, 1.0]);
        assert_eq!(c.n_runs, 15);
        assert_eq!(c.lambda_reg, 1.0);
        assert_eq!(c.env.as_ref().unwrap().phases[0].steps, 10_000);
        let c = RunConfig::defaults(Experiment::Exp2).unwrap();
        assert_eq!(c.env.as_ref().unwrap().phases.len(), 4);
        assert!(c.env.as_ref().unwrap().phases.iter().all(|p| p.steps == 2500));
        let c = RunConfig::defaults(Experiment::Icl).unwrap();
        assert_eq!(c.scenarios.len(), 4);
        assert_eq!(c.modes.len(), 4);
    }

    #[test]
    fn flags_beat_file() {
        let file: FileConfig = serde_json::from_str(r#"{"runs": 3, "alpha": [0.1], "seed": 9}"#).unwrap();
        let flags = Overrides {
            runs: Some(2),
            ..Default::default()
        };
        let c = RunConfig::resolve(Experiment::Exp1, file, flags).unwrap();
        assert_eq!((c.n_runs, c.alphas.clone(), c.base_seed), (2, vec![0.1], 9));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = |file: &str, flags: Overrides, exp| {
            let file: FileConfig = serde_json::from_str(file).unwrap();
            RunConfig::resolve(exp, file, flags).is_err()
        };
        assert!(bad(r#"{"runs": 0}"#, Overrides::default(), Experiment::Exp1));
        assert!(bad(r#"{"alpha": [-1]}"#, Overrides::default(), Experiment::Exp1));
        assert!(bad("{}", Overrides { k: Some(3), ..Default::default() }, Experiment::Exp1));
        assert!(bad("{}", Overrides { alpha: Some(vec![0.3]), ..Default::default() }, Experiment::Icl));
        assert!(bad(r#"{"lambda": 0}"#, Overrides::default(), Experiment::Exp2));
        assert!(serde_json::from_str::<FileConfig>(r#"{"bogus": 1}"#).is_err());
        // a remote backend needs at least a model name from the config file
        assert!(bad("{}", Overrides { backend: Some(BackendKind::Remote), ..Default::default() }, Experiment::Icl));
    }

    #[test]
    fn scenario_filter_and_trials() {
        let flags = Overrides {
            scenario: Some(ScenarioId::FixedQueryMovingArms),
            runs: Some(2),
            ..Default::default()
        };
        let c = RunConfig::resolve(Experiment::Icl, FileConfig::default(), flags).unwrap();
        assert_eq!(c.scenarios.len(), 1);
        assert_eq!(c.scenarios[0].trials, 2);
    }
}
