//! Experiment orchestration and artifact export.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use semctx_core::embedding::EmbeddingProvider;
use semctx_core::features::Layout;
use semctx_core::fireact::{self, AccuracyRow, Corpus};
use semctx_core::icl::{self, ScenarioConfig, ScenarioId, TrialLog};
use semctx_core::metrics::{
    aggregate, cumulative_expected_regret, cumulative_reward, write_curves_csv, CurveSeries,
};
use semctx_core::policy::{PolicyBackend, RemoteChat};
use semctx_core::presentation::ContextMode;
use semctx_core::simulate::{run_bandit, AgentSpec};
use semctx_core::toyenv::{PhaseSchedule, ToyEnvConfig};

use crate::config::{BackendKind, Experiment, RunConfig, SYNTHETIC_QUERIES, SYNTHETIC_TOOLS};

/// One agent/alpha combination across all runs.
#[derive(Debug, Clone)]
pub struct BanditSeries {
    pub layout: Layout,
    pub alpha: f64,
    /// Final cumulative expected regret of each run.
    pub finals: Vec<f64>,
    pub curves: CurveSeries,
    pub potential_violations: usize,
    pub potential_segments: usize,
}

#[derive(Debug, Clone)]
pub struct BanditOutcome {
    pub series: Vec<BanditSeries>,
    /// `(start_t, n_tools)` per phase.
    pub phases: Vec<(usize, usize)>,
}

impl BanditOutcome {
    pub fn find(&self, layout: Layout, alpha: f64) -> Option<&BanditSeries> {
        self.series.iter().find(|s| s.layout == layout && s.alpha == alpha)
    }
}

struct RunSummary {
    regret: Vec<f64>,
    reward: Vec<f64>,
    violations: usize,
    segments: usize,
}

pub fn run_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.n_runs as u64).map(|i| cfg.base_seed.wrapping_add(i)).collect()
}

/// Every agent × alpha × run on the configured toy environment.
pub fn run_bandit_sweep(cfg: &RunConfig) -> Result<BanditOutcome> {
    let env = cfg.env.as_ref().context("bandit experiments need an environment")?;
    let combos: Vec<(Layout, f64)> = cfg
        .agents
        .iter()
        .flat_map(|&l| cfg.alphas.iter().map(move |&a| (l, a)))
        .collect();
    let seeds = run_seeds(cfg);
    let jobs: Vec<(usize, u64)> = (0..combos.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let summaries: Vec<RunSummary> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let (layout, alpha) = combos[c];
            let spec = AgentSpec {
                layout,
                alpha,
                lambda_reg: cfg.lambda_reg,
            };
            let run = run_bandit(env, spec, seed)?;
            Ok(RunSummary {
                regret: cumulative_expected_regret(&run.trace),
                reward: cumulative_reward(&run.trace).into_iter().map(|v| v as f64).collect(),
                violations: run.potential_violations(),
                segments: run.potentials.len(),
            })
        })
        .collect::<semctx_core::Result<_>>()?;

    let mut series = Vec::with_capacity(combos.len());
    for (c, chunk) in summaries.chunks(seeds.len()).enumerate() {
        let (layout, alpha) = combos[c];
        let regret: Vec<Vec<f64>> = chunk.iter().map(|r| r.regret.clone()).collect();
        let reward: Vec<Vec<f64>> = chunk.iter().map(|r| r.reward.clone()).collect();
        series.push(BanditSeries {
            layout,
            alpha,
            finals: chunk.iter().map(|r| *r.regret.last().unwrap_or(&0.0)).collect(),
            curves: CurveSeries {
                agent: layout.label().to_string(),
                alpha: Some(alpha),
                regret: aggregate(&regret)?,
                reward: aggregate(&reward)?,
            },
            potential_violations: chunk.iter().map(|r| r.violations).sum(),
            potential_segments: chunk.iter().map(|r| r.segments).sum(),
        });
    }
    Ok(BanditOutcome {
        series,
        phases: phase_table(env)?,
    })
}

fn phase_table(env: &ToyEnvConfig) -> Result<Vec<(usize, usize)>> {
    let schedule = PhaseSchedule::from_specs(&env.phases)?;
    Ok(schedule
        .phases()
        .iter()
        .map(|p| (p.start_t, p.active_tool_ids.len()))
        .collect())
}

/// Builds the policy for a scenario (remote settings follow the scenario's limits).
pub fn build_backend(cfg: &RunConfig, scenario: Option<&ScenarioConfig>) -> Result<PolicyBackend> {
    Ok(match cfg.backend {
        BackendKind::Oracle => PolicyBackend::OracleStub,
        BackendKind::Random => PolicyBackend::RandomStub { seed: cfg.base_seed },
        BackendKind::Match => PolicyBackend::SemanticMatchStub,
        BackendKind::Remote => {
            let mut remote = cfg.remote.clone().context("remote backend is not configured")?;
            if let Some(s) = scenario {
                remote.max_output_tokens = s.max_output_tokens;
                remote.temperature = s.temperature;
            }
            PolicyBackend::Remote(RemoteChat::new(remote)?)
        }
    })
}

#[derive(Debug, Clone)]
pub struct IclRun {
    pub scenario: ScenarioId,
    pub mode: ContextMode,
    pub backend: &'static str,
    pub logs: Vec<TrialLog>,
}

impl IclRun {
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.scenario, self.mode, self.backend)
    }

    pub fn returns(&self) -> Vec<f64> {
        self.logs.iter().map(|l| l.total_reward() as f64).collect()
    }
}

pub fn run_icl(cfg: &RunConfig) -> Result<Vec<IclRun>> {
    let mut out = Vec::new();
    for scenario in &cfg.scenarios {
        let backend = build_backend(cfg, Some(scenario))?;
        for &mode in &cfg.modes {
            let logs = icl::run_scenario(scenario, mode, &backend, cfg.base_seed)?;
            out.push(IclRun {
                scenario: scenario.id,
                mode,
                backend: backend.name(),
                logs,
            });
        }
    }
    Ok(out)
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    match (&cfg.catalog, &cfg.queries) {
        (Some(catalog), Some(queries)) => {
            let open = |p: &Path| File::open(p).with_context(|| format!("opening {}", p.display()));
            Ok(Corpus {
                catalog: fireact::read_catalog(BufReader::new(open(catalog)?))?,
                queries: fireact::read_queries(BufReader::new(open(queries)?))?,
            })
        }
        _ => Ok(fireact::synthetic_corpus(SYNTHETIC_TOOLS, SYNTHETIC_QUERIES, cfg.base_seed)?),
    }
}

pub fn run_fireact(cfg: &RunConfig) -> Result<Vec<AccuracyRow>> {
    let corpus = load_corpus(cfg)?;
    let provider = match &cfg.embedding {
        Some(remote) => EmbeddingProvider::remote(remote.clone())?,
        None => EmbeddingProvider::default(),
    };
    let backend = build_backend(cfg, None)?;
    Ok(fireact::evaluate_strategies(&corpus, &provider, cfg.k, &cfg.modes, &backend)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub potential_violations: usize,
    pub incomplete_trials: usize,
    pub failed_policy_calls: usize,
    pub warnings: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Artifacts<'a> {
    dir: &'a Path,
    outputs: BTreeMap<String, String>,
}

impl Artifacts<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }
}

/// Runs the configured experiment and writes its artifacts plus `manifest.json`.
pub fn execute(cfg: &RunConfig) -> Result<Manifest> {
    match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building worker pool")?
            .install(|| execute_in_pool(cfg)),
        None => execute_in_pool(cfg),
    }
}

fn execute_in_pool(cfg: &RunConfig) -> Result<Manifest> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let config = serde_json::to_value(cfg)?;
    let mut manifest = Manifest {
        experiment: cfg.experiment,
        config_sha256: sha256_hex(&serde_json::to_vec(&config)?),
        config,
        seeds: Vec::new(),
        outputs: BTreeMap::new(),
        potential_violations: 0,
        incomplete_trials: 0,
        failed_policy_calls: 0,
        warnings: Vec::new(),
    };
    let mut files = Artifacts {
        dir: &cfg.output_dir,
        outputs: BTreeMap::new(),
    };

    match cfg.experiment {
        Experiment::Exp1 | Experiment::Exp2 => {
            manifest.seeds = run_seeds(cfg);
            let outcome = run_bandit_sweep(cfg)?;
            let curves: Vec<CurveSeries> = outcome.series.iter().map(|s| s.curves.clone()).collect();
            let mut csv = Vec::new();
            write_curves_csv(&mut csv, &curves)?;
            files.write(&format!("{}_curves.csv", cfg.experiment), &csv)?;
            if cfg.experiment == Experiment::Exp2 {
                let mut phases = String::from("phase,start_t,n_tools\n");
                for (i, (start, k)) in outcome.phases.iter().enumerate() {
                    phases.push_str(&format!("{},{start},{k}\n", i + 1));
                }
                files.write("exp2_phases.csv", phases.as_bytes())?;
            }
            manifest.potential_violations = outcome.series.iter().map(|s| s.potential_violations).sum();
            if manifest.potential_violations > 0 {
                manifest
                    .warnings
                    .push(format!("{} elliptical-potential violations", manifest.potential_violations));
            }
        }
        Experiment::Icl => {
            let runs = run_icl(cfg)?;
            let mut seeds: Vec<u64> = runs
                .iter()
                .flat_map(|r| r.logs.iter().map(|l| l.seed))
                .collect();
            seeds.sort_unstable();
            seeds.dedup();
            manifest.seeds = seeds;
            let mut series = Vec::new();
            for run in &runs {
                let mut jsonl = Vec::new();
                icl::write_trial_jsonl(&mut jsonl, &run.logs)?;
                files.write(&format!("icl_{}_{}.jsonl", run.scenario, run.mode), &jsonl)?;
                let complete: Vec<_> = run.logs.iter().filter(|l| l.complete).map(|l| l.trace.clone()).collect();
                let incomplete = run.logs.len() - complete.len();
                manifest.incomplete_trials += incomplete;
                manifest.failed_policy_calls += run
                    .logs
                    .iter()
                    .flat_map(|l| &l.turns)
                    .filter(|t| t.note.is_some())
                    .count();
                for log in run.logs.iter().filter(|l| !l.complete) {
                    manifest.warnings.push(format!(
                        "{} trial {} stopped after {} turns: {}",
                        run.label(),
                        log.trial,
                        log.turns.len(),
                        log.error.as_deref().unwrap_or("unknown error")
                    ));
                }
                if complete.is_empty() {
                    manifest.warnings.push(format!("{} has no complete trial; no curve written", run.label()));
                    continue;
                }
                series.push(CurveSeries::from_traces(run.label(), None, &complete)?);
            }
            let mut csv = Vec::new();
            write_curves_csv(&mut csv, &series)?;
            files.write("icl_curves.csv", &csv)?;
        }
        Experiment::Fireact => {
            manifest.seeds = vec![cfg.base_seed];
            let rows = run_fireact(cfg)?;
            let mut csv = Vec::new();
            fireact::write_accuracy_csv(&mut csv, &rows)?;
            files.write("fireact_accuracy.csv", &csv)?;
            manifest.failed_policy_calls = rows.iter().map(|r| r.n_errors).sum();
        }
    }

    manifest.outputs = files.outputs;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    let path = cfg.output_dir.join("manifest.json");
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}
