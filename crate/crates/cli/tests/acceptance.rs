//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semctx_cli::run::{run_bandit_sweep, run_icl, BanditOutcome};
use semctx_cli::{execute, BackendKind, Experiment, FileConfig, Overrides, RunConfig};
use semctx_core::embedding::EmbeddingProvider;
use semctx_core::features::Layout;
use semctx_core::fireact::{evaluate_strategies, recall_at_k, synthetic_corpus, Strategy};
use semctx_core::icl::{build_system_prompt, build_user_message, ScenarioConfig, ScenarioId};
use semctx_core::numerics::DesignState;
use semctx_core::policy::PolicyBackend;
use semctx_core::presentation::ContextMode;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, title: &str, outcome: Result<String, String>) {
        match outcome {
            Ok(detail) => println!("PASS {id} {title}: {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL {id} {title}: {detail}");
            }
        }
    }
}

fn verdict(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

fn sweep(experiment: Experiment) -> BanditOutcome {
    let cfg = RunConfig::defaults(experiment).expect("default config");
    run_bandit_sweep(&cfg).expect("bandit sweep")
}

fn final_mean(outcome: &BanditOutcome, layout: Layout, alpha: f64) -> f64 {
    mean(&outcome.find(layout, alpha).expect("series").finals)
}

fn ac1(exp1: &BanditOutcome) -> Result<String, String> {
    let sc = final_mean(exp1, Layout::Semantic, 0.3);
    let oh = final_mean(exp1, Layout::OneHot, 0.3);
    let ratio = oh / sc.max(f64::MIN_POSITIVE);
    verdict(
        sc <= 50.0 && oh >= 300.0 && ratio >= 10.0,
        format!("SC mean {sc:.3} (<= 50), OneHot mean {oh:.1} (>= 300), ratio {ratio:.0} (>= 10)"),
    )
}

fn ac2(exp1: &BanditOutcome) -> Result<String, String> {
    let mut parts = Vec::new();
    let mut ok = true;
    for alpha in [0.3, 0.5, 1.0] {
        let sc_max = exp1.find(Layout::Semantic, alpha).unwrap().finals.iter().cloned().fold(f64::MIN, f64::max);
        let oh_min = exp1.find(Layout::OneHot, alpha).unwrap().finals.iter().cloned().fold(f64::MAX, f64::min);
        ok &= sc_max < oh_min;
        parts.push(format!("alpha {alpha}: max SC {sc_max:.2} < min OneHot {oh_min:.1}"));
    }
    verdict(ok, parts.join("; "))
}

/// Boundaries where the 250 steps after `b` add more regret than the 250 before.
fn jumps(curve: &[f64], boundaries: &[usize]) -> Vec<bool> {
    boundaries
        .iter()
        .map(|&b| curve[b + 249] - curve[b - 1] > curve[b - 1] - curve[b - 251])
        .collect()
}

fn ac3(exp2: &BanditOutcome) -> Result<String, String> {
    let sc = exp2.find(Layout::Semantic, 0.5).unwrap();
    let oh = exp2.find(Layout::OneHot, 0.5).unwrap();
    let sc_final = mean(&sc.finals);
    let oh_final = mean(&oh.finals);
    let boundaries: Vec<usize> = exp2.phases.iter().skip(1).map(|p| p.0).collect();
    let oh_jumps = jumps(&oh.curves.regret.means(), &boundaries);
    let sc_jumps = jumps(&sc.curves.regret.means(), &boundaries);
    let oh_count = oh_jumps.iter().filter(|j| **j).count();
    let sc_early = sc_jumps[0] && sc_jumps[1];
    verdict(
        boundaries == [2500, 5000, 7500] && sc_final <= 100.0 && oh_final >= 300.0 && oh_count >= 2 && !sc_early,
        format!(
            "SC mean {sc_final:.2} (<= 100), OneHot mean {oh_final:.1} (>= 300), OneHot jumps {oh_jumps:?} \
             ({oh_count}/3, need >= 2), SC jumps {sc_jumps:?} (not both of 2500/5000)"
        ),
    )
}

fn ac4(sweeps: &[&BanditOutcome]) -> Result<String, String> {
    let violations: usize = sweeps.iter().flat_map(|o| &o.series).map(|s| s.potential_violations).sum();
    let segments: usize = sweeps.iter().flat_map(|o| &o.series).map(|s| s.potential_segments).sum();
    verdict(violations == 0, format!("{violations} violations over {segments} design lifetimes"))
}

fn ac5() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let dim = 2 + (seed % 7) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut design = DesignState::new(dim, 1.0).unwrap();
        let mut oracle = common::NaiveRidge::new(dim, 1.0);
        for _ in 0..500 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = f64::from(u8::from(rng.random_bool(0.5)));
            design.rank_one_update(&x, r).unwrap();
            oracle.update(&x, r);
        }
        let direct = common::gauss_jordan_inverse(&oracle.a);
        for i in 0..dim {
            for j in 0..dim {
                worst = worst.max((design.a_inverse()[(i, j)] - direct[i][j]).abs());
            }
        }
    }
    verdict(worst <= 1e-8, format!("max entry error {worst:.2e} (<= 1e-8) over 100 seeds x 500 steps"))
}

fn ac6() -> Result<String, String> {
    let corpus = synthetic_corpus(200, 50, 0).unwrap();
    let provider = EmbeddingProvider::default();
    let ks = [1, 2, 5, 10, 50];
    let recalls: Vec<f64> = ks.iter().map(|&k| recall_at_k(&corpus, &provider, k).unwrap()).collect();
    let a = recalls.windows(2).all(|w| w[1] >= w[0]);

    let oracle = evaluate_strategies(&corpus, &provider, 5, &[ContextMode::IndexOnly], &PolicyBackend::OracleStub).unwrap();
    let row = |rows: &[semctx_core::fireact::AccuracyRow], s| rows.iter().find(|r| r.strategy == s).unwrap().clone();
    let top5 = row(&oracle, Strategy::TopK);
    let top1 = row(&oracle, Strategy::Top1);
    let b = top5.accuracy == recalls[2];
    let c = top5.accuracy >= top1.accuracy;

    let random = evaluate_strategies(
        &corpus,
        &provider,
        5,
        &[ContextMode::IndexOnly],
        &PolicyBackend::RandomStub { seed: 0 },
    )
    .unwrap();
    let all = row(&random, Strategy::All);
    let p = 1.0 / all.k as f64;
    let sd = (p * (1.0 - p) / all.n_queries as f64).sqrt();
    let d = (all.accuracy - p).abs() <= 3.0 * sd;
    verdict(
        a && b && c && d,
        format!(
            "(a) recall@{ks:?} = {recalls:?} nondecreasing: {a}; (b) top-5 oracle {} == recall@5 {}: {b}; \
             (c) top-5 oracle >= top-1 {}: {c}; (d) random IO over O={} accuracy {} vs 1/O = {p} within 3 sd {sd:.4}: {d}",
            top5.accuracy, recalls[2], top1.accuracy, all.k, all.accuracy
        ),
    )
}

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn ac7a() -> Result<String, String> {
    let s = ScenarioConfig::builtin(ScenarioId::FixedQueryFixedArms);
    let arms = s.active_arms(1).unwrap();
    let mut bad = Vec::new();
    for mode in ContextMode::ALL {
        if build_system_prompt(mode, &arms).unwrap() != fixture(&format!("icl_fqfa_system_{}.txt", mode.code())) {
            bad.push(format!("system/{mode}"));
        }
    }
    if build_user_message(&[], &s.queries[0].text, 1, 20) != fixture("icl_fqfa_user_turn1.txt") {
        bad.push("user/turn1".into());
    }
    verdict(bad.is_empty(), format!("4 system prompts + user message compared byte-for-byte; mismatches {bad:?}"))
}

fn change_turns(s: &ScenarioConfig) -> Vec<usize> {
    (2..=s.total_turns)
        .filter(|&t| {
            let ids = |t| s.active_arms(t).unwrap().iter().map(|a| a.id.clone()).collect::<Vec<_>>();
            ids(t) != ids(t - 1)
        })
        .collect()
}

fn ac7b() -> Result<String, String> {
    let e3 = change_turns(&ScenarioConfig::builtin(ScenarioId::FixedQueryMovingArms));
    let e4 = change_turns(&ScenarioConfig::builtin(ScenarioId::MultiQueryMovingArms));
    verdict(
        e3 == [8, 18, 28] && e4 == [9, 19],
        format!("Exp-3 arm set changes at {e3:?} (want [8, 18, 28]); Exp-4 at {e4:?} (want [9, 19])"),
    )
}

fn icl_returns(backend: BackendKind, mode: ContextMode) -> Vec<f64> {
    let flags = Overrides {
        backend: Some(backend),
        modes: Some(vec![mode]),
        scenario: Some(ScenarioId::FixedQueryFixedArms),
        runs: Some(20),
        ..Default::default()
    };
    let cfg = RunConfig::resolve(Experiment::Icl, FileConfig::default(), flags).unwrap();
    run_icl(&cfg).unwrap().remove(0).returns()
}

fn ac7c() -> Result<String, String> {
    let nd = icl_returns(BackendKind::Match, ContextMode::NameAndDescription);
    let io = icl_returns(BackendKind::Random, ContextMode::IndexOnly);
    let ci = |xs: &[f64]| {
        let h = 1.96 * sample_sd(xs) / (xs.len() as f64).sqrt();
        (mean(xs) - h, mean(xs) + h)
    };
    let (nd_lo, nd_hi) = ci(&nd);
    let (io_lo, io_hi) = ci(&io);
    verdict(
        nd.len() == 20 && io.len() == 20 && nd_lo > io_hi,
        format!(
            "match/ND mean {:.2} CI [{nd_lo:.2}, {nd_hi:.2}] vs random/IO mean {:.2} CI [{io_lo:.2}, {io_hi:.2}] over 20 trials",
            mean(&nd),
            mean(&io)
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn ac8() -> Result<String, String> {
    let cases: Vec<(Experiment, Overrides)> = vec![
        (Experiment::Exp1, Overrides { runs: Some(3), t: Some(2000), ..Default::default() }),
        (Experiment::Exp2, Overrides { runs: Some(3), t: Some(2000), ..Default::default() }),
        (Experiment::Icl, Overrides { backend: Some(BackendKind::Random), ..Default::default() }),
        (Experiment::Icl, Overrides { backend: Some(BackendKind::Match), ..Default::default() }),
        (Experiment::Fireact, Overrides { backend: Some(BackendKind::Random), ..Default::default() }),
    ];
    let mut files = 0;
    let mut differing = Vec::new();
    for (i, (experiment, flags)) in cases.into_iter().enumerate() {
        let mut snaps = Vec::new();
        for jobs in [1, 4] {
            let dir = tempfile::tempdir().unwrap();
            let flags = Overrides {
                out: Some(dir.path().to_path_buf()),
                jobs: Some(jobs),
                seed: Some(7),
                ..flags.clone()
            };
            let cfg = RunConfig::resolve(experiment, FileConfig::default(), flags).unwrap();
            execute(&cfg).unwrap();
            snaps.push(snapshot(dir.path()));
        }
        files += snaps[0].len();
        if snaps[0] != snaps[1] {
            differing.push(format!("case {i} ({experiment})"));
        }
    }
    verdict(
        differing.is_empty(),
        format!("{files} output files identical across repeated runs (1 and 4 workers); differing: {differing:?}"),
    )
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    let exp1 = sweep(Experiment::Exp1);
    let exp2 = sweep(Experiment::Exp2);
    report.check("AC1", "exp1 regret separation", ac1(&exp1));
    report.check("AC2", "exp1 alpha-sweep ordering", ac2(&exp1));
    report.check("AC3", "exp2 continual robustness", ac3(&exp2));
    report.check("AC4", "elliptical-potential invariant", ac4(&[&exp1, &exp2]));
    report.check("AC5", "incremental vs direct inverse", ac5());
    report.check("AC6", "fireact structural properties", ac6());
    report.check("AC7a", "icl golden prompts", ac7a());
    report.check("AC7b", "icl phase schedules", ac7b());
    report.check("AC7c", "icl match/ND beats random/IO", ac7c());
    report.check("AC8", "determinism", ac8());
    if report.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
