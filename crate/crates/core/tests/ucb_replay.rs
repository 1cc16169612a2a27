mod common;

use common::NaiveRidge;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semctx_core::agents::LinUcbAgent;
use semctx_core::features::{FeatureVector, Layout};

fn random_candidates(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Vec<FeatureVector> {
    (0..k)
        .map(|_| {
            FeatureVector::from_values((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(), Layout::Semantic)
        })
        .collect()
}

fn replay(alpha: f64, seed: u64) {
    let dim = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = LinUcbAgent::new(Layout::Semantic, dim, alpha, 1.0, seed).unwrap();
    let mut oracle = NaiveRidge::new(dim, 1.0);
    for step in 0..200 {
        let cands = random_candidates(&mut rng, 4, dim);
        let theta = oracle.theta();
        let expected: Vec<f64> = cands
            .iter()
            .map(|c| {
                let x = c.values();
                let mean: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
                mean + alpha * oracle.quad(x).sqrt()
            })
            .collect();
        let decision = agent.select_action(&cands).unwrap();
        for (s, e) in decision.scores.iter().zip(&expected) {
            assert!((s.ucb - e).abs() < 1e-9, "step {step}: {} vs {e}", s.ucb);
        }
        let best = expected.iter().cloned().fold(f64::MIN, f64::max);
        assert!(expected[decision.index] >= best - 1e-9, "step {step} not an argmax");
        let x = cands[decision.index].values().to_vec();
        let r = f64::from(u8::from(rng.random_bool(0.5)));
        agent.observe(&cands[decision.index], r).unwrap();
        oracle.update(&x, r);
    }
}

#[test]
fn scores_match_direct_ridge_over_200_steps() {
    for seed in 0..5 {
        replay(0.7, seed);
    }
}

#[test]
fn zero_alpha_is_greedy() {
    for seed in 10..13 {
        replay(0.0, seed);
    }
}
