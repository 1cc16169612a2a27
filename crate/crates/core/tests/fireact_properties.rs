use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semctx_core::embedding::EmbeddingProvider;
use semctx_core::fireact::{
    embed_catalog, evaluate_strategies, recall_at_k, retrieve_topk, synthetic_corpus, Strategy, ToolCatalogEntry,
};
use semctx_core::policy::PolicyBackend;
use semctx_core::presentation::ContextMode;

fn brute_force(query: &[f64], vectors: &[Vec<f64>], k: usize) -> Vec<usize> {
    let cos = |v: &[f64]| {
        let dot: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
        let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nq: f64 = query.iter().map(|a| a * a).sum::<f64>().sqrt();
        dot / (nv * nq)
    };
    let mut idx: Vec<usize> = (0..vectors.len()).collect();
    // full sort, ties to the lower index
    idx.sort_by(|&a, &b| cos(&vectors[b]).partial_cmp(&cos(&vectors[a])).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn topk_matches_brute_force(seed in any::<u64>(), k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<Vec<f64>> = (0..100).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let entries = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut e = ToolCatalogEntry::new(format!("t{i}"), "d");
                e.embedding = Some(v.clone());
                e
            })
            .collect();
        let catalog = embed_catalog(&EmbeddingProvider::default(), entries).unwrap();
        let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got: Vec<usize> = retrieve_topk(&q, &catalog, k).unwrap().candidates.iter().map(|c| c.index).collect();
        prop_assert_eq!(got, brute_force(&q, &vectors, k));
    }

    #[test]
    fn recall_nondecreasing(seed in 0u64..1000) {
        let corpus = synthetic_corpus(60, 15, seed).unwrap();
        let p = EmbeddingProvider::default();
        let mut prev = 0.0;
        for k in [1, 2, 5, 10, 60] {
            let r = recall_at_k(&corpus, &p, k).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 1.0);
    }
}

#[test]
fn oracle_topk_equals_recall_and_dominates_top1() {
    let corpus = synthetic_corpus(200, 50, 9).unwrap();
    let p = EmbeddingProvider::default();
    for k in [1, 3, 5, 10] {
        let rows = evaluate_strategies(&corpus, &p, k, &[ContextMode::IndexOnly], &PolicyBackend::OracleStub).unwrap();
        let topk = rows.iter().find(|r| r.strategy == Strategy::TopK).unwrap();
        let top1 = rows.iter().find(|r| r.strategy == Strategy::Top1).unwrap();
        assert_eq!(topk.accuracy, recall_at_k(&corpus, &p, k).unwrap());
        assert!(topk.accuracy >= top1.accuracy);
    }
}

#[test]
fn random_policy_on_small_catalog_is_near_uniform() {
    // A catalog entry names a single query, so 8-tool corpora are replicated
    // 50 times with fresh query ids to get 400 independent draws.
    let base = synthetic_corpus(8, 8, 4).unwrap();
    let mut correct = 0.0;
    for rep in 0..50 {
        let mut corpus = base.clone();
        for e in corpus.catalog.iter_mut() {
            e.ground_truth_for = e.ground_truth_for.as_ref().map(|id| format!("{id}_{rep}"));
        }
        for q in corpus.queries.iter_mut() {
            q.id = format!("{}_{rep}", q.id);
        }
        let rows = evaluate_strategies(
            &corpus,
            &EmbeddingProvider::default(),
            8,
            &[ContextMode::IndexOnly],
            &PolicyBackend::RandomStub { seed: 77 },
        )
        .unwrap();
        let all = rows.into_iter().find(|r| r.strategy == Strategy::All).unwrap();
        correct += all.accuracy * all.n_queries as f64;
    }
    let mean = correct / 400.0;
    let sd = (0.125f64 * 0.875 / 400.0).sqrt();
    assert!((mean - 0.125).abs() <= 3.0 * sd, "mean {mean}");
}
