use semctx_core::embedding::EmbeddingProvider;
use semctx_core::fireact::{build_prompt, embed_catalog, format_context, Candidate, CandidateSet, ToolCatalogEntry};
use semctx_core::icl::{build_system_prompt, build_user_message, InteractionRecord, ScenarioConfig, ScenarioId};
use semctx_core::presentation::ContextMode;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn icl_system_prompts() {
    let s = ScenarioConfig::builtin(ScenarioId::FixedQueryFixedArms);
    let arms = s.active_arms(1).unwrap();
    for mode in ContextMode::ALL {
        let got = build_system_prompt(mode, &arms).unwrap();
        assert_eq!(got, fixture(&format!("icl_fqfa_system_{}.txt", mode.code())), "mode {mode}");
    }
}

#[test]
fn icl_user_messages() {
    let s = ScenarioConfig::builtin(ScenarioId::FixedQueryFixedArms);
    let q = &s.queries[0].text;
    assert_eq!(build_user_message(&[], q, 1, 20), fixture("icl_fqfa_user_turn1.txt"));
    let history = vec![
        InteractionRecord {
            turn: 1,
            query_text: q.clone(),
            chosen: Some("tool_A".into()),
            label: Some("Data Analyzer".into()),
            reward: 1,
        },
        InteractionRecord {
            turn: 2,
            query_text: q.clone(),
            chosen: Some("tool_C".into()),
            label: Some("Image Resizer".into()),
            reward: 0,
        },
    ];
    assert_eq!(build_user_message(&history, q, 3, 20), fixture("icl_fqfa_user_turn3.txt"));
}

#[test]
fn fireact_prompt() {
    let catalog = embed_catalog(
        &EmbeddingProvider::default(),
        vec![
            ToolCatalogEntry::new("Data Analyzer", "Processes numerical data arrays to find trends."),
            ToolCatalogEntry::new("Image Resizer", "Changes the dimensions of image files."),
        ],
    )
    .unwrap();
    let set = CandidateSet {
        candidates: vec![Candidate { index: 1, score: 0.9 }, Candidate { index: 0, score: 0.2 }],
    };
    let ctx = format_context(&set, &catalog, ContextMode::NameAndDescription);
    assert_eq!(build_prompt(&ctx, "shrink this photo"), fixture("fireact_nd.txt"));
}

#[test]
fn prompts_are_deterministic() {
    let s = ScenarioConfig::builtin(ScenarioId::MultiQueryMovingArms);
    for turn in [1, 9, 19, 28] {
        let arms = s.active_arms(turn).unwrap();
        for mode in ContextMode::ALL {
            assert_eq!(build_system_prompt(mode, &arms).unwrap(), build_system_prompt(mode, &arms).unwrap());
        }
    }
}
