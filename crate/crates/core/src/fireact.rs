//! Filter, reason, act: retrieve top-k tools by embedding similarity, then let
//! a policy choose among them under a context mode.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embedding::{cosine, EmbeddingProvider};
use crate::error::{domain, Error, Result};
use crate::policy::{PolicyBackend, PolicyRequest, ResponseFormat};
use crate::presentation::{offer, parse_index, ContextMode};
use crate::seeding::{fnv1a, rng_for, Stream};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCatalogEntry {
    pub name: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_for: Option<String>,
    #[serde(skip)]
    pub embedding: Option<Vec<f64>>,
}

impl ToolCatalogEntry {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            ground_truth_for: None,
            embedding: None,
        }
    }

    /// The text that gets embedded.
    pub fn embedding_text(&self) -> String {
        format!("{}: {}", self.name, self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusQuery {
    pub id: String,
    pub text: String,
}

/// A catalog whose entries all carry embeddings of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCatalog {
    entries: Vec<ToolCatalogEntry>,
    dim: usize,
}

impl EmbeddedCatalog {
    pub fn entries(&self) -> &[ToolCatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn vector(&self, i: usize) -> &[f64] {
        self.entries[i].embedding.as_deref().expect("embedded catalog entry")
    }
}

/// Embeds every entry (in parallel) and checks that dimensions agree.
pub fn embed_catalog(provider: &EmbeddingProvider, entries: Vec<ToolCatalogEntry>) -> Result<EmbeddedCatalog> {
    if entries.is_empty() {
        return Err(domain("catalog is empty"));
    }
    if let Some(e) = entries.iter().find(|e| e.name.trim().is_empty()) {
        return Err(domain(format!("catalog entry with empty name: {:?}", e.description)));
    }
    let vectors: Vec<Vec<f64>> = entries
        .par_iter()
        .map(|e| match &e.embedding {
            Some(v) => Ok(v.clone()),
            None => provider.embed(&e.embedding_text()),
        })
        .collect::<Result<_>>()?;
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(domain("catalog embeddings differ in dimension"));
    }
    let entries = entries
        .into_iter()
        .zip(vectors)
        .map(|(mut e, v)| {
            e.embedding = Some(v);
            e
        })
        .collect();
    Ok(EmbeddedCatalog { entries, dim })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Position in the catalog.
    pub index: usize,
    pub score: f64,
}

/// Candidates in descending score order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn position_of(&self, catalog_index: usize) -> Option<usize> {
        self.candidates.iter().position(|c| c.index == catalog_index)
    }
}

/// The `k` entries with the highest cosine similarity; equal scores keep catalog order.
pub fn retrieve_topk(query_vec: &[f64], catalog: &EmbeddedCatalog, k: usize) -> Result<CandidateSet> {
    if k == 0 {
        return Err(domain("k must be positive"));
    }
    if catalog.is_empty() {
        return Err(domain("catalog is empty"));
    }
    if query_vec.len() != catalog.dim() {
        return Err(domain(format!(
            "query has dimension {}, catalog {}",
            query_vec.len(),
            catalog.dim()
        )));
    }
    let mut scored = (0..catalog.len())
        .map(|i| {
            Ok(Candidate {
                index: i,
                score: cosine(query_vec, catalog.vector(i))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    scored.truncate(k);
    Ok(CandidateSet { candidates: scored })
}

/// One line per candidate, 1-based, as the mode dictates.
pub fn format_context(candidates: &CandidateSet, catalog: &EmbeddedCatalog, mode: ContextMode) -> String {
    offer(mode, candidate_pairs(candidates, catalog)).0
}

fn candidate_pairs<'a>(
    candidates: &'a CandidateSet,
    catalog: &'a EmbeddedCatalog,
) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
    candidates.candidates.iter().map(|c| {
        let e = &catalog.entries()[c.index];
        (e.name.as_str(), e.description.as_str())
    })
}

/// The zero-shot function-calling prompt.
pub fn build_prompt(actions: &str, query: &str) -> String {
    format!(
        "[BEGIN OF TASK INSTRUCTION]
You are an expert in composing functions. You are given a question and a set of possible functions.
Based on the question, you will need to make one or more function/tool calls to achieve the purpose.
If none of the function can be used, point it out and refuse to answer.
If the given question lacks the parameters required by the function, also point it out.
[END OF TASK INSTRUCTION]
[BEGIN OF AVAILABLE TOOLS]
{actions}
[END OF AVAILABLE TOOLS]
[BEGIN OF FORMAT INSTRUCTION]
The output MUST strictly adhere to the following JSON format,
and NO other text MUST be included.
The example format is as follows. Please make sure the
parameter type is correct. If no function call is needed,
please make tool_calls an empty list '[]'
```
{{
\"tool_calls\": [
{{\"name\": \"func_name1\", \"arguments\": {{\"argument1\": \"value1\", \"argument2\": \"value2\"}}}},
... (more tool calls as required)
]
}}
```
[END OF FORMAT INSTRUCTION]
[BEGIN OF QUERY]
User Query: {query}
[END OF QUERY]
"
    )
}

/// Name of the first tool call, or `None` for an empty list.
pub fn parse_tool_calls(raw: &str) -> Result<Option<String>> {
    let parse_err = |message: &str| Error::Parse {
        message: message.to_string(),
        raw: raw.to_string(),
    };
    let (start, end) = match (raw.find('{'), raw.rfind('}')) {
        (Some(s), Some(e)) if s < e => (s, e),
        _ => return Err(parse_err("no JSON object in response")),
    };
    let v: Value = serde_json::from_str(&raw[start..=end]).map_err(|e| parse_err(&e.to_string()))?;
    let calls = v
        .get("tool_calls")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("missing tool_calls array"))?;
    match calls.first() {
        None => Ok(None),
        Some(call) => call
            .get("name")
            .and_then(Value::as_str)
            .map(|s| Some(s.to_string()))
            .ok_or_else(|| parse_err("tool call without a name")),
    }
}

/// Evaluation-only extras passed through to stub policies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelectionHint {
    /// Position of the ground truth within the candidate set.
    pub target: Option<usize>,
    pub salt: u64,
}

/// Asks the policy to pick among `candidates`; returns the catalog index chosen.
pub fn select_tool(
    policy: &PolicyBackend,
    query: &str,
    candidates: &CandidateSet,
    catalog: &EmbeddedCatalog,
    mode: ContextMode,
    hint: SelectionHint,
) -> Result<Option<usize>> {
    if candidates.is_empty() {
        return Err(domain("no candidates to select from"));
    }
    let (actions, offered) = offer(mode, candidate_pairs(candidates, catalog));
    let request = PolicyRequest {
        system: String::new(),
        user: build_prompt(&actions, query),
        query: query.to_string(),
        offered,
        format: ResponseFormat::ToolCalls,
        target: hint.target,
        salt: hint.salt,
    };
    let raw = policy.complete(&request)?;
    let Some(name) = parse_tool_calls(&raw)? else {
        return Ok(None);
    };
    let wanted = name.trim().to_lowercase();
    let by_name = candidates
        .candidates
        .iter()
        .position(|c| catalog.entries()[c.index].name.to_lowercase() == wanted);
    by_name
        .or_else(|| parse_index(&name, candidates.len()))
        .map(|p| Some(candidates.candidates[p].index))
        .ok_or(Error::OutOfCandidate(name))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Take the best retrieval hit; no policy call.
    Top1,
    /// Retrieve `k`, then let the policy choose.
    TopK,
    /// Offer the whole catalog to the policy.
    All,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Top1, Strategy::TopK, Strategy::All];

    pub fn code(self) -> &'static str {
        match self {
            Strategy::Top1 => "top1",
            Strategy::TopK => "topk",
            Strategy::All => "all",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top1" => Ok(Strategy::Top1),
            "topk" => Ok(Strategy::TopK),
            "all" => Ok(Strategy::All),
            other => Err(domain(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub strategy: Strategy,
    pub mode: ContextMode,
    pub k: usize,
    pub accuracy: f64,
    /// Fraction of queries whose ground truth was among the candidates.
    pub recall_at_k: f64,
    pub n_queries: usize,
    /// Policy calls that failed (transport, parse or out-of-candidate); scored incorrect.
    pub n_errors: usize,
}

pub const ACCURACY_CSV_HEADER: &str = "strategy,mode,k,accuracy,recall_at_k,n_queries";

pub fn write_accuracy_csv<W: Write>(mut out: W, rows: &[AccuracyRow]) -> Result<()> {
    writeln!(out, "{ACCURACY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.strategy, r.mode, r.k, r.accuracy, r.recall_at_k, r.n_queries
        )?;
    }
    Ok(())
}

/// A catalog plus queries, each with exactly one ground-truth tool.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub catalog: Vec<ToolCatalogEntry>,
    pub queries: Vec<CorpusQuery>,
}

impl Corpus {
    /// Catalog index of each query's ground truth.
    pub fn ground_truth(&self) -> Result<Vec<usize>> {
        self.queries
            .iter()
            .map(|q| {
                let mut hits = self
                    .catalog
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.ground_truth_for.as_deref() == Some(q.id.as_str()));
                match (hits.next(), hits.next()) {
                    (Some((i, _)), None) => Ok(i),
                    (None, _) => Err(domain(format!("query {} has no ground-truth tool", q.id))),
                    _ => Err(domain(format!("query {} has several ground-truth tools", q.id))),
                }
            })
            .collect()
    }
}

pub fn read_catalog<R: BufRead>(reader: R) -> Result<Vec<ToolCatalogEntry>> {
    read_jsonl(reader)
}

pub fn read_queries<R: BufRead>(reader: R) -> Result<Vec<CorpusQuery>> {
    read_jsonl(reader)
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            message: e.to_string(),
            raw: line.clone(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Scores the three strategies for each mode.
///
/// `top1` ignores the policy and mode; its row is repeated per mode so the
/// table stays rectangular.
pub fn evaluate_strategies(
    corpus: &Corpus,
    provider: &EmbeddingProvider,
    k: usize,
    modes: &[ContextMode],
    policy: &PolicyBackend,
) -> Result<Vec<AccuracyRow>> {
    let truth = corpus.ground_truth()?;
    let catalog = embed_catalog(provider, corpus.catalog.clone())?;
    let query_vecs: Vec<Vec<f64>> = corpus
        .queries
        .par_iter()
        .map(|q| provider.embed(&q.text))
        .collect::<Result<_>>()?;
    let n = corpus.queries.len();
    if n == 0 {
        return Err(domain("corpus has no queries"));
    }
    let nf = n as f64;

    let mut rows = Vec::new();
    for strategy in Strategy::ALL {
        let depth = match strategy {
            Strategy::Top1 => 1,
            Strategy::TopK => k.min(catalog.len()),
            Strategy::All => catalog.len(),
        };
        let sets: Vec<CandidateSet> = query_vecs
            .iter()
            .map(|v| retrieve_topk(v, &catalog, depth))
            .collect::<Result<_>>()?;
        let recalled = sets
            .iter()
            .zip(&truth)
            .filter(|(s, t)| s.position_of(**t).is_some())
            .count();
        for &mode in modes {
            let outcomes: Vec<Result<Option<usize>>> = match strategy {
                Strategy::Top1 => sets.iter().map(|s| Ok(Some(s.candidates[0].index))).collect(),
                _ => sets
                    .par_iter()
                    .zip(&corpus.queries)
                    .zip(&truth)
                    .map(|((set, q), t)| {
                        let hint = SelectionHint {
                            target: set.position_of(*t),
                            salt: fnv1a(q.id.as_bytes()),
                        };
                        select_tool(policy, &q.text, set, &catalog, mode, hint)
                    })
                    .collect(),
            };
            let correct = outcomes
                .iter()
                .zip(&truth)
                .filter(|(o, t)| matches!(o, Ok(Some(i)) if i == *t))
                .count();
            rows.push(AccuracyRow {
                strategy,
                mode,
                k: depth,
                accuracy: correct as f64 / nf,
                recall_at_k: recalled as f64 / nf,
                n_queries: n,
                n_errors: outcomes.iter().filter(|o| o.is_err()).count(),
            });
        }
    }
    Ok(rows)
}

/// Fraction of queries whose ground truth appears in the top `k`.
pub fn recall_at_k(corpus: &Corpus, provider: &EmbeddingProvider, k: usize) -> Result<f64> {
    let truth = corpus.ground_truth()?;
    let catalog = embed_catalog(provider, corpus.catalog.clone())?;
    let mut hits = 0usize;
    for (q, t) in corpus.queries.iter().zip(&truth) {
        let v = provider.embed(&q.text)?;
        if retrieve_topk(&v, &catalog, k)?.position_of(*t).is_some() {
            hits += 1;
        }
    }
    Ok(hits as f64 / corpus.queries.len().max(1) as f64)
}

const VERBS: [(&str, &str, &str); 20] = [
    ("convert", "Converts", "turn"),
    ("summarize", "Summarizes", "condense"),
    ("translate", "Translates", "put into another language"),
    ("schedule", "Schedules", "book"),
    ("search", "Searches", "look through"),
    ("validate", "Validates", "check"),
    ("compress", "Compresses", "shrink"),
    ("encrypt", "Encrypts", "lock down"),
    ("upload", "Uploads", "send up"),
    ("download", "Downloads", "fetch"),
    ("delete", "Deletes", "get rid of"),
    ("rename", "Renames", "relabel"),
    ("merge", "Merges", "combine"),
    ("split", "Splits", "break up"),
    ("sort", "Sorts", "put in order"),
    ("count", "Counts items in", "tally up"),
    ("plot", "Plots", "chart"),
    ("export", "Exports", "save out"),
    ("import", "Imports", "load in"),
    ("archive", "Archives", "store away"),
];

const OBJECTS: [&str; 20] = [
    "invoice",
    "spreadsheet",
    "photo",
    "email",
    "calendar event",
    "pdf report",
    "audio clip",
    "video",
    "contact list",
    "database table",
    "log file",
    "web page",
    "receipt",
    "chat transcript",
    "shipping label",
    "playlist",
    "map route",
    "weather forecast",
    "stock quote",
    "recipe",
];

const QUALIFIERS: [&str; 8] = [
    "for a single user",
    "in bulk",
    "stored in the cloud",
    "on the local disk",
    "shared with a team",
    "from a public link",
    "attached to a ticket",
    "kept in an archive folder",
];

/// A seeded synthetic corpus: `n_tools` distinct verb/object tools and
/// `n_queries` paraphrased requests, each targeting one tool.
pub fn synthetic_corpus(n_tools: usize, n_queries: usize, seed: u64) -> Result<Corpus> {
    let space = VERBS.len() * OBJECTS.len();
    if n_tools == 0 || n_tools > space {
        return Err(domain(format!("n_tools must be in 1..={space}")));
    }
    if n_queries > n_tools {
        return Err(domain("more queries than tools"));
    }
    let mut rng = rng_for(seed, Stream::Queries);
    let mut combos: Vec<(usize, usize)> = (0..VERBS.len())
        .flat_map(|v| (0..OBJECTS.len()).map(move |o| (v, o)))
        .collect();
    combos.shuffle(&mut rng);
    combos.truncate(n_tools);

    let mut catalog: Vec<ToolCatalogEntry> = combos
        .iter()
        .map(|&(v, o)| {
            let (verb, verb_s, _) = VERBS[v];
            let object = OBJECTS[o];
            let qualifier = QUALIFIERS[rng.random_range(0..QUALIFIERS.len())];
            ToolCatalogEntry::new(
                format!("{verb}_{}", object.replace(' ', "_")),
                format!("{verb_s} a {object} {qualifier}."),
            )
        })
        .collect();

    let mut picks: Vec<usize> = (0..n_tools).collect();
    picks.shuffle(&mut rng);
    picks.truncate(n_queries);
    let queries = picks
        .iter()
        .enumerate()
        .map(|(qi, &ti)| {
            let (v, o) = combos[ti];
            let id = format!("q{:03}", qi + 1);
            catalog[ti].ground_truth_for = Some(id.clone());
            CorpusQuery {
                id,
                text: format!("Could you {} my {} please?", VERBS[v].2, OBJECTS[o]),
            }
        })
        .collect();
    Ok(Corpus { catalog, queries })
}
