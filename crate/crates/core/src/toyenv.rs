//! Toy semantic bandit environments.
//!
//! Tools carry a 2-d embedding drawn around one of a handful of archetype
//! vectors; queries carry a 2-d embedding and a preferred archetype. The
//! success probability of a (query, tool) pair is
//! `clip(P_base + C_sim·qᵀφ + B_align·[archetype matches], P_min, P_max)`.
//!
//! Both built-in environments are instances of [`ToyEnvConfig`]: the static
//! one is a single phase, the continual one is four phases of equal length.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::features::dot;
use crate::seeding::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub p_base: f64,
    pub c_sim: f64,
    pub b_align: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            p_base: 0.45,
            c_sim: 0.40,
            b_align: 0.25,
            p_min: 0.05,
            p_max: 0.95,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_min && self.p_min <= self.p_max && self.p_max <= 1.0) {
            return Err(Error::Configuration(format!(
                "reward clip range [{}, {}] must satisfy 0 <= p_min <= p_max <= 1",
                self.p_min, self.p_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: String,
    pub archetype_id: u32,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub id: String,
    pub embedding: Vec<f64>,
    pub preferred_archetype: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolAssignment {
    pub id: String,
    pub archetype_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub steps: usize,
    pub tool_ids: Vec<String>,
    pub query_ids: Vec<String>,
}

/// A phase resolved to absolute time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Phase {
    pub start_t: usize,
    pub active_tool_ids: Vec<String>,
    pub active_query_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSchedule {
    phases: Vec<Phase>,
    total_t: usize,
}

impl PhaseSchedule {
    pub fn from_specs(specs: &[PhaseSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Configuration("schedule needs at least one phase".into()));
        }
        let mut start = 0;
        let mut phases = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if spec.steps == 0 {
                return Err(Error::Configuration(format!("phase {} has zero steps", i + 1)));
            }
            if spec.tool_ids.is_empty() || spec.query_ids.is_empty() {
                return Err(Error::Configuration(format!(
                    "phase {} needs at least one tool and one query",
                    i + 1
                )));
            }
            phases.push(Phase {
                start_t: start,
                active_tool_ids: spec.tool_ids.clone(),
                active_query_ids: spec.query_ids.clone(),
            });
            start += spec.steps;
        }
        Ok(Self {
            phases,
            total_t: start,
        })
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn total_t(&self) -> usize {
        self.total_t
    }

    /// Start times of every phase after the first.
    pub fn boundaries(&self) -> Vec<usize> {
        self.phases.iter().skip(1).map(|p| p.start_t).collect()
    }

    pub fn phase_index(&self, t: usize) -> Result<usize> {
        if t >= self.total_t {
            return Err(domain(format!("t = {t} outside [0, {})", self.total_t)));
        }
        Ok(self.phases.partition_point(|p| p.start_t <= t) - 1)
    }
}

/// Everything needed to instantiate a toy environment; serializable so that
/// archetypes, queries, reward constants and phases can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEnvConfig {
    #[serde(default)]
    pub reward: RewardParams,
    pub noise_sigma: f64,
    pub archetypes: BTreeMap<u32, Vec<f64>>,
    pub queries: Vec<QuerySpec>,
    pub tools: Vec<ToolAssignment>,
    pub phases: Vec<PhaseSpec>,
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;
pub const DEFAULT_T: usize = 10_000;
pub const DEFAULT_T_PHASE: usize = 2_500;

fn default_archetypes() -> BTreeMap<u32, Vec<f64>> {
    BTreeMap::from([
        (1, vec![0.9, 0.1]),
        (2, vec![0.1, 0.9]),
        (3, vec![-0.7, -0.7]),
        // chosen default, overridable through config
        (4, vec![0.7, -0.7]),
    ])
}

fn query(id: &str, embedding: [f64; 2], preferred: u32) -> QuerySpec {
    QuerySpec {
        id: id.into(),
        embedding: embedding.to_vec(),
        preferred_archetype: preferred,
    }
}

fn default_queries() -> Vec<QuerySpec> {
    vec![
        query("q_A", [1.0, 0.2], 1),
        query("q_B", [0.2, 1.0], 2),
        query("q_C", [-0.8, -0.8], 3),
        query("q_D", [0.8, -0.8], 4),
    ]
}

fn assign(pairs: &[(&str, u32)]) -> Vec<ToolAssignment> {
    pairs
        .iter()
        .map(|(id, a)| ToolAssignment {
            id: (*id).into(),
            archetype_id: *a,
        })
        .collect()
}

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| (*s).to_string()).collect()
}

impl ToyEnvConfig {
    /// Six fixed tools (two per archetype 1..3), three cycling queries.
    pub fn static_multi_context(t_total: usize) -> Self {
        let tools = assign(&[
            ("tool_1", 1),
            ("tool_2", 1),
            ("tool_3", 2),
            ("tool_4", 2),
            ("tool_5", 3),
            ("tool_6", 3),
        ]);
        let mut queries = default_queries();
        queries.truncate(3);
        Self {
            reward: RewardParams::default(),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            archetypes: default_archetypes(),
            phases: vec![PhaseSpec {
                steps: t_total,
                tool_ids: tools.iter().map(|t| t.id.clone()).collect(),
                query_ids: ids(&["q_A", "q_B", "q_C"]),
            }],
            queries,
            tools,
        }
    }

    /// Four phases: removal of a type-1 tool, addition of a similar type-1
    /// tool, then a novel type-4 tool together with a matching query.
    pub fn continual(t_phase: usize) -> Self {
        let tools = assign(&[
            ("a_A1", 1),
            ("a_A2", 1),
            ("a_B1", 2),
            ("a_B2", 2),
            ("a_A3", 1),
            ("a_D1", 4),
        ]);
        let abc = ids(&["q_A", "q_B", "q_C"]);
        Self {
            reward: RewardParams::default(),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            archetypes: default_archetypes(),
            queries: default_queries(),
            tools,
            phases: vec![
                PhaseSpec {
                    steps: t_phase,
                    tool_ids: ids(&["a_A1", "a_A2", "a_B1", "a_B2"]),
                    query_ids: abc.clone(),
                },
                PhaseSpec {
                    steps: t_phase,
                    tool_ids: ids(&["a_A1", "a_B1", "a_B2"]),
                    query_ids: abc.clone(),
                },
                PhaseSpec {
                    steps: t_phase,
                    tool_ids: ids(&["a_A1", "a_B1", "a_B2", "a_A3"]),
                    query_ids: abc,
                },
                PhaseSpec {
                    steps: t_phase,
                    tool_ids: ids(&["a_A1", "a_B1", "a_B2", "a_A3", "a_D1"]),
                    query_ids: ids(&["q_A", "q_B", "q_C", "q_D"]),
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Configuration("noise_sigma must be nonnegative".into()));
        }
        let d_desc = self.archetypes.values().next().map(Vec::len).unwrap_or(0);
        if d_desc == 0 || self.archetypes.values().any(|v| v.len() != d_desc) {
            return Err(Error::Configuration(
                "archetype vectors must be nonempty and share one length".into(),
            ));
        }
        let d_q = self.queries.first().map(|q| q.embedding.len()).unwrap_or(0);
        if d_q == 0 || self.queries.iter().any(|q| q.embedding.len() != d_q) {
            return Err(Error::Configuration(
                "query embeddings must be nonempty and share one length".into(),
            ));
        }
        for t in &self.tools {
            if !self.archetypes.contains_key(&t.archetype_id) {
                return Err(Error::Configuration(format!(
                    "tool {} uses unknown archetype {}",
                    t.id, t.archetype_id
                )));
            }
        }
        for p in &self.phases {
            for id in &p.tool_ids {
                if !self.tools.iter().any(|t| &t.id == id) {
                    return Err(Error::Configuration(format!("phase references unknown tool {id}")));
                }
            }
            for id in &p.query_ids {
                if !self.queries.iter().any(|q| &q.id == id) {
                    return Err(Error::Configuration(format!("phase references unknown query {id}")));
                }
            }
        }
        PhaseSchedule::from_specs(&self.phases)?;
        Ok(())
    }
}

/// Archetype vector plus i.i.d. `N(0, σ²)` noise per coordinate.
pub fn generate_tools(
    seed: u64,
    assignment: &[ToolAssignment],
    archetypes: &BTreeMap<u32, Vec<f64>>,
    noise_sigma: f64,
) -> Result<Vec<ToolSpec>> {
    let mut rng = rng_for(seed, Stream::ToolNoise);
    let normal = Normal::new(0.0, noise_sigma.max(0.0))
        .map_err(|e| Error::Configuration(format!("noise sigma: {e}")))?;
    assignment
        .iter()
        .map(|a| {
            let base = archetypes.get(&a.archetype_id).ok_or_else(|| {
                Error::Configuration(format!("unknown archetype {} for {}", a.archetype_id, a.id))
            })?;
            let embedding = base.iter().map(|v| v + normal.sample(&mut rng)).collect();
            Ok(ToolSpec {
                id: a.id.clone(),
                archetype_id: a.archetype_id,
                embedding,
            })
        })
        .collect()
}

pub fn success_probability(params: &RewardParams, q: &QuerySpec, tool: &ToolSpec) -> f64 {
    let matched = if tool.archetype_id == q.preferred_archetype {
        1.0
    } else {
        0.0
    };
    let raw = params.p_base + params.c_sim * dot(&q.embedding, &tool.embedding) + params.b_align * matched;
    raw.clamp(params.p_min, params.p_max)
}

pub fn sample_reward<R: Rng + ?Sized>(rng: &mut R, p: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("success probability {p} outside [0, 1]")));
    }
    Ok(u8::from(rng.random::<f64>() < p))
}

/// Index and value of the best available tool; first index wins ties.
pub fn oracle_best(params: &RewardParams, q: &QuerySpec, tools: &[&ToolSpec]) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, tool) in tools.iter().enumerate() {
        let p = success_probability(params, q, tool);
        if best.is_none_or(|(_, b)| p > b) {
            best = Some((i, p));
        }
    }
    best.ok_or(Error::EmptyActionSet)
}

/// One run's environment: tools generated from the run seed plus the schedule.
#[derive(Debug, Clone)]
pub struct ToyEnv {
    config: ToyEnvConfig,
    tools: Vec<ToolSpec>,
    schedule: PhaseSchedule,
}

impl ToyEnv {
    pub fn new(config: ToyEnvConfig, run_seed: u64) -> Result<Self> {
        config.validate()?;
        let tools = generate_tools(run_seed, &config.tools, &config.archetypes, config.noise_sigma)?;
        let schedule = PhaseSchedule::from_specs(&config.phases)?;
        Ok(Self {
            config,
            tools,
            schedule,
        })
    }

    pub fn config(&self) -> &ToyEnvConfig {
        &self.config
    }

    pub fn reward_params(&self) -> &RewardParams {
        &self.config.reward
    }

    pub fn schedule(&self) -> &PhaseSchedule {
        &self.schedule
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn total_t(&self) -> usize {
        self.schedule.total_t()
    }

    pub fn query_dim(&self) -> usize {
        self.config.queries[0].embedding.len()
    }

    pub fn tool_dim(&self) -> usize {
        self.tools.first().map(|t| t.embedding.len()).unwrap_or(0)
    }

    /// Queries cycle through the phase's active list, restarting at each phase start.
    pub fn query_at(&self, t: usize) -> Result<&QuerySpec> {
        let phase = &self.schedule.phases()[self.schedule.phase_index(t)?];
        let ids = &phase.active_query_ids;
        let id = &ids[(t - phase.start_t) % ids.len()];
        Ok(self
            .config
            .queries
            .iter()
            .find(|q| &q.id == id)
            .expect("validated query id"))
    }

    /// Active tools in phase order.
    pub fn available_tools(&self, t: usize) -> Result<Vec<&ToolSpec>> {
        let phase = &self.schedule.phases()[self.schedule.phase_index(t)?];
        Ok(phase
            .active_tool_ids
            .iter()
            .map(|id| self.tools.iter().find(|tool| &tool.id == id).expect("validated tool id"))
            .collect())
    }
}
