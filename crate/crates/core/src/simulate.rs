//! Drives a LinUCB agent through a toy environment for one run.

use serde::Serialize;

use crate::agents::LinUcbAgent;
use crate::error::Result;
use crate::features::{onehot_features, semantic_features, FeatureVector, Layout};
use crate::metrics::{RunTrace, StepRecord};
use crate::seeding::{mix64, rng_for, Stream};
use crate::toyenv::{oracle_best, sample_reward, success_probability, ToolSpec, ToyEnv, ToyEnvConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentSpec {
    pub layout: Layout,
    pub alpha: f64,
    pub lambda_reg: f64,
}

/// Elliptical-potential accounting for one design lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialCheck {
    pub steps: u64,
    pub sum: f64,
    pub bound: f64,
}

impl PotentialCheck {
    pub fn holds(&self) -> bool {
        self.sum <= self.bound + 1e-9
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BanditRun {
    pub run_seed: u64,
    pub trace: RunTrace,
    /// Steps at which the agent's design was re-initialized.
    pub resets: Vec<usize>,
    pub potentials: Vec<PotentialCheck>,
}

impl BanditRun {
    pub fn potential_violations(&self) -> usize {
        self.potentials.iter().filter(|p| !p.holds()).count()
    }
}

pub fn build_features(layout: Layout, q: &[f64], tools: &[&ToolSpec]) -> Result<Vec<FeatureVector>> {
    let k = tools.len();
    tools
        .iter()
        .enumerate()
        .map(|(slot, tool)| match layout {
            Layout::Semantic => Ok(semantic_features(q, &tool.embedding)),
            Layout::OneHot => onehot_features(q, slot, k),
        })
        .collect()
}

/// Runs one agent for the full horizon of `config`.
///
/// Tool-embedding noise and reward draws both derive from `run_seed`, so two
/// agents given the same seed face the same tools and reward stream.
pub fn run_bandit(config: &ToyEnvConfig, agent: AgentSpec, run_seed: u64) -> Result<BanditRun> {
    let env = ToyEnv::new(config.clone(), run_seed)?;
    let d_q = env.query_dim();
    let initial_k = env.available_tools(0)?.len();
    let dim = match agent.layout {
        Layout::Semantic => agent.layout.dim(d_q, env.tool_dim()),
        Layout::OneHot => agent.layout.dim(d_q, initial_k),
    };
    let mut learner = LinUcbAgent::new(
        agent.layout,
        dim,
        agent.alpha,
        agent.lambda_reg,
        mix64(run_seed ^ Stream::TieBreak as u64),
    )?;
    let mut rewards = rng_for(run_seed, Stream::Rewards);
    let params = *env.reward_params();

    let mut steps = Vec::with_capacity(env.total_t());
    let mut resets = Vec::new();
    let mut current_k = initial_k;
    for t in 0..env.total_t() {
        let q = env.query_at(t)?;
        let tools = env.available_tools(t)?;
        if agent.layout == Layout::OneHot && tools.len() != current_k {
            current_k = tools.len();
            learner.reset_for_dimension(agent.layout.dim(d_q, current_k))?;
            resets.push(t);
        }
        let features = build_features(agent.layout, &q.embedding, &tools)?;
        let decision = learner.select_action(&features)?;
        let chosen = tools[decision.index];
        let p = success_probability(&params, q, chosen);
        let (_, best) = oracle_best(&params, q, &tools)?;
        let reward = sample_reward(&mut rewards, p)?;
        learner.observe(&features[decision.index], f64::from(reward))?;
        steps.push(StepRecord {
            t,
            query_id: q.id.clone(),
            chosen_tool_id: Some(chosen.id.clone()),
            reward,
            chosen_expected: p,
            oracle_expected: best,
            ucb_scores: decision.scores.iter().map(|s| s.ucb).collect(),
        });
    }

    let potentials = learner
        .potentials()
        .iter()
        .map(|p| PotentialCheck {
            steps: p.steps(),
            sum: p.sum(),
            bound: p.bound(),
        })
        .collect();
    Ok(BanditRun {
        run_seed,
        trace: RunTrace { steps },
        resets,
        potentials,
    })
}
