//! Regret and reward accounting, multi-run aggregation and CSV export.

use std::io::Write;

use serde::Serialize;

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub query_id: String,
    pub chosen_tool_id: Option<String>,
    pub reward: u8,
    /// Success probability of the chosen action.
    pub chosen_expected: f64,
    /// Success probability of the best available action.
    pub oracle_expected: f64,
    pub ucb_scores: Vec<f64>,
}

impl StepRecord {
    pub fn expected_regret(&self) -> f64 {
        self.oracle_expected - self.chosen_expected
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub steps: Vec<StepRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Prefix sums of per-step expected regret.
pub fn cumulative_expected_regret(trace: &RunTrace) -> Vec<f64> {
    trace
        .steps
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.expected_regret();
            Some(*acc)
        })
        .collect()
}

pub fn cumulative_reward(trace: &RunTrace) -> Vec<u64> {
    trace
        .steps
        .iter()
        .scan(0u64, |acc, s| {
            *acc += u64::from(s.reward);
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregatePoint {
    pub t: usize,
    pub mean: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateCurve {
    pub n_runs: usize,
    pub points: Vec<AggregatePoint>,
}

impl AggregateCurve {
    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean).collect()
    }

    pub fn final_mean(&self) -> Option<f64> {
        self.points.last().map(|p| p.mean)
    }
}

/// Pointwise mean and standard error (`s / sqrt(N)`, `s` the N−1 sample
/// standard deviation). A single curve yields zero standard error.
pub fn aggregate(curves: &[Vec<f64>]) -> Result<AggregateCurve> {
    let n = curves.len();
    let len = curves
        .first()
        .map(Vec::len)
        .ok_or_else(|| domain("cannot aggregate zero curves"))?;
    if curves.iter().any(|c| c.len() != len) {
        return Err(domain("curves have different lengths"));
    }
    let nf = n as f64;
    let points = (0..len)
        .map(|t| {
            let mean = curves.iter().map(|c| c[t]).sum::<f64>() / nf;
            let sem = if n < 2 {
                0.0
            } else {
                let var = curves.iter().map(|c| (c[t] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
                (var / nf).sqrt()
            };
            AggregatePoint { t, mean, sem }
        })
        .collect();
    Ok(AggregateCurve { n_runs: n, points })
}

/// One agent configuration's aggregated curves, as exported.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub agent: String,
    pub alpha: Option<f64>,
    pub regret: AggregateCurve,
    pub reward: AggregateCurve,
}

impl CurveSeries {
    /// Aggregates per-run traces into regret and reward curves.
    pub fn from_traces(agent: impl Into<String>, alpha: Option<f64>, traces: &[RunTrace]) -> Result<Self> {
        let regret: Vec<Vec<f64>> = traces.iter().map(cumulative_expected_regret).collect();
        let reward: Vec<Vec<f64>> = traces
            .iter()
            .map(|t| cumulative_reward(t).into_iter().map(|v| v as f64).collect())
            .collect();
        Ok(Self {
            agent: agent.into(),
            alpha,
            regret: aggregate(&regret)?,
            reward: aggregate(&reward)?,
        })
    }
}

pub const CURVE_CSV_HEADER: &str =
    "agent,alpha,t,mean_cum_regret,sem_cum_regret,mean_cum_reward,sem_cum_reward";

/// Writes `agent,alpha,t,...` rows. Floats use the shortest representation
/// that round-trips; a missing alpha is an empty field.
pub fn write_curves_csv<W: Write>(mut out: W, series: &[CurveSeries]) -> Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for s in series {
        if s.regret.points.len() != s.reward.points.len() {
            return Err(domain(format!("series {} has mismatched curve lengths", s.agent)));
        }
        let alpha = s.alpha.map(|a| a.to_string()).unwrap_or_default();
        for (g, r) in s.regret.points.iter().zip(&s.reward.points) {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.agent, alpha, g.t, g.mean, g.sem, r.mean, r.sem
            )?;
        }
    }
    Ok(())
}
