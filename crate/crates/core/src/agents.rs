//! LinUCB decision loop with a shared model over a pluggable feature layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::features::{FeatureVector, Layout};
use crate::numerics::{DesignState, EllipticalPotential};

/// UCB scores within this distance of the maximum count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcbScore {
    /// `xᵀθ̂`
    pub mean: f64,
    /// `sqrt(xᵀA⁻¹x)`
    pub width: f64,
    /// `mean + α·width`
    pub ucb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub index: usize,
    pub scores: Vec<UcbScore>,
}

#[derive(Debug, Clone)]
pub struct LinUcbAgent {
    alpha: f64,
    layout: Layout,
    design: DesignState,
    seed: u64,
    rng: ChaCha8Rng,
    potentials: Vec<EllipticalPotential>,
}

impl LinUcbAgent {
    pub fn new(layout: Layout, dim: usize, alpha: f64, lambda_reg: f64, seed: u64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(domain(format!("alpha must be nonnegative, got {alpha}")));
        }
        let design = DesignState::new(dim, lambda_reg)?;
        Ok(Self {
            alpha,
            layout,
            potentials: vec![EllipticalPotential::new(dim, lambda_reg)],
            design,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn design(&self) -> &DesignState {
        &self.design
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One accumulator per design lifetime; a new one starts at each reset.
    pub fn potentials(&self) -> &[EllipticalPotential] {
        &self.potentials
    }

    fn check(&self, x: &FeatureVector) -> Result<()> {
        if x.layout() != self.layout {
            return Err(domain(format!(
                "{:?} feature offered to a {:?} agent",
                x.layout(),
                self.layout
            )));
        }
        if x.dim() != self.design.dim() {
            return Err(domain(format!(
                "feature dimension {} does not match agent dimension {}",
                x.dim(),
                self.design.dim()
            )));
        }
        Ok(())
    }

    /// Scores every candidate without touching any state.
    pub fn scores(&self, candidates: &[FeatureVector]) -> Result<Vec<UcbScore>> {
        let theta = self.design.ridge_estimate();
        candidates
            .iter()
            .map(|x| {
                self.check(x)?;
                let mean = crate::features::dot(x.values(), &theta);
                let width = self.design.exploration_width(x.values())?;
                Ok(UcbScore {
                    mean,
                    width,
                    ucb: mean + self.alpha * width,
                })
            })
            .collect()
    }

    /// Picks the candidate with the highest UCB score. Only the tie-breaking
    /// stream advances; the design is untouched.
    pub fn select_action(&mut self, candidates: &[FeatureVector]) -> Result<Decision> {
        if candidates.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let scores = self.scores(candidates)?;
        let ucb: Vec<f64> = scores.iter().map(|s| s.ucb).collect();
        let index = argmax_with_ties(&ucb, &mut self.rng);
        Ok(Decision { index, scores })
    }

    pub fn observe(&mut self, chosen: &FeatureVector, reward: f64) -> Result<()> {
        self.check(chosen)?;
        let quad = self.design.quadratic_form(chosen.values())?;
        self.design.rank_one_update(chosen.values(), reward)?;
        self.potentials
            .last_mut()
            .expect("at least one segment")
            .record(quad, chosen.values());
        Ok(())
    }

    /// Fresh design at `new_dim`, keeping α, λ, layout and the tie-breaking stream.
    pub fn reset_for_dimension(&mut self, new_dim: usize) -> Result<()> {
        self.design = DesignState::new(new_dim, self.design.lambda_reg())?;
        self.potentials
            .push(EllipticalPotential::new(new_dim, self.design.lambda_reg()));
        Ok(())
    }
}

/// Index of the maximum, with near-ties broken uniformly by `rng`.
pub fn argmax_with_ties<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= best - TIE_TOLERANCE)
        .map(|(i, _)| i)
        .collect();
    match tied.len() {
        0 => 0,
        1 => tied[0],
        n => tied[rng.random_range(0..n)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    pub sigma: f64,
    pub s_theta: f64,
    pub l_x: f64,
    pub delta: f64,
}

/// Radius of the self-normalized confidence ellipsoid after `t` observations:
/// `σ·sqrt(2 ln(1/δ) + d ln(1 + t L²/(λd))) + sqrt(λ)·S`.
pub fn confidence_width(params: &ConfidenceParams, design: &DesignState, t: u64) -> Result<f64> {
    let ConfidenceParams {
        sigma,
        s_theta,
        l_x,
        delta,
    } = *params;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if sigma < 0.0 || s_theta < 0.0 || l_x <= 0.0 {
        return Err(domain("sigma and s_theta must be nonnegative and l_x positive"));
    }
    if t == 0 {
        return Err(domain("t must be at least 1"));
    }
    let d = design.dim() as f64;
    let lambda = design.lambda_reg();
    let log_det = d * (1.0 + t as f64 * l_x * l_x / (lambda * d)).ln();
    Ok(sigma * (2.0 * (1.0 / delta).ln() + log_det).sqrt() + lambda.sqrt() * s_theta)
}
