//! Per (query, tool) feature construction.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// `[q; φ; qᵀφ; 1]`
    Semantic,
    /// `[q; e_slot; 1]`
    OneHot,
}

impl Layout {
    /// Feature length for a query of length `d_q` and either the tool-embedding
    /// length (semantic) or the number of available tools (one-hot).
    pub fn dim(self, d_q: usize, d_desc_or_k: usize) -> usize {
        match self {
            Layout::Semantic => d_q + d_desc_or_k + 2,
            Layout::OneHot => d_q + d_desc_or_k + 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Layout::Semantic => "sc-linucb",
            Layout::OneHot => "linucb-onehot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    layout: Layout,
}

impl FeatureVector {
    /// Wraps precomputed values, e.g. when replaying a logged decision.
    pub fn from_values(values: Vec<f64>, layout: Layout) -> Self {
        Self { values, layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn semantic_features(q: &[f64], phi: &[f64]) -> FeatureVector {
    let mut values = Vec::with_capacity(q.len() + phi.len() + 2);
    values.extend_from_slice(q);
    values.extend_from_slice(phi);
    values.push(dot(q, phi));
    values.push(1.0);
    FeatureVector {
        values,
        layout: Layout::Semantic,
    }
}

pub fn onehot_features(q: &[f64], slot: usize, k: usize) -> Result<FeatureVector> {
    if slot >= k {
        return Err(domain(format!("one-hot slot {slot} out of range for {k} tools")));
    }
    let mut values = Vec::with_capacity(q.len() + k + 1);
    values.extend_from_slice(q);
    values.extend((0..k).map(|j| if j == slot { 1.0 } else { 0.0 }));
    values.push(1.0);
    Ok(FeatureVector {
        values,
        layout: Layout::OneHot,
    })
}
