//! Dense symmetric positive-definite bookkeeping for ridge regression.
//!
//! [`DesignState`] holds the regularized design matrix `A = λI + Σ x xᵀ`, the
//! response vector `b = Σ r x` and a cached `A⁻¹` that is maintained with
//! Sherman–Morrison rank-one updates. Every [`REINVERT_EVERY`] updates the
//! cached inverse is rebuilt from `A` via Cholesky to bound drift.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};

/// Number of incremental updates between full re-inversions of `A`.
pub const REINVERT_EVERY: u64 = 1000;

/// Quadratic forms below this value are treated as a positive-definiteness violation.
pub const NEGATIVE_QUAD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DesignState {
    dim: usize,
    lambda_reg: f64,
    a_matrix: DMatrix<f64>,
    a_inverse: DMatrix<f64>,
    b_vector: DVector<f64>,
    update_count: u64,
}

impl DesignState {
    /// `A = λI`, `A⁻¹ = I/λ`, `b = 0`.
    pub fn new(dim: usize, lambda_reg: f64) -> Result<Self> {
        if dim == 0 {
            return Err(domain("design dimension must be at least 1"));
        }
        if !(lambda_reg > 0.0 && lambda_reg.is_finite()) {
            return Err(domain(format!("lambda_reg must be positive, got {lambda_reg}")));
        }
        Ok(Self {
            dim,
            lambda_reg,
            a_matrix: DMatrix::identity(dim, dim) * lambda_reg,
            a_inverse: DMatrix::identity(dim, dim) / lambda_reg,
            b_vector: DVector::zeros(dim),
            update_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a_matrix
    }

    pub fn a_inverse(&self) -> &DMatrix<f64> {
        &self.a_inverse
    }

    pub fn b_vector(&self) -> &DVector<f64> {
        &self.b_vector
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(domain(format!(
                "feature length {} does not match design dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Absorbs one observation: `A += x xᵀ`, `b += r x`.
    pub fn rank_one_update(&mut self, x: &[f64], reward: f64) -> Result<()> {
        self.check_dim(x)?;
        if !reward.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite feature or reward"));
        }
        let x = DVector::from_column_slice(x);

        self.a_matrix.ger(1.0, &x, &x, 1.0);
        self.b_vector.axpy(reward, &x, 1.0);

        // Sherman–Morrison: (A + xxᵀ)⁻¹ = A⁻¹ − (A⁻¹x)(A⁻¹x)ᵀ / (1 + xᵀA⁻¹x)
        let ainv_x = &self.a_inverse * &x;
        let denom = 1.0 + x.dot(&ainv_x);
        self.a_inverse.ger(-1.0 / denom, &ainv_x, &ainv_x, 1.0);

        self.update_count += 1;
        if self.update_count % REINVERT_EVERY == 0 {
            self.reinvert()?;
        }
        symmetrize(&mut self.a_matrix);
        symmetrize(&mut self.a_inverse);
        Ok(())
    }

    fn reinvert(&mut self) -> Result<()> {
        let chol = self
            .a_matrix
            .clone()
            .cholesky()
            .ok_or(Error::NumericalDegeneracy(f64::NAN))?;
        self.a_inverse = chol.inverse();
        Ok(())
    }

    /// `θ̂ = A⁻¹ b`.
    pub fn ridge_estimate(&self) -> Vec<f64> {
        (&self.a_inverse * &self.b_vector).iter().copied().collect()
    }

    /// `xᵀ A⁻¹ x`, clamped at zero for tiny negative round-off.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let x = DVector::from_column_slice(x);
        let q = x.dot(&(&self.a_inverse * &x));
        if q < -NEGATIVE_QUAD_TOLERANCE {
            return Err(Error::NumericalDegeneracy(q));
        }
        Ok(q.max(0.0))
    }

    /// `sqrt(xᵀ A⁻¹ x)`.
    pub fn exploration_width(&self, x: &[f64]) -> Result<f64> {
        Ok(self.quadratic_form(x)?.sqrt())
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.dim, self.lambda_reg).expect("validated at construction");
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Running check of `Σ min(1, xᵀA⁻¹x) ≤ 2d·ln(1 + n·L²/(λd))` for one design lifetime.
///
/// Each call to [`record`](Self::record) must receive the quadratic form
/// evaluated *before* the corresponding rank-one update.
#[derive(Debug, Clone)]
pub struct EllipticalPotential {
    dim: usize,
    lambda_reg: f64,
    sum: f64,
    steps: u64,
    max_norm: f64,
}

impl EllipticalPotential {
    pub fn new(dim: usize, lambda_reg: f64) -> Self {
        Self {
            dim,
            lambda_reg,
            sum: 0.0,
            steps: 0,
            max_norm: 0.0,
        }
    }

    pub fn record(&mut self, quad_form_before: f64, x: &[f64]) {
        self.sum += quad_form_before.min(1.0);
        self.steps += 1;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.max_norm = self.max_norm.max(norm);
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn bound(&self) -> f64 {
        let d = self.dim as f64;
        let l2 = self.max_norm * self.max_norm;
        2.0 * d * (1.0 + self.steps as f64 * l2 / (self.lambda_reg * d)).ln()
    }

    pub fn holds(&self) -> bool {
        self.sum <= self.bound() + 1e-9
    }
}
