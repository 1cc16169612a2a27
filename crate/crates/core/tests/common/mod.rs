//! Independent reference computations for integration tests.
#![allow(dead_code)]

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// λI + Σ x xᵀ and Σ r x, accumulated naively.
pub struct NaiveRidge {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl NaiveRidge {
    pub fn new(dim: usize, lambda: f64) -> Self {
        let a = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { lambda } else { 0.0 }).collect())
            .collect();
        Self { a, b: vec![0.0; dim] }
    }

    pub fn update(&mut self, x: &[f64], r: f64) {
        for i in 0..x.len() {
            for j in 0..x.len() {
                self.a[i][j] += x[i] * x[j];
            }
            self.b[i] += r * x[i];
        }
    }

    pub fn inverse(&self) -> Vec<Vec<f64>> {
        gauss_jordan_inverse(&self.a)
    }

    pub fn theta(&self) -> Vec<f64> {
        let inv = self.inverse();
        inv.iter().map(|row| row.iter().zip(&self.b).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn quad(&self, x: &[f64]) -> f64 {
        let inv = self.inverse();
        (0..x.len())
            .map(|i| (0..x.len()).map(|j| x[i] * inv[i][j] * x[j]).sum::<f64>())
            .sum()
    }
}
