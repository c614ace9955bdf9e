//! Gauss–Hermite quadrature against the standard normal density.
//!
//! Nodes come from the Jacobi-matrix eigenvalues polished by Newton iteration
//! on the orthonormal Hermite recurrence. They are then rescaled from the `exp(-x²)` weight to `φ(y)`, so that
//! `Σ w_k g(y_k) ≈ E[g(Y)]` for `Y ~ N(0, 1)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 128;
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub node_count: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            node_count: DEFAULT_NODES,
        }
    }
}

impl QuadratureSpec {
    pub fn new(node_count: usize) -> Result<Self> {
        if node_count < MIN_NODES {
            return Err(Error::InvalidConfig(format!(
                "quadrature needs at least {MIN_NODES} nodes, got {node_count}"
            )));
        }
        Ok(Self { node_count })
    }

    pub fn rule(&self) -> GaussHermite {
        GaussHermite::new(self.node_count)
    }
}

/// Nodes and weights for `E[g(Y)]`, `Y ~ N(0, 1)`. Weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let (x, w) = physicists_rule(n);
        let scale = std::f64::consts::SQRT_2;
        let norm = std::f64::consts::PI.sqrt();
        Self {
            nodes: x.iter().map(|x| x * scale).collect(),
            weights: w.iter().map(|w| w / norm).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[g(Y)]` for a standard normal `Y`.
    pub fn expect(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&y, &w)| w * g(y))
            .sum()
    }
}

impl Default for GaussHermite {
    fn default() -> Self {
        Self::new(DEFAULT_NODES)
    }
}

/// Roots of H_n and weights for `∫ g(x) e^{-x²} dx`, descending order.
///
/// Starting points are the eigenvalues of the symmetric Jacobi matrix
/// (Golub–Welsch); each root is then polished by Newton steps on the
/// orthonormal recurrence, whose derivative also gives the weight.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PI_M4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    const MAX_ITER: usize = 20;

    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = SymmetricEigen::new(jacobi)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    guesses.sort_by(|a, b| b.total_cmp(a));

    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = guesses[i];
        let mut pp = 0.0;
        for _ in 0..MAX_ITER {
            let (mut p1, mut p2) = (PI_M4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        if n % 2 == 1 && i == n / 2 {
            z = 0.0;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
