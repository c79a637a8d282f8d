use gauss_quad::GaussHermite;
use std::num::NonZeroUsize;

use crate::error::{Error, Result};

/// Gauss-Hermite rule for the weight `exp(-u^2)`.
///
/// Nodes come from the Golub-Welsch eigenvalue route and are symmetrized
/// afterwards, so `nodes[i] == -nodes[n - 1 - i]` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureScheme {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureScheme {
    pub const DEFAULT_ORDER: usize = 40;

    pub fn new(order: usize) -> Result<Self> {
        let deg =
            NonZeroUsize::new(order).ok_or_else(|| Error::InvalidGrid("quadrature order must be at least 1".into()))?;
        let rule = GaussHermite::new(deg);
        let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let n = pairs.len();
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let j = n - 1 - i;
            let x = 0.5 * (pairs[j].0 - pairs[i].0);
            let w = 0.5 * (pairs[j].1 + pairs[i].1);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(QuadratureScheme { order, nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same rule at twice the order, used for convergence checks.
    pub fn doubled(&self) -> Result<Self> {
        Self::new(2 * self.order)
    }

    /// `sum_i w_i f(u_i)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&u, &w)| w * f(u)).sum()
    }
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self::new(Self::DEFAULT_ORDER).expect("default order is positive")
    }
}
