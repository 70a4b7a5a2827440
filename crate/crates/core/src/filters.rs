//! Finite filters with vanishing moments and the generalized variations they
//! induce on a sampled path.
//!
//! A filter `a = (a_0, ..., a_q)` has order `m` when
//! `sum_l l^p a_l = 0` for `p < m` and `sum_l l^m a_l != 0`. Applying it to
//! the lattice values `Z(k/n)` gives `V(k) = sum_l a_l Z((k + l)/n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_sampler::SampledPath;

/// Absolute tolerance on the moment sums.
pub const MOMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    coeffs: Vec<f64>,
    order: usize,
}

/// `sum_l l^p a_l`.
fn moment(coeffs: &[f64], p: usize) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(l, a)| (l as f64).powi(p as i32) * a)
        .sum()
}

impl Filter {
    /// Validates `coeffs` and certifies its moment order.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::DegenerateFilter(format!(
                "need at least 2 coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::DegenerateFilter("non-finite coefficient".into()));
        }
        if coeffs.iter().all(|a| a.abs() < MOMENT_TOL) {
            return Err(Error::DegenerateFilter("all coefficients vanish".into()));
        }
        if coeffs.last().map_or(true, |a| a.abs() < MOMENT_TOL) {
            return Err(Error::DegenerateFilter("trailing zero coefficient".into()));
        }
        let sum = moment(&coeffs, 0);
        if sum.abs() > MOMENT_TOL {
            return Err(Error::MomentConditionViolated { sum });
        }
        // A nonzero filter of length q+1 cannot annihilate all polynomials of
        // degree <= q, so the search terminates by p = q.
        let order = (1..coeffs.len())
            .find(|&p| moment(&coeffs, p).abs() > MOMENT_TOL)
            .ok_or_else(|| Error::DegenerateFilter("no nonvanishing moment".into()))?;
        Ok(Self { coeffs, order })
    }

    /// The second-order difference filter `(1, -2, 1)`.
    pub fn second_difference() -> Self {
        Self {
            coeffs: vec![1.0, -2.0, 1.0],
            order: 2,
        }
    }

    /// The first-order difference filter `(1, -1)`.
    pub fn first_difference() -> Self {
        Self {
            coeffs: vec![1.0, -1.0],
            order: 1,
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Certified moment order `m`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Support length minus one.
    pub fn q(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_second_difference(&self) -> bool {
        self.coeffs == [1.0, -2.0, 1.0]
    }

    /// The `j`-th dilatation: `a_i` placed at index `i * j`, zeros elsewhere.
    pub fn dilate(&self, j: usize) -> Result<Self> {
        if j == 0 {
            return Err(Error::Domain("dilatation index must be >= 1".into()));
        }
        let mut coeffs = vec![0.0; self.q() * j + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            coeffs[i * j] = a;
        }
        Ok(Self {
            coeffs,
            order: self.order,
        })
    }

    /// `V(k) = sum_l a_l z[k + l]` for every `k` where the support fits.
    ///
    /// `z[0]` holds `Z(1/n)`, so entry `k - 1` of the output is the variation
    /// at lattice index `k`.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let needed = self.q() + 2;
        if z.len() < needed {
            return Err(Error::PathTooShort {
                len: z.len(),
                needed,
            });
        }
        Ok(z.windows(self.coeffs.len())
            .map(|w| w.iter().zip(&self.coeffs).map(|(x, a)| a * x).sum())
            .collect())
    }
}

/// Generalized variations `(V_n^a Z(k/n))_{k=1..n-1-q}` of a sampled path.
pub fn generalized_variations(f: &Filter, path: &SampledPath) -> Result<Vec<f64>> {
    f.apply(&path.values)
}
