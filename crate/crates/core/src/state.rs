//! The vector state `(u, u_t)` and the bilinear forms acting on it.

use serde::{Deserialize, Serialize};

use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePair {
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
}

impl StatePair {
    pub fn new(u: Vec<f64>, ut: Vec<f64>) -> Self {
        assert_eq!(u.len(), ut.len(), "state components differ in length");
        Self { u, ut }
    }

    pub fn zeros(n: usize) -> Self {
        Self { u: vec![0.0; n], ut: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.ut).all(|v| v.is_finite())
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &StatePair) {
        for (x, y) in self.u.iter_mut().zip(&other.u) {
            *x += a * y;
        }
        for (x, y) in self.ut.iter_mut().zip(&other.ut) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.u.iter_mut().chain(self.ut.iter_mut()).for_each(|x| *x *= a);
    }

    pub fn scaled(&self, a: f64) -> StatePair {
        let mut s = self.clone();
        s.scale(a);
        s
    }

    pub fn sub(&self, other: &StatePair) -> StatePair {
        let mut s = self.clone();
        s.axpy(-1.0, other);
        s
    }

    pub fn add(&self, other: &StatePair) -> StatePair {
        let mut s = self.clone();
        s.axpy(1.0, other);
        s
    }

    /// The symplectic matrix `J = [[0, 1], [-1, 0]]` applied pointwise.
    pub fn apply_j(&self) -> StatePair {
        StatePair { u: self.ut.clone(), ut: self.u.iter().map(|v| -v).collect() }
    }

    /// Pointwise multiplication of both components by a weight.
    pub fn weighted(&self, w: &[f64]) -> StatePair {
        StatePair {
            u: self.u.iter().zip(w).map(|(a, b)| a * b).collect(),
            ut: self.ut.iter().zip(w).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.ut).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Bilinear pairing `<a, b> = ∫ a₁b₁ + a₂b₂`.
pub fn pairing(grid: &Grid, a: &StatePair, b: &StatePair) -> f64 {
    grid.dot(&a.u, &b.u) + grid.dot(&a.ut, &b.ut)
}

/// Plain L² norm of both components, used for Gram-Schmidt and probes.
pub fn l2_norm(grid: &Grid, a: &StatePair) -> f64 {
    pairing(grid, a, a).sqrt()
}

/// Symplectic form `ω(u, v) = ∫ u₂v₁ − u₁v₂`.
pub fn symplectic_pair(grid: &Grid, u: &StatePair, v: &StatePair) -> f64 {
    grid.dot(&u.ut, &v.u) - grid.dot(&u.u, &v.ut)
}

/// Same as [`symplectic_pair`] but refuses states of the wrong length.
pub fn symplectic_pair_checked(grid: &Grid, u: &StatePair, v: &StatePair) -> crate::Result<f64> {
    if u.len() != grid.n() || v.len() != grid.n() {
        return Err(crate::Error::GridMismatch);
    }
    Ok(symplectic_pair(grid, u, v))
}
