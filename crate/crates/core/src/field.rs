//! Edge-indexed fields. An [`EdgeField`] is antisymmetric by construction;
//! [`DirectedFlux`] carries independent values per orientation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;

/// One value per stored edge, read as the `i → j` orientation with `i < j`.
/// The reverse orientation is the negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeField {
    values: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(g: &Graph) -> Self {
        Self { values: vec![0.0; g.n_edges()] }
    }

    pub fn from_values(g: &Graph, values: Vec<f64>) -> Result<Self> {
        if values.len() != g.n_edges() {
            return Err(invalid("edge field", format!("{} values for {} edges", values.len(), g.n_edges())));
        }
        Ok(Self { values })
    }

    /// `f(i, j, eta)` gives the value on `i → j` for each stored edge.
    pub fn from_fn(g: &Graph, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        Self { values: g.edges().iter().map(|e| f(e.i, e.j, e.eta)).collect() }
    }

    /// Discrete gradient φ(y) − φ(x).
    pub fn gradient(g: &Graph, phi: &[f64]) -> Self {
        Self::from_fn(g, |i, j, _| phi[j] - phi[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value on the directed pair `x → y`; zero off the edge set.
    pub fn get(&self, g: &Graph, x: usize, y: usize) -> f64 {
        match g.edge_index(x, y) {
            Some(k) if x < y => self.values[k],
            Some(k) => -self.values[k],
            None => 0.0,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Flux with independent `i → j` and `j → i` values per stored edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedFlux {
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

impl DirectedFlux {
    pub fn new(g: &Graph, forward: Vec<f64>, backward: Vec<f64>) -> Result<Self> {
        if forward.len() != g.n_edges() || backward.len() != g.n_edges() {
            return Err(invalid("directed flux", "one forward and one backward value per edge"));
        }
        Ok(Self { forward, backward })
    }

    pub fn from_field(j: &EdgeField) -> Self {
        Self { forward: j.values().to_vec(), backward: j.values().iter().map(|v| -v).collect() }
    }

    /// (j − jᵀ)/2.
    pub fn antisymmetrize(&self) -> EdgeField {
        EdgeField { values: self.forward.iter().zip(&self.backward).map(|(f, b)| 0.5 * (f - b)).collect() }
    }

    /// Exact conversion, refusing anything that is not already antisymmetric.
    pub fn to_edge_field(&self, g: &Graph) -> Result<EdgeField> {
        for (k, (f, b)) in self.forward.iter().zip(&self.backward).enumerate() {
            if *f != -*b {
                let e = g.edges()[k];
                return Err(Error::NotAntisymmetric { i: e.i, j: e.j });
            }
        }
        Ok(EdgeField { values: self.forward.clone() })
    }
}
