//! Interaction energy, its first variation, the upwind action and the
//! Finsler quantities built on it.
//!
//! All flux-level quantities use mass fluxes `j` on edges. With densities
//! relative to μ the action of a flux `j` is
//!
//! ```text
//! A(ρ, j) = Σ_{i<j edges} η [ α(j_ij, ρ_i μ_j) + α(−j_ij, ρ_j μ_i) ],
//! α(s, r) = s₊² / r
//! ```
//!
//! which is the ordered-pair sum `½ Σ_{x,y}` with the two orientations folded
//! together.

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{DirectedFlux, EdgeField};
use crate::graph::{euclidean, graph_distance_matrix, split_call, BaseMeasure, EdgeCost, Graph};

/// Above this size the kernel is evaluated on the fly instead of stored.
pub const DENSE_LIMIT: usize = 2048;

const PAR_ROWS: usize = 256;

pub type PairFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Built-in interaction kernels selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelSpec {
    Zero,
    /// 1 − exp(−a|x−y|²)
    AttractiveExp { a: f64 },
    /// exp(−a|x−y|²)
    RepulsiveExp { a: f64 },
    /// 1 − exp(−d_G(x,y)²/a) with d_G the shortest path under cost 1/η.
    GraphDistanceExp { a: f64 },
    /// |x−y|
    Abs,
    /// 1 − exp(−a|x−y|)
    ExpAbs { a: f64 },
    /// c_r exp(−r/l_r) − c_a exp(−r/l_a)
    Morse { ca: f64, la: f64, cr: f64, lr: f64 },
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_call(s);
        let unknown = || Error::Unknown { kind: "interaction kernel", name: s.to_string() };
        if args.iter().any(|a| !a.is_finite()) {
            return Err(unknown());
        }
        match (name, args.as_slice()) {
            ("zero", []) => Ok(Self::Zero),
            ("attractive_exp", [a]) => Ok(Self::AttractiveExp { a: *a }),
            ("repulsive_exp", [a]) => Ok(Self::RepulsiveExp { a: *a }),
            ("graph_distance_exp", [a]) => Ok(Self::GraphDistanceExp { a: *a }),
            ("abs", []) => Ok(Self::Abs),
            ("exp_abs", []) => Ok(Self::ExpAbs { a: 1.0 }),
            ("exp_abs", [a]) => Ok(Self::ExpAbs { a: *a }),
            ("morse", [ca, la, cr, lr]) => Ok(Self::Morse { ca: *ca, la: *la, cr: *cr, lr: *lr }),
            _ => Err(unknown()),
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::AttractiveExp { a } => write!(f, "attractive_exp({a})"),
            Self::RepulsiveExp { a } => write!(f, "repulsive_exp({a})"),
            Self::GraphDistanceExp { a } => write!(f, "graph_distance_exp({a})"),
            Self::Abs => write!(f, "abs"),
            Self::ExpAbs { a } => write!(f, "exp_abs({a})"),
            Self::Morse { ca, la, cr, lr } => write!(f, "morse({ca},{la},{cr},{lr})"),
        }
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::AttractiveExp { a } | Self::RepulsiveExp { a } | Self::ExpAbs { a } => a > 0.0,
            Self::GraphDistanceExp { a } => a > 0.0,
            Self::Morse { la, lr, .. } => la > 0.0 && lr > 0.0,
            Self::Zero | Self::Abs => true,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("kernel", format!("{self:?} needs positive scale parameters")))
        }
    }

    /// Radial profile for the kernels that only depend on |x−y|.
    pub fn radial(&self, r: f64) -> Option<f64> {
        Some(match *self {
            Self::Zero => 0.0,
            Self::AttractiveExp { a } => -(-a * r * r).exp_m1(),
            Self::RepulsiveExp { a } => (-a * r * r).exp(),
            Self::Abs => r,
            Self::ExpAbs { a } => -(-a * r).exp_m1(),
            Self::Morse { ca, la, cr, lr } => cr * (-r / lr).exp() - ca * (-r / la).exp(),
            Self::GraphDistanceExp { .. } => return None,
        })
    }

    /// d/dr of the radial profile, `None` for graph-distance kernels.
    pub fn radial_derivative(&self, r: f64) -> Option<f64> {
        Some(match *self {
            Self::Zero => 0.0,
            Self::AttractiveExp { a } => 2.0 * a * r * (-a * r * r).exp(),
            Self::RepulsiveExp { a } => -2.0 * a * r * (-a * r * r).exp(),
            Self::Abs => 1.0,
            Self::ExpAbs { a } => a * (-a * r).exp(),
            Self::Morse { ca, la, cr, lr } => ca / la * (-r / la).exp() - cr / lr * (-r / lr).exp(),
            Self::GraphDistanceExp { .. } => return None,
        })
    }

    /// Global Lipschitz constant of the radial profile when known in closed form.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            Self::Zero => Some(0.0),
            Self::AttractiveExp { a } | Self::RepulsiveExp { a } => Some((2.0 * a / std::f64::consts::E).sqrt()),
            Self::Abs => Some(1.0),
            Self::ExpAbs { a } => Some(a),
            Self::Morse { ca, la, cr, lr } => Some(ca / la + cr / lr),
            Self::GraphDistanceExp { .. } => None,
        }
    }
}

#[derive(Clone)]
enum KernelEval {
    /// Row-major n × n.
    Dense(Arc<Vec<f64>>),
    Analytic(PairFn),
}

/// Interaction kernel K and external potential P.
#[derive(Clone)]
pub struct EnergySpec {
    kernel: KernelEval,
    n: usize,
    potential: Option<Vec<f64>>,
    pub lipschitz_l: Option<f64>,
}

impl std::fmt::Debug for EnergySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kernel {
            KernelEval::Dense(_) => "dense",
            KernelEval::Analytic(_) => "analytic",
        };
        f.debug_struct("EnergySpec").field("kernel", &kind).field("n", &self.n).finish_non_exhaustive()
    }
}

impl EnergySpec {
    /// K ≡ 0, P ≡ 0.
    pub fn zero(n: usize) -> Self {
        Self { kernel: KernelEval::Dense(Arc::new(vec![0.0; n * n])), n, potential: None, lipschitz_l: Some(0.0) }
    }

    /// Wraps an explicit symmetric matrix (row-major).
    pub fn from_matrix(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(invalid("kernel", format!("matrix has {} entries, expected {}", matrix.len(), n * n)));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(invalid("kernel", "matrix entries must be finite"));
        }
        let scale = matrix.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in i + 1..n {
                if (matrix[i * n + j] - matrix[j * n + i]).abs() > 1e-12 * scale {
                    return Err(invalid("kernel", format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { kernel: KernelEval::Dense(Arc::new(matrix)), n, potential: None, lipschitz_l: None })
    }

    /// Arbitrary pair function evaluated on vertex positions. It is
    /// symmetrised as ½(K(x,y) + K(y,x)) so the symmetry contract holds.
    pub fn from_fn(g: &Graph, k: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        let k: PairFn = Arc::new(move |x, y| 0.5 * (k(x, y) + k(y, x)));
        let n = g.n();
        let kernel = if n <= DENSE_LIMIT { KernelEval::Dense(Arc::new(dense(g, &k))) } else { KernelEval::Analytic(k) };
        Self { kernel, n, potential: None, lipschitz_l: None }
    }

    /// Built-in kernel on the vertex set of `g`.
    pub fn from_kernel(spec: KernelSpec, g: &Graph) -> Result<Self> {
        spec.validate()?;
        let n = g.n();
        let mut out = match spec {
            KernelSpec::GraphDistanceExp { a } => {
                let d = graph_distance_matrix(g, EdgeCost::InverseWeight);
                let m = d.iter().flatten().map(|&dist| -(-dist * dist / a).exp_m1()).collect();
                Self { kernel: KernelEval::Dense(Arc::new(m)), n, potential: None, lipschitz_l: None }
            }
            _ => {
                let f: PairFn = Arc::new(move |x, y| spec.radial(euclidean(x, y)).unwrap_or(0.0));
                let kernel = if n <= DENSE_LIMIT { KernelEval::Dense(Arc::new(dense(g, &f))) } else { KernelEval::Analytic(f) };
                Self { kernel, n, potential: None, lipschitz_l: None }
            }
        };
        out.lipschitz_l = spec.lipschitz();
        Ok(out)
    }

    pub fn with_potential(mut self, potential: Vec<f64>) -> Result<Self> {
        if potential.len() != self.n {
            return Err(invalid("potential", format!("{} values for {} vertices", potential.len(), self.n)));
        }
        if potential.iter().any(|p| !p.is_finite()) {
            return Err(invalid("potential", "values must be finite"));
        }
        self.potential = Some(potential);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn potential(&self, x: usize) -> f64 {
        self.potential.as_ref().map_or(0.0, |p| p[x])
    }

    pub fn kernel_value(&self, g: &Graph, x: usize, y: usize) -> f64 {
        match &self.kernel {
            KernelEval::Dense(m) => m[x * self.n + y],
            KernelEval::Analytic(f) => f(g.position(x), g.position(y)),
        }
    }

    /// (K * ρ)(x) = Σ_y K(x,y) ρ_y.
    pub fn convolve(&self, g: &Graph, rho: &[f64]) -> Vec<f64> {
        let n = self.n;
        let row = |x: usize| -> f64 {
            match &self.kernel {
                KernelEval::Dense(m) => m[x * n..(x + 1) * n].iter().zip(rho).map(|(k, r)| k * r).sum(),
                KernelEval::Analytic(f) => {
                    let px = g.position(x);
                    (0..n).filter(|&y| rho[y] != 0.0).map(|y| f(px, g.position(y)) * rho[y]).sum()
                }
            }
        };
        if n >= PAR_ROWS {
            (0..n).into_par_iter().map(row).collect()
        } else {
            (0..n).map(row).collect()
        }
    }
}

fn dense(g: &Graph, k: &PairFn) -> Vec<f64> {
    let n = g.n();
    let mut m = vec![0.0; n * n];
    for x in 0..n {
        for y in x..n {
            let v = k(g.position(x), g.position(y));
            m[x * n + y] = v;
            m[y * n + x] = v;
        }
    }
    m
}

/// E(ρ) = ½ Σ_{x,y} K(x,y) ρ_x ρ_y + Σ_x P(x) ρ_x, diagonal included.
pub fn energy(spec: &EnergySpec, g: &Graph, rho: &[f64]) -> f64 {
    let conv = spec.convolve(g, rho);
    rho.iter().enumerate().map(|(x, r)| r * (0.5 * conv[x] + spec.potential(x))).sum()
}

/// δE/δρ = K * ρ + P.
pub fn first_variation(spec: &EnergySpec, g: &Graph, rho: &[f64]) -> Vec<f64> {
    let mut phi = spec.convolve(g, rho);
    for (x, p) in phi.iter_mut().enumerate() {
        *p += spec.potential(x);
    }
    phi
}

/// v = −∇̄(K * ρ + P).
pub fn velocity_field(spec: &EnergySpec, g: &Graph, rho: &[f64]) -> EdgeField {
    let phi = first_variation(spec, g, rho);
    EdgeField::from_fn(g, |i, j, _| phi[i] - phi[j])
}

/// α(s, r) = s₊²/r with α(s, 0) = 0 for s ≤ 0 and +∞ for s > 0.
pub fn alpha(s: f64, r: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if r <= 0.0 {
        f64::INFINITY
    } else {
        s * s / r
    }
}

/// Action of an antisymmetric mass flux. +∞ when mass is pushed out of an
/// empty vertex.
pub fn action(g: &Graph, mu: &BaseMeasure, rho: &[f64], flux: &EdgeField) -> f64 {
    g.edges()
        .iter()
        .zip(flux.values())
        .map(|(e, &s)| e.eta * (alpha(s, rho[e.i] * mu[e.j]) + alpha(-s, rho[e.j] * mu[e.i])))
        .sum()
}

/// Action of a flux without antisymmetry, ½ Σ_{x,y} [α(j_xy, ρ_x μ_y) + α(−j_xy, μ_x ρ_y)] η.
pub fn action_directed(g: &Graph, mu: &BaseMeasure, rho: &[f64], flux: &DirectedFlux) -> f64 {
    let mut total = 0.0;
    for (k, e) in g.edges().iter().enumerate() {
        let (f, b) = (flux.forward[k], flux.backward[k]);
        let (a_ij, a_ji) = (rho[e.i] * mu[e.j], rho[e.j] * mu[e.i]);
        total += 0.5 * e.eta * (alpha(f, a_ij) + alpha(-f, a_ji) + alpha(b, a_ji) + alpha(-b, a_ij));
    }
    total
}

/// Checked variant: refuses fluxes that are not antisymmetric.
pub fn action_checked(g: &Graph, mu: &BaseMeasure, rho: &[f64], flux: &DirectedFlux) -> Result<f64> {
    Ok(action(g, mu, rho, &flux.to_edge_field(g)?))
}

/// Σ_{x,y} (v_xy)₊² η ρ_x μ_y.
pub fn action_of_velocity(g: &Graph, mu: &BaseMeasure, rho: &[f64], v: &EdgeField) -> f64 {
    g.edges()
        .iter()
        .zip(v.values())
        .map(|(e, &s)| {
            let (p, m) = (s.max(0.0), (-s).max(0.0));
            e.eta * (p * p * rho[e.i] * mu[e.j] + m * m * rho[e.j] * mu[e.i])
        })
        .sum()
}

/// 𝒟(ρ): action of the steepest-descent velocity −∇̄ δE/δρ.
pub fn local_slope(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, rho: &[f64]) -> f64 {
    action_of_velocity(g, mu, rho, &velocity_field(spec, g, rho))
}

/// g_{ρ,j}(j₁, j₂): the quadratic form whose diagonal is the action. The
/// orientation of `base` selects which endpoint mass sits in the
/// denominator; an edge where `base` vanishes contributes nothing.
pub fn finsler_inner_product(g: &Graph, mu: &BaseMeasure, rho: &[f64], base: &EdgeField, j1: &EdgeField, j2: &EdgeField) -> f64 {
    let mut total = 0.0;
    for (k, e) in g.edges().iter().enumerate() {
        let b = base.values()[k];
        let w = if b > 0.0 {
            rho[e.i] * mu[e.j]
        } else if b < 0.0 {
            rho[e.j] * mu[e.i]
        } else {
            continue;
        };
        let prod = j1.values()[k] * j2.values()[k];
        if w <= 0.0 {
            if prod != 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        total += e.eta * prod / w;
    }
    total
}

/// F²_ρ(j) = g_{ρ,j}(j, j).
pub fn finsler_norm_sq(g: &Graph, mu: &BaseMeasure, rho: &[f64], j: &EdgeField) -> f64 {
    finsler_inner_product(g, mu, rho, j, j, j)
}

/// ĝ_{ρ,w}(u, v) = Σ_edges u v η (χ_{w>0} ρ_i μ_j + χ_{w<0} μ_i ρ_j), the
/// velocity-side form.
pub fn finsler_velocity_product(g: &Graph, mu: &BaseMeasure, rho: &[f64], w: &EdgeField, u: &EdgeField, v: &EdgeField) -> f64 {
    let mut total = 0.0;
    for (k, e) in g.edges().iter().enumerate() {
        let b = w.values()[k];
        let weight = if b > 0.0 {
            rho[e.i] * mu[e.j]
        } else if b < 0.0 {
            rho[e.j] * mu[e.i]
        } else {
            continue;
        };
        total += e.eta * u.values()[k] * v.values()[k] * weight;
    }
    total
}

/// Velocity w with j = ρ_x μ_y w₊ − μ_x ρ_y w₋. Entries are ±∞ where the
/// flux leaves an empty vertex.
pub fn velocity_decomposition(g: &Graph, mu: &BaseMeasure, rho: &[f64], j: &EdgeField) -> EdgeField {
    let mut out = EdgeField::zeros(g);
    for (k, e) in g.edges().iter().enumerate() {
        let s = j.values()[k];
        let r = if s > 0.0 {
            rho[e.i] * mu[e.j]
        } else if s < 0.0 {
            rho[e.j] * mu[e.i]
        } else {
            continue;
        };
        out.values_mut()[k] = if r > 0.0 { s / r } else { s.signum() * f64::INFINITY };
    }
    out
}
