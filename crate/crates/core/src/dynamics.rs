//! Explicit integration of the graph continuity equation
//! dρ/dt = −∇̄·j(ρ) with fluxes from a velocity and a flux–velocity relation.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::energy::{action, energy, local_slope, velocity_field, EnergySpec};
use crate::error::{invalid, Error, Result};
use crate::field::{DirectedFlux, EdgeField};
use crate::graph::{BaseMeasure, Graph};

pub const MASS_TOLERANCE: f64 = 1e-12;

/// Probability vector on the vertices at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    mass: Vec<f64>,
    time: f64,
}

impl State {
    pub fn new(mass: Vec<f64>, time: f64) -> Result<Self> {
        if let Some(x) = mass.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(invalid("rho", format!("mass at vertex {x} is {}", mass[x])));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid("rho", format!("total mass is {total}, expected 1")));
        }
        Ok(Self { mass, time })
    }

    /// Normalises non-negative weights to unit mass.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("rho", "weights must be non-negative with positive sum"));
        }
        Self::new(weights.iter().map(|w| w / total).collect(), 0.0)
    }

    pub fn uniform(n: usize) -> Self {
        Self { mass: vec![1.0 / n as f64; n], time: 0.0 }
    }

    pub fn delta(n: usize, x: usize) -> Self {
        let mut mass = vec![0.0; n];
        mass[x] = 1.0;
        Self { mass, time: 0.0 }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn into_mass(self) -> Vec<f64> {
        self.mass
    }

    pub fn mass_error(&self) -> f64 {
        (self.mass.iter().sum::<f64>() - 1.0).abs()
    }

    pub fn min_mass(&self) -> f64 {
        self.mass.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// How edge fluxes are formed from a velocity and the endpoint densities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FluxRelation {
    #[default]
    Upwind,
    Logarithmic,
    Geometric,
    Arithmetic,
    ScharfetterGummel { beta: f64 },
}

impl FromStr for FluxRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = crate::graph::split_call(s);
        match (name, args.as_slice()) {
            ("upwind", []) => Ok(Self::Upwind),
            ("logarithmic" | "log", []) => Ok(Self::Logarithmic),
            ("geometric", []) => Ok(Self::Geometric),
            ("arithmetic", []) => Ok(Self::Arithmetic),
            ("scharfetter_gummel" | "sg", [beta]) if *beta > 0.0 => Ok(Self::ScharfetterGummel { beta: *beta }),
            ("scharfetter_gummel" | "sg", [_]) => Err(invalid("beta", "must be positive")),
            _ => Err(Error::Unknown { kind: "flux relation", name: s.to_string() }),
        }
    }
}

/// (a − b)/(log a − log b), continuous at a = b and zero if either side is.
pub fn theta_log(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let d = a.ln() - b.ln();
    if d.abs() < 1e-8 {
        // b (e^d − 1)/d ≈ b (1 + d/2 + d²/6)
        b * (1.0 + d / 2.0 + d * d / 6.0)
    } else {
        (a - b) / d
    }
}

pub fn theta_geometric(a: f64, b: f64) -> f64 {
    (a * b).sqrt()
}

pub fn theta_arithmetic(a: f64, b: f64) -> f64 {
    0.5 * (a + b)
}

/// Θ(a, b; v) = a if v > 0, b otherwise. Multiplied by v it reproduces the
/// upwind flux.
pub fn theta_upwind(a: f64, b: f64, v: f64) -> f64 {
    if v > 0.0 {
        a
    } else {
        b
    }
}

/// Scharfetter–Gummel flux per unit μ_x μ_y between densities `a` (tail)
/// and `b` (head):
/// v (a e^{βv/2} − b e^{−βv/2}) / (e^{βv/2} − e^{−βv/2}).
pub fn scharfetter_gummel(a: f64, b: f64, v: f64, beta: f64) -> f64 {
    let z = beta * v;
    if z.abs() < 1e-8 {
        (a - b) / beta + 0.5 * v * (a + b)
    } else if z > 0.0 {
        v * (a - b * (-z).exp()) / -(-z).exp_m1()
    } else {
        v * (a * z.exp() - b) / z.exp_m1()
    }
}

/// j_xy = ρ_x μ_y (v_xy)₊ − ρ_y μ_x (v_xy)₋.
pub fn upwind_flux(g: &Graph, mu: &BaseMeasure, rho: &[f64], v: &EdgeField) -> EdgeField {
    EdgeField::from_values(
        g,
        g.edges()
            .iter()
            .zip(v.values())
            .map(|(e, &s)| rho[e.i] * mu[e.j] * s.max(0.0) - rho[e.j] * mu[e.i] * (-s).max(0.0))
            .collect(),
    )
    .expect("one value per edge")
}

/// Flux for any relation. The density-based relations need μ > 0 on the
/// endpoints of every edge.
pub fn interpolated_flux(g: &Graph, mu: &BaseMeasure, rho: &[f64], v: &EdgeField, rel: FluxRelation) -> Result<EdgeField> {
    if rel == FluxRelation::Upwind {
        return Ok(upwind_flux(g, mu, rho, v));
    }
    let mut out = Vec::with_capacity(g.n_edges());
    for (e, &s) in g.edges().iter().zip(v.values()) {
        let (mi, mj) = (mu[e.i], mu[e.j]);
        if mi <= 0.0 || mj <= 0.0 {
            return Err(invalid("mu", format!("density-based flux needs mu > 0 on edge ({}, {})", e.i, e.j)));
        }
        let (a, b) = (rho[e.i] / mi, rho[e.j] / mj);
        let per_unit = match rel {
            FluxRelation::Logarithmic => s * theta_log(a, b),
            FluxRelation::Geometric => s * theta_geometric(a, b),
            FluxRelation::Arithmetic => s * theta_arithmetic(a, b),
            FluxRelation::ScharfetterGummel { beta } => scharfetter_gummel(a, b, s, beta),
            FluxRelation::Upwind => unreachable!(),
        };
        out.push(mi * mj * per_unit);
    }
    EdgeField::from_values(g, out)
}

/// (∇̄·j)(x) = Σ_y η(x,y) j(x,y). Each edge adds and subtracts one product.
pub fn divergence(g: &Graph, flux: &EdgeField) -> Vec<f64> {
    let mut div = vec![0.0; g.n()];
    for (e, &s) in g.edges().iter().zip(flux.values()) {
        let w = e.eta * s;
        div[e.i] += w;
        div[e.j] -= w;
    }
    div
}

/// ½ Σ_y η (j_xy − j_yx) for a flux without antisymmetry.
pub fn divergence_directed(g: &Graph, flux: &DirectedFlux) -> Vec<f64> {
    let mut div = vec![0.0; g.n()];
    for (k, e) in g.edges().iter().enumerate() {
        let w = 0.5 * e.eta * (flux.forward[k] - flux.backward[k]);
        div[e.i] += w;
        div[e.j] -= w;
    }
    div
}

/// Source of an edge velocity as a function of the current masses.
pub trait Drift: Sync {
    fn velocity(&self, g: &Graph, rho: &[f64]) -> EdgeField;
}

impl Drift for EnergySpec {
    fn velocity(&self, g: &Graph, rho: &[f64]) -> EdgeField {
        velocity_field(self, g, rho)
    }
}

/// Energy velocity multiplied edgewise by fixed factors. Produces curves
/// that are not steepest descent.
#[derive(Debug, Clone)]
pub struct PerturbedDrift {
    pub spec: EnergySpec,
    pub factors: Vec<f64>,
}

impl PerturbedDrift {
    /// Factors drawn from `[lo, hi]` with a seeded stream.
    pub fn seeded(spec: EnergySpec, g: &Graph, lo: f64, hi: f64, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let factors = (0..g.n_edges()).map(|_| rng.random_range(lo..=hi)).collect();
        Self { spec, factors }
    }
}

impl Drift for PerturbedDrift {
    fn velocity(&self, g: &Graph, rho: &[f64]) -> EdgeField {
        let mut v = velocity_field(&self.spec, g, rho);
        for (s, f) in v.values_mut().iter_mut().zip(&self.factors) {
            *s *= f;
        }
        v
    }
}

/// Map from masses to an antisymmetric edge flux.
pub trait FluxModel: Sync {
    fn flux(&self, g: &Graph, mu: &BaseMeasure, rho: &[f64]) -> Result<EdgeField>;
}

/// Flux from a drift through a flux–velocity relation.
#[derive(Debug, Clone)]
pub struct VelocityFlux<D> {
    pub drift: D,
    pub relation: FluxRelation,
}

impl<D: Drift> FluxModel for VelocityFlux<D> {
    fn flux(&self, g: &Graph, mu: &BaseMeasure, rho: &[f64]) -> Result<EdgeField> {
        interpolated_flux(g, mu, rho, &self.drift.velocity(g, rho), self.relation)
    }
}

/// Linear heat flow: j_xy = ρ_x μ_y − ρ_y μ_x, i.e. density difference
/// times μ_x μ_y, pointing from high to low density.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeatFlux;

impl FluxModel for HeatFlux {
    fn flux(&self, g: &Graph, mu: &BaseMeasure, rho: &[f64]) -> Result<EdgeField> {
        Ok(EdgeField::from_fn(g, |i, j, _| rho[i] * mu[j] - rho[j] * mu[i]))
    }
}
impl std::fmt::Display for FluxRelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Upwind => write!(f, "upwind"),
            Self::Logarithmic => write!(f, "logarithmic"),
            Self::Geometric => write!(f, "geometric"),
            Self::Arithmetic => write!(f, "arithmetic"),
            Self::ScharfetterGummel { beta } => write!(f, "scharfetter_gummel({beta})"),
        }
    }
}

impl TryFrom<String> for FluxRelation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FluxRelation> for String {
    fn from(r: FluxRelation) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Rk4,
    #[default]
    AdaptiveEuler,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Self::Euler),
            "rk4" => Ok(Self::Rk4),
            "adaptive_euler" | "adaptive" => Ok(Self::AdaptiveEuler),
            _ => Err(Error::Unknown { kind: "scheme", name: s.to_string() }),
        }
    }
}

fn euler_update(rho: &[f64], div: &[f64], dt: f64) -> Vec<f64> {
    rho.iter().zip(div).map(|(r, d)| r - dt * d).collect()
}

fn first_negative(mass: &[f64]) -> Option<usize> {
    mass.iter().position(|m| !(*m >= 0.0))
}

/// Largest outflow per unit mass, max_x Σ_y η (j_xy)₊ / ρ_x.
fn outflow_rate(g: &Graph, rho: &[f64], flux: &EdgeField) -> f64 {
    let mut out = vec![0.0; g.n()];
    for (e, &s) in g.edges().iter().zip(flux.values()) {
        if s > 0.0 {
            out[e.i] += e.eta * s;
        } else {
            out[e.j] -= e.eta * s;
        }
    }
    out.iter()
        .zip(rho)
        .filter(|(o, _)| **o > 0.0)
        .map(|(o, r)| if *r > 0.0 { o / r } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

const MAX_HALVINGS: usize = 60;
/// Below this fraction of the requested step the adaptive scheme switches
/// from the rate cap to exact emptying.
const STALL_FRACTION: f64 = 1e-6;

/// Vertex that a forward Euler step empties first, and when.
fn emptying_time(rho: &[f64], div: &[f64]) -> Option<(usize, f64)> {
    rho.iter()
        .zip(div)
        .enumerate()
        .filter(|(_, (_, d))| **d > 0.0)
        .map(|(x, (r, d))| (x, r / d))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// One step from `state` with requested step `dt`. The returned state's time
/// tells how far the step actually went (adaptive stepping may shorten it).
pub fn step(model: &(impl FluxModel + ?Sized), g: &Graph, mu: &BaseMeasure, state: &State, dt: f64, scheme: Scheme) -> Result<State> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let rho = state.mass();
    let reject = |dt: f64, mass: &[f64]| {
        let vertex = first_negative(mass).unwrap_or(0);
        Error::StepRejected { dt, vertex, mass: mass[vertex] }
    };
    let (mass, used) = match scheme {
        Scheme::Euler => {
            let next = euler_update(rho, &divergence(g, &model.flux(g, mu, rho)?), dt);
            if first_negative(&next).is_some() {
                return Err(reject(dt, &next));
            }
            (next, dt)
        }
        Scheme::Rk4 => {
            let k1 = divergence(g, &model.flux(g, mu, rho)?);
            let k2 = divergence(g, &model.flux(g, mu, &euler_update(rho, &k1, dt / 2.0))?);
            let k3 = divergence(g, &model.flux(g, mu, &euler_update(rho, &k2, dt / 2.0))?);
            let k4 = divergence(g, &model.flux(g, mu, &euler_update(rho, &k3, dt))?);
            let next: Vec<f64> = (0..rho.len())
                .map(|x| rho[x] - dt / 6.0 * (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x]))
                .collect();
            if first_negative(&next).is_some() {
                return Err(reject(dt, &next));
            }
            (next, dt)
        }
        Scheme::AdaptiveEuler => {
            let flux = model.flux(g, mu, rho)?;
            let div = divergence(g, &flux);
            let rate = outflow_rate(g, rho, &flux);
            let mut h = if rate > 0.0 { dt.min(0.5 / rate) } else { dt };
            let mut drained = None;
            if h < STALL_FRACTION * dt {
                // Density-based relations can drain a vertex in finite time, and
                // the rate cap then only halves its mass per step. Step exactly
                // to the first emptying time instead.
                if let Some((x, t_empty)) = emptying_time(rho, &div) {
                    h = dt.min(t_empty);
                    drained = (h == t_empty).then_some(x);
                }
            }
            if !(h > 0.0) {
                return Err(Error::StepRejected { dt: h, vertex: first_negative(&euler_update(rho, &div, dt)).unwrap_or(0), mass: 0.0 });
            }
            let mut next = euler_update(rho, &div, h);
            if let Some(x) = drained {
                next[x] = 0.0;
            }
            let mut halvings = 0;
            while first_negative(&next).is_some() {
                if halvings == MAX_HALVINGS {
                    return Err(reject(h, &next));
                }
                h *= 0.5;
                halvings += 1;
                next = euler_update(rho, &div, h);
            }
            (next, h)
        }
    };
    Ok(State { mass, time: state.time + used })
}

/// Per-record diagnostics. `action` is the action of the flux evaluated at
/// the recorded state and may be +∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub energy: f64,
    pub slope: f64,
    pub action: f64,
    pub mass_error: f64,
    pub min_mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    /// Flux evaluated at each recorded state.
    pub fluxes: Vec<EdgeField>,
    pub diagnostics: Vec<Diagnostics>,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(State::time).collect()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Trajectory restricted to records `from..=to`.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            states: self.states[from..=to].to_vec(),
            fluxes: self.fluxes[from..=to].to_vec(),
            diagnostics: self.diagnostics[from..=to].to_vec(),
            steps: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub record_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { t_end: 1.0, dt: 0.1, scheme: Scheme::AdaptiveEuler, record_every: 1 }
    }
}

pub fn diagnostics(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, state: &State, flux: &EdgeField) -> Diagnostics {
    Diagnostics {
        t: state.time,
        energy: energy(spec, g, state.mass()),
        slope: local_slope(spec, g, mu, state.mass()),
        action: action(g, mu, state.mass(), flux),
        mass_error: state.mass_error(),
        min_mass: state.min_mass(),
    }
}

/// Integrates `model` from `rho0` to `t_end`; diagnostics use `spec`.
pub fn solve(
    model: &(impl FluxModel + ?Sized),
    spec: &EnergySpec,
    g: &Graph,
    mu: &BaseMeasure,
    rho0: &State,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    mu.check_against(g)?;
    if rho0.mass().len() != g.n() {
        return Err(invalid("rho", format!("{} masses for {} vertices", rho0.mass().len(), g.n())));
    }
    if !(opts.t_end >= 0.0 && opts.t_end.is_finite()) {
        return Err(invalid("t_end", format!("must be non-negative, got {}", opts.t_end)));
    }
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {}", opts.dt)));
    }
    if opts.record_every == 0 {
        return Err(invalid("record_every", "must be at least 1"));
    }
    let start = State { mass: rho0.mass().to_vec(), time: 0.0 };
    let t_end = opts.t_end;
    let mut traj = Trajectory { states: Vec::new(), fluxes: Vec::new(), diagnostics: Vec::new(), steps: 0 };
    let record = |traj: &mut Trajectory, s: &State| -> Result<()> {
        let flux = model.flux(g, mu, s.mass())?;
        traj.diagnostics.push(diagnostics(spec, g, mu, s, &flux));
        traj.fluxes.push(flux);
        traj.states.push(s.clone());
        Ok(())
    };
    record(&mut traj, &start)?;
    let mut state = start;
    let snap = 1e-12 * t_end.max(1.0);
    while t_end - state.time > snap {
        let h = opts.dt.min(t_end - state.time);
        let mut next = step(model, g, mu, &state, h, opts.scheme)?;
        if t_end - next.time <= snap {
            next.time = t_end;
        }
        state = next;
        traj.steps += 1;
        if traj.steps % opts.record_every == 0 || state.time == t_end {
            record(&mut traj, &state)?;
        }
    }
    Ok(traj)
}

/// Upwind (or other relation) gradient dynamics of `spec`.
pub fn simulate(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, rho0: &State, rel: FluxRelation, opts: &SolveOptions) -> Result<Trajectory> {
    let model = VelocityFlux { drift: spec.clone(), relation: rel };
    solve(&model, spec, g, mu, rho0, opts)
}

#[derive(Debug, Clone)]
pub struct HeatFlowReport {
    pub trajectory: Trajectory,
    /// exp(tG) ρ₀ at each recorded time.
    pub exact: Vec<Vec<f64>>,
    /// max over records of the L∞ gap between integrator and exact solution.
    pub max_deviation: f64,
}

/// Solution operator of the heat flow, exp(tG) ρ₀ with
/// G_xy = η μ_x (x ≠ y), G_xx = −Σ_y η μ_y, via the symmetric conjugate
/// η √(μ_x μ_y).
pub fn heat_flow_exact(g: &Graph, mu: &BaseMeasure, rho0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    if mu.weights().iter().any(|&m| m <= 0.0) {
        return Err(invalid("mu", "the exact heat flow needs mu > 0 everywhere"));
    }
    let n = g.n();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for e in g.edges() {
        let c = e.eta * (mu[e.i] * mu[e.j]).sqrt();
        s[(e.i, e.j)] = c;
        s[(e.j, e.i)] = c;
        s[(e.i, e.i)] -= e.eta * mu[e.j];
        s[(e.j, e.j)] -= e.eta * mu[e.i];
    }
    let eig = SymmetricEigen::new(s);
    let sq: Vec<f64> = mu.weights().iter().map(|m| m.sqrt()).collect();
    let z = DVector::from_iterator(n, rho0.iter().zip(&sq).map(|(r, s)| r / s));
    let coeffs = eig.eigenvectors.transpose() * z;
    Ok(times
        .iter()
        .map(|&t| {
            let scaled = DVector::from_iterator(n, coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c * (l * t).exp()));
            let y = &eig.eigenvectors * scaled;
            y.iter().zip(&sq).map(|(v, s)| v * s).collect()
        })
        .collect())
}

/// Integrates the heat flow with RK4 and compares against the exact
/// solution at every record.
pub fn heat_flow_check(g: &Graph, mu: &BaseMeasure, rho0: &State, t_end: f64, dt: f64) -> Result<HeatFlowReport> {
    let opts = SolveOptions { t_end, dt, scheme: Scheme::Rk4, record_every: 1 };
    let trajectory = solve(&HeatFlux, &EnergySpec::zero(g.n()), g, mu, rho0, &opts)?;
    let exact = heat_flow_exact(g, mu, rho0.mass(), &trajectory.times())?;
    let max_deviation = trajectory
        .states
        .iter()
        .zip(&exact)
        .flat_map(|(s, e)| s.mass().iter().zip(e).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(HeatFlowReport { trajectory, exact, max_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::KernelSpec;

    fn pair(eta: f64) -> Graph {
        Graph::new(vec![vec![0.0], vec![1.0]], &[(0, 1, eta)]).unwrap()
    }

    #[test]
    fn upwind_examples() {
        let g = pair(1.0);
        let mu = BaseMeasure::new(vec![0.1, 0.1]).unwrap();
        let v = EdgeField::from_values(&g, vec![-1.0]).unwrap();
        assert_eq!(upwind_flux(&g, &mu, &[1.0, 0.0], &v).values(), &[0.0]);
        let v = EdgeField::from_values(&g, vec![2.0]).unwrap();
        let j = upwind_flux(&g, &mu, &[0.5, 0.5], &v);
        assert!((j.values()[0] - 0.1).abs() < 1e-16);
        assert_eq!(j.get(&g, 1, 0), -j.get(&g, 0, 1));
    }

    #[test]
    fn theta_log_limits() {
        assert_eq!(theta_log(0.3, 0.3), 0.3);
        assert_eq!(theta_log(0.0, 0.5), 0.0);
        assert_eq!(theta_log(0.5, 0.0), 0.0);
        let (a, b) = (0.7, 0.7 * (1.0 + 1e-10));
        assert!((theta_log(a, b) - 0.5 * (a + b)).abs() < 1e-15);
        assert!((theta_log(2.0, 1.0) - 1.0 / 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sg_zero_velocity_is_fick() {
        assert!((scharfetter_gummel(0.4, 0.1, 0.0, 2.0) - 0.15).abs() < 1e-16);
    }

    #[test]
    fn sg_matches_symmetric_form() {
        for &(a, b, v, beta) in &[(0.3f64, 0.9f64, 0.7f64, 2.0f64), (1.2, 0.1, -0.4, 5.0), (0.5, 0.5, 1e-3, 1.0)] {
            let h: f64 = beta * v / 2.0;
            let reference = v * (a * h.exp() - b * (-h).exp()) / (h.exp() - (-h).exp());
            assert!((scharfetter_gummel(a, b, v, beta) - reference).abs() < 1e-13, "{a} {b} {v}");
        }
    }

    #[test]
    fn divergence_of_single_edge() {
        let g = pair(2.0);
        let j = EdgeField::from_values(&g, vec![0.25]).unwrap();
        assert_eq!(divergence(&g, &j), vec![0.5, -0.5]);
    }

    #[test]
    fn zero_velocity_keeps_state() {
        let g = pair(1.0);
        let mu = BaseMeasure::empirical(2);
        let spec = EnergySpec::zero(2);
        let model = VelocityFlux { drift: spec, relation: FluxRelation::Upwind };
        let s = State::new(vec![0.3, 0.7], 0.0).unwrap();
        for scheme in [Scheme::Euler, Scheme::Rk4, Scheme::AdaptiveEuler] {
            let next = step(&model, &g, &mu, &s, 0.1, scheme).unwrap();
            assert_eq!(next.mass(), s.mass());
        }
    }

    #[test]
    fn delta_at_attractive_minimum_is_stationary() {
        let g = pair(1.0);
        let mu = BaseMeasure::empirical(2);
        let spec = EnergySpec::from_kernel(KernelSpec::AttractiveExp { a: 1.0 }, &g).unwrap();
        let v = velocity_field(&spec, &g, &[1.0, 0.0]);
        assert!(v.get(&g, 0, 1) <= 0.0);
        let traj = simulate(&spec, &g, &mu, &State::delta(2, 0), FluxRelation::Upwind, &SolveOptions::default()).unwrap();
        assert!(traj.states.iter().all(|s| s.mass() == [1.0, 0.0]));
    }

    #[test]
    fn t_end_zero_gives_initial_state_only() {
        let g = pair(1.0);
        let spec = EnergySpec::zero(2);
        let opts = SolveOptions { t_end: 0.0, ..Default::default() };
        let traj = simulate(&spec, &g, &BaseMeasure::empirical(2), &State::uniform(2), FluxRelation::Upwind, &opts).unwrap();
        assert_eq!(traj.states.len(), 1);
    }

    #[test]
    fn state_validation() {
        assert!(State::new(vec![0.5, 0.6], 0.0).is_err());
        assert!(State::new(vec![-0.1, 1.1], 0.0).is_err());
        assert!(State::from_weights(&[1.0, 3.0]).is_ok());
    }

    #[test]
    fn two_point_heat_relaxation() {
        let (alpha, p, q) = (2.0, 0.3, 0.6);
        let g = pair(alpha);
        let mu = BaseMeasure::new(vec![p, q]).unwrap();
        let rho0 = [0.9, 0.1];
        let exact = heat_flow_exact(&g, &mu, &rho0, &[0.7]).unwrap();
        let eq = p / (p + q);
        let closed = eq + (rho0[0] - eq) * (-alpha * (p + q) * 0.7).exp();
        assert!((exact[0][0] - closed).abs() < 1e-14);
    }

    #[test]
    fn heat_flux_points_downhill_in_density() {
        let g = pair(1.0);
        let mu = BaseMeasure::new(vec![0.5, 0.5]).unwrap();
        let j = HeatFlux.flux(&g, &mu, &[0.8, 0.2]).unwrap();
        assert!(j.values()[0] > 0.0);
    }
}
