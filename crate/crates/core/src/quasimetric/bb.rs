//! Time-discretised dynamic formulation of the upwind quasi-metric.
//!
//! Unknowns are the fluxes j_0..j_{M−1}; states follow from
//! ρ_{k+1} = ρ_k − Δt ∇̄·j_k, and the terminal condition is the linear
//! constraint ∇̄·Σ_k j_k = (ρ_start − ρ_end)/Δt. The objective is
//! Σ_k Δt A(ρ̄_k, j_k) with the slice average ρ̄_k = ½(ρ_k + ρ_{k+1}).
//! Feasible iterates stay on the affine constraint set because every search
//! direction is projected onto its null space.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::min_flux::{optimal_flux_for_divergence, routable};
use crate::dynamics::{divergence, State};
use crate::energy::{action, alpha};
use crate::error::{invalid, Error, Result};
use crate::field::EdgeField;
use crate::graph::{BaseMeasure, Graph};

pub const BB_LIMIT: usize = 50;

#[derive(Debug, Clone)]
pub struct PathProblem<'a> {
    pub g: &'a Graph,
    pub mu: &'a BaseMeasure,
    pub rho_start: &'a State,
    pub rho_end: &'a State,
    pub m_steps: usize,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl<'a> PathProblem<'a> {
    pub fn new(g: &'a Graph, mu: &'a BaseMeasure, rho_start: &'a State, rho_end: &'a State) -> Self {
        Self { g, mu, rho_start, rho_end, m_steps: 64, tolerance: 1e-8, max_iters: 20_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSolution {
    /// ρ_0..ρ_M.
    pub states: Vec<Vec<f64>>,
    /// j_0..j_{M−1}.
    pub fluxes: Vec<EdgeField>,
    pub total_action: f64,
    pub per_slice_action: Vec<f64>,
    /// √(total_action); +∞ when no admissible path exists.
    pub distance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after every accepted iteration, starting with the initial value.
    pub history: Vec<f64>,
}

struct Discretisation<'a> {
    g: &'a Graph,
    mu: &'a BaseMeasure,
    start: Vec<f64>,
    m: usize,
    dt: f64,
    /// Pseudo-inverse of B Bᵀ, the η²-weighted Laplacian.
    lap_pinv: DMatrix<f64>,
}

impl Discretisation<'_> {
    fn e(&self) -> usize {
        self.g.n_edges()
    }

    fn slice<'v>(&self, x: &'v [f64], k: usize) -> &'v [f64] {
        &x[k * self.e()..(k + 1) * self.e()]
    }

    /// B j as a vertex vector.
    fn div(&self, j: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.g.n()];
        for (e, s) in self.g.edges().iter().zip(j) {
            d[e.i] += e.eta * s;
            d[e.j] -= e.eta * s;
        }
        d
    }

    fn states(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.m + 1);
        out.push(self.start.clone());
        for k in 0..self.m {
            let d = self.div(self.slice(x, k));
            let prev = &out[k];
            let next = prev.iter().zip(&d).map(|(r, d)| r - self.dt * d).collect();
            out.push(next);
        }
        out
    }

    fn slice_action(&self, avg: &[f64], j: &[f64]) -> f64 {
        let (g, mu) = (self.g, self.mu);
        g.edges()
            .iter()
            .zip(j)
            .map(|(e, &s)| e.eta * (alpha(s, avg[e.i] * mu[e.j]) + alpha(-s, avg[e.j] * mu[e.i])))
            .sum()
    }

    fn averages(states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        states.windows(2).map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect()).collect()
    }

    /// Objective and per-slice actions; +∞ if any intermediate state leaves
    /// the non-negative orthant.
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let states = self.states(x);
        if states[1..self.m].iter().flatten().any(|r| *r < 0.0) {
            return (f64::INFINITY, Vec::new());
        }
        let per: Vec<f64> = Self::averages(&states)
            .iter()
            .enumerate()
            .map(|(k, avg)| self.slice_action(avg, self.slice(x, k)))
            .collect();
        (self.dt * per.iter().sum::<f64>(), per)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (g, mu) = (self.g, self.mu);
        let n = g.n();
        let ne = self.e();
        let states = self.states(x);
        let avgs = Self::averages(&states);
        let mut grad = vec![0.0; x.len()];
        // g_k = ∂A_k/∂ρ̄_k
        let mut dr = vec![vec![0.0; n]; self.m];
        for k in 0..self.m {
            let j = self.slice(x, k);
            let avg = &avgs[k];
            for (idx, e) in g.edges().iter().enumerate() {
                let s = j[idx];
                let (a, b) = (avg[e.i] * mu[e.j], avg[e.j] * mu[e.i]);
                if s > 0.0 && a > 0.0 {
                    grad[k * ne + idx] = e.eta * 2.0 * s / a;
                    dr[k][e.i] -= e.eta * s * s / (a * a) * mu[e.j];
                } else if s < 0.0 && b > 0.0 {
                    grad[k * ne + idx] = e.eta * 2.0 * s / b;
                    dr[k][e.j] -= e.eta * s * s / (b * b) * mu[e.i];
                }
            }
        }
        // ρ_m depends on j_l for l < m through −Δt B j_l, and ρ̄_k takes
        // half of ρ_{k+1}. Suffix sums give Σ_{m>k} g_m + ½ g_k.
        let mut suffix = vec![0.0; n];
        for k in (0..self.m).rev() {
            let u: Vec<f64> = suffix.iter().zip(&dr[k]).map(|(s, d)| s + 0.5 * d).collect();
            for (idx, e) in g.edges().iter().enumerate() {
                grad[k * ne + idx] = self.dt * grad[k * ne + idx] - self.dt * self.dt * e.eta * (u[e.i] - u[e.j]);
            }
            for (s, d) in suffix.iter_mut().zip(&dr[k]) {
                *s += d;
            }
        }
        grad
    }

    /// Orthogonal projection onto {Σ_k B d_k = 0}: subtract the same Bᵀλ
    /// from every slice with M (B Bᵀ) λ = B Σ_k d_k.
    fn project(&self, d: &mut [f64]) {
        let ne = self.e();
        let mut total = vec![0.0; ne];
        for k in 0..self.m {
            for (t, v) in total.iter_mut().zip(self.slice(d, k)) {
                *t += v;
            }
        }
        let r = nalgebra::DVector::from_vec(self.div(&total));
        let lambda = &self.lap_pinv * r / self.m as f64;
        let corr: Vec<f64> = self.g.edges().iter().map(|e| e.eta * (lambda[e.i] - lambda[e.j])).collect();
        for k in 0..self.m {
            for (v, c) in d[k * ne..(k + 1) * ne].iter_mut().zip(&corr) {
                *v -= c;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lap_pinv(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for e in g.edges() {
        let w = e.eta * e.eta;
        lap[(e.i, e.i)] += w;
        lap[(e.j, e.j)] += w;
        lap[(e.i, e.j)] -= w;
        lap[(e.j, e.i)] -= w;
    }
    let scale = lap.amax().max(1e-300);
    lap.pseudo_inverse(1e-11 * scale).expect("SVD of a symmetric matrix")
}

fn infinite(problem: &PathProblem) -> PathSolution {
    PathSolution {
        states: vec![problem.rho_start.mass().to_vec(), problem.rho_end.mass().to_vec()],
        fluxes: Vec::new(),
        total_action: f64::INFINITY,
        per_slice_action: Vec::new(),
        distance: f64::INFINITY,
        converged: true,
        iterations: 0,
        history: Vec::new(),
    }
}

/// Per-slice fluxes along a piecewise-linear path through `waypoints`
/// (first and last are the endpoints); `None` if some slice has no
/// admissible flux.
fn piecewise_linear_start(disc: &Discretisation, waypoints: &[Vec<f64>]) -> Option<Vec<f64>> {
    let legs = waypoints.len() - 1;
    let m = disc.m;
    let ne = disc.e();
    let mut x = vec![0.0; m * ne];
    let mut k = 0;
    for leg in 0..legs {
        let slices = if leg + 1 == legs { m - k } else { m / legs };
        let (a, b) = (&waypoints[leg], &waypoints[leg + 1]);
        let span = slices as f64 * disc.dt;
        let rate: Vec<f64> = a.iter().zip(b).map(|(p, q)| (p - q) / span).collect();
        for s in 0..slices {
            let tau = (s as f64 + 0.5) / slices as f64;
            let avg: Vec<f64> = a.iter().zip(b).map(|(p, q)| (1.0 - tau) * p + tau * q).collect();
            let j = optimal_flux_for_divergence(disc.g, disc.mu, &avg, &rate).ok()?;
            x[(k + s) * ne..(k + s + 1) * ne].copy_from_slice(j.values());
        }
        k += slices;
    }
    Some(x)
}

/// Minimises the discretised path action between the two endpoints.
pub fn solve_bb(problem: &PathProblem) -> Result<PathSolution> {
    let (g, mu) = (problem.g, problem.mu);
    mu.check_against(g)?;
    let n = g.n();
    if n > BB_LIMIT {
        return Err(Error::TooLarge { what: "solve_bb", limit: BB_LIMIT, n });
    }
    if problem.m_steps < 2 {
        return Err(invalid("m_steps", "need at least 2 time slices"));
    }
    if !(problem.tolerance > 0.0) {
        return Err(invalid("tolerance", "must be positive"));
    }
    let (start, end) = (problem.rho_start.mass(), problem.rho_end.mass());
    if start.len() != n || end.len() != n {
        return Err(invalid("rho", "endpoints must live on the graph's vertices"));
    }
    let m = problem.m_steps;
    let ne = g.n_edges();
    let dt = 1.0 / m as f64;

    if start == end {
        let states = vec![start.to_vec(); m + 1];
        return Ok(PathSolution {
            states,
            fluxes: vec![EdgeField::zeros(g); m],
            total_action: 0.0,
            per_slice_action: vec![0.0; m],
            distance: 0.0,
            converged: true,
            iterations: 0,
            history: vec![0.0],
        });
    }

    // mass can enter y only if μ_y > 0
    let supply: Vec<f64> = start.iter().zip(end).map(|(a, b)| a - b).collect();
    if routable(g, &supply, |k, fwd| {
        let e = g.edges()[k];
        mu[if fwd { e.j } else { e.i }] > 0.0
    })
    .is_err()
    {
        return Ok(infinite(problem));
    }

    let disc = Discretisation { g, mu, start: start.to_vec(), m, dt, lap_pinv: lap_pinv(g) };

    let mut x = match piecewise_linear_start(&disc, &[start.to_vec(), end.to_vec()]) {
        Some(x) => x,
        None => {
            // route through a strictly positive intermediate state
            let labels = g.components();
            let n_comp = labels.iter().max().map_or(0, |l| l + 1);
            let mut comp_mass = vec![0.0; n_comp];
            let mut comp_size = vec![0usize; n_comp];
            for x in 0..n {
                comp_mass[labels[x]] += start[x];
                if mu[x] > 0.0 {
                    comp_size[labels[x]] += 1;
                }
            }
            let mid: Vec<f64> = (0..n)
                .map(|x| {
                    let c = labels[x];
                    let u = if mu[x] > 0.0 && comp_size[c] > 0 { comp_mass[c] / comp_size[c] as f64 } else { 0.0 };
                    (start[x] + end[x] + u) / 3.0
                })
                .collect();
            piecewise_linear_start(&disc, &[start.to_vec(), mid, end.to_vec()]).ok_or(Error::NotConverged("path initialisation"))?
        }
    };
    // clean up accumulated drift in the terminal constraint
    {
        let mut total = vec![0.0; ne];
        for k in 0..m {
            for (t, v) in total.iter_mut().zip(disc.slice(&x, k)) {
                *t += v;
            }
        }
        let have = disc.div(&total);
        let want: Vec<f64> = supply.iter().map(|s| s / dt).collect();
        let r = nalgebra::DVector::from_iterator(n, want.iter().zip(&have).map(|(w, h)| w - h));
        let lambda = &disc.lap_pinv * r / m as f64;
        let corr: Vec<f64> = g.edges().iter().map(|e| e.eta * (lambda[e.i] - lambda[e.j])).collect();
        for k in 0..m {
            for (v, c) in x[k * ne..(k + 1) * ne].iter_mut().zip(&corr) {
                *v += c;
            }
        }
    }

    let (mut f, _) = disc.objective(&x);
    if !f.is_finite() {
        return Err(Error::NotConverged("path initialisation"));
    }
    let mut history = vec![f];
    let mut grad = disc.gradient(&x);
    disc.project(&mut grad);
    let mut step = 1.0 / (1.0 + dot(&grad, &grad).sqrt());
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut quiet = 0usize;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < problem.max_iters {
        iterations += 1;
        let gnorm2 = dot(&grad, &grad);
        if gnorm2 == 0.0 {
            converged = true;
            break;
        }
        // spectral (Barzilai–Borwein) trial step, safeguarded
        if let Some((px, pg)) = &prev {
            let s: Vec<f64> = x.iter().zip(px).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = grad.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 0.0 {
                step = (dot(&s, &s) / sy).clamp(1e-12, 1e12);
            } else {
                step *= 2.0;
            }
        }
        let mut accepted = None;
        let mut tau = step;
        for _ in 0..80 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(a, d)| a - tau * d).collect();
            let (ft, _) = disc.objective(&trial);
            if ft <= f - 1e-4 * tau * gnorm2 {
                accepted = Some((trial, ft));
                break;
            }
            tau *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            // no further decrease representable in double precision
            converged = true;
            break;
        };
        let rel = (f - ft) / f.abs().max(1e-300);
        prev = Some((std::mem::replace(&mut x, trial), grad));
        f = ft;
        history.push(f);
        grad = disc.gradient(&x);
        disc.project(&mut grad);
        if rel < problem.tolerance {
            quiet += 1;
            if quiet >= 50 {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }

    let (total_action, per_slice_action) = disc.objective(&x);
    let mut states = disc.states(&x);
    // the terminal state equals the endpoint up to roundoff; report it exactly
    *states.last_mut().expect("m >= 2") = end.to_vec();
    let fluxes = (0..m).map(|k| EdgeField::from_values(g, disc.slice(&x, k).to_vec()).expect("edge count")).collect();
    Ok(PathSolution {
        states,
        fluxes,
        total_action,
        per_slice_action,
        distance: total_action.sqrt(),
        converged,
        iterations,
        history,
    })
}

/// Largest violation of ρ_{k+1} = ρ_k − Δt ∇̄·j_k along a solution.
pub fn continuity_defect(g: &Graph, sol: &PathSolution) -> f64 {
    let m = sol.fluxes.len();
    if m == 0 {
        return 0.0;
    }
    let dt = 1.0 / m as f64;
    (0..m)
        .flat_map(|k| {
            let d = divergence(g, &sol.fluxes[k]);
            let (a, b) = (&sol.states[k], &sol.states[k + 1]);
            (0..g.n()).map(move |x| (b[x] - (a[x] - dt * d[x])).abs()).collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// A(ρ̄_k, j_k) per slice recomputed from a solution, for cross-checks.
pub fn slice_actions(g: &Graph, mu: &BaseMeasure, sol: &PathSolution) -> Vec<f64> {
    sol.fluxes
        .iter()
        .enumerate()
        .map(|(k, j)| {
            let avg: Vec<f64> = sol.states[k].iter().zip(&sol.states[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
            action(g, mu, &avg, j)
        })
        .collect()
}
