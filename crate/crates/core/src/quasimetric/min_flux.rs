//! Minimal-action flux for a prescribed divergence.
//!
//! The problem min_j A(ρ, j) s.t. ∇̄·j = t is solved through its concave dual
//!
//! ```text
//! max_φ  Σ_x φ_x t_x − ¼ Σ_e η (a_e (s_e)₊² + b_e (s_e)₋²),   s_e = φ_i − φ_j
//! ```
//!
//! with a_e = ρ_i μ_j, b_e = ρ_j μ_i. The primal flux is recovered as
//! j_e = ½(a_e (s_e)₊ − b_e (s_e)₋), the upwind flux of the gradient
//! velocity −∇̄(φ/2).

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::energy::action;
use crate::error::{invalid, Error, Result};
use crate::field::EdgeField;
use crate::graph::{BaseMeasure, Graph};

/// Checks that `supply` (positive = net outflow) can be routed along
/// directed arcs `allowed(edge, forward)` with unbounded capacity. Returns
/// the closed vertex set that traps supply when it cannot.
pub(crate) fn routable(g: &Graph, supply: &[f64], allowed: impl Fn(usize, bool) -> bool) -> std::result::Result<(), (usize, f64, Vec<usize>)> {
    let n = g.n();
    let scale = supply.iter().map(|s| s.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(());
    }
    let tol = 1e-12 * scale * (n as f64);
    let (src, sink) = (n, n + 1);
    let size = n + 2;
    let total: f64 = supply.iter().filter(|s| **s > 0.0).sum();
    let big = 2.0 * total + 1.0;
    let mut cap = vec![0.0f64; size * size];
    for (x, &s) in supply.iter().enumerate() {
        if s > 0.0 {
            cap[src * size + x] = s;
        } else if s < 0.0 {
            cap[x * size + sink] = -s;
        }
    }
    for (k, e) in g.edges().iter().enumerate() {
        if allowed(k, true) {
            cap[e.i * size + e.j] = big;
        }
        if allowed(k, false) {
            cap[e.j * size + e.i] = big;
        }
    }
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); size];
    for x in 0..n {
        for &(y, _) in g.neighbors(x) {
            nbrs[x].push(y);
        }
        nbrs[src].push(x);
        nbrs[x].push(src);
        nbrs[x].push(sink);
        nbrs[sink].push(x);
    }
    let mut flow = 0.0;
    let mut parent = vec![usize::MAX; size];
    loop {
        // Edmonds–Karp augmenting path
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        parent[src] = src;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            for &w in &nbrs[u] {
                if parent[w] == usize::MAX && cap[u * size + w] > tol * 1e-3 {
                    parent[w] = u;
                    queue.push_back(w);
                }
            }
        }
        if parent[sink] == usize::MAX {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while v != src {
            let u = parent[v];
            bottleneck = bottleneck.min(cap[u * size + v]);
            v = u;
        }
        let mut v = sink;
        while v != src {
            let u = parent[v];
            cap[u * size + v] -= bottleneck;
            cap[v * size + u] += bottleneck;
            v = u;
        }
        flow += bottleneck;
    }
    if flow >= total - tol {
        return Ok(());
    }
    let closed: Vec<usize> = (0..n).filter(|&x| parent[x] != usize::MAX).collect();
    let vertex = closed.iter().copied().find(|&x| supply[x] > 0.0).unwrap_or(closed[0]);
    let excess = closed.iter().map(|&x| supply[x]).sum();
    Err((vertex, excess, closed))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn check_target(g: &Graph, target: &[f64]) -> Result<()> {
    if target.len() != g.n() {
        return Err(invalid("target_div", format!("{} values for {} vertices", target.len(), g.n())));
    }
    if target.iter().any(|t| !t.is_finite()) {
        return Err(invalid("target_div", "values must be finite"));
    }
    let scale: f64 = target.iter().map(|t| t.abs()).sum();
    let sum: f64 = target.iter().sum();
    if sum.abs() > 1e-10 * scale.max(1e-300) && sum.abs() > 1e-14 {
        return Err(invalid("target_div", format!("must sum to zero, sums to {sum:e}")));
    }
    Ok(())
}

/// Optimal flux together with the dual potential φ.
#[derive(Debug, Clone)]
pub struct OptimalFlux {
    pub flux: EdgeField,
    pub potential: Vec<f64>,
    pub action: f64,
    pub iterations: usize,
}

/// Minimal-action antisymmetric flux with ∇̄·j = `target`.
pub fn optimal_flux_for_divergence(g: &Graph, mu: &BaseMeasure, rho: &[f64], target: &[f64]) -> Result<EdgeField> {
    Ok(optimal_flux_with_potential(g, mu, rho, target)?.flux)
}

pub fn optimal_flux_with_potential(g: &Graph, mu: &BaseMeasure, rho: &[f64], target: &[f64]) -> Result<OptimalFlux> {
    mu.check_against(g)?;
    check_target(g, target)?;
    let n = g.n();
    let a: Vec<f64> = g.edges().iter().map(|e| rho[e.i] * mu[e.j]).collect();
    let b: Vec<f64> = g.edges().iter().map(|e| rho[e.j] * mu[e.i]).collect();
    if target.iter().all(|&t| t == 0.0) {
        return Ok(OptimalFlux { flux: EdgeField::zeros(g), potential: vec![0.0; n], action: 0.0, iterations: 0 });
    }
    if let Err((vertex, excess, closed_set)) = routable(g, target, |k, fwd| if fwd { a[k] > 0.0 } else { b[k] > 0.0 }) {
        return Err(Error::InfeasibleDivergence { vertex, excess, closed_set });
    }

    let flux_of = |phi: &[f64]| -> Vec<f64> {
        g.edges()
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let s = phi[e.i] - phi[e.j];
                0.5 * (a[k] * s.max(0.0) - b[k] * (-s).max(0.0))
            })
            .collect()
    };
    let dual = |phi: &[f64]| -> f64 {
        let lin: f64 = phi.iter().zip(target).map(|(p, t)| p * t).sum();
        let quad: f64 = g
            .edges()
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let s = phi[e.i] - phi[e.j];
                e.eta * (a[k] * s.max(0.0).powi(2) + b[k] * (-s).max(0.0).powi(2))
            })
            .sum();
        lin - 0.25 * quad
    };
    let residual = |j: &[f64]| -> Vec<f64> {
        let mut r = target.to_vec();
        for (e, s) in g.edges().iter().zip(j) {
            r[e.i] -= e.eta * s;
            r[e.j] += e.eta * s;
        }
        r
    };

    let t_scale = target.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let tol = 1e-13 * t_scale.max(1e-300);
    let weight_scale = g.edges().iter().enumerate().map(|(k, e)| e.eta * a[k].max(b[k])).fold(0.0, f64::max);
    let ridge = 1e-13 * weight_scale.max(1e-300);

    let mut phi = vec![0.0; n];
    let mut j = flux_of(&phi);
    let mut r = residual(&j);
    let mut value = dual(&phi);
    let mut iterations = 0;
    const MAX_NEWTON: usize = 500;
    while max_abs(&r) > tol {
        if iterations == MAX_NEWTON {
            return Err(Error::NotConverged("minimal-action flux"));
        }
        iterations += 1;
        let mut lap = DMatrix::<f64>::zeros(n, n);
        for (k, e) in g.edges().iter().enumerate() {
            let s = phi[e.i] - phi[e.j];
            let c = if s > 0.0 {
                a[k]
            } else if s < 0.0 {
                b[k]
            } else {
                a[k].max(b[k])
            };
            let w = 0.5 * e.eta * c;
            lap[(e.i, e.i)] += w;
            lap[(e.j, e.j)] += w;
            lap[(e.i, e.j)] -= w;
            lap[(e.j, e.i)] -= w;
        }
        for x in 0..n {
            lap[(x, x)] += ridge;
        }
        let rv = DVector::from_column_slice(&r);
        let dir = match lap.clone().cholesky() {
            Some(ch) => ch.solve(&rv),
            None => lap.lu().solve(&rv).ok_or(Error::NotConverged("minimal-action flux"))?,
        };
        let slope: f64 = dir.iter().zip(&r).map(|(d, r)| d * r).sum();
        let r_norm = max_abs(&r);
        let mut tau = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = phi.iter().zip(dir.iter()).map(|(p, d)| p + tau * d).collect();
            let tv = dual(&trial);
            let tj = flux_of(&trial);
            let tr = residual(&tj);
            // near the optimum the dual value stalls in rounding; a smaller
            // residual is then the better progress measure
            if tv >= value + 1e-4 * tau * slope || max_abs(&tr) < (1.0 - 1e-4 * tau) * r_norm {
                phi = trial;
                value = tv;
                j = tj;
                r = tr;
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged("minimal-action flux"));
        }
    }
    let flux = EdgeField::from_values(g, j)?;
    let act = action(g, mu, rho, &flux);
    Ok(OptimalFlux { flux, potential: phi, action: act, iterations })
}
