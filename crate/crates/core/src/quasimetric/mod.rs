//! The upwind transportation quasi-metric: closed form on two points,
//! dynamic formulation on small graphs, minimal-action tangent fluxes and
//! W₁ for comparison.

mod bb;
mod min_flux;
mod w1;

pub use bb::{continuity_defect, slice_actions, solve_bb, PathProblem, PathSolution, BB_LIMIT};
pub use min_flux::{optimal_flux_for_divergence, optimal_flux_with_potential, OptimalFlux};
pub use w1::{wasserstein1, wasserstein1_between, W1Method, LP_LIMIT};

use serde::{Deserialize, Serialize};

use crate::dynamics::{divergence, Trajectory};
use crate::energy::action;
use crate::error::{invalid, Result};
use crate::graph::{BaseMeasure, Graph};

fn check_two_point(alpha: f64, p: f64, q: f64, pair: [f64; 2]) -> Result<()> {
    if !(alpha > 0.0 && p > 0.0 && q > 0.0) {
        return Err(invalid("alpha", "alpha, p and q must be positive"));
    }
    if pair.iter().any(|m| !(*m >= 0.0)) || (pair[0] + pair[1] - 1.0).abs() > 1e-12 {
        return Err(invalid("rho", format!("{pair:?} is not a probability vector")));
    }
    Ok(())
}

/// Distance on the two-point space {0, 1} with η = α and μ = (p, q).
pub fn two_point_distance(alpha: f64, p: f64, q: f64, rho: [f64; 2], nu: [f64; 2]) -> Result<f64> {
    check_two_point(alpha, p, q, rho)?;
    check_two_point(alpha, p, q, nu)?;
    Ok(if rho[0] < nu[0] {
        // mass flows 1 → 0, paid at the rate of μ_0 = p
        2.0 / (alpha * p).sqrt() * (rho[1].sqrt() - nu[1].sqrt())
    } else if nu[0] < rho[0] {
        2.0 / (alpha * q).sqrt() * (rho[0].sqrt() - nu[0].sqrt())
    } else {
        0.0
    })
}

/// Mass at vertex 0 along the two-point geodesic at time t, for ρ₀ < ν₀.
pub fn two_point_geodesic(rho: [f64; 2], nu: [f64; 2], t: f64) -> f64 {
    if rho[0] <= nu[0] {
        1.0 - (rho[1].sqrt() * (1.0 - t) + nu[1].sqrt() * t).powi(2)
    } else {
        (rho[0].sqrt() * (1.0 - t) + nu[0].sqrt() * t).powi(2)
    }
}

/// Action of a two-point curve with mass g at vertex 0 and rate ġ:
/// ġ₋²/(α g q) + ġ₊²/(α (1 − g) p).
pub fn two_point_action(alpha: f64, p: f64, q: f64, g: f64, g_dot: f64) -> f64 {
    let (up, down) = (g_dot.max(0.0), (-g_dot).max(0.0));
    let mut total = 0.0;
    if down > 0.0 {
        total += down * down / (alpha * g * q);
    }
    if up > 0.0 {
        total += up * up / (alpha * (1.0 - g) * p);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpeed {
    /// √A of the minimal-action flux for the observed one-step change.
    pub estimate: f64,
    /// √A of the flux recorded at the same state.
    pub recorded: f64,
}

/// Metric speed between records `k` and `k + 1`.
pub fn metric_derivative_estimate(g: &Graph, mu: &BaseMeasure, traj: &Trajectory, k: usize) -> Result<MetricSpeed> {
    if k + 1 >= traj.states.len() {
        return Err(invalid("k", format!("record {k} has no successor")));
    }
    let (a, b) = (&traj.states[k], &traj.states[k + 1]);
    let dt = b.time() - a.time();
    let target: Vec<f64> = a.mass().iter().zip(b.mass()).map(|(x, y)| (x - y) / dt).collect();
    let flux = optimal_flux_for_divergence(g, mu, a.mass(), &target)?;
    let estimate = action(g, mu, a.mass(), &flux).sqrt();
    let recorded = action(g, mu, a.mass(), &traj.fluxes[k]).sqrt();
    Ok(MetricSpeed { estimate, recorded })
}

/// Largest gap between the observed change and −dt ∇̄·j for the recorded
/// flux; zero for explicit Euler records.
pub fn recorded_flux_defect(g: &Graph, traj: &Trajectory, k: usize) -> f64 {
    let (a, b) = (&traj.states[k], &traj.states[k + 1]);
    let dt = b.time() - a.time();
    let d = divergence(g, &traj.fluxes[k]);
    a.mass().iter().zip(b.mass()).zip(&d).map(|((x, y), d)| ((x - y) / dt - d).abs()).fold(0.0, f64::max)
}
