//! Gradient-flow diagnostics on recorded trajectories: the De Giorgi
//! functional, the chain-rule residual and the upper-gradient inequality.
//! All time integrals use the trapezoid rule on the recorded points.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::energy::{action, energy, finsler_velocity_product, first_variation, local_slope, velocity_decomposition, EnergySpec};
use crate::error::{invalid, Result};
use crate::field::EdgeField;
use crate::graph::{BaseMeasure, Graph};
use crate::quasimetric::metric_derivative_estimate;

/// Where the squared metric speed |ρ'|² comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedSource {
    /// Action of the flux recorded at each state (an upper bound).
    #[default]
    RecordedFlux,
    /// Action of the minimal flux reproducing each observed step, held
    /// constant over the interval.
    OptimalFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalTerms {
    pub t0: f64,
    pub t1: f64,
    pub energy_gap: f64,
    pub slope_integral: f64,
    pub speed_integral: f64,
}

impl IntervalTerms {
    pub fn g_value(&self) -> f64 {
        self.energy_gap + self.slope_integral + self.speed_integral
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiReport {
    /// E(ρ_T) − E(ρ_0).
    pub energy_gap: f64,
    /// ½ ∫ 𝒟.
    pub slope_integral: f64,
    /// ½ ∫ |ρ'|².
    pub speed_integral: f64,
    pub g_value: f64,
    pub speed_source: SpeedSource,
    pub per_interval: Vec<IntervalTerms>,
}

fn check(traj: &Trajectory) -> Result<()> {
    if traj.states.is_empty() || traj.fluxes.len() != traj.states.len() {
        return Err(invalid("trajectory", "needs one recorded flux per state"));
    }
    Ok(())
}

fn energies(spec: &EnergySpec, g: &Graph, traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().map(|s| energy(spec, g, s.mass())).collect()
}

fn slopes(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().map(|s| local_slope(spec, g, mu, s.mass())).collect()
}

fn recorded_actions(g: &Graph, mu: &BaseMeasure, traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().zip(&traj.fluxes).map(|(s, j)| action(g, mu, s.mass(), j)).collect()
}

pub fn de_giorgi(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, traj: &Trajectory) -> Result<DeGiorgiReport> {
    de_giorgi_with(spec, g, mu, traj, SpeedSource::RecordedFlux)
}

pub fn de_giorgi_with(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, traj: &Trajectory, source: SpeedSource) -> Result<DeGiorgiReport> {
    check(traj)?;
    let e = energies(spec, g, traj);
    let d = slopes(spec, g, mu, traj);
    let times = traj.times();
    let per_interval: Vec<IntervalTerms> = match source {
        SpeedSource::RecordedFlux => {
            let a = recorded_actions(g, mu, traj);
            (0..times.len() - 1)
                .map(|k| {
                    let h = times[k + 1] - times[k];
                    IntervalTerms {
                        t0: times[k],
                        t1: times[k + 1],
                        energy_gap: e[k + 1] - e[k],
                        slope_integral: 0.25 * h * (d[k] + d[k + 1]),
                        speed_integral: 0.25 * h * (a[k] + a[k + 1]),
                    }
                })
                .collect()
        }
        SpeedSource::OptimalFlux => (0..times.len() - 1)
            .map(|k| {
                let h = times[k + 1] - times[k];
                let speed = metric_derivative_estimate(g, mu, traj, k)?.estimate;
                Ok(IntervalTerms {
                    t0: times[k],
                    t1: times[k + 1],
                    energy_gap: e[k + 1] - e[k],
                    slope_integral: 0.25 * h * (d[k] + d[k + 1]),
                    speed_integral: 0.5 * h * speed * speed,
                })
            })
            .collect::<Result<_>>()?,
    };
    let slope_integral: f64 = per_interval.iter().map(|t| t.slope_integral).sum();
    let speed_integral: f64 = per_interval.iter().map(|t| t.speed_integral).sum();
    let energy_gap = e[e.len() - 1] - e[0];
    Ok(DeGiorgiReport {
        energy_gap,
        slope_integral,
        speed_integral,
        g_value: energy_gap + slope_integral + speed_integral,
        speed_source: source,
        per_interval,
    })
}

/// ĝ_{ρ,w}(w, ∇̄ δE/δρ) at every record, with w the velocity of the
/// recorded flux. This is the instantaneous energy rate of the curve.
pub fn energy_rates(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, traj: &Trajectory) -> Vec<f64> {
    traj.states
        .iter()
        .zip(&traj.fluxes)
        .map(|(s, j)| {
            let rho = s.mass();
            let w = velocity_decomposition(g, mu, rho, j);
            let grad = EdgeField::gradient(g, &first_variation(spec, g, rho));
            finsler_velocity_product(g, mu, rho, &w, &w, &grad)
        })
        .collect()
}

/// |E(ρ_T) − E(ρ_0) − ∫ ĝ_{ρ,w}(w, ∇̄ δE/δρ)|.
pub fn chain_rule_residual(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, traj: &Trajectory) -> Result<f64> {
    check(traj)?;
    let e = energies(spec, g, traj);
    let rate = energy_rates(spec, g, mu, traj);
    let times = traj.times();
    let integral: f64 = (0..times.len() - 1).map(|k| 0.5 * (times[k + 1] - times[k]) * (rate[k] + rate[k + 1])).sum();
    Ok((e[e.len() - 1] - e[0] - integral).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperGradientCheck {
    pub passed: bool,
    /// Smallest per-interval margin E(ρ_{k+1}) − E(ρ_k) + ∫ √𝒟 |ρ'|.
    pub worst_margin: f64,
    /// Margin over the whole trajectory.
    pub total_margin: f64,
    pub margins: Vec<f64>,
    /// Quadrature allowance used per interval.
    pub tolerances: Vec<f64>,
}

/// Checks E(ρ_t) − E(ρ_s) ≥ −∫ √𝒟 |ρ'| on every recorded interval. The
/// allowance per interval is the spread of the trapezoid rule for both the
/// right-hand integrand and the energy rate, which is O(dt²).
pub fn upper_gradient_check(spec: &EnergySpec, g: &Graph, mu: &BaseMeasure, traj: &Trajectory) -> Result<UpperGradientCheck> {
    check(traj)?;
    let e = energies(spec, g, traj);
    let d = slopes(spec, g, mu, traj);
    let a = recorded_actions(g, mu, traj);
    let rate = energy_rates(spec, g, mu, traj);
    let times = traj.times();
    let f: Vec<f64> = d.iter().zip(&a).map(|(d, a)| (d * a).sqrt()).collect();
    let mut margins = Vec::with_capacity(times.len().saturating_sub(1));
    let mut tolerances = Vec::with_capacity(margins.capacity());
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        margins.push(e[k + 1] - e[k] + 0.5 * h * (f[k] + f[k + 1]));
        tolerances.push(h * ((f[k + 1] - f[k]).abs() + (rate[k + 1] - rate[k]).abs()) + 1e-14 * (1.0 + e[k].abs()));
    }
    let worst_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = margins.iter().zip(&tolerances).all(|(m, t)| *m >= -t);
    let total_margin = e[e.len() - 1] - e[0] + (0..times.len() - 1).map(|k| 0.5 * (times[k + 1] - times[k]) * (f[k] + f[k + 1])).sum::<f64>();
    Ok(UpperGradientCheck {
        passed,
        worst_margin: if margins.is_empty() { 0.0 } else { worst_margin },
        total_margin,
        margins,
        tolerances,
    })
}
