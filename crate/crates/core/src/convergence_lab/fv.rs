//! 1D finite-volume upwind reference for ∂ₜρ + ∂ₓ(ρ v) = 0 with
//! v = −∂ₓK*ρ, on a uniform grid with zero-flux walls.
//!
//! The grid is stored as a chain graph with unit weights so that interface
//! fluxes fit in an `EdgeField` and the usual divergence applies.

use serde::{Deserialize, Serialize};

use crate::dynamics::{divergence, Diagnostics, State, Trajectory, MASS_TOLERANCE};
use crate::energy::{energy, EnergySpec, KernelSpec};
use crate::error::{invalid, Result};
use crate::field::EdgeField;
use crate::graph::Graph;

pub const MIN_CELLS: usize = 8;
/// Fraction of a cell a donor may empty per step.
const CFL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FvDrift {
    /// v = −∂ₓK*ρ with the configured kernel.
    Interaction,
    /// v ≡ c, kernel ignored.
    Constant { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FvConfig {
    pub domain: (f64, f64),
    pub cells: usize,
    pub kernel: KernelSpec,
    #[serde(default = "interaction")]
    pub drift: FvDrift,
    /// Upper bound on the step; the CFL bound may shorten it.
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn interaction() -> FvDrift {
    FvDrift::Interaction
}

fn one() -> usize {
    1
}

impl FvConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("domain", format!("need lo < hi, got ({lo}, {hi})")));
        }
        if self.cells < MIN_CELLS {
            return Err(invalid("cells", format!("need at least {MIN_CELLS}, got {}", self.cells)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be non-negative, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if self.drift == FvDrift::Interaction && self.kernel.radial_derivative(0.0).is_none() {
            return Err(invalid("kernel", "the finite-volume reference needs a radial kernel"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.domain.1 - self.domain.0) / self.cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        cell_centers(self.domain, self.cells)
    }
}

pub fn cell_centers(domain: (f64, f64), cells: usize) -> Vec<f64> {
    let h = (domain.1 - domain.0) / cells as f64;
    (0..cells).map(|i| domain.0 + (i as f64 + 0.5) * h).collect()
}

/// Cell masses of a density sampled at cell centres, normalised to one.
pub fn discretize_density(domain: (f64, f64), cells: usize, density: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let raw: Vec<f64> = cell_centers(domain, cells).into_iter().map(density).collect();
    let total: f64 = raw.iter().sum();
    if raw.iter().any(|m| !(*m >= 0.0)) || !(total > 0.0 && total.is_finite()) {
        return Err(invalid("rho0", "density must be non-negative with positive finite mass"));
    }
    Ok(raw.into_iter().map(|m| m / total).collect())
}

#[derive(Debug, Clone)]
pub struct FvResult {
    /// Chain graph over the cell centres, unit weights.
    pub grid: Graph,
    pub trajectory: Trajectory,
}

fn chain(cfg: &FvConfig) -> Result<Graph> {
    let pos = cfg.centers().into_iter().map(|x| vec![x]).collect();
    let pairs: Vec<_> = (0..cfg.cells - 1).map(|i| (i, i + 1, 1.0)).collect();
    Graph::new(pos, &pairs)
}

fn cell_velocity(cfg: &FvConfig, centers: &[f64], m: &[f64]) -> Vec<f64> {
    match cfg.drift {
        FvDrift::Constant { c } => vec![c; m.len()],
        FvDrift::Interaction => centers
            .iter()
            .map(|&x| {
                -centers
                    .iter()
                    .zip(m)
                    .map(|(&y, &my)| {
                        let r = x - y;
                        if r == 0.0 {
                            return 0.0;
                        }
                        my * cfg.kernel.radial_derivative(r.abs()).unwrap_or(0.0) * r.signum()
                    })
                    .sum::<f64>()
            })
            .collect(),
    }
}

/// Donor-cell interface fluxes F_{i+½} = (a_i)₊ ρ_i − (a_{i+1})₋ ρ_{i+1}
/// in mass per unit time, ρ = m/h.
fn interface_flux(h: f64, a: &[f64], m: &[f64]) -> Vec<f64> {
    (0..m.len() - 1).map(|i| (a[i].max(0.0) * m[i] - (-a[i + 1]).max(0.0) * m[i + 1]) / h).collect()
}

pub fn fv_reference_solve(cfg: &FvConfig, rho0: &[f64]) -> Result<FvResult> {
    cfg.validate()?;
    if rho0.len() != cfg.cells {
        return Err(invalid("rho0", format!("{} masses for {} cells", rho0.len(), cfg.cells)));
    }
    let start = State::new(rho0.to_vec(), 0.0)?;
    let grid = chain(cfg)?;
    let centers = cfg.centers();
    let h = cfg.spacing();
    let spec = match cfg.drift {
        FvDrift::Interaction => EnergySpec::from_kernel(cfg.kernel, &grid)?,
        FvDrift::Constant { .. } => EnergySpec::zero(cfg.cells),
    };

    let mut traj = Trajectory { states: Vec::new(), fluxes: Vec::new(), diagnostics: Vec::new(), steps: 0 };
    let record = |traj: &mut Trajectory, m: &[f64], t: f64, a: &[f64], flux: Vec<f64>| -> Result<()> {
        let state = State::new(m.to_vec(), t)?;
        // slope and action are both the continuum kinetic energy ∫ρ|v|²
        let kinetic: f64 = m.iter().zip(a).map(|(m, a)| m * a * a).sum();
        traj.diagnostics.push(Diagnostics {
            t,
            energy: energy(&spec, &grid, m),
            slope: kinetic,
            action: kinetic,
            mass_error: state.mass_error(),
            min_mass: state.min_mass(),
        });
        traj.fluxes.push(EdgeField::from_values(&grid, flux)?);
        traj.states.push(state);
        Ok(())
    };

    let mut m = start.into_mass();
    let mut t = 0.0;
    let mut a = cell_velocity(cfg, &centers, &m);
    let mut flux = interface_flux(h, &a, &m);
    record(&mut traj, &m, t, &a, flux.clone())?;
    let snap = 1e-12 * cfg.t_end.max(1.0);
    while cfg.t_end - t > snap {
        let speed = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let mut dt = cfg.dt.min(cfg.t_end - t);
        if speed > 0.0 {
            dt = dt.min(CFL * h / speed);
        }
        let div = divergence(&grid, &EdgeField::from_values(&grid, flux)?);
        for (mi, d) in m.iter_mut().zip(&div) {
            *mi -= dt * d;
        }
        // donor outflow is at most CFL·m, so negatives are roundoff only
        for mi in m.iter_mut() {
            if *mi < 0.0 && *mi > -MASS_TOLERANCE {
                *mi = 0.0;
            }
        }
        t += dt;
        if cfg.t_end - t <= snap {
            t = cfg.t_end;
        }
        traj.steps += 1;
        a = cell_velocity(cfg, &centers, &m);
        flux = interface_flux(h, &a, &m);
        if traj.steps % cfg.record_every == 0 || t == cfg.t_end {
            record(&mut traj, &m, t, &a, flux.clone())?;
        }
    }
    Ok(FvResult { grid, trajectory: traj })
}
