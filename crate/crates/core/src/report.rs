//! CSV and JSON artifacts shared with the plotting scripts. CSV uses a
//! header row, '.' decimals and LF line endings; numbers are printed
//! plainly in [1e-4, 1e15) and in exponent form otherwise.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::convergence_lab::{ConvergenceReport, LocalLimitReport};
use crate::dynamics::Trajectory;
use crate::graph::Graph;
use crate::variational::DeGiorgiReport;

pub const TRAJECTORY_HEADER: &str = "t,energy,slope,action,mass_error,min_mass";
pub const DISTANCE_HEADER: &str = "i,j,T_ij,converged,iters";
pub const CONVERGENCE_HEADER: &str = "seed,n,t,error";
pub const CONVERGENCE_SUMMARY_HEADER: &str = "n,t,median,min,max";
pub const LOCAL_LIMIT_HEADER: &str = "epsilon,discrepancy,graph_drift,graph_steps";
pub const TWO_POINT_HEADER: &str = "rho0,nu0,T";
pub const INTERVAL_HEADER: &str = "t0,t1,energy_gap,slope_integral,speed_integral";

pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn table(header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    table(
        TRAJECTORY_HEADER,
        traj.diagnostics.iter().map(|d| [d.t, d.energy, d.slope, d.action, d.mass_error, d.min_mass].map(num).to_vec()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn distance_csv(rows: &[DistanceRow]) -> String {
    table(
        DISTANCE_HEADER,
        rows.iter().map(|r| vec![r.i.to_string(), r.j.to_string(), num(r.distance), r.converged.to_string(), r.iterations.to_string()]),
    )
}

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    table(CONVERGENCE_HEADER, report.rows.iter().map(|r| vec![r.seed.to_string(), r.n.to_string(), num(r.t), num(r.error)]))
}

pub fn convergence_summary_csv(report: &ConvergenceReport) -> String {
    table(
        CONVERGENCE_SUMMARY_HEADER,
        report.summary.iter().map(|s| vec![s.n.to_string(), num(s.t), num(s.median), num(s.min), num(s.max)]),
    )
}

pub fn local_limit_csv(report: &LocalLimitReport) -> String {
    table(
        LOCAL_LIMIT_HEADER,
        report.rows.iter().map(|r| vec![num(r.epsilon), num(r.discrepancy), num(r.graph_drift), r.graph_steps.to_string()]),
    )
}

pub fn interval_csv(report: &DeGiorgiReport) -> String {
    table(
        INTERVAL_HEADER,
        report.per_interval.iter().map(|k| [k.t0, k.t1, k.energy_gap, k.slope_integral, k.speed_integral].map(num).to_vec()),
    )
}

/// `grid` rows of (ρ₀, ν₀, 𝒯).
pub fn two_point_csv(grid: &[(f64, f64, f64)]) -> String {
    let mut out = String::from(TWO_POINT_HEADER);
    out.push('\n');
    for (r, v, t) in grid {
        let _ = writeln!(out, "{},{},{}", num(*r), num(*v), num(*t));
    }
    out
}

/// Recorded masses together with the vertex positions, for scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshots {
    pub positions: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub masses: Vec<Vec<f64>>,
}

impl Snapshots {
    pub fn new(g: &Graph, traj: &Trajectory) -> Self {
        Self {
            positions: g.positions().to_vec(),
            times: traj.times(),
            masses: traj.states.iter().map(|s| s.mass().to_vec()).collect(),
        }
    }
}
