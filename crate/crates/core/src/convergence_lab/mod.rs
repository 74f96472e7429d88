//! Discrete-to-continuum experiments: stability under sampling, the local
//! limit against a finite-volume reference, and the figure-scale runs.

mod fv;
mod sampling;

pub use fv::{cell_centers, discretize_density, fv_reference_solve, FvConfig, FvDrift, FvResult, MIN_CELLS};
pub use sampling::{sample_measure, BEAN_AXES, BEAN_NOTCH, DENSITIES, MOON_NOISE, MOON_NOISE_CLIP};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{simulate, FluxRelation, Scheme, SolveOptions, State, Trajectory};
use crate::energy::{EnergySpec, KernelSpec};
use crate::error::{invalid, Result};
use crate::graph::{build_geometric_graph, BaseMeasure, Graph, WeightKernel};
use crate::quasimetric::{wasserstein1_between, W1Method, LP_LIMIT};

/// Hex SHA-256 of the canonical JSON of a config.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("configs serialise");
    hex::encode(Sha256::digest(json))
}

/// Exact 1D W₁ on the line, LP up to the size limit, sliced beyond.
pub fn w1_method_for(dim: usize, n: usize) -> W1Method {
    if dim == 1 {
        W1Method::Exact1d
    } else if n <= LP_LIMIT {
        W1Method::LpExact
    } else {
        W1Method::SLICED
    }
}

/// Smallest number of vertices carrying at least `fraction` of the mass.
pub fn mass_concentration(rho: &[f64], fraction: f64) -> usize {
    let mut sorted = rho.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let target = fraction * rho.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, m) in sorted.iter().enumerate() {
        acc += m;
        if acc >= target * (1.0 - 1e-12) {
            return k + 1;
        }
    }
    rho.len()
}

/// Graph construction plus dynamics for a point-cloud run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub epsilon: f64,
    pub weight_kernel: WeightKernel,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub relation: FluxRelation,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl DynamicsConfig {
    pub fn build(&self, positions: Vec<Vec<f64>>) -> Result<(Graph, BaseMeasure, EnergySpec)> {
        let n = positions.len();
        let g = build_geometric_graph(positions, self.epsilon, self.weight_kernel)?;
        let spec = EnergySpec::from_kernel(self.kernel, &g)?;
        Ok((g, BaseMeasure::empirical(n), spec))
    }

    /// Runs from the uniform state, recording exactly at each of `times`.
    pub fn run_at(&self, g: &Graph, mu: &BaseMeasure, spec: &EnergySpec, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut state = State::uniform(g.n());
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            if t > now {
                let opts = SolveOptions { t_end: t - now, dt: self.dt, scheme: self.scheme, record_every: usize::MAX };
                let traj = simulate(spec, g, mu, &state, self.relation, &opts)?;
                state = traj.last().clone();
                now = t;
            }
            out.push(state.mass().to_vec());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingExperiment {
    pub target_density: String,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub dynamics: DynamicsConfig,
    pub times: Vec<f64>,
}

impl SamplingExperiment {
    /// 1D uniform target with K = |x−y|, the trend check configuration.
    pub fn uniform_interval_default() -> Self {
        Self {
            target_density: "uniform_interval".into(),
            n_grid: vec![30, 60, 120, 240],
            seeds: (0..10).collect(),
            dynamics: DynamicsConfig {
                epsilon: 0.15,
                weight_kernel: WeightKernel::PaperLocal,
                kernel: KernelSpec::Abs,
                relation: FluxRelation::Upwind,
                dt: 0.05,
                scheme: Scheme::AdaptiveEuler,
            },
            times: vec![0.25, 0.5, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !DENSITIES.contains(&self.target_density.as_str()) {
            return Err(crate::error::Error::Unknown { kind: "density", name: self.target_density.clone() });
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(invalid("n_grid", "needs at least one positive size"));
        }
        // equal neighbours are allowed for self-comparison runs
        if self.n_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("n_grid", "must be increasing"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "needs at least one seed"));
        }
        if self.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("times", "must be non-negative and sorted"));
        }
        if !(self.dynamics.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub n: usize,
    pub t: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub n: usize,
    pub t: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config_hash: String,
    pub config: SamplingExperiment,
    /// Ordered by seed, then n, then t.
    pub rows: Vec<ConvergenceRow>,
    /// Median over seeds, ordered by n then t.
    pub summary: Vec<ConvergenceSummary>,
}

impl ConvergenceReport {
    pub fn median(&self, n: usize, t: f64) -> Option<f64> {
        self.summary.iter().find(|s| s.n == n && s.t == t).map(|s| s.median)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

struct EmpiricalRun {
    positions: Vec<Vec<f64>>,
    masses: Vec<Vec<f64>>,
}

pub fn convergence_study(exp: &SamplingExperiment) -> Result<ConvergenceReport> {
    exp.validate()?;
    let n_ref = *exp.n_grid.last().expect("validated non-empty");
    let jobs: Vec<(u64, usize)> = exp.seeds.iter().flat_map(|&s| exp.n_grid.iter().map(move |&n| (s, n))).collect();
    let runs: Vec<EmpiricalRun> = jobs
        .par_iter()
        .map(|&(seed, n)| {
            let positions = sample_measure(&exp.target_density, n, seed)?;
            let (g, mu, spec) = exp.dynamics.build(positions.clone())?;
            let masses = exp.dynamics.run_at(&g, &mu, &spec, &exp.times)?;
            Ok(EmpiricalRun { positions, masses })
        })
        .collect::<Result<_>>()?;

    let per_seed = exp.n_grid.len();
    let rows: Vec<ConvergenceRow> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, &(seed, n))| {
            let run = &runs[k];
            let reference = &runs[(k / per_seed) * per_seed + per_seed - 1];
            let dim = run.positions.first().map_or(1, Vec::len);
            let method = w1_method_for(dim, n_ref);
            exp.times
                .iter()
                .enumerate()
                .map(|(ti, &t)| {
                    let error = wasserstein1_between(&run.positions, &run.masses[ti], &reference.positions, &reference.masses[ti], method)?;
                    Ok(ConvergenceRow { seed, n, t, error })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut summary = Vec::new();
    let mut sizes = exp.n_grid.clone();
    sizes.dedup();
    for &n in &sizes {
        for &t in &exp.times {
            let mut errs: Vec<f64> = rows.iter().filter(|r| r.n == n && r.t == t).map(|r| r.error).collect();
            let (min, max) = errs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
            summary.push(ConvergenceSummary { n, t, median: median(&mut errs), min, max });
        }
    }
    Ok(ConvergenceReport { config_hash: config_hash(exp), config: exp.clone(), rows, summary })
}

/// Initial profile on the grid of a local-limit study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    /// Σ w exp(−(x−c)²/(2s²)) with entries (c, s, w).
    Gaussians { bumps: Vec<(f64, f64, f64)> },
    /// Point masses placed in the cells nearest to each position, ties
    /// resolved towards the middle of the domain.
    Atoms { atoms: Vec<(f64, f64)> },
    Masses { masses: Vec<f64> },
}

impl InitialProfile {
    pub fn discretize(&self, domain: (f64, f64), cells: usize) -> Result<Vec<f64>> {
        match self {
            Self::Gaussians { bumps } => discretize_density(domain, cells, |x| {
                bumps.iter().map(|&(c, s, w)| w * (-(x - c) * (x - c) / (2.0 * s * s)).exp()).sum()
            }),
            Self::Atoms { atoms } => {
                let centers = cell_centers(domain, cells);
                let mid = 0.5 * (domain.0 + domain.1);
                let mut m = vec![0.0; cells];
                for &(x, w) in atoms {
                    let best = (0..cells)
                        .min_by(|&a, &b| {
                            let da = (centers[a] - x).abs();
                            let db = (centers[b] - x).abs();
                            if (da - db).abs() < 1e-12 * (1.0 + da) {
                                (centers[a] - mid).abs().total_cmp(&(centers[b] - mid).abs())
                            } else {
                                da.total_cmp(&db)
                            }
                        })
                        .expect("cells >= 1");
                    m[best] += w;
                }
                let total: f64 = m.iter().sum();
                if !(total > 0.0) || m.iter().any(|v| *v < 0.0) {
                    return Err(invalid("rho0", "atom weights must be non-negative with positive sum"));
                }
                Ok(m.into_iter().map(|v| v / total).collect())
            }
            Self::Masses { masses } => {
                if masses.len() != cells {
                    return Err(invalid("rho0", format!("{} masses for {cells} cells", masses.len())));
                }
                Ok(masses.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalLimitConfig {
    pub domain: (f64, f64),
    pub cells: usize,
    pub eps_list: Vec<f64>,
    pub kernel: KernelSpec,
    /// Graph weights; the local normalisation by default.
    #[serde(default = "paper_local")]
    pub weight_kernel: WeightKernel,
    pub rho0: InitialProfile,
    pub t_end: f64,
    pub dt: f64,
}

fn paper_local() -> WeightKernel {
    WeightKernel::PaperLocal
}

impl LocalLimitConfig {
    /// Smooth attractive configuration on (−2, 2).
    pub fn smooth_default() -> Self {
        Self {
            domain: (-2.0, 2.0),
            cells: 256,
            eps_list: vec![0.4, 0.2, 0.1],
            kernel: KernelSpec::AttractiveExp { a: 1.0 },
            weight_kernel: WeightKernel::PaperLocal,
            rho0: InitialProfile::Gaussians { bumps: vec![(-0.6, 0.3, 1.0), (0.7, 0.25, 0.6)] },
            t_end: 1.0,
            dt: 0.05,
        }
    }

    /// Stationary pair: atoms at ±1, K = 1 − e^{−|x−y|}, η a bump of
    /// radius 0.2, 240 cells on (−2, 2).
    pub fn counterexample() -> Self {
        Self {
            domain: (-2.0, 2.0),
            cells: 240,
            eps_list: vec![0.2],
            kernel: KernelSpec::ExpAbs { a: 1.0 },
            weight_kernel: WeightKernel::Bump,
            rho0: InitialProfile::Atoms { atoms: vec![(-1.0, 0.5), (1.0, 0.5)] },
            t_end: 10.0,
            dt: 0.05,
        }
    }

    pub fn fv_config(&self) -> FvConfig {
        FvConfig {
            domain: self.domain,
            cells: self.cells,
            kernel: self.kernel,
            drift: FvDrift::Interaction,
            dt: self.dt,
            t_end: self.t_end,
            record_every: 1,
        }
    }

    /// Grid graph with cell-width vertex weights.
    pub fn grid_graph(&self, epsilon: f64) -> Result<(Graph, BaseMeasure, EnergySpec)> {
        let fv = self.fv_config();
        fv.validate()?;
        let h = fv.spacing();
        if !(epsilon >= 2.0 * h) {
            return Err(invalid("epsilon", format!("{epsilon} is below two grid spacings ({})", 2.0 * h)));
        }
        let pos = fv.centers().into_iter().map(|x| vec![x]).collect();
        let g = build_geometric_graph(pos, epsilon, self.weight_kernel)?;
        let spec = EnergySpec::from_kernel(self.kernel, &g)?;
        Ok((g, BaseMeasure::new(vec![h; self.cells])?, spec))
    }

    pub fn graph_solve(&self, epsilon: f64, rho0: &[f64]) -> Result<Trajectory> {
        let (g, mu, spec) = self.grid_graph(epsilon)?;
        let opts = SolveOptions { t_end: self.t_end, dt: self.dt, scheme: Scheme::AdaptiveEuler, record_every: 1 };
        simulate(&spec, &g, &mu, &State::new(rho0.to_vec(), 0.0)?, FluxRelation::Upwind, &opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalLimitRow {
    pub epsilon: f64,
    /// ‖ρ_graph(T) − ρ_fv(T)‖₁ over cell masses.
    pub discrepancy: f64,
    /// max_t ‖ρ_graph(t) − ρ₀‖₁.
    pub graph_drift: f64,
    pub graph_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLimitReport {
    pub config_hash: String,
    pub config: LocalLimitConfig,
    /// ½‖ρ_fv(T) − ρ₀‖₁: mass the reference moved.
    pub fv_moved_mass: f64,
    pub fv_steps: usize,
    /// In the order of `eps_list`.
    pub rows: Vec<LocalLimitRow>,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn local_limit_study(cfg: &LocalLimitConfig) -> Result<LocalLimitReport> {
    if cfg.eps_list.is_empty() {
        return Err(invalid("eps_list", "needs at least one epsilon"));
    }
    if !(cfg.t_end >= 0.0 && cfg.t_end.is_finite()) {
        return Err(invalid("t_end", "must be non-negative"));
    }
    let fv = cfg.fv_config();
    fv.validate()?;
    let rho0 = cfg.rho0.discretize(cfg.domain, cfg.cells)?;
    for &eps in &cfg.eps_list {
        cfg.grid_graph(eps)?;
    }
    let reference = fv_reference_solve(&fv, &rho0)?;
    let fv_final = reference.trajectory.last().mass();
    let rows = cfg
        .eps_list
        .par_iter()
        .map(|&epsilon| {
            let traj = cfg.graph_solve(epsilon, &rho0)?;
            let graph_drift = traj.states.iter().map(|s| l1(s.mass(), &rho0)).fold(0.0, f64::max);
            Ok(LocalLimitRow { epsilon, discrepancy: l1(traj.last().mass(), fv_final), graph_drift, graph_steps: traj.steps })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalLimitReport {
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        fv_moved_mass: 0.5 * l1(fv_final, &rho0),
        fv_steps: reference.trajectory.steps,
        rows,
    })
}

/// Point-cloud runs behind the two figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    pub density: String,
    pub n: usize,
    pub seed: u64,
    pub dynamics: DynamicsConfig,
    pub t_end: f64,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl FigureConfig {
    /// Two-moon: ε = 0.7, weights exp(−6r²), K = 1 − exp(−d_G²/10), t = 60.
    pub fn two_moon() -> Self {
        Self {
            density: "two_moon".into(),
            n: 240,
            seed: 0,
            dynamics: DynamicsConfig {
                epsilon: 0.7,
                weight_kernel: WeightKernel::Gaussian { a: 6.0 },
                kernel: KernelSpec::GraphDistanceExp { a: 10.0 },
                relation: FluxRelation::Upwind,
                dt: 0.1,
                scheme: Scheme::AdaptiveEuler,
            },
            t_end: 60.0,
            record_every: 10,
        }
    }

    /// The two-moon configuration on 60 points over t ∈ [0, 5].
    pub fn two_moon_scaled(dt: f64) -> Self {
        let mut cfg = Self::two_moon();
        cfg.n = 60;
        cfg.t_end = 5.0;
        cfg.dynamics.dt = dt;
        cfg.dynamics.scheme = Scheme::Rk4;
        cfg.record_every = 1;
        cfg
    }

    /// Bean: ε = 0.23, weights exp(−24r²), K = 1 − exp(−8r²), t = 200.
    pub fn bean() -> Self {
        Self {
            density: "bean".into(),
            n: 240,
            seed: 0,
            dynamics: DynamicsConfig {
                epsilon: 0.23,
                weight_kernel: WeightKernel::Gaussian { a: 24.0 },
                kernel: KernelSpec::AttractiveExp { a: 8.0 },
                relation: FluxRelation::Upwind,
                dt: 0.1,
                scheme: Scheme::AdaptiveEuler,
            },
            t_end: 200.0,
            record_every: 20,
        }
    }

    pub fn setup(&self) -> Result<(Graph, BaseMeasure, EnergySpec)> {
        if self.n == 0 {
            return Err(invalid("n", "needs at least one point"));
        }
        self.dynamics.build(sample_measure(&self.density, self.n, self.seed)?)
    }

    pub fn run(&self) -> Result<FigureRun> {
        let (graph, mu, spec) = self.setup()?;
        let opts = SolveOptions { t_end: self.t_end, dt: self.dynamics.dt, scheme: self.dynamics.scheme, record_every: self.record_every };
        let trajectory = simulate(&spec, &graph, &mu, &State::uniform(graph.n()), self.dynamics.relation, &opts)?;
        Ok(FigureRun { graph, mu, spec, trajectory })
    }
}

#[derive(Debug, Clone)]
pub struct FigureRun {
    pub graph: Graph,
    pub mu: BaseMeasure,
    pub spec: EnergySpec,
    pub trajectory: Trajectory,
}
