use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use graphflow::convergence_lab::{config_hash, convergence_study, local_limit_study, mass_concentration, LocalLimitConfig, SamplingExperiment};
use graphflow::dynamics::{simulate as run_dynamics, SolveOptions, State, Trajectory};
use graphflow::energy::EnergySpec;
use graphflow::graph::{check_assumptions, BaseMeasure, Graph, GraphDocument};
use graphflow::quasimetric::{solve_bb, two_point_distance, PathProblem};
use graphflow::report::{self, DistanceRow, Snapshots};
use graphflow::variational::{chain_rule_residual, de_giorgi_with, upper_gradient_check};

use crate::config::{load, AssumptionsConfig, DeGiorgiConfig, DistanceConfig, SimulateConfig};
use crate::{CliError, Common};

const DEFAULT_OUT: &str = "graphflow-out";

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(dir: Option<&Path>) -> Result<Self, CliError> {
        let dir = dir.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::validation(format!("out: cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::validation(format!("out: cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialise");
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes config.json (re-runnable with --config) and manifest.json.
    fn finish(self, command: &str, seed: Option<u64>, config: &Value, summary: Value) -> Result<(), CliError> {
        let rerun = format!("graphflow {command} --config config.json");
        self.finish_with(command, seed, config, summary, rerun)
    }

    fn finish_with(mut self, command: &str, seed: Option<u64>, config: &Value, summary: Value, rerun: String) -> Result<(), CliError> {
        self.write_json("config.json", config)?;
        let manifest = json!({
            "tool": "graphflow",
            "version": graphflow::VERSION,
            "command": command,
            "seed": seed,
            "config_hash": config_hash(config),
            "config": config,
            "rerun": rerun,
            "outputs": self.files,
            "summary": summary,
        });
        self.write_json("manifest.json", &manifest)
    }
}

fn initial_state(initial: &Option<Vec<f64>>, n: usize) -> Result<State, CliError> {
    match initial {
        None => Ok(State::uniform(n)),
        Some(w) if w.len() != n => Err(CliError::validation(format!("initial: {} masses for {n} vertices", w.len()))),
        Some(w) => Ok(State::from_weights(w)?),
    }
}

fn run_simulation(cfg: &SimulateConfig) -> Result<(Graph, BaseMeasure, EnergySpec, Trajectory), CliError> {
    let (g, mu) = cfg.graph().build()?;
    let spec = EnergySpec::from_kernel(cfg.kernel, &g)?;
    let rho0 = initial_state(&cfg.initial, g.n())?;
    let opts = SolveOptions { t_end: cfg.t_end, dt: cfg.dt, scheme: cfg.scheme, record_every: cfg.record_every };
    let traj = run_dynamics(&spec, &g, &mu, &rho0, cfg.relation, &opts)?;
    Ok((g, mu, spec, traj))
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let seed = common.seed.map(|s| ("seed", Value::from(s)));
    let (cfg, echo) = load(&SimulateConfig::default(), common.config.as_deref(), seed, &common.sets)?;
    let (g, mu, _, traj) = run_simulation(&cfg)?;
    let mut out = Output::create(common.out.as_deref())?;
    out.write("trajectory.csv", &report::trajectory_csv(&traj))?;
    out.write_json("snapshots.json", &Snapshots::new(&g, &traj))?;
    out.write_json("graph.json", &GraphDocument::from_parts(&g, &mu))?;
    let first = &traj.diagnostics[0];
    let last = traj.diagnostics.last().expect("at least one record");
    let summary = json!({
        "records": traj.states.len(),
        "steps": traj.steps,
        "energy_start": first.energy,
        "energy_end": last.energy,
        "mass90_start": mass_concentration(traj.states[0].mass(), 0.9),
        "mass90_end": mass_concentration(traj.last().mass(), 0.9),
    });
    println!(
        "simulated {} vertices to t = {} in {} steps; energy {} -> {}",
        g.n(),
        last.t,
        traj.steps,
        report::num(first.energy),
        report::num(last.energy)
    );
    out.finish("simulate", Some(cfg.seed), &echo, summary)
}

pub fn degiorgi(common: &Common) -> Result<(), CliError> {
    let seed = common.seed.map(|s| ("run.seed", Value::from(s)));
    let (cfg, echo) = load(&DeGiorgiConfig::default(), common.config.as_deref(), seed, &common.sets)?;
    let (g, mu, spec, traj) = run_simulation(&cfg.run)?;
    let dg = de_giorgi_with(&spec, &g, &mu, &traj, cfg.speed_source)?;
    let residual = chain_rule_residual(&spec, &g, &mu, &traj)?;
    let upper = upper_gradient_check(&spec, &g, &mu, &traj)?;
    let mut out = Output::create(common.out.as_deref())?;
    out.write("trajectory.csv", &report::trajectory_csv(&traj))?;
    out.write("intervals.csv", &report::interval_csv(&dg))?;
    out.write_json("degiorgi.json", &json!({ "de_giorgi": dg, "chain_rule_residual": residual, "upper_gradient": upper }))?;
    // G_T is judged against the size of the terms it balances
    let scale = dg.energy_gap.abs() + dg.slope_integral + dg.speed_integral;
    let pass = upper.passed && dg.g_value.abs() <= cfg.relative_tolerance * scale.max(f64::MIN_POSITIVE);
    println!(
        "{}: G_T = {} (relative {}), chain-rule residual = {}, worst upper-gradient margin = {}",
        if pass { "PASS" } else { "FAIL" },
        report::num(dg.g_value),
        report::num(if scale > 0.0 { dg.g_value.abs() / scale } else { 0.0 }),
        report::num(residual),
        report::num(upper.worst_margin)
    );
    let summary = json!({ "verdict": if pass { "PASS" } else { "FAIL" }, "g_value": dg.g_value, "chain_rule_residual": residual, "upper_gradient_passed": upper.passed });
    out.finish("degiorgi", Some(cfg.run.seed), &echo, summary)
}

pub fn distance(common: &Common) -> Result<(), CliError> {
    let seed = common.seed.map(|s| ("seed", Value::from(s)));
    let (cfg, echo) = load(&DistanceConfig::default(), common.config.as_deref(), seed, &common.sets)?;
    let (g, mu) = cfg.build()?;
    let states = cfg
        .measures
        .iter()
        .enumerate()
        .map(|(k, m)| {
            if m.len() != g.n() {
                return Err(CliError::validation(format!("measures: entry {k} has {} masses for {} vertices", m.len(), g.n())));
            }
            State::new(m.clone(), 0.0).map_err(|e| CliError::validation(format!("measures: entry {k}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate() {
            if i == j {
                continue;
            }
            let problem = PathProblem { m_steps: cfg.m_steps, tolerance: cfg.tolerance, max_iters: cfg.max_iters, ..PathProblem::new(&g, &mu, a, b) };
            let sol = solve_bb(&problem)?;
            rows.push(DistanceRow { i, j, distance: sol.distance, converged: sol.converged, iterations: sol.iterations });
            println!("T({i},{j}) = {}{}", report::num(sol.distance), if sol.converged { "" } else { " (not converged)" });
        }
    }
    let mut out = Output::create(common.out.as_deref())?;
    out.write("distances.csv", &report::distance_csv(&rows))?;
    let failed = rows.iter().filter(|r| !r.converged).count();
    out.finish("distance", Some(cfg.seed), &echo, json!({ "pairs": rows.len(), "not_converged": failed }))?;
    if failed > 0 {
        return Err(CliError::NotConverged(format!("distance: {failed} of {} solves did not converge", rows.len())));
    }
    Ok(())
}

pub fn converge(common: &Common) -> Result<(), CliError> {
    let seed = common.seed.map(|s| ("seeds", json!([s])));
    let (cfg, echo) = load(&SamplingExperiment::uniform_interval_default(), common.config.as_deref(), seed, &common.sets)?;
    let rep = convergence_study(&cfg)?;
    let mut out = Output::create(common.out.as_deref())?;
    out.write("convergence.csv", &report::convergence_csv(&rep))?;
    out.write("convergence_summary.csv", &report::convergence_summary_csv(&rep))?;
    for s in &rep.summary {
        println!("n = {:>5}  t = {:<6}  median W1 = {}", s.n, s.t, report::num(s.median));
    }
    out.finish("converge", common.seed, &echo, json!({ "seeds": cfg.seeds, "study_hash": rep.config_hash }))
}

pub fn locallimit(common: &Common) -> Result<(), CliError> {
    if common.seed.is_some() {
        return Err(CliError::validation("seed: locallimit is deterministic and takes no seed".into()));
    }
    let (cfg, echo) = load(&LocalLimitConfig::smooth_default(), common.config.as_deref(), None, &common.sets)?;
    let rep = local_limit_study(&cfg)?;
    let mut out = Output::create(common.out.as_deref())?;
    out.write("locallimit.csv", &report::local_limit_csv(&rep))?;
    out.write_json("locallimit.json", &rep)?;
    for r in &rep.rows {
        println!("epsilon = {:<6}  L1 discrepancy = {}  graph drift = {}", r.epsilon, report::num(r.discrepancy), report::num(r.graph_drift));
    }
    println!("finite-volume reference moved {} of the mass", report::num(rep.fv_moved_mass));
    out.finish("locallimit", None, &echo, json!({ "study_hash": rep.config_hash, "fv_moved_mass": rep.fv_moved_mass }))
}

#[derive(Debug, Args, Serialize)]
pub struct TwoPointArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    /// Masses at vertices 0 and 1.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.8])]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.2])]
    nu: Vec<f64>,
    /// Also write a (ρ₀, ν₀) grid of this many points per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Also solve both directions numerically.
    #[arg(long)]
    bb: bool,
}

impl TwoPointArgs {
    fn command_line(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut line = format!("graphflow twopoint --alpha {:?} --p {:?} --q {:?} --rho {} --nu {}", self.alpha, self.p, self.q, list(&self.rho), list(&self.nu));
        if let Some(k) = self.grid {
            line.push_str(&format!(" --grid {k}"));
        }
        if self.bb {
            line.push_str(" --bb");
        }
        line
    }
}

pub fn twopoint(args: &TwoPointArgs, common: &Common) -> Result<(), CliError> {
    if common.config.is_some() || !common.sets.is_empty() {
        return Err(CliError::validation("config: twopoint takes its parameters as flags".into()));
    }
    let pair = |field: &str, v: &[f64]| match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(CliError::validation(format!("{field}: expected two comma-separated masses"))),
    };
    let (rho, nu) = (pair("rho", &args.rho)?, pair("nu", &args.nu)?);
    let forward = two_point_distance(args.alpha, args.p, args.q, rho, nu)?;
    let backward = two_point_distance(args.alpha, args.p, args.q, nu, rho)?;
    println!("T(rho,nu) = {}", report::num(forward));
    println!("T(nu,rho) = {}", report::num(backward));
    let mut numeric = Value::Null;
    if args.bb {
        let g = Graph::new(vec![vec![0.0], vec![1.0]], &[(0, 1, args.alpha)])?;
        let mu = BaseMeasure::new(vec![args.p, args.q])?;
        let (a, b) = (State::new(rho.to_vec(), 0.0)?, State::new(nu.to_vec(), 0.0)?);
        let f = solve_bb(&PathProblem::new(&g, &mu, &a, &b))?;
        let r = solve_bb(&PathProblem::new(&g, &mu, &b, &a))?;
        println!("numeric T(rho,nu) = {}", report::num(f.distance));
        println!("numeric T(nu,rho) = {}", report::num(r.distance));
        numeric = json!({ "forward": f.distance, "backward": r.distance, "converged": f.converged && r.converged });
    }
    if let Some(dir) = common.out.as_deref() {
        let mut out = Output::create(Some(dir))?;
        out.write_json("twopoint.json", &json!({ "forward": forward, "backward": backward, "numeric": numeric }))?;
        if let Some(k) = args.grid {
            if k < 2 {
                return Err(CliError::validation("grid: needs at least 2 points per axis".into()));
            }
            let h = 1.0 / (k - 1) as f64;
            let mut grid = Vec::with_capacity(k * k);
            for a in 0..k {
                for b in 0..k {
                    let (r0, v0) = (a as f64 * h, b as f64 * h);
                    let t = two_point_distance(args.alpha, args.p, args.q, [r0, 1.0 - r0], [v0, 1.0 - v0])?;
                    grid.push((r0, v0, t));
                }
            }
            out.write("twopoint.csv", &report::two_point_csv(&grid))?;
        }
        let echo = serde_json::to_value(args).expect("flags serialise");
        out.finish_with("twopoint", None, &echo, json!({ "forward": forward, "backward": backward }), args.command_line())?;
    }
    Ok(())
}

pub fn assumptions(common: &Common) -> Result<(), CliError> {
    let seed = common.seed.map(|s| ("graph.seed", Value::from(s)));
    let (cfg, echo) = load(&AssumptionsConfig::default(), common.config.as_deref(), seed, &common.sets)?;
    let (g, mu) = cfg.graph.build()?;
    let rep = check_assumptions(&g, &mu, &cfg.eps_grid)?;
    let mut out = Output::create(common.out.as_deref())?;
    out.write_json("assumptions.json", &rep)?;
    println!("c_eta = {}", report::num(rep.c_eta));
    println!("c_eta_prime = {}", report::num(rep.c_eta_prime));
    for (eps, v) in &rep.local_integral {
        println!("local integral at epsilon = {eps}: {}", report::num(*v));
    }
    out.finish("assumptions", Some(cfg.graph.seed), &echo, json!({ "c_eta": rep.c_eta }))
}
