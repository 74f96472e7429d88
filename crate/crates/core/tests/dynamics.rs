mod common;

use graphflow::dynamics::*;
use graphflow::energy::{energy, velocity_field, EnergySpec, KernelSpec};
use graphflow::error::Error;
use graphflow::field::EdgeField;
use graphflow::graph::{BaseMeasure, Graph};
use proptest::prelude::*;
use rand::Rng;

fn support(m: &[f64]) -> Vec<bool> {
    m.iter().map(|x| *x > 0.0).collect()
}

/// exp(tG) by scaling and squaring of a truncated Taylor series.
fn expm_oracle(gen: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    let n = gen.len();
    let norm = gen.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) * t;
    let s = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let scale = t / 2f64.powi(s);
    let mul = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
    };
    let a: Vec<Vec<f64>> = gen.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let mut out: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut term = out.clone();
    for k in 1..25 {
        term = mul(&term, &a).into_iter().map(|r| r.into_iter().map(|v| v / k as f64).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                out[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..s {
        out = mul(&out, &out);
    }
    out
}

#[test]
fn upwind_flux_is_theta_times_velocity() {
    let mut r = common::rng(1);
    let g = common::random_graph(&mut r, 30, 0.5);
    let mut checked = 0;
    while checked < 1000 {
        let mu = common::random_measure(&mut r, 30);
        let rho = common::random_simplex(&mut r, 30, true);
        let v = common::random_field(&mut r, &g, 3.0);
        let j = upwind_flux(&g, &mu, &rho, &v);
        for (k, e) in g.edges().iter().enumerate() {
            let s = v.values()[k];
            let theta = theta_upwind(rho[e.i] * mu[e.j], rho[e.j] * mu[e.i], s);
            assert_eq!(j.values()[k], theta * s);
            assert_eq!(j.get(&g, e.j, e.i), -j.get(&g, e.i, e.j));
            checked += 1;
        }
    }
}

#[test]
fn scharfetter_gummel_limits() {
    let mut r = common::rng(2);
    for _ in 0..100 {
        let (a, b) = (r.random_range(0.0..3.0), r.random_range(0.0..3.0));
        let v = r.random_range(-2.0..2.0);
        let big = scharfetter_gummel(a, b, v, 1e6);
        let up = theta_upwind(a, b, v) * v;
        assert!((big - up).abs() <= 1e-4 * v.abs());
        let beta = r.random_range(0.1..10.0);
        assert_eq!(scharfetter_gummel(a, b, 0.0, beta), (a - b) / beta);
    }
    assert_eq!(scharfetter_gummel(0.4, 0.1, 0.0, 2.0), (0.4 - 0.1) / 2.0);
}

#[test]
fn interpolations_are_means() {
    let mut r = common::rng(3);
    for _ in 0..1000 {
        let (a, b) = (r.random_range(1e-6..5.0), r.random_range(1e-6..5.0));
        for th in [theta_log(a, b), theta_geometric(a, b), theta_arithmetic(a, b)] {
            assert!(th >= a.min(b) * (1.0 - 1e-12) && th <= a.max(b) * (1.0 + 1e-12));
        }
        // geometric ≤ logarithmic ≤ arithmetic
        assert!(theta_geometric(a, b) <= theta_log(a, b) * (1.0 + 1e-12));
        assert!(theta_log(a, b) <= theta_arithmetic(a, b) * (1.0 + 1e-12));
    }
    assert_eq!(theta_log(0.7, 0.7), 0.7);
    assert_eq!(theta_log(0.0, 0.3), 0.0);
    assert_eq!(theta_log(0.3, 0.0), 0.0);
    let near = theta_log(1.0, 1.0 + 1e-10);
    assert!((near - (1.0 + 0.5e-10)).abs() < 1e-15);
}

#[test]
fn heat_flow_on_two_points_relaxes_exponentially() {
    // ġ = −η(g q − (1 − g) p), so g → p/(p+q) at rate η(p+q)
    let (eta, p, q) = (1.3, 0.2, 0.5);
    let g = common::two_point(eta);
    let mu = BaseMeasure::new(vec![p, q]).unwrap();
    let rho0 = State::new(vec![0.9, 0.1], 0.0).unwrap();
    let report = heat_flow_check(&g, &mu, &rho0, 2.0, 0.01).unwrap();
    let eq = p / (p + q);
    for s in &report.trajectory.states {
        let want = eq + (0.9 - eq) * (-eta * (p + q) * s.time()).exp();
        assert!((s.mass()[0] - want).abs() < 1e-9, "t={}", s.time());
    }
    assert!(report.max_deviation < 1e-9);
}

#[test]
fn heat_flow_matches_matrix_exponential() {
    for seed in 0..3 {
        let mut r = common::rng(seed);
        let g = common::random_graph(&mut r, 10, 0.3);
        let mu = common::random_measure(&mut r, 10);
        let rho0 = common::random_simplex(&mut r, 10, true);
        let w = mu.weights();
        let mut gen = vec![vec![0.0; 10]; 10];
        for x in 0..10 {
            for y in 0..10 {
                if x != y {
                    gen[x][y] = g.eta(x, y) * w[x];
                    gen[x][x] -= g.eta(x, y) * w[y];
                }
            }
        }
        let e = expm_oracle(&gen, 1.0);
        let want: Vec<f64> = (0..10).map(|x| (0..10).map(|y| e[x][y] * rho0[y]).sum()).collect();
        let exact = heat_flow_exact(&g, &mu, &rho0, &[1.0]).unwrap();
        let report = heat_flow_check(&g, &mu, &State::new(rho0.clone(), 0.0).unwrap(), 1.0, 0.01).unwrap();
        for x in 0..10 {
            assert!((exact[0][x] - want[x]).abs() < 1e-12);
            assert!((report.trajectory.last().mass()[x] - want[x]).abs() < 1e-6);
        }
    }
}

#[test]
fn stationary_heat_start_stays() {
    let mut r = common::rng(9);
    let g = common::random_graph(&mut r, 8, 0.4);
    let mu = common::random_measure(&mut r, 8);
    let total = mu.total_mass();
    let rho0 = State::new(mu.weights().iter().map(|m| m / total).collect(), 0.0).unwrap();
    let report = heat_flow_check(&g, &mu, &rho0, 1.0, 0.1).unwrap();
    assert!(report.trajectory.last().l1_distance(&rho0) < 1e-15);
}

#[test]
fn upwind_expands_support_under_repulsion() {
    let g = common::path(3);
    let mu = BaseMeasure::empirical(3);
    let spec = EnergySpec::from_kernel(KernelSpec::RepulsiveExp { a: 1.0 }, &g).unwrap();
    let rho0 = State::delta(3, 0);
    let opts = SolveOptions { t_end: 1.0, dt: 0.1, scheme: Scheme::AdaptiveEuler, record_every: 1 };
    let up = simulate(&spec, &g, &mu, &rho0, FluxRelation::Upwind, &opts).unwrap();
    assert!(up.last().mass()[1] > 0.0);
    for rel in [FluxRelation::Logarithmic, FluxRelation::Geometric] {
        let tr = simulate(&spec, &g, &mu, &rho0, rel, &opts).unwrap();
        assert_eq!(tr.last().mass(), rho0.mass());
    }
}

#[test]
fn arithmetic_mean_can_drive_mass_negative() {
    // attractive K with all mass on vertex 1 pulls from the empty vertex 0
    let g = common::two_point(1.0);
    let mu = BaseMeasure::new(vec![0.5, 0.5]).unwrap();
    let spec = EnergySpec::from_kernel(KernelSpec::AttractiveExp { a: 1.0 }, &g).unwrap();
    let rho0 = State::delta(2, 1);
    let model = VelocityFlux { drift: spec.clone(), relation: FluxRelation::Arithmetic };
    let err = step(&model, &g, &mu, &rho0, 0.1, Scheme::Euler).unwrap_err();
    assert!(matches!(err, Error::StepRejected { vertex: 0, dt, .. } if dt == 0.1), "{err}");
    let upwind = VelocityFlux { drift: spec, relation: FluxRelation::Upwind };
    assert_eq!(step(&upwind, &g, &mu, &rho0, 0.1, Scheme::Euler).unwrap().mass(), rho0.mass());
}

#[test]
fn relation_names_round_trip() {
    for rel in [FluxRelation::Upwind, FluxRelation::Logarithmic, FluxRelation::Geometric, FluxRelation::Arithmetic, FluxRelation::ScharfetterGummel { beta: 2.5 }] {
        let json = serde_json::to_string(&rel).unwrap();
        assert_eq!(serde_json::from_str::<FluxRelation>(&json).unwrap(), rel);
    }
    assert!("sg(0)".parse::<FluxRelation>().is_err());
}

#[test]
fn sg_flux_field_tracks_upwind() {
    let mut r = common::rng(5);
    let g = common::random_graph(&mut r, 10, 0.4);
    let mu = common::random_measure(&mut r, 10);
    let rho = common::random_simplex(&mut r, 10, true);
    let v = common::random_field(&mut r, &g, 1.0);
    let sg = interpolated_flux(&g, &mu, &rho, &v, FluxRelation::ScharfetterGummel { beta: 1e6 }).unwrap();
    let up = upwind_flux(&g, &mu, &rho, &v);
    for (k, e) in g.edges().iter().enumerate() {
        let bound = 1e-4 * v.values()[k].abs() * mu[e.i] * mu[e.j];
        assert!((sg.values()[k] - up.values()[k]).abs() <= bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn divergence_is_conservative(seed in 0u64..1_000_000) {
        let mut r = common::rng(seed);
        let g = common::random_graph(&mut r, 20, 0.3);
        let j = common::random_field(&mut r, &g, 10.0);
        let d = divergence(&g, &j);
        prop_assert!(d.iter().sum::<f64>().abs() < 1e-14 * 20.0 * 10.0);
        // pairing identity: Σ φ div = Σ_edges η j (φ_i − φ_j)
        let phi: Vec<f64> = (0..20).map(|_| r.random_range(-1.0..1.0)).collect();
        let lhs: f64 = phi.iter().zip(&d).map(|(p, d)| p * d).sum();
        let rhs: f64 = g.edges().iter().zip(j.values()).map(|(e, s)| e.eta * s * (phi[e.i] - phi[e.j])).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn schemes_conserve_mass_and_upwind_stays_on_simplex(seed in 0u64..1_000_000, repulsive in any::<bool>()) {
        let mut r = common::rng(seed);
        let g = common::random_graph(&mut r, 12, 0.3);
        let mu = common::random_measure(&mut r, 12);
        let a = r.random_range(0.5..4.0);
        let kernel = if repulsive { KernelSpec::RepulsiveExp { a } } else { KernelSpec::AttractiveExp { a } };
        let spec = EnergySpec::from_kernel(kernel, &g).unwrap();
        let rho0 = State::new(common::random_simplex(&mut r, 12, true), 0.0).unwrap();
        for scheme in [Scheme::AdaptiveEuler, Scheme::Euler, Scheme::Rk4] {
            let opts = SolveOptions { t_end: 2.0, dt: if scheme == Scheme::AdaptiveEuler { 0.5 } else { 0.02 }, scheme, record_every: 1 };
            match simulate(&spec, &g, &mu, &rho0, FluxRelation::Upwind, &opts) {
                Ok(tr) => {
                    for d in &tr.diagnostics {
                        prop_assert!(d.mass_error <= 1e-12);
                        prop_assert!(d.min_mass >= 0.0);
                    }
                    let times = tr.times();
                    prop_assert!(times.windows(2).all(|w| w[1] > w[0]));
                    prop_assert_eq!(*times.last().unwrap(), 2.0);
                }
                Err(Error::StepRejected { .. }) if scheme != Scheme::AdaptiveEuler => {}
                Err(e) => prop_assert!(false, "{}", e),
            }
        }
    }

    #[test]
    fn energy_decreases_up_to_the_euler_defect(seed in 0u64..1_000_000) {
        let mut r = common::rng(seed);
        let g = common::random_graph(&mut r, 12, 0.3);
        let mu = common::random_measure(&mut r, 12);
        let spec = EnergySpec::from_kernel(KernelSpec::AttractiveExp { a: r.random_range(0.5..4.0) }, &g).unwrap();
        let rho0 = State::new(common::random_simplex(&mut r, 12, false), 0.0).unwrap();
        let opts = SolveOptions { t_end: 3.0, dt: 0.2, scheme: Scheme::AdaptiveEuler, record_every: 1 };
        let tr = simulate(&spec, &g, &mu, &rho0, FluxRelation::Upwind, &opts).unwrap();
        // E(ρ − h d) − E(ρ) = −h 𝒟 + h²/2 dᵀK d ≤ h²/2 max|K| ‖d‖₁²
        for k in 0..tr.states.len() - 1 {
            let h = tr.states[k + 1].time() - tr.states[k].time();
            let d1: f64 = divergence(&g, &tr.fluxes[k]).iter().map(|x| x.abs()).sum();
            let rise = tr.diagnostics[k + 1].energy - tr.diagnostics[k].energy;
            prop_assert!(rise <= 0.5 * h * h * d1 * d1 + 1e-15);
            prop_assert!(-rise <= h * tr.diagnostics[k].slope + 0.5 * h * h * d1 * d1 + 1e-15);
        }
    }

    #[test]
    fn log_and_geometric_never_expand_support(seed in 0u64..1_000_000) {
        let mut r = common::rng(seed);
        let g = common::random_graph(&mut r, 10, 0.3);
        let mu = common::random_measure(&mut r, 10);
        let spec = EnergySpec::from_kernel(KernelSpec::RepulsiveExp { a: r.random_range(0.5..4.0) }, &g).unwrap();
        let rho0 = State::new(common::random_simplex(&mut r, 10, true), 0.0).unwrap();
        for rel in [FluxRelation::Logarithmic, FluxRelation::Geometric] {
            let opts = SolveOptions { t_end: 1.0, dt: 0.05, scheme: Scheme::AdaptiveEuler, record_every: 1 };
            let tr = simulate(&spec, &g, &mu, &rho0, rel, &opts).unwrap();
            for s in &tr.states {
                for (now, then) in support(s.mass()).iter().zip(support(rho0.mass())) {
                    prop_assert!(!now || then);
                }
                prop_assert!(s.mass_error() <= 1e-12);
            }
        }
    }

    #[test]
    fn mass_never_reaches_other_components(seed in 0u64..1_000_000) {
        let mut r = common::rng(seed);
        let a = common::random_graph(&mut r, 6, 0.4);
        // two copies of `a`, side by side and unconnected
        let mut pos = a.positions().to_vec();
        pos.extend(a.positions().iter().map(|p| vec![p[0] + 5.0, p[1]]));
        let mut pairs: Vec<_> = a.edges().iter().map(|e| (e.i, e.j, e.eta)).collect();
        pairs.extend(a.edges().iter().map(|e| (e.i + 6, e.j + 6, e.eta)).collect::<Vec<_>>());
        let g = Graph::new(pos, &pairs).unwrap();
        let mu = BaseMeasure::empirical(12);
        let spec = EnergySpec::from_kernel(KernelSpec::RepulsiveExp { a: 0.1 }, &g).unwrap();
        let mut m = common::random_simplex(&mut r, 6, true);
        m.extend([0.0; 6]);
        let tr = simulate(&spec, &g, &mu, &State::new(m, 0.0).unwrap(), FluxRelation::Upwind, &SolveOptions { t_end: 2.0, ..Default::default() }).unwrap();
        prop_assert!(tr.states.iter().all(|s| s.mass()[6..].iter().all(|x| *x == 0.0)));
        let comp = g.components();
        prop_assert!(comp[0] != comp[6]);
    }
}

#[test]
fn zero_velocity_everywhere_is_stationary() {
    let mut r = common::rng(11);
    let g = common::random_graph(&mut r, 8, 0.4);
    let mu = common::random_measure(&mut r, 8);
    let rho0 = State::new(common::random_simplex(&mut r, 8, true), 0.0).unwrap();
    let spec = EnergySpec::zero(8);
    assert_eq!(velocity_field(&spec, &g, rho0.mass()).max_abs(), 0.0);
    for scheme in [Scheme::Euler, Scheme::Rk4, Scheme::AdaptiveEuler] {
        let tr = simulate(&spec, &g, &mu, &rho0, FluxRelation::Upwind, &SolveOptions { scheme, ..Default::default() }).unwrap();
        assert_eq!(tr.last().mass(), rho0.mass());
        assert_eq!(energy(&spec, &g, tr.last().mass()), 0.0);
    }
    let _ = EdgeField::zeros(&g);
}

#[test]
fn adaptive_stepping_finishes_when_a_vertex_drains() {
    // geometric flux empties the middle vertex in finite time
    let g = common::path(3);
    let mu = BaseMeasure::empirical(3);
    let spec = EnergySpec::from_kernel(KernelSpec::RepulsiveExp { a: 0.5 }, &g).unwrap();
    let rho0 = State::new(vec![0.05, 0.9, 0.05], 0.0).unwrap();
    for rel in [FluxRelation::Geometric, FluxRelation::Logarithmic] {
        let opts = SolveOptions { t_end: 200.0, dt: 0.5, scheme: Scheme::AdaptiveEuler, record_every: 1000 };
        let tr = simulate(&spec, &g, &mu, &rho0, rel, &opts).unwrap();
        assert_eq!(tr.last().time(), 200.0);
        assert!(tr.diagnostics.iter().all(|d| d.min_mass >= 0.0 && d.mass_error <= 1e-12));
        assert!(tr.steps < 1_000_000, "{} steps", tr.steps);
    }
}

#[test]
fn adaptive_stepping_rejects_outflow_from_an_empty_vertex() {
    let g = common::two_point(1.0);
    let mu = BaseMeasure::new(vec![0.5, 0.5]).unwrap();
    let spec = EnergySpec::from_kernel(KernelSpec::AttractiveExp { a: 1.0 }, &g).unwrap();
    let model = VelocityFlux { drift: spec, relation: FluxRelation::Arithmetic };
    let err = step(&model, &g, &mu, &State::delta(2, 1), 0.1, Scheme::AdaptiveEuler).unwrap_err();
    assert!(matches!(err, Error::StepRejected { vertex: 0, .. }), "{err}");
}
