// Shared random instances for the integration tests. Not every test file
// uses every helper.
#![allow(dead_code)]

use graphflow::field::EdgeField;
use graphflow::graph::{BaseMeasure, Graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// n points in the unit square, each pair joined with probability `p`.
/// A path through all vertices is always present so the graph is connected.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let pos: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.random::<f64>() < p {
                pairs.push((i, j, rng.random_range(0.2..2.0)));
            }
        }
    }
    Graph::new(pos, &pairs).unwrap()
}

pub fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> BaseMeasure {
    BaseMeasure::new((0..n).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap()
}

/// Probability vector; with `zeros` some entries are set to exactly 0.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize, zeros: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    if zeros {
        for x in w.iter_mut() {
            if rng.random::<f64>() < 0.3 {
                *x = 0.0;
            }
        }
        if w.iter().all(|x| *x == 0.0) {
            w[0] = 1.0;
        }
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

pub fn random_field(rng: &mut ChaCha8Rng, g: &Graph, scale: f64) -> EdgeField {
    EdgeField::from_values(g, (0..g.n_edges()).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn path(n: usize) -> Graph {
    let pos = (0..n).map(|i| vec![i as f64]).collect();
    let pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    Graph::new(pos, &pairs).unwrap()
}

pub fn two_point(alpha: f64) -> Graph {
    Graph::new(vec![vec![0.0], vec![1.0]], &[(0, 1, alpha)]).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Log-log slope of errors measured at step sizes halving each time.
pub fn empirical_order(errors: &[f64]) -> f64 {
    let k = errors.len() - 1;
    (errors[0] / errors[k]).log2() / k as f64
}

/// Dense n × n matrix of an edge field, j[y][x] = −j[x][y].
pub fn dense(g: &Graph, j: &EdgeField) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; g.n()]; g.n()];
    for (e, &s) in g.edges().iter().zip(j.values()) {
        m[e.i][e.j] = s;
        m[e.j][e.i] = -s;
    }
    m
}

fn alpha_oracle(s: f64, r: f64) -> f64 {
    match (s > 0.0, r > 0.0) {
        (false, _) => 0.0,
        (true, false) => f64::INFINITY,
        (true, true) => s * s / r,
    }
}

/// ½ Σ over ordered pairs x ≠ y of [α(j_xy, ρ_x μ_y) + α(−j_xy, μ_x ρ_y)] η_xy,
/// written directly on a dense, possibly non-antisymmetric matrix.
pub fn action_oracle(g: &Graph, mu: &BaseMeasure, rho: &[f64], j: &[Vec<f64>]) -> f64 {
    let w = mu.weights();
    let mut total = 0.0;
    for x in 0..g.n() {
        for y in 0..g.n() {
            let eta = g.eta(x, y);
            if x == y || eta == 0.0 {
                continue;
            }
            total += 0.5 * eta * (alpha_oracle(j[x][y], rho[x] * w[y]) + alpha_oracle(-j[x][y], w[x] * rho[y]));
        }
    }
    total
}
