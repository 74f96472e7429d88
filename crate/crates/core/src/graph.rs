//! Weighted graphs over embedded point sets, base measures and the moment
//! constants that control the nonlocal dynamics.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One unordered pair `i < j` with its strictly positive weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub eta: f64,
}

/// Finite weighted graph with vertices embedded in R^d.
///
/// Edges are stored once per unordered pair in lexicographic order; every
/// vertex keeps a sorted neighbour list pointing back into that table, so
/// `eta(x, y)` and `eta(y, x)` read the same number.
#[derive(Debug, Clone)]
pub struct Graph {
    positions: Vec<Vec<f64>>,
    dim: usize,
    edges: Vec<Edge>,
    // CSR adjacency: neighbours of x are adj[offsets[x]..offsets[x + 1]].
    offsets: Vec<usize>,
    adj: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from explicit weighted pairs. Pairs may be given in
    /// either orientation but only once each.
    pub fn new(positions: Vec<Vec<f64>>, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let n = positions.len();
        let dim = positions.first().map_or(0, Vec::len);
        if positions.iter().any(|p| p.len() != dim) {
            return Err(invalid("positions", "all points must share one dimension"));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("positions", "coordinates must be finite"));
        }
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b, eta) in pairs {
            if a >= n || b >= n {
                return Err(invalid("edges", format!("pair ({a}, {b}) out of range for n = {n}")));
            }
            if a == b {
                return Err(invalid("edges", format!("self-loop at vertex {a}")));
            }
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(invalid("edges", format!("weight {eta} on ({a}, {b}) must be positive and finite")));
            }
            edges.push(Edge { i: a.min(b), j: a.max(b), eta });
        }
        edges.sort_by(|e, f| (e.i, e.j).cmp(&(f.i, f.j)));
        if let Some(w) = edges.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(invalid("edges", format!("pair ({}, {}) listed twice", w[0].i, w[0].j)));
        }

        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for x in 0..n {
            offsets[x + 1] = offsets[x] + degree[x];
        }
        let mut fill = offsets.clone();
        let mut adj = vec![(0, 0); offsets[n]];
        for (k, e) in edges.iter().enumerate() {
            adj[fill[e.i]] = (e.j, k);
            fill[e.i] += 1;
            adj[fill[e.j]] = (e.i, k);
            fill[e.j] += 1;
        }
        for x in 0..n {
            adj[offsets[x]..offsets[x + 1]].sort_unstable();
        }
        Ok(Self { positions, dim, edges, offsets, adj })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn position(&self, x: usize) -> &[f64] {
        &self.positions[x]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted `(neighbour, edge index)` pairs of vertex `x`.
    pub fn neighbors(&self, x: usize) -> &[(usize, usize)] {
        &self.adj[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn edge_index(&self, x: usize, y: usize) -> Option<usize> {
        let nb = self.neighbors(x);
        nb.binary_search_by(|&(z, _)| z.cmp(&y)).ok().map(|k| nb[k].1)
    }

    /// η(x, y), zero when the pair is not an edge.
    pub fn eta(&self, x: usize, y: usize) -> f64 {
        self.edge_index(x, y).map_or(0.0, |k| self.edges[k].eta)
    }

    pub fn distance(&self, x: usize, y: usize) -> f64 {
        euclidean(&self.positions[x], &self.positions[y])
    }

    /// Connected component label per vertex, labels in order of first vertex.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(x) = stack.pop() {
                for &(y, _) in self.neighbors(x) {
                    if label[y] == usize::MAX {
                        label[y] = next;
                        stack.push(y);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Same graph with every weight multiplied by `f(edge)`. Used for
    /// rescaled kernels; the result is revalidated.
    pub fn map_weights(&self, f: impl Fn(&Edge) -> f64) -> Result<Self> {
        let pairs: Vec<_> = self.edges.iter().map(|e| (e.i, e.j, f(e))).collect();
        Self::new(self.positions.clone(), &pairs)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Vertex weights μ. Empirical measures carry 1/n here, so formulas never
/// see an explicit 1/n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasure {
    weights: Vec<f64>,
}

impl BaseMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("mu", "weights must be finite and non-negative"));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("mu", "total mass must be positive"));
        }
        Ok(Self { weights })
    }

    /// 1/n on every vertex.
    pub fn empirical(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub(crate) fn check_against(&self, g: &Graph) -> Result<()> {
        if self.len() != g.n() {
            return Err(invalid("mu", format!("{} weights for {} vertices", self.len(), g.n())));
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for BaseMeasure {
    type Output = f64;
    fn index(&self, x: usize) -> &f64 {
        &self.weights[x]
    }
}

/// Radial weight profile for geometric graphs. `eta(r)` is only ever
/// evaluated for `0 < r <= epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightKernel {
    /// exp(−a r²)
    Gaussian { a: f64 },
    /// 2(2+d)/ε² · 1/|B_ε|, the normalisation under which the graph
    /// dynamics localise to a continuity equation as ε → 0.
    PaperLocal,
    Constant { c: f64 },
    /// Smooth compact bump exp(−1/(1 − (r/ε)²)), zero at the cutoff.
    Bump,
}

impl WeightKernel {
    pub fn eval(&self, r: f64, epsilon: f64, dim: usize) -> f64 {
        match *self {
            Self::Gaussian { a } => (-a * r * r).exp(),
            Self::PaperLocal => 2.0 * (2.0 + dim as f64) / (epsilon * epsilon) / ball_volume(dim, epsilon),
            Self::Constant { c } => c,
            Self::Bump => {
                let s = r / epsilon;
                if s >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - s * s)).exp()
                }
            }
        }
    }
}

impl FromStr for WeightKernel {
    type Err = Error;

    /// Accepts `gaussian(6)`, `paper_local`, `constant`, `constant(2.5)`, `bump`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_call(s);
        let unknown = || Error::Unknown { kind: "weight kernel", name: s.to_string() };
        if args.iter().any(|a| !a.is_finite()) {
            return Err(unknown());
        }
        match (name, args.as_slice()) {
            ("gaussian", [a]) => Ok(Self::Gaussian { a: *a }),
            ("paper_local" | "local", []) => Ok(Self::PaperLocal),
            ("constant", []) => Ok(Self::Constant { c: 1.0 }),
            ("constant", [c]) => Ok(Self::Constant { c: *c }),
            ("bump", []) => Ok(Self::Bump),
            _ => Err(unknown()),
        }
    }
}

impl std::fmt::Display for WeightKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Gaussian { a } => write!(f, "gaussian({a})"),
            Self::PaperLocal => write!(f, "paper_local"),
            Self::Constant { c } => write!(f, "constant({c})"),
            Self::Bump => write!(f, "bump"),
        }
    }
}

impl TryFrom<String> for WeightKernel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WeightKernel> for String {
    fn from(k: WeightKernel) -> String {
        k.to_string()
    }
}

/// Splits `name(a, b, ...)` into the name and parsed numeric arguments.
/// Unparsable arguments become NaN and are rejected by the caller's match.
pub(crate) fn split_call(s: &str) -> (&str, Vec<f64>) {
    let s = s.trim();
    match s.find('(') {
        Some(open) if s.ends_with(')') => {
            let inner = &s[open + 1..s.len() - 1];
            let args = inner
                .split(',')
                .filter(|a| !a.trim().is_empty())
                .map(|a| a.trim().parse().unwrap_or(f64::NAN))
                .collect();
            (s[..open].trim(), args)
        }
        _ => (s, Vec::new()),
    }
}

/// Volume of the Euclidean ball of radius r in R^d.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    // V_0 = 1, V_1 = 2, V_d = V_{d-2} 2π/d
    let mut v = [1.0, 2.0];
    for d in 2..=dim {
        v[d % 2] *= 2.0 * std::f64::consts::PI / d as f64;
    }
    v[dim % 2] * r.powi(dim as i32)
}

/// ε-neighbourhood graph: an edge for every pair with 0 < |x−y| ≤ ε and a
/// positive kernel value.
pub fn build_geometric_graph(positions: Vec<Vec<f64>>, epsilon: f64, kernel: WeightKernel) -> Result<Graph> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", format!("must be positive and finite, got {epsilon}")));
    }
    match kernel {
        WeightKernel::Gaussian { a } if !(a >= 0.0 && a.is_finite()) => {
            return Err(invalid("kernel", format!("gaussian rate must be non-negative, got {a}")))
        }
        WeightKernel::Constant { c } if !(c > 0.0 && c.is_finite()) => {
            return Err(invalid("kernel", format!("constant weight must be positive, got {c}")))
        }
        _ => {}
    }
    let n = positions.len();
    let dim = positions.first().map_or(0, Vec::len);
    let mut pairs = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            if positions[y].len() != dim {
                return Err(invalid("positions", "all points must share one dimension"));
            }
            let r = euclidean(&positions[x], &positions[y]);
            if r == 0.0 {
                return Err(Error::DuplicatePosition(x, y));
            }
            if r <= epsilon {
                let eta = kernel.eval(r, epsilon, dim);
                if eta > 0.0 {
                    pairs.push((x, y, eta));
                }
            }
        }
    }
    Graph::new(positions, &pairs)
}

/// Per-edge cost for shortest paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeCost {
    #[default]
    InverseWeight,
    Unit,
    Euclidean,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Above this size the ulp-level triangle repair is skipped (it is O(n³)).
pub const EXACT_TRIANGLE_LIMIT: usize = 512;

/// All-pairs shortest-path distances, row-major `n × n`. Disconnected pairs
/// hold `f64::INFINITY`.
pub fn graph_distance_matrix(g: &Graph, cost: EdgeCost) -> Vec<Vec<f64>> {
    let n = g.n();
    let edge_cost = |k: usize| {
        let e = &g.edges()[k];
        match cost {
            EdgeCost::InverseWeight => 1.0 / e.eta,
            EdgeCost::Unit => 1.0,
            EdgeCost::Euclidean => g.distance(e.i, e.j),
        }
    };
    let mut out = vec![vec![f64::INFINITY; n]; n];
    for s in 0..n {
        let dist = &mut out[s];
        dist[s] = 0.0;
        let mut heap = BinaryHeap::from([Candidate(0.0, s)]);
        while let Some(Candidate(d, x)) = heap.pop() {
            if d > dist[x] {
                continue;
            }
            for &(y, k) in g.neighbors(x) {
                let nd = d + edge_cost(k);
                if nd < dist[y] {
                    dist[y] = nd;
                    heap.push(Candidate(nd, y));
                }
            }
        }
    }
    // Dijkstra rows can differ in the last bit between (x,y) and (y,x).
    for x in 0..n {
        for y in x + 1..n {
            let d = out[x][y].min(out[y][x]);
            out[x][y] = d;
            out[y][x] = d;
        }
    }
    // Summation order can also leave d(x,z) one ulp above d(x,y) + d(y,z).
    // A few relaxation sweeps make the triangle inequality hold exactly.
    if n <= EXACT_TRIANGLE_LIMIT {
        let mut changed = true;
        while changed {
            changed = false;
            for y in 0..n {
                for x in 0..n {
                    let dxy = out[x][y];
                    if !dxy.is_finite() {
                        continue;
                    }
                    for z in 0..n {
                        let via = dxy + out[y][z];
                        if via < out[x][z] {
                            out[x][z] = via;
                            out[z][x] = via;
                            changed = true;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub c_eta: f64,
    /// ε → max_x Σ_{0<|x−y|<ε} |x−y|² η μ_y, in increasing ε.
    pub local_integral: Vec<(f64, f64)>,
    pub c_eta_prime: f64,
}

pub const DEFAULT_EPS_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.5];

fn moment(r: f64) -> f64 {
    (r * r).max(r.powi(4))
}

/// Evaluates the moment bound, the local integrability table and the
/// pairwise bound on supp μ ⊗ μ. Suprema run over vertices only.
pub fn check_assumptions(g: &Graph, mu: &BaseMeasure, eps_grid: &[f64]) -> Result<AssumptionReport> {
    mu.check_against(g)?;
    let mut eps: Vec<f64> = eps_grid.to_vec();
    eps.sort_by(f64::total_cmp);
    let mut c_eta = 0.0f64;
    let mut local = vec![0.0f64; eps.len()];
    for x in 0..g.n() {
        let mut total = 0.0;
        let mut by_eps = vec![0.0; eps.len()];
        for &(y, k) in g.neighbors(x) {
            let r = g.distance(x, y);
            let eta = g.edges()[k].eta;
            total += moment(r) * eta * mu[y];
            for (slot, &e) in by_eps.iter_mut().zip(&eps) {
                if r < e {
                    *slot += r * r * eta * mu[y];
                }
            }
        }
        c_eta = c_eta.max(total);
        for (l, b) in local.iter_mut().zip(by_eps) {
            *l = l.max(b);
        }
    }
    let c_eta_prime = g
        .edges()
        .iter()
        .filter(|e| mu[e.i] > 0.0 && mu[e.j] > 0.0)
        .map(|e| moment(g.distance(e.i, e.j)) * e.eta)
        .fold(0.0, f64::max);
    Ok(AssumptionReport { c_eta, local_integral: eps.into_iter().zip(local).collect(), c_eta_prime })
}

/// On-disk graph document: `{"positions", "edges": [[i, j, eta]], "mu"}`
/// with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub positions: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize, f64)>,
    pub mu: Vec<f64>,
}

impl GraphDocument {
    pub fn from_parts(g: &Graph, mu: &BaseMeasure) -> Self {
        Self {
            positions: g.positions().to_vec(),
            edges: g.edges().iter().map(|e| (e.i, e.j, e.eta)).collect(),
            mu: mu.weights().to_vec(),
        }
    }

    pub fn into_parts(self) -> Result<(Graph, BaseMeasure)> {
        let g = Graph::new(self.positions, &self.edges)?;
        let mu = BaseMeasure::new(self.mu)?;
        mu.check_against(&g)?;
        Ok((g, mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_pair_inside_radius() {
        let g = build_geometric_graph(vec![vec![0.0, 0.0], vec![0.5, 0.0]], 0.7, WeightKernel::Gaussian { a: 6.0 }).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(g.eta(0, 1), (-1.5f64).exp());
        assert_eq!(g.eta(1, 0), g.eta(0, 1));
    }

    #[test]
    fn pair_beyond_radius_has_no_edge() {
        let g = build_geometric_graph(vec![vec![0.0], vec![1.0]], 0.7, WeightKernel::Gaussian { a: 6.0 }).unwrap();
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn collinear_chain() {
        let g = build_geometric_graph(vec![vec![0.0], vec![0.3], vec![0.6]], 0.35, WeightKernel::Constant { c: 1.0 }).unwrap();
        let pairs: Vec<_> = g.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn duplicate_points_rejected() {
        let err = build_geometric_graph(vec![vec![0.0], vec![0.0]], 1.0, WeightKernel::Bump).unwrap_err();
        assert!(matches!(err, Error::DuplicatePosition(0, 1)));
    }

    #[test]
    fn negative_epsilon_names_field() {
        let err = build_geometric_graph(vec![vec![0.0]], -1.0, WeightKernel::Bump).unwrap_err();
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn kernel_names_parse() {
        assert_eq!("gaussian(6)".parse::<WeightKernel>().unwrap(), WeightKernel::Gaussian { a: 6.0 });
        assert_eq!("paper_local".parse::<WeightKernel>().unwrap(), WeightKernel::PaperLocal);
        assert_eq!("constant(2)".parse::<WeightKernel>().unwrap(), WeightKernel::Constant { c: 2.0 });
        assert!("gauss".parse::<WeightKernel>().is_err());
        assert!("gaussian(x)".parse::<WeightKernel>().is_err());
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(1, 0.5) - 1.0).abs() < 1e-15);
        assert!((ball_volume(2, 1.0) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ball_volume(3, 1.0) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_edges() {
        let p = vec![vec![0.0], vec![1.0]];
        assert!(Graph::new(p.clone(), &[(0, 0, 1.0)]).is_err());
        assert!(Graph::new(p.clone(), &[(0, 1, 0.0)]).is_err());
        assert!(Graph::new(p.clone(), &[(0, 1, 1.0), (1, 0, 1.0)]).is_err());
        assert!(Graph::new(p, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn distances_on_chain_and_disconnected() {
        let g = Graph::new(vec![vec![0.0]; 4], &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let d = graph_distance_matrix(&g, EdgeCost::InverseWeight);
        assert_eq!(d[0][2], 2.0);
        assert_eq!(d[0][3], f64::INFINITY);
        assert_eq!(d[3][3], 0.0);
    }

    #[test]
    fn two_point_assumption_constant() {
        let (alpha, p, q) = (3.0, 0.2, 0.7);
        let g = Graph::new(vec![vec![0.0], vec![1.0]], &[(0, 1, alpha)]).unwrap();
        let mu = BaseMeasure::new(vec![p, q]).unwrap();
        let rep = check_assumptions(&g, &mu, &DEFAULT_EPS_GRID).unwrap();
        assert!((rep.c_eta - alpha * q.max(p)).abs() < 1e-15);
        assert_eq!(rep.c_eta_prime, alpha);
    }

    #[test]
    fn empty_graph_constant_is_zero() {
        let g = Graph::new(vec![vec![0.0], vec![5.0]], &[]).unwrap();
        let rep = check_assumptions(&g, &BaseMeasure::empirical(2), &DEFAULT_EPS_GRID).unwrap();
        assert_eq!(rep.c_eta, 0.0);
        assert!(rep.local_integral.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn document_round_trip() {
        let g = Graph::new(vec![vec![0.0], vec![1.0], vec![3.0]], &[(2, 1, 0.5), (0, 1, 2.0)]).unwrap();
        let mu = BaseMeasure::empirical(3);
        let doc = GraphDocument::from_parts(&g, &mu);
        assert_eq!(doc.edges, vec![(0, 1, 2.0), (1, 2, 0.5)]);
        let json = serde_json::to_string(&doc).unwrap();
        let (g2, mu2) = serde_json::from_str::<GraphDocument>(&json).unwrap().into_parts().unwrap();
        assert_eq!(g2.edges(), g.edges());
        assert_eq!(mu2, mu);
    }
}
