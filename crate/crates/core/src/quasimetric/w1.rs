//! 1-Wasserstein distance between discrete measures on embedded points.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::euclidean;

pub const LP_LIMIT: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum W1Method {
    Exact1d,
    LpExact,
    Sliced { projections: usize, seed: u64 },
}

impl W1Method {
    pub const SLICED: Self = Self::Sliced { projections: 64, seed: 0 };
}

/// W₁ between two masses on the same point set.
pub fn wasserstein1(positions: &[Vec<f64>], rho: &[f64], nu: &[f64], method: W1Method) -> Result<f64> {
    if rho.len() != positions.len() || nu.len() != positions.len() {
        return Err(invalid("rho", "one mass per position"));
    }
    wasserstein1_between(positions, rho, positions, nu, method)
}

/// W₁ between masses on two possibly different point sets. Total masses
/// must agree.
pub fn wasserstein1_between(pos_a: &[Vec<f64>], mass_a: &[f64], pos_b: &[Vec<f64>], mass_b: &[f64], method: W1Method) -> Result<f64> {
    if pos_a.len() != mass_a.len() || pos_b.len() != mass_b.len() {
        return Err(invalid("positions", "one mass per position"));
    }
    let (ta, tb): (f64, f64) = (mass_a.iter().sum(), mass_b.iter().sum());
    if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
        return Err(invalid("rho", format!("total masses differ: {ta} vs {tb}")));
    }
    let dim = pos_a.first().or(pos_b.first()).map_or(1, Vec::len);
    match method {
        W1Method::Exact1d => {
            if dim != 1 {
                return Err(invalid("method", format!("exact_1d needs 1-dimensional points, got d = {dim}")));
            }
            let a: Vec<f64> = pos_a.iter().map(|p| p[0]).collect();
            let b: Vec<f64> = pos_b.iter().map(|p| p[0]).collect();
            Ok(w1_line(&a, mass_a, &b, mass_b))
        }
        W1Method::LpExact => {
            let n = pos_a.len().max(pos_b.len());
            if n > LP_LIMIT {
                return Err(Error::TooLarge { what: "lp_exact", limit: LP_LIMIT, n });
            }
            Ok(transport_lp(pos_a, mass_a, pos_b, mass_b))
        }
        W1Method::Sliced { projections, seed } => {
            if projections == 0 {
                return Err(invalid("projections", "must be at least 1"));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut total = 0.0;
            for _ in 0..projections {
                let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                dir.iter_mut().for_each(|d| *d /= norm);
                let proj = |p: &Vec<f64>| p.iter().zip(&dir).map(|(x, d)| x * d).sum::<f64>();
                let a: Vec<f64> = pos_a.iter().map(proj).collect();
                let b: Vec<f64> = pos_b.iter().map(proj).collect();
                total += w1_line(&a, mass_a, &b, mass_b);
            }
            Ok(total / projections as f64)
        }
    }
}

/// ∫ |F_a − F_b| dx over the merged support.
fn w1_line(a: &[f64], ma: &[f64], b: &[f64], mb: &[f64]) -> f64 {
    let mut events: Vec<(f64, f64)> = a.iter().zip(ma).map(|(&x, &m)| (x, m)).collect();
    events.extend(b.iter().zip(mb).map(|(&x, &m)| (x, -m)));
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for w in 0..events.len() {
        cdf_gap += events[w].1;
        if let Some(next) = events.get(w + 1) {
            total += cdf_gap.abs() * (next.0 - events[w].0);
        }
    }
    total
}

/// Successive shortest paths on the complete bipartite graph with
/// Euclidean costs.
fn transport_lp(pos_a: &[Vec<f64>], mass_a: &[f64], pos_b: &[Vec<f64>], mass_b: &[f64]) -> f64 {
    let (na, nb) = (pos_a.len(), pos_b.len());
    let cost: Vec<f64> = pos_a.iter().flat_map(|p| pos_b.iter().map(move |q| euclidean(p, q))).collect();
    let scale = mass_a.iter().sum::<f64>().max(1e-300);
    let eps = 1e-14 * scale;
    let mut supply: Vec<f64> = mass_a.to_vec();
    let mut demand: Vec<f64> = mass_b.to_vec();
    let mut flow = vec![0.0f64; na * nb];
    // potentials: sources 0..na, sinks na..na+nb
    let mut pot = vec![0.0f64; na + nb];
    let mut dist = vec![0.0f64; na + nb];
    let mut prev = vec![usize::MAX; na + nb];
    let mut done = vec![false; na + nb];
    loop {
        if supply.iter().all(|s| *s <= eps) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..na {
            if supply[i] > eps {
                dist[i] = 0.0;
            }
        }
        let mut target = None;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..na + nb {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= na && demand[u - na] > eps {
                target = Some(u);
                break;
            }
            if u < na {
                for j in 0..nb {
                    let v = na + j;
                    let rc = cost[u * nb + j] + pot[u] - pot[v];
                    let nd = dist[u] + rc.max(0.0);
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - na;
                for i in 0..na {
                    if flow[i * nb + j] > eps {
                        let rc = -cost[i * nb + j] + pot[u] - pot[i];
                        let nd = dist[u] + rc.max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        let Some(t) = target else { break };
        let dt = dist[t];
        for v in 0..na + nb {
            pot[v] += dist[v].min(dt);
        }
        // bottleneck along the path back to a source
        let mut amount = demand[t - na];
        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= na {
                amount = amount.min(flow[v * nb + (u - na)]);
            }
            v = u;
        }
        amount = amount.min(supply[v]);
        let root = v;
        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < na {
                flow[u * nb + (v - na)] += amount;
            } else {
                flow[v * nb + (u - na)] -= amount;
            }
            v = u;
        }
        supply[root] -= amount;
        demand[t - na] -= amount;
    }
    flow.iter().zip(&cost).map(|(f, c)| f.max(0.0) * c).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_of_two_deltas() {
        let pos = vec![vec![0.0], vec![1.0]];
        for m in [W1Method::Exact1d, W1Method::LpExact, W1Method::SLICED] {
            assert!((wasserstein1(&pos, &[1.0, 0.0], &[0.0, 1.0], m).unwrap() - 1.0).abs() < 1e-14);
            assert_eq!(wasserstein1(&pos, &[0.3, 0.7], &[0.3, 0.7], m).unwrap(), 0.0);
        }
    }

    #[test]
    fn lp_size_limit() {
        let pos: Vec<Vec<f64>> = (0..301).map(|i| vec![i as f64]).collect();
        let m = vec![1.0 / 301.0; 301];
        assert!(matches!(wasserstein1(&pos, &m, &m, W1Method::LpExact), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn lp_in_the_plane() {
        // unit square corners: move mass from the left edge to the right edge
        let pos = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let w = wasserstein1(&pos, &[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.5, 0.5], W1Method::LpExact).unwrap();
        assert!((w - 1.0).abs() < 1e-14);
        let w = wasserstein1(&pos, &[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0], W1Method::LpExact).unwrap();
        assert!((w - 2f64.sqrt()).abs() < 1e-14);
    }
}
