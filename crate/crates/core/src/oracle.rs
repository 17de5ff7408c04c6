//! Slow reference implementations used as test oracles.
//!
//! Everything here works on dense matrices or exhaustive enumeration and
//! shares no code with the production algorithms it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;

/// Erdős–Rényi `G(n, p)`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Random recursive tree plus `G(n, p)` edges; always connected.
pub fn random_connected_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (v, rng.random_range(0..v))).collect();
    edges.extend(random_graph(n, p, seed).edges());
    Graph::from_edges(n, edges)
}

pub fn adjacency_matrix(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.n();
    let mut a = vec![vec![0.0; n]; n];
    for (u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    a
}

/// Floyd–Warshall hop distances; `usize::MAX` for unreachable pairs.
pub fn all_pairs_distances(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.n();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for (u, v) in g.edges() {
        d[u][v] = 1;
        d[v][u] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    for row in &mut d {
        for x in row.iter_mut() {
            if *x >= inf {
                *x = usize::MAX;
            }
        }
    }
    d
}

pub fn closeness_floyd_warshall(g: &Graph) -> Vec<f64> {
    all_pairs_distances(g)
        .iter()
        .map(|row| {
            let s: usize = row.iter().sum();
            if s == 0 {
                0.0
            } else {
                1.0 / s as f64
            }
        })
        .collect()
}

/// Betweenness by listing every shortest path between every unordered pair
/// and counting the interior vertices on each.
pub fn betweenness_by_path_enumeration(g: &Graph) -> Vec<f64> {
    let n = g.n();
    let d = all_pairs_distances(g);
    let mut bc = vec![0.0; n];
    let mut through = vec![0u64; n];
    for i in 0..n {
        for j in i + 1..n {
            if d[i][j] == usize::MAX || d[i][j] < 2 {
                continue;
            }
            through.iter_mut().for_each(|x| *x = 0);
            let mut path = vec![i];
            let total = enumerate(g, &d, j, &mut path, &mut through);
            for w in 0..n {
                if w != i && w != j {
                    bc[w] += through[w] as f64 / total as f64;
                }
            }
        }
    }
    bc
}

fn enumerate(g: &Graph, d: &[Vec<usize>], target: usize, path: &mut Vec<usize>, through: &mut [u64]) -> u64 {
    let v = *path.last().unwrap();
    if v == target {
        for &w in path.iter() {
            through[w] += 1;
        }
        return 1;
    }
    let mut count = 0;
    for &w in g.neighbors(v) {
        if d[w][target] + 1 == d[v][target] {
            path.push(w);
            count += enumerate(g, d, target, path, through);
            path.pop();
        }
    }
    count
}

/// Dense-matrix power iteration with the same start, normalization and
/// stopping rule as the sparse implementation.
pub fn dense_power_iteration(g: &Graph, tol: f64, max_iter: usize, shift: bool) -> (Vec<f64>, bool) {
    let n = g.n();
    let mut a = adjacency_matrix(g);
    if shift {
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1.0;
        }
    }
    let mut e = vec![1.0 / n as f64; n];
    for _ in 0..max_iter {
        let mut next: Vec<f64> = a.iter().map(|row| row.iter().zip(&e).map(|(x, y)| x * y).sum()).collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let change: f64 = next.iter().zip(&e).map(|(x, y)| (x - y).abs()).sum();
        e = next;
        if change < tol {
            return (e, true);
        }
    }
    (e, false)
}

/// Kendall tau-b by counting all `n(n-1)/2` pairs. `None` when either side
/// is constant.
pub fn kendall_tau_b_naive(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    let (mut concordant, mut discordant, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].partial_cmp(&a[j]).unwrap();
            let db = b[i].partial_cmp(&b[j]).unwrap();
            use std::cmp::Ordering::Equal;
            match (da, db) {
                (Equal, Equal) => {}
                (Equal, _) => tie_a += 1,
                (_, Equal) => tie_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + tie_a) * (concordant + discordant + tie_b)) as f64).sqrt();
    if denom == 0.0 {
        None
    } else {
        Some((concordant - discordant) as f64 / denom)
    }
}

/// Forward pass written directly from the layer equations: `tanh` on every
/// hidden layer, identity on the output.
pub fn mlp_forward(weights: &[Vec<Vec<f64>>], biases: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let last = weights.len() - 1;
    for (l, (w, b)) in weights.iter().zip(biases).enumerate() {
        let z: Vec<f64> = w
            .iter()
            .zip(b)
            .map(|(row, bias)| row.iter().zip(&a).map(|(wij, aj)| wij * aj).sum::<f64>() + bias)
            .collect();
        a = if l == last { z } else { z.into_iter().map(f64::tanh).collect() };
    }
    a
}

/// Central-difference Jacobian of `f` at `p`.
pub fn central_difference_jacobian(
    p: &[f64],
    step: f64,
    f: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let rows = f(p).len();
    let mut jac = vec![vec![0.0; p.len()]; rows];
    let mut q = p.to_vec();
    for c in 0..p.len() {
        q[c] = p[c] + step;
        let plus = f(&q);
        q[c] = p[c] - step;
        let minus = f(&q);
        q[c] = p[c];
        for r in 0..rows {
            jac[r][c] = (plus[r] - minus[r]) / (2.0 * step);
        }
    }
    jac
}
