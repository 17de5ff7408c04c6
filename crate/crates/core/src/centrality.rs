//! Exact degree, eigenvector, betweenness and closeness centrality, and
//! tie-aware ranking of the resulting scores.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::parallel::map_blocks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Degree,
    Eigenvector,
    Betweenness,
    Closeness,
    SecondLevelDegree,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Degree => "degree",
            Measure::Eigenvector => "eigenvector",
            Measure::Betweenness => "betweenness",
            Measure::Closeness => "closeness",
            Measure::SecondLevelDegree => "second_level_degree",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "degree" => Measure::Degree,
            "eigenvector" => Measure::Eigenvector,
            "betweenness" => Measure::Betweenness,
            "closeness" => Measure::Closeness,
            "second_level_degree" => Measure::SecondLevelDegree,
            other => return Err(Error::invalid(format!("unknown measure {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityVector {
    pub measure: Measure,
    pub values: Vec<f64>,
}

impl CentralityVector {
    pub fn new(measure: Measure, values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        CentralityVector { measure, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fractional ranks with rank 1 for the highest score.
    pub fn ranks(&self) -> RankVector {
        rank_vertices(&self.values, Order::HigherFirst)
    }
}

pub fn degree_centrality(g: &Graph) -> CentralityVector {
    CentralityVector::new(
        Measure::Degree,
        (0..g.n()).map(|v| g.degree(v) as f64).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Stop once the L1 change between successive iterates is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterate with `A + I` instead of `A`; converges on bipartite graphs.
    pub shift: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-10, max_iter: 1000, shift: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenvectorResult {
    pub centrality: CentralityVector,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the iteration ran on `A + I`.
    pub shifted: bool,
}

/// Power iteration from the all-ones vector with L1 normalization after
/// every product. Bipartite graphs oscillate under the plain iteration and
/// come back with `converged == false` unless `shift` is set.
pub fn eigenvector_centrality(g: &Graph, opts: &EigenOptions) -> Result<EigenvectorResult> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::invalid("eigenvector tolerance must be > 0 and max_iter >= 1"));
    }
    let n = g.n();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut current = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        for (v, slot) in next.iter_mut().enumerate() {
            let mut s: f64 = g.neighbors(v).iter().map(|&u| current[u]).sum();
            if opts.shift {
                s += current[v];
            }
            *slot = s;
        }
        let norm: f64 = next.iter().sum();
        if norm == 0.0 {
            return Err(Error::Numerical("eigenvector iterate vanished (graph has no edges)".into()));
        }
        let mut change = 0.0;
        for (x, old) in next.iter_mut().zip(&current) {
            *x /= norm;
            change += (*x - old).abs();
        }
        std::mem::swap(&mut current, &mut next);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(EigenvectorResult {
        centrality: CentralityVector::new(Measure::Eigenvector, current),
        iterations,
        converged,
        shifted: opts.shift,
    })
}

/// Plain power iteration, repeated on `A + I` when it does not converge.
/// Both iterations share the dominant eigenvector of a connected graph, but
/// only the shifted one settles on bipartite graphs.
pub fn eigenvector_with_fallback(g: &Graph, opts: &EigenOptions) -> Result<EigenvectorResult> {
    let first = eigenvector_centrality(g, opts)?;
    if first.converged || opts.shift {
        return Ok(first);
    }
    eigenvector_centrality(g, &EigenOptions { shift: true, ..*opts })
}

/// Per-source buffers for one unweighted Brandes pass.
pub(crate) struct BrandesPass {
    sigma: Vec<f64>,
    dist: Vec<u32>,
    delta: Vec<f64>,
    order: Vec<usize>,
    queue: VecDeque<usize>,
}

pub(crate) const UNREACHED: u32 = u32::MAX;

impl BrandesPass {
    pub(crate) fn new(n: usize) -> Self {
        BrandesPass {
            sigma: vec![0.0; n],
            dist: vec![UNREACHED; n],
            delta: vec![0.0; n],
            order: Vec::with_capacity(n),
            queue: VecDeque::with_capacity(n),
        }
    }

    /// BFS from `s` followed by reverse-order dependency accumulation.
    /// Adds `delta_s(w)` to `acc[w]` for every `w != s` and returns the sum
    /// of distances from `s`.
    pub(crate) fn run(&mut self, g: &Graph, s: usize, acc: &mut [f64]) -> u64 {
        for &v in &self.order {
            self.sigma[v] = 0.0;
            self.dist[v] = UNREACHED;
            self.delta[v] = 0.0;
        }
        self.order.clear();

        self.sigma[s] = 1.0;
        self.dist[s] = 0;
        self.queue.push_back(s);
        let mut dist_sum = 0u64;
        while let Some(v) = self.queue.pop_front() {
            self.order.push(v);
            let dv = self.dist[v];
            dist_sum += dv as u64;
            for &w in g.neighbors(v) {
                if self.dist[w] == UNREACHED {
                    self.dist[w] = dv + 1;
                    self.queue.push_back(w);
                }
                if self.dist[w] == dv + 1 {
                    self.sigma[w] += self.sigma[v];
                }
            }
        }

        for &w in self.order.iter().rev() {
            let dw = self.dist[w];
            if dw == 0 {
                continue;
            }
            let coeff = (1.0 + self.delta[w]) / self.sigma[w];
            for &v in g.neighbors(w) {
                if self.dist[v] == dw - 1 {
                    self.delta[v] += self.sigma[v] * coeff;
                }
            }
            acc[w] += self.delta[w];
        }
        dist_sum
    }

    /// Distances from the last source; `UNREACHED` where not reached.
    pub(crate) fn distances(&self) -> &[u32] {
        &self.dist
    }
}

/// Exact betweenness and closeness from one merged Brandes pass per source.
///
/// Betweenness sums over unordered pairs with endpoints excluded; closeness
/// is the unnormalized reciprocal of the distance sum. Sources are split into
/// `threads` contiguous blocks whose partial sums are merged in block order.
pub fn betweenness_closeness(g: &Graph, threads: usize) -> Result<(CentralityVector, CentralityVector)> {
    g.require_connected()?;
    let n = g.n();
    let partials = map_blocks(n, threads, |sources| {
        let mut pass = BrandesPass::new(n);
        let mut acc = vec![0.0; n];
        let mut dist_sums = Vec::with_capacity(sources.len());
        for s in sources {
            dist_sums.push(pass.run(g, s, &mut acc));
        }
        (acc, dist_sums)
    });

    let mut betweenness = vec![0.0; n];
    let mut closeness = Vec::with_capacity(n);
    for (acc, dist_sums) in partials {
        for (b, a) in betweenness.iter_mut().zip(&acc) {
            *b += a;
        }
        closeness.extend(dist_sums.into_iter().map(closeness_from_sum));
    }
    for b in &mut betweenness {
        *b *= 0.5;
    }
    Ok((
        CentralityVector::new(Measure::Betweenness, betweenness),
        CentralityVector::new(Measure::Closeness, closeness),
    ))
}

pub(crate) fn closeness_from_sum(sum: u64) -> f64 {
    // A single-vertex graph has no distances; its closeness is left at 0.
    if sum == 0 {
        0.0
    } else {
        1.0 / sum as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// Highest score gets rank 1.
    HigherFirst,
    /// Lowest score gets rank 1.
    LowerFirst,
}

/// Per-vertex ranks in `[1, n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVector {
    pub ranks: Vec<f64>,
}

impl RankVector {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Ranks divided by `n`, so values lie in `(0, 1]`.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.ranks.len() as f64;
        self.ranks.iter().map(|r| r / n).collect()
    }

    /// Vertices sorted by rank, ties broken by vertex id.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.ranks.len()).collect();
        idx.sort_by(|&a, &b| self.ranks[a].total_cmp(&self.ranks[b]).then(a.cmp(&b)));
        idx
    }
}

fn sorted_indices(scores: &[f64], order: Order) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let c = scores[a].total_cmp(&scores[b]);
        let c = match order {
            Order::HigherFirst => c.reverse(),
            Order::LowerFirst => c,
        };
        c.then(a.cmp(&b))
    });
    idx
}

/// Fractional ranks: tied scores share the mean of the positions they span.
pub fn rank_vertices(scores: &[f64], order: Order) -> RankVector {
    let idx = sorted_indices(scores, order);
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // Positions start+1 ..= end, averaged.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &v in &idx[start..end] {
            ranks[v] = rank;
        }
        start = end;
    }
    RankVector { ranks }
}

/// Distinct integer ranks 1..=n, ties broken by vertex id.
pub fn ordinal_ranks(scores: &[f64], order: Order) -> RankVector {
    let idx = sorted_indices(scores, order);
    let mut ranks = vec![0.0; scores.len()];
    for (pos, &v) in idx.iter().enumerate() {
        ranks[v] = (pos + 1) as f64;
    }
    RankVector { ranks }
}
