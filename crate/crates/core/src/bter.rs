//! Block two-level Erdős–Rényi (BTER) generator and the degree
//! distribution models used to configure it.
//!
//! Generation runs in three phases:
//!
//! 1. Vertices are sorted by target degree and packed greedily into
//!    communities whose size is the degree of their first member plus one
//!    (the last community may be short).
//! 2. Each community is an Erdős–Rényi block: every internal pair is joined
//!    with the community's clustering value as probability.
//! 3. The degree still missing at each vertex (its excess degree) is wired
//!    Chung–Lu style: endpoints are drawn independently in proportion to
//!    excess degree, and self-loops or repeated pairs are dropped.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};

use crate::error::{Error, Result};
use crate::graph::{DegreeHistogram, Graph};

/// Discrete degree distribution on `1..=d_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DegreeModel {
    /// `P(d) ∝ d^-gamma`.
    PowerLaw { gamma: f64, d_max: usize },
    /// Log-normal with parameters of the underlying normal, discretized by
    /// rounding to the nearest degree; mass below 1.5 goes to degree 1.
    LogNormal { mu: f64, sigma: f64, d_max: usize },
}

impl DegreeModel {
    pub fn d_max(&self) -> usize {
        match *self {
            DegreeModel::PowerLaw { d_max, .. } | DegreeModel::LogNormal { d_max, .. } => d_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DegreeModel::PowerLaw { gamma, d_max } => {
                if !(gamma > 1.0 && gamma.is_finite()) {
                    return Err(Error::invalid(format!("power-law exponent {gamma} must be > 1")));
                }
                if d_max == 0 {
                    return Err(Error::invalid("d_max must be >= 1"));
                }
            }
            DegreeModel::LogNormal { mu, sigma, d_max } => {
                if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
                    return Err(Error::invalid(format!("invalid log-normal parameters mu={mu} sigma={sigma}")));
                }
                if d_max == 0 {
                    return Err(Error::invalid("d_max must be >= 1"));
                }
            }
        }
        Ok(())
    }

    /// Probabilities for degrees `1..=d_max` (index `d - 1`).
    pub fn pmf(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut p: Vec<f64> = match *self {
            DegreeModel::PowerLaw { gamma, d_max } => (1..=d_max).map(|d| (d as f64).powf(-gamma)).collect(),
            DegreeModel::LogNormal { mu, sigma, d_max } => {
                let dist = LogNormal::new(mu, sigma).map_err(|e| Error::invalid(e.to_string()))?;
                (1..=d_max)
                    .map(|d| {
                        let hi = dist.cdf(d as f64 + 0.5);
                        let lo = if d == 1 { 0.0 } else { dist.cdf(d as f64 - 0.5) };
                        hi - lo
                    })
                    .collect()
            }
        };
        let total: f64 = p.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numerical("degree model has no mass on 1..=d_max".into()));
        }
        p.iter_mut().for_each(|x| *x /= total);
        Ok(p)
    }

    /// Cumulative probabilities `P(D <= d)` for `d = 1..=d_max`.
    pub fn cdf(&self) -> Result<Vec<f64>> {
        let mut acc = 0.0;
        Ok(self
            .pmf()?
            .into_iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect())
    }
}

/// Kolmogorov–Smirnov distance between the empirical degree CDF of `h` and
/// the model CDF.
pub fn ks_distance(h: &DegreeHistogram, model: &DegreeModel) -> Result<f64> {
    let cdf = model.cdf()?;
    let n = h.total() as f64;
    let top = cdf.len().max(h.max_degree().unwrap_or(0));
    let mut acc = 0usize;
    let mut worst: f64 = 0.0;
    for d in 1..=top {
        acc += h.counts.get(&d).copied().unwrap_or(0);
        let model_cdf = if d <= cdf.len() { cdf[d - 1] } else { 1.0 };
        worst = worst.max((acc as f64 / n - model_cdf).abs());
    }
    Ok(worst)
}

/// Draws `n` i.i.d. degrees from `model`. If the degree sum is odd, one
/// randomly chosen vertex gets one extra degree.
pub fn sample_degree_histogram(model: &DegreeModel, n: usize, seed: u64) -> Result<DegreeHistogram> {
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 vertices, got {n}")));
    }
    if model.d_max() >= n {
        return Err(Error::invalid(format!("d_max {} must be below n = {n}", model.d_max())));
    }
    let cdf = model.cdf()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degrees: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (cdf.partition_point(|&c| c < u) + 1).min(cdf.len())
        })
        .collect();
    if degrees.iter().sum::<usize>() % 2 == 1 {
        let v = rng.random_range(0..n);
        degrees[v] += 1;
    }
    Ok(DegreeHistogram::from_degrees(degrees))
}

/// Maximum-likelihood exponent of the discrete power law on `1..=d_max`.
pub fn fit_power_law(h: &DegreeHistogram, d_max: usize) -> Result<f64> {
    let top = h.max_degree().ok_or(Error::EmptyInput)?;
    if d_max < top {
        return Err(Error::invalid(format!("d_max {d_max} below the largest degree {top}")));
    }
    let count = h.total() as f64;
    let mean_log: f64 = h.counts.iter().map(|(&d, &c)| c as f64 * (d as f64).ln()).sum::<f64>() / count;
    let logs: Vec<f64> = (1..=d_max).map(|d| (d as f64).ln()).collect();
    // d/dγ of the mean log-likelihood: E_model[ln d] - mean_log; decreasing in γ.
    let slope = |gamma: f64| -> f64 {
        let (mut z, mut zl) = (0.0, 0.0);
        for &l in &logs {
            let w = (-gamma * l).exp();
            z += w;
            zl += w * l;
        }
        zl / z - mean_log
    };
    let (mut lo, mut hi) = (1.0 + 1e-9, 20.0);
    if slope(lo) <= 0.0 {
        return Ok(lo);
    }
    if slope(hi) >= 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkResult {
    pub histogram: DegreeHistogram,
    /// Fitted model, absent when `h` has a single degree value.
    pub model: Option<DegreeModel>,
}

/// Reduces a degree histogram to `target_n` vertices: fits a discrete power
/// law to `h` and resamples from it with `d_max` capped at `target_n - 1`.
/// A histogram with one distinct degree is rescaled proportionally instead.
pub fn shrink_histogram(h: &DegreeHistogram, target_n: usize, seed: u64) -> Result<ShrinkResult> {
    let n = h.total();
    if target_n < 10 || target_n > n {
        return Err(Error::invalid(format!("target size {target_n} must be in 10..={n}")));
    }
    if h.counts.len() == 1 {
        let (&d, _) = h.counts.iter().next().unwrap();
        let d = d.min(target_n - 1);
        let mut counts = BTreeMap::from([(d, target_n)]);
        if d * target_n % 2 == 1 {
            counts.insert(d, target_n - 1);
            counts.insert(d + 1, 1);
        }
        return Ok(ShrinkResult { histogram: DegreeHistogram { counts }, model: None });
    }
    let top = h.max_degree().unwrap();
    let gamma = fit_power_law(h, top)?;
    let model = DegreeModel::PowerLaw { gamma, d_max: top.min(target_n - 1) };
    let histogram = sample_degree_histogram(&model, target_n, seed)?;
    Ok(ShrinkResult { histogram, model: Some(model) })
}

/// Clustering input: one value for every community, or a value per degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringSpec {
    Global(f64),
    PerDegree(BTreeMap<usize, f64>),
}

impl ClusteringSpec {
    /// Value for a community whose first member has degree `d`. Degrees
    /// missing from a per-degree map use the nearest listed degree (the
    /// smaller one on a tie); an empty map means 0.
    pub fn for_degree(&self, d: usize) -> f64 {
        match self {
            ClusteringSpec::Global(c) => *c,
            ClusteringSpec::PerDegree(map) => {
                if let Some(c) = map.get(&d) {
                    return *c;
                }
                let below = map.range(..d).next_back();
                let above = map.range(d..).next();
                match (below, above) {
                    (Some((&a, &ca)), Some((&b, &cb))) => {
                        if d - a <= b - d {
                            ca
                        } else {
                            cb
                        }
                    }
                    (Some((_, &c)), None) | (None, Some((_, &c))) => c,
                    (None, None) => 0.0,
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |c: f64| (0.0..=1.0).contains(&c);
        let valid = match self {
            ClusteringSpec::Global(c) => ok(*c),
            ClusteringSpec::PerDegree(map) => map.values().all(|&c| ok(c)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::invalid("clustering values must lie in [0, 1]"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BterConfig {
    pub target: DegreeHistogram,
    pub clustering: ClusteringSpec,
    pub seed: u64,
}

impl BterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target.total() == 0 {
            return Err(Error::EmptyInput);
        }
        if self.target.counts.contains_key(&0) {
            return Err(Error::invalid("target degrees must be >= 1"));
        }
        if self.target.degree_sum() % 2 == 1 {
            return Err(Error::invalid("target degree sum must be even"));
        }
        self.clustering.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Community {
    pub members: Vec<usize>,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct BterOutput {
    pub graph: Graph,
    /// Target degree of each output vertex.
    pub target_degrees: Vec<usize>,
    pub communities: Vec<Community>,
    /// Edges inserted inside communities.
    pub block_edges: usize,
    /// Edges drawn in the excess-degree phase before discarding collisions.
    pub candidate_edges: usize,
}

/// Generates one BTER graph. Output vertex ids are a random relabeling of
/// the degree-sorted order; isolated vertices are kept.
pub fn bter_generate(config: &BterConfig) -> Result<BterOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sorted = config.target.degree_sequence();
    let n = sorted.len();

    let mut blocks: Vec<(Range<usize>, f64)> = Vec::new();
    let mut start = 0;
    while start < n {
        let d = sorted[start];
        let end = (start + d + 1).min(n);
        blocks.push((start..end, config.clustering.for_degree(d)));
        start = end;
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut inner_degree = vec![0usize; n];
    for (range, rho) in &blocks {
        if *rho <= 0.0 {
            continue;
        }
        for u in range.clone() {
            for v in u + 1..range.end {
                if rng.random_bool(*rho) {
                    edges.push((u, v));
                    inner_degree[u] += 1;
                    inner_degree[v] += 1;
                }
            }
        }
    }
    let block_edges = edges.len();

    let excess: Vec<f64> = sorted
        .iter()
        .zip(&inner_degree)
        .map(|(&t, &r)| t.saturating_sub(r) as f64)
        .collect();
    let total_excess: f64 = excess.iter().sum();
    let mut candidate_edges = 0;
    if total_excess > 0.0 {
        candidate_edges = (total_excess / 2.0).round() as usize;
        let pick = WeightedIndex::new(&excess).map_err(|e| Error::Numerical(e.to_string()))?;
        for _ in 0..candidate_edges {
            let u = pick.sample(&mut rng);
            let v = pick.sample(&mut rng);
            if u != v {
                edges.push((u, v));
            }
        }
    }

    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(&mut rng);
    let graph = Graph::from_edges(n, edges.into_iter().map(|(u, v)| (label[u], label[v])));
    let mut target_degrees = vec![0; n];
    for (pos, &d) in sorted.iter().enumerate() {
        target_degrees[label[pos]] = d;
    }
    let communities = blocks
        .into_iter()
        .map(|(range, rho)| Community { members: range.map(|p| label[p]).collect(), rho })
        .collect();
    Ok(BterOutput { graph, target_degrees, communities, block_edges, candidate_edges })
}
