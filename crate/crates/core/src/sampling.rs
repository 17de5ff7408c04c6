//! Pivot-sampling estimates of betweenness and closeness.
//!
//! A plan picks `k` distinct pivots uniformly at random; one Brandes pass is
//! run from each. Betweenness dependencies are scaled by `n / k`; closeness
//! inverts the scaled distance-sum estimate, except at pivots where the
//! pivot's own tree gives the exact value. With `k == n` both estimates
//! coincide with the exact algorithm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::centrality::{closeness_from_sum, BrandesPass, CentralityVector, Measure};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::parallel::map_blocks;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub n: usize,
    pub fraction: f64,
    pub seed: u64,
    /// Distinct pivots, ascending.
    pub pivots: Vec<usize>,
}

impl SamplePlan {
    /// Plan with `max(1, round(fraction * n))` pivots.
    pub fn new(n: usize, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!("sample fraction {fraction} not in (0, 1]")));
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let k = ((fraction * n as f64).round() as usize).clamp(1, n);
        let mut plan = Self::with_count(n, k, seed)?;
        plan.fraction = fraction;
        Ok(plan)
    }

    /// Plan with exactly `k` pivots. For a fixed seed the pivot set for `k`
    /// is a subset of the one for `k + 1`.
    pub fn with_count(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::invalid(format!("pivot count {k} not in 1..={n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Partial Fisher–Yates: the first k slots are a uniform k-subset.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.random_range(i..n);
            perm.swap(i, j);
        }
        let mut pivots = perm[..k].to_vec();
        pivots.sort_unstable();
        Ok(SamplePlan { n, fraction: k as f64 / n as f64, seed, pivots })
    }

    pub fn k(&self) -> usize {
        self.pivots.len()
    }
}

pub fn make_plan(g: &Graph, fraction: f64, seed: u64) -> Result<SamplePlan> {
    SamplePlan::new(g.n(), fraction, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEstimate {
    pub betweenness: CentralityVector,
    pub closeness: CentralityVector,
}

pub fn approximate_centralities(g: &Graph, plan: &SamplePlan, threads: usize) -> Result<SampleEstimate> {
    if plan.n != g.n() {
        return Err(Error::DimensionMismatch { expected: g.n(), got: plan.n });
    }
    g.require_connected()?;
    let n = g.n();
    let pivots = &plan.pivots;

    let partials = map_blocks(pivots.len(), threads, |range| {
        let mut pass = BrandesPass::new(n);
        let mut acc = vec![0.0; n];
        let mut dist_acc = vec![0u64; n];
        let mut own = Vec::with_capacity(range.len());
        for &s in &pivots[range] {
            own.push((s, pass.run(g, s, &mut acc)));
            for (total, &d) in dist_acc.iter_mut().zip(pass.distances()) {
                *total += d as u64;
            }
        }
        (acc, dist_acc, own)
    });

    let mut acc = vec![0.0; n];
    let mut dist_acc = vec![0u64; n];
    let mut own_sum: Vec<Option<u64>> = vec![None; n];
    for (a, d, own) in partials {
        acc.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
        dist_acc.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
        for (s, sum) in own {
            own_sum[s] = Some(sum);
        }
    }

    let scale = n as f64 / pivots.len() as f64;
    let half_scale = scale * 0.5;
    let betweenness = acc.into_iter().map(|x| x * half_scale).collect();
    let closeness = (0..n)
        .map(|w| match own_sum[w] {
            Some(sum) => closeness_from_sum(sum),
            None if dist_acc[w] == 0 => 0.0,
            None => 1.0 / (scale * dist_acc[w] as f64),
        })
        .collect();
    Ok(SampleEstimate {
        betweenness: CentralityVector::new(Measure::Betweenness, betweenness),
        closeness: CentralityVector::new(Measure::Closeness, closeness),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centrality::betweenness_closeness;
    use crate::oracle;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn plan_sizes() {
        let p = SamplePlan::new(100, 0.05, 1).unwrap();
        assert_eq!(p.k(), 5);
        let mut d = p.pivots.clone();
        d.dedup();
        assert_eq!(d.len(), 5);
        assert!(p.pivots.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(SamplePlan::new(100, 1.0, 1).unwrap().pivots, (0..100).collect::<Vec<_>>());
        assert_eq!(SamplePlan::new(10, 0.001, 1).unwrap().k(), 1);
        assert_eq!(SamplePlan::new(100, 0.05, 9).unwrap(), SamplePlan::new(100, 0.05, 9).unwrap());
    }

    #[test]
    fn plan_rejects_bad_fraction() {
        for f in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(SamplePlan::new(10, f, 0).is_err());
        }
    }

    #[test]
    fn single_pivot_is_uniform() {
        let n = 10;
        let mut counts = [0usize; 10];
        for seed in 0..10_000 {
            counts[SamplePlan::with_count(n, 1, seed).unwrap().pivots[0]] += 1;
        }
        let expected = 1000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2} p {p}");
    }

    #[test]
    fn plans_are_nested_in_k() {
        for seed in 0..20 {
            let small = SamplePlan::with_count(50, 7, seed).unwrap();
            let big = SamplePlan::with_count(50, 8, seed).unwrap();
            assert!(small.pivots.iter().all(|p| big.pivots.contains(p)));
        }
    }

    #[test]
    fn full_sample_is_exact_bitwise() {
        for seed in 0..20 {
            let g = oracle::random_connected_graph(30, 0.1, seed);
            let plan = SamplePlan::new(g.n(), 1.0, seed).unwrap();
            let est = approximate_centralities(&g, &plan, 1).unwrap();
            let (b, c) = betweenness_closeness(&g, 1).unwrap();
            assert_eq!(est.betweenness.values, b.values);
            assert_eq!(est.closeness.values, c.values);
        }
    }

    #[test]
    fn path_with_center_pivot() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        let plan = SamplePlan { n: 3, fraction: 1.0 / 3.0, seed: 0, pivots: vec![1] };
        let est = approximate_centralities(&g, &plan, 1).unwrap();
        assert_eq!(est.closeness.values, vec![1.0 / 3.0, 0.5, 1.0 / 3.0]);
        // From b both endpoints are leaves of the tree, so nothing passes through anyone.
        assert_eq!(est.betweenness.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_mismatched_plan_and_disconnected_graph() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        let plan = SamplePlan::new(4, 0.5, 0).unwrap();
        assert!(matches!(approximate_centralities(&g, &plan, 1), Err(Error::DimensionMismatch { .. })));
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]);
        let plan = SamplePlan::new(4, 0.5, 0).unwrap();
        assert!(matches!(approximate_centralities(&g, &plan, 1), Err(Error::Disconnected { .. })));
    }

    #[test]
    fn betweenness_estimate_is_unbiased() {
        let g = oracle::random_connected_graph(40, 0.08, 5);
        let (exact, _) = betweenness_closeness(&g, 1).unwrap();
        let trials = 200;
        let n = g.n();
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        for seed in 0..trials {
            let plan = SamplePlan::with_count(n, 6, 1000 + seed).unwrap();
            let est = approximate_centralities(&g, &plan, 1).unwrap();
            for (v, &x) in est.betweenness.values.iter().enumerate() {
                sum[v] += x;
                sum_sq[v] += x * x;
            }
        }
        let t = trials as f64;
        for v in 0..n {
            let mean = sum[v] / t;
            let var = (sum_sq[v] / t - mean * mean).max(0.0) * t / (t - 1.0);
            let se = (var / t).sqrt();
            assert!(
                (mean - exact.values[v]).abs() <= 3.0 * se + 1e-9,
                "vertex {v}: mean {mean} exact {} se {se}",
                exact.values[v]
            );
        }
    }

    #[test]
    fn more_pivots_do_not_hurt_on_average() {
        let g = oracle::random_connected_graph(40, 0.08, 12);
        let (exact, _) = betweenness_closeness(&g, 1).unwrap();
        let err = |k: usize| -> f64 {
            (0..100)
                .map(|seed| {
                    let plan = SamplePlan::with_count(g.n(), k, seed).unwrap();
                    let est = approximate_centralities(&g, &plan, 1).unwrap();
                    est.betweenness.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).sum::<f64>()
                        / g.n() as f64
                })
                .sum::<f64>()
                / 100.0
        };
        for k in [2, 5, 10, 20] {
            assert!(err(k + 1) <= err(k), "k = {k}");
        }
    }

    #[test]
    fn threads_only_reassociate() {
        let g = oracle::random_connected_graph(80, 0.05, 3);
        let plan = SamplePlan::new(g.n(), 0.25, 4).unwrap();
        let one = approximate_centralities(&g, &plan, 1).unwrap();
        let four = approximate_centralities(&g, &plan, 4).unwrap();
        assert_eq!(one.closeness.values, four.closeness.values);
        for (a, b) in one.betweenness.values.iter().zip(&four.betweenness.values) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
