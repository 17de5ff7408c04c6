//! Agreement between approximate and exact centrality rankings.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::centrality::{Measure, RankVector};
use crate::error::{Error, Result};

pub const DEFAULT_PERCENTILES: [f64; 9] = [0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 25.0];

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite values")))
    }
}

/// Pairs within runs of equal values, `sum t(t-1)/2`.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for x in sorted {
        if prev.as_ref() == Some(&x) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(x);
    }
    total + run * (run + 1) / 2
}

/// Sorts `idx` by `key` with a stable merge sort and returns the number of
/// exchanges, i.e. pairs that were strictly out of order.
fn merge_sort_swaps(idx: &mut [usize], buf: &mut [usize], key: &[f64]) -> u64 {
    let n = idx.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_sort_swaps(&mut idx[..mid], &mut buf[..mid], key);
    swaps += merge_sort_swaps(&mut idx[mid..], &mut buf[mid..], key);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if key[idx[j]] < key[idx[i]] {
            buf[k] = idx[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = idx[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&idx[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&idx[j..n]);
    idx.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b in `O(n log n)`. Fails when either side is constant.
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("tau-b needs at least two observations"));
    }
    check_finite(a, "first argument")?;
    check_finite(b, "second argument")?;

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));
    let ties_a = tied_pairs(idx.iter().map(|&i| a[i]));
    let ties_ab = tied_pairs(idx.iter().map(|&i| (a[i], b[i])));

    let mut buf = vec![0; n];
    let swaps = merge_sort_swaps(&mut idx, &mut buf, b);
    let ties_b = tied_pairs(idx.iter().map(|&i| b[i]));

    let total = (n as u64) * (n as u64 - 1) / 2;
    if ties_a == total || ties_b == total {
        return Err(Error::Undefined("tau-b of a constant vector".into()));
    }
    let numerator = total as f64 - ties_a as f64 - ties_b as f64 + ties_ab as f64 - 2.0 * swaps as f64;
    let denominator = ((total - ties_a) as f64 * (total - ties_b) as f64).sqrt();
    Ok(numerator / denominator)
}

/// `1 - SSE/SST` of `pred` against `target`.
pub fn r_squared(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: pred.len() });
    }
    if target.len() < 2 {
        return Err(Error::invalid("R^2 needs at least two observations"));
    }
    check_finite(pred, "prediction")?;
    check_finite(target, "target")?;
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let sst: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    if sst == 0.0 {
        return Err(Error::Undefined("R^2 against a constant target".into()));
    }
    let sse: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - sse / sst)
}

/// Fraction of agreement per percentile, kept in grid order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PercentileMatch(pub Vec<(f64, f64)>);

impl PercentileMatch {
    pub fn get(&self, p: f64) -> Option<f64> {
        self.0.iter().find(|(q, _)| *q == p).map(|&(_, m)| m)
    }
}

impl Serialize for PercentileMatch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (p, m) in &self.0 {
            map.serialize_entry(&p.to_string(), m)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for PercentileMatch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw: serde_json::Map<String, serde_json::Value> = Deserialize::deserialize(d)?;
        let mut out = Vec::with_capacity(raw.len());
        for (k, v) in raw {
            let p = k.parse::<f64>().map_err(serde::de::Error::custom)?;
            let m = v.as_f64().ok_or_else(|| serde::de::Error::custom("percentile match must be a number"))?;
            out.push((p, m));
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(PercentileMatch(out))
    }
}

/// For each `p`, the share of the exact top `max(1, floor(p n / 100))`
/// vertices that also appear in the approximate top of the same size.
pub fn percentile_match(approx: &RankVector, exact: &RankVector, grid: &[f64]) -> Result<PercentileMatch> {
    let n = exact.ranks.len();
    if approx.ranks.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: approx.ranks.len() });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(p) = grid.iter().find(|p| !(**p > 0.0 && **p <= 100.0)) {
        return Err(Error::invalid(format!("percentile {p} not in (0, 100]")));
    }
    let exact_order = exact.order();
    let approx_order = approx.order();
    let mut in_exact = vec![false; n];
    let out = grid
        .iter()
        .map(|&p| {
            let k = ((p * n as f64 / 100.0).floor() as usize).max(1);
            in_exact.iter_mut().for_each(|x| *x = false);
            for &v in &exact_order[..k] {
                in_exact[v] = true;
            }
            let hits = approx_order[..k].iter().filter(|&&v| in_exact[v]).count();
            (p, hits as f64 / k as f64)
        })
        .collect();
    Ok(PercentileMatch(out))
}

/// Scores of one approximation against the exact ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub tau_b: f64,
    pub r2: f64,
    pub percentile_match: PercentileMatch,
}

pub fn score_trial(approx: &RankVector, exact: &RankVector, grid: &[f64]) -> Result<TrialScore> {
    Ok(TrialScore {
        tau_b: kendall_tau_b(&approx.ranks, &exact.ranks)?,
        r2: r_squared(&approx.normalized(), &exact.normalized())?,
        percentile_match: percentile_match(approx, exact, grid)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub measure: Measure,
    /// Mean over trials.
    pub tau_b: f64,
    pub tau_b_std: f64,
    pub r2: f64,
    pub r2_std: f64,
    pub percentile_match: PercentileMatch,
    pub trials: usize,
    /// `None` when timings are suppressed for reproducible output.
    pub wall_time_ms: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Averages trial scores (sample standard deviation across trials).
pub fn aggregate(method: &str, measure: Measure, trials: &[TrialScore], wall_time_ms: Option<f64>) -> Result<EvalReport> {
    let first = trials.first().ok_or(Error::EmptyInput)?;
    let (tau_b, tau_b_std) = mean_std(&trials.iter().map(|t| t.tau_b).collect::<Vec<_>>());
    let (r2, r2_std) = mean_std(&trials.iter().map(|t| t.r2).collect::<Vec<_>>());
    let percentile_match = PercentileMatch(
        first
            .percentile_match
            .0
            .iter()
            .enumerate()
            .map(|(i, &(p, _))| (p, trials.iter().map(|t| t.percentile_match.0[i].1).sum::<f64>() / trials.len() as f64))
            .collect(),
    );
    Ok(EvalReport {
        method: method.to_string(),
        measure,
        tau_b,
        tau_b_std,
        r2,
        r2_std,
        percentile_match,
        trials: trials.len(),
        wall_time_ms,
    })
}

/// One approximation method's output for one measure: a rank vector per
/// trial (a single one for deterministic methods).
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRanks {
    pub method: String,
    pub measure: Measure,
    pub trials: Vec<RankVector>,
    pub wall_time_ms: Option<f64>,
}

/// Scores every method against the exact ranks of its measure. Reports are
/// grouped by measure and ordered by mean tau-b, best first.
pub fn compare_report(exact: &[(Measure, RankVector)], methods: &[MethodRanks], grid: &[f64]) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::with_capacity(methods.len());
    for m in methods {
        let truth = exact
            .iter()
            .find(|(measure, _)| *measure == m.measure)
            .map(|(_, r)| r)
            .ok_or_else(|| Error::Missing(format!("exact {} ranks", m.measure)))?;
        let scores = m.trials.iter().map(|t| score_trial(t, truth, grid)).collect::<Result<Vec<_>>>()?;
        reports.push(aggregate(&m.method, m.measure, &scores, m.wall_time_ms)?);
    }
    reports.sort_by(|a, b| {
        a.measure
            .name()
            .cmp(b.measure.name())
            .then(b.tau_b.partial_cmp(&a.tau_b).unwrap_or(Ordering::Equal))
            .then(a.method.cmp(&b.method))
    });
    Ok(reports)
}

/// Fixed-width text table, one row per report.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut header = vec!["method".to_string(), "measure".into(), "trials".into(), "tau_b".into(), "std".into(), "r2".into()];
    if let Some(r) = reports.first() {
        header.extend(r.percentile_match.0.iter().map(|(p, _)| format!("top{p}%")));
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.method.clone(),
                r.measure.name().to_string(),
                r.trials.to_string(),
                format!("{:.4}", r.tau_b),
                format!("{:.4}", r.tau_b_std),
                format!("{:.4}", r.r2),
            ];
            row.extend(r.percentile_match.0.iter().map(|(_, m)| format!("{m:.3}")));
            row
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::centrality::{ordinal_ranks, rank_vertices, Order};
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tau_examples() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let rev: Vec<f64> = a.iter().rev().copied().collect();
        assert_eq!(kendall_tau_b(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&a, &rev).unwrap(), -1.0);
        let (x, y) = ([1.0, 2.0, 2.0, 3.0], [1.0, 3.0, 2.0, 2.0]);
        let want = oracle::kendall_tau_b_naive(&x, &y).unwrap();
        assert!((kendall_tau_b(&x, &y).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn tau_of_constant_is_an_error() {
        assert!(matches!(kendall_tau_b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Undefined(_))));
        assert!(matches!(kendall_tau_b(&[1.0, 2.0, 3.0], &[5.0; 3]), Err(Error::Undefined(_))));
        assert!(kendall_tau_b(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau_b(&[1.0, 2.0], &[1.0]).is_err());
        assert!(kendall_tau_b(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tau_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let n = rng.random_range(2..300);
            let levels = rng.random_range(2..=n.max(2));
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
            match oracle::kendall_tau_b_naive(&a, &b) {
                Some(want) => assert!((kendall_tau_b(&a, &b).unwrap() - want).abs() <= 1e-12),
                None => assert!(kendall_tau_b(&a, &b).is_err()),
            }
        }
    }

    #[test]
    fn tau_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(3..200);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            if a.iter().all(|&x| x == a[0]) {
                continue;
            }
            let t = kendall_tau_b(&a, &b).unwrap();
            let neg: Vec<f64> = b.iter().map(|x| -x).collect();
            assert!((kendall_tau_b(&a, &neg).unwrap() + t).abs() <= 1e-12);
            let mono: Vec<f64> = a.iter().map(|x| (x * 0.3).exp() + 7.0).collect();
            assert!((kendall_tau_b(&mono, &b).unwrap() - t).abs() <= 1e-12);
            assert!(t.abs() <= 1.0);
        }
    }

    #[test]
    fn r_squared_examples() {
        let t = [1.0, 2.0, 4.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        let mean = 7.0 / 3.0;
        assert!(r_squared(&[mean; 3], &t).unwrap().abs() < 1e-15);
        assert!((r_squared(&[1.0, 2.0, 3.0], &t).unwrap() - 11.0 / 14.0).abs() < 1e-15);
        assert!(matches!(r_squared(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn percentile_examples() {
        let n = 1000;
        let scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let exact = rank_vertices(&scores, Order::HigherFirst);
        let same = percentile_match(&exact, &exact, &DEFAULT_PERCENTILES).unwrap();
        assert!(same.0.iter().all(|&(_, m)| m == 1.0));
        let reversed = rank_vertices(&scores, Order::LowerFirst);
        assert_eq!(percentile_match(&reversed, &exact, &[25.0]).unwrap().get(25.0), Some(0.0));
        assert!(percentile_match(&exact, &RankVector { ranks: vec![1.0] }, &[1.0]).is_err());
        assert!(percentile_match(&exact, &exact, &[0.0]).is_err());
        // k is at least one even for tiny percentiles.
        assert_eq!(percentile_match(&exact, &exact, &[0.01]).unwrap().get(0.01), Some(1.0));
    }

    #[test]
    fn random_rankings_match_at_chance() {
        let n = 1000;
        let exact = rank_vertices(&(0..n).map(|i| i as f64).collect::<Vec<_>>(), Order::HigherFirst);
        let mut total = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            total += percentile_match(&rank_vertices(&noise, Order::HigherFirst), &exact, &[10.0]).unwrap().get(10.0).unwrap();
        }
        assert!((total / 100.0 - 0.10).abs() <= 0.03);
    }

    #[test]
    fn percentile_match_ignores_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..300).map(|_| rng.random_range(0..50) as f64).collect();
        let b: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let ta: Vec<f64> = a.iter().map(|x| x.powi(3) + 1.0).collect();
        let exact = rank_vertices(&b, Order::HigherFirst);
        assert_eq!(
            percentile_match(&ordinal_ranks(&a, Order::HigherFirst), &exact, &DEFAULT_PERCENTILES).unwrap(),
            percentile_match(&ordinal_ranks(&ta, Order::HigherFirst), &exact, &DEFAULT_PERCENTILES).unwrap()
        );
    }

    fn ranks(scores: &[f64]) -> RankVector {
        rank_vertices(scores, Order::HigherFirst)
    }

    #[test]
    fn report_orders_methods_and_is_reproducible() {
        let truth: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 10.0 + i as f64 * 0.1).collect();
        let close: Vec<f64> = truth.iter().enumerate().map(|(i, x)| x + 0.05 * ((i * 13) % 7) as f64).collect();
        let far: Vec<f64> = truth.iter().enumerate().map(|(i, x)| x + 3.0 * ((i * 29) % 11) as f64).collect();
        let exact = vec![(Measure::Closeness, ranks(&truth))];
        let methods = vec![
            MethodRanks { method: "far".into(), measure: Measure::Closeness, trials: vec![ranks(&far)], wall_time_ms: None },
            MethodRanks { method: "close".into(), measure: Measure::Closeness, trials: vec![ranks(&close), ranks(&truth)], wall_time_ms: None },
            MethodRanks { method: "exact".into(), measure: Measure::Closeness, trials: vec![ranks(&truth)], wall_time_ms: None },
        ];
        let reports = compare_report(&exact, &methods, &DEFAULT_PERCENTILES).unwrap();
        let order: Vec<&str> = reports.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(order, ["exact", "close", "far"]);
        assert_eq!(reports[0].tau_b, 1.0);
        assert!(reports[0].percentile_match.0.iter().all(|&(_, m)| m == 1.0));
        assert_eq!(reports[1].trials, 2);
        assert!(reports[1].tau_b_std > 0.0);

        let json = serde_json::to_string(&reports).unwrap();
        let again = serde_json::to_string(&compare_report(&exact, &methods, &DEFAULT_PERCENTILES).unwrap()).unwrap();
        assert_eq!(json, again);
        let back: Vec<EvalReport> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, reports);

        let table = format_table(&reports);
        assert_eq!(table.lines().count(), 4);
        assert!(table.lines().next().unwrap().starts_with("method"));
    }
}
