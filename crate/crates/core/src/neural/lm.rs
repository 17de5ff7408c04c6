//! Batch Levenberg–Marquardt training with validation early stopping.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mlp, Scratch};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::parallel::map_blocks;

/// Samples per Jacobian chunk handed to the matrix product.
const CHUNK_ROWS: usize = 512;
/// Column blocks of `J^T J`; only blocks on or above the diagonal are formed.
const COLUMN_BLOCKS: usize = 6;
const MU_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub mu_init: f64,
    pub mu_dec: f64,
    pub mu_inc: f64,
    pub mu_max: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Damping increases tried within one epoch before giving up.
    pub max_retries: usize,
    /// Relative decrease of the validation error that counts as improvement.
    pub min_improvement: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            mu_init: 1e-3,
            mu_dec: 0.1,
            mu_inc: 10.0,
            mu_max: 1e10,
            max_epochs: 1000,
            patience: 10,
            max_retries: 50,
            min_improvement: 1e-12,
            val_fraction: 0.15,
            test_fraction: 0.10,
            seed: 0,
            threads: 1,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(5e-6..=5e-3).contains(&self.mu_init) {
            return Err(Error::invalid(format!("mu_init {} outside [5e-6, 5e-3]", self.mu_init)));
        }
        if !(self.mu_dec > 0.0 && self.mu_dec < 1.0 && self.mu_inc > 1.0) {
            return Err(Error::invalid("damping factors must satisfy 0 < mu_dec < 1 < mu_inc"));
        }
        if !(self.mu_max > self.mu_init) {
            return Err(Error::invalid("mu_max must exceed mu_init"));
        }
        if self.max_epochs == 0 || self.patience == 0 || self.max_retries == 0 {
            return Err(Error::invalid("max_epochs, patience and max_retries must be positive"));
        }
        let (v, t) = (self.val_fraction, self.test_fraction);
        if !(0.0..1.0).contains(&v) || !(0.0..1.0).contains(&t) || v + t >= 1.0 {
            return Err(Error::invalid("validation and test fractions must leave rows for training"));
        }
        Ok(())
    }
}

/// Row indices of the three partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

fn partition_sizes(total: usize, val_fraction: f64, test_fraction: f64) -> (usize, usize) {
    let test = (test_fraction * total as f64).round() as usize;
    let val = (val_fraction * total as f64).round() as usize;
    let test = test.min(total.saturating_sub(1));
    let val = val.min(total - test - 1);
    (val, test)
}

impl Split {
    /// Uniformly shuffled rows.
    pub fn random(rows: usize, val_fraction: f64, test_fraction: f64, seed: u64) -> Result<Split> {
        if rows == 0 {
            return Err(Error::EmptyInput);
        }
        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (val, test) = partition_sizes(rows, val_fraction, test_fraction);
        let mut split = Split {
            test: order[..test].to_vec(),
            validation: order[test..test + val].to_vec(),
            train: order[test + val..].to_vec(),
        };
        split.sort();
        Ok(split)
    }

    /// Whole groups of consecutive rows go to one partition, so no network
    /// contributes to both training and test.
    pub fn by_groups(group_sizes: &[usize], val_fraction: f64, test_fraction: f64, seed: u64) -> Result<Split> {
        if group_sizes.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut starts = Vec::with_capacity(group_sizes.len());
        let mut at = 0;
        for &s in group_sizes {
            starts.push(at);
            at += s;
        }
        let mut order: Vec<usize> = (0..group_sizes.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (val, test) = partition_sizes(group_sizes.len(), val_fraction, test_fraction);
        let rows = |groups: &[usize]| -> Vec<usize> {
            groups.iter().flat_map(|&g| starts[g]..starts[g] + group_sizes[g]).collect()
        };
        let mut split = Split {
            test: rows(&order[..test]),
            validation: rows(&order[test..test + val]),
            train: rows(&order[test + val..]),
        };
        split.sort();
        Ok(split)
    }

    fn sort(&mut self) {
        self.train.sort_unstable();
        self.validation.sort_unstable();
        self.test.sort_unstable();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    /// Validation error stopped improving.
    Patience,
    /// Damping exceeded `mu_max`.
    MuMax,
    /// No step reduced the training error within the retry budget.
    RetryLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mu: f64,
    pub train_sse: f64,
    pub val_sse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation error.
    pub mlp: Mlp,
    pub history: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub train_sse: f64,
    pub val_sse: f64,
    pub test_sse: Option<f64>,
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], mut out: W) -> Result<()> {
    writeln!(out, "epoch,mu,train_sse,val_sse")?;
    for r in history {
        writeln!(out, "{},{},{},{}", r.epoch, r.mu, r.train_sse, r.val_sse)?;
    }
    out.flush()?;
    Ok(())
}

fn check_rows(data: &FeatureMatrix, rows: &[usize]) -> Result<()> {
    match rows.iter().find(|&&r| r >= data.rows) {
        Some(&r) => Err(Error::invalid(format!("split row {r} beyond {} data rows", data.rows))),
        None => Ok(()),
    }
}

/// Sum of squared residuals of `m` over `rows`.
pub(crate) fn sse(m: &Mlp, data: &FeatureMatrix, rows: &[usize], threads: usize) -> f64 {
    map_blocks(rows.len(), threads, |range| {
        let mut s = Scratch::new(m);
        let mut total = 0.0;
        for &r in &rows[range] {
            m.forward_into(data.input_row(r), &mut s);
            total += s.acts.last().unwrap().iter().zip(data.target_row(r)).map(|(y, t)| (y - t) * (y - t)).sum::<f64>();
        }
        total
    })
    .into_iter()
    .sum()
}

/// `J^T J`, `J^T e` and the error over `rows`, never holding more than one
/// chunk of `J` per thread.
fn normal_equations(m: &Mlp, data: &FeatureMatrix, rows: &[usize], threads: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let p = m.param_count();
    let dout = m.output_dim();
    let blocks = column_blocks(p);
    let parts = map_blocks(rows.len(), threads, |range| {
        let mut s = Scratch::new(m);
        let mut jtj = vec![0.0; p * p];
        let mut jte = vec![0.0; p];
        let mut err = 0.0;
        let mut jac = vec![0.0; CHUNK_ROWS * dout * p];
        let mut resid = vec![0.0; CHUNK_ROWS * dout];
        for chunk in rows[range].chunks(CHUNK_ROWS) {
            let k = chunk.len() * dout;
            for (i, &r) in chunk.iter().enumerate() {
                m.jacobian_rows(
                    data.input_row(r),
                    data.target_row(r),
                    &mut s,
                    &mut jac[i * dout * p..(i + 1) * dout * p],
                    &mut resid[i * dout..(i + 1) * dout],
                );
            }
            for (row, &e) in jac[..k * p].chunks_exact(p).zip(&resid[..k]) {
                err += e * e;
                for (g, &j) in jte.iter_mut().zip(row) {
                    *g += j * e;
                }
            }
            for (bi, &(ci, wi)) in blocks.iter().enumerate() {
                for &(cj, wj) in &blocks[bi..] {
                    // SAFETY: the A and B views stay inside the first k rows of
                    // `jac`, the C view inside `jtj`; both use stride p.
                    unsafe {
                        matrixmultiply::dgemm(
                            wi,
                            k,
                            wj,
                            1.0,
                            jac.as_ptr().add(ci),
                            1,
                            p as isize,
                            jac.as_ptr().add(cj),
                            p as isize,
                            1,
                            1.0,
                            jtj.as_mut_ptr().add(ci * p + cj),
                            p as isize,
                            1,
                        );
                    }
                }
            }
        }
        (jtj, jte, err)
    });
    let mut iter = parts.into_iter();
    let (mut jtj, mut jte, mut err) = iter.next().unwrap_or_else(|| (vec![0.0; p * p], vec![0.0; p], 0.0));
    for (a, b, e) in iter {
        jtj.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
        jte.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        err += e;
    }
    for (bi, &(ci, wi)) in blocks.iter().enumerate() {
        for &(cj, wj) in &blocks[bi + 1..] {
            for i in ci..ci + wi {
                for j in cj..cj + wj {
                    jtj[j * p + i] = jtj[i * p + j];
                }
            }
        }
    }
    (jtj, jte, err)
}

fn column_blocks(p: usize) -> Vec<(usize, usize)> {
    let count = COLUMN_BLOCKS.min(p);
    (0..count)
        .map(|b| {
            let start = b * p / count;
            (start, (b + 1) * p / count - start)
        })
        .collect()
}

/// Solves `(J^T J + mu I) delta = -J^T e` by Cholesky; `None` when the
/// damped matrix is not numerically positive definite.
fn damped_step(jtj: &[f64], jte: &[f64], mu: f64) -> Option<Vec<f64>> {
    let p = jte.len();
    let mut a = DMatrix::from_column_slice(p, p, jtj);
    for i in 0..p {
        a[(i, i)] += mu;
    }
    let chol = a.cholesky()?;
    let delta = chol.solve(&DVector::from_iterator(p, jte.iter().map(|g| -g)));
    delta.iter().all(|x| x.is_finite()).then(|| delta.as_slice().to_vec())
}

/// Trains `init` on the rows of `split.train`, monitoring `split.validation`.
/// Returns the parameters with the lowest validation error seen.
pub fn train_lm(init: &Mlp, data: &FeatureMatrix, split: &Split, cfg: &LmConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.input_dim() != init.input_dim() || data.target_dim() != init.output_dim() {
        return Err(Error::DimensionMismatch { expected: init.input_dim(), got: data.input_dim() });
    }
    if split.train.is_empty() {
        return Err(Error::invalid("training partition is empty"));
    }
    for part in [&split.train, &split.validation, &split.test] {
        check_rows(data, part)?;
    }
    if !init.is_finite() {
        return Err(Error::Numerical("initial parameters are not finite".into()));
    }
    let threads = cfg.threads.max(1);
    let val_rows: &[usize] = if split.validation.is_empty() { &split.train } else { &split.validation };

    let mut model = init.clone();
    let mut params = model.params();
    let mut mu = cfg.mu_init;
    let mut train_sse = sse(&model, data, &split.train, threads);
    let mut best_val = sse(&model, data, val_rows, threads);
    let mut best = (model.clone(), 0usize, train_sse, best_val);
    let mut stale = 0;
    let mut history = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut candidate = model.clone();

    'epochs: for epoch in 1..=cfg.max_epochs {
        let (jtj, jte, _) = normal_equations(&model, data, &split.train, threads);
        let mut accepted = false;
        for _ in 0..cfg.max_retries {
            if let Some(delta) = damped_step(&jtj, &jte, mu) {
                let trial: Vec<f64> = params.iter().zip(&delta).map(|(p, d)| p + d).collect();
                candidate.set_params(&trial);
                let trial_sse = sse(&candidate, data, &split.train, threads);
                if trial_sse.is_finite() && trial_sse < train_sse {
                    params = trial;
                    std::mem::swap(&mut model, &mut candidate);
                    train_sse = trial_sse;
                    mu = (mu * cfg.mu_dec).max(MU_FLOOR);
                    accepted = true;
                    break;
                }
            }
            mu *= cfg.mu_inc;
            if mu > cfg.mu_max {
                stop = StopReason::MuMax;
                break 'epochs;
            }
        }
        if !accepted {
            stop = StopReason::RetryLimit;
            break;
        }
        if !model.is_finite() {
            return Err(Error::Numerical(format!("parameters became non-finite in epoch {epoch}")));
        }
        let val_sse = sse(&model, data, val_rows, threads);
        history.push(EpochRecord { epoch, mu, train_sse, val_sse });
        if val_sse < best_val * (1.0 - cfg.min_improvement) {
            best_val = val_sse;
            best = (model.clone(), epoch, train_sse, val_sse);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stop = StopReason::Patience;
                break;
            }
        }
    }

    let (mlp, best_epoch, train_sse, val_sse) = best;
    let test_sse = (!split.test.is_empty()).then(|| sse(&mlp, data, &split.test, threads));
    Ok(TrainOutcome { mlp, history, stop_reason: stop, best_epoch, train_sse, val_sse, test_sse })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix {
            rows: xs.len(),
            input_names: (0..xs[0].len()).map(|i| format!("x{i}")).collect(),
            inputs: xs.concat(),
            target_names: (0..ys[0].len()).map(|i| format!("y{i}")).collect(),
            targets: ys.concat(),
        }
    }

    fn everything(rows: usize) -> Split {
        let all: Vec<usize> = (0..rows).collect();
        Split { train: all.clone(), validation: all, test: vec![] }
    }

    #[test]
    fn config_validation() {
        assert!(LmConfig::default().validate().is_ok());
        assert!(LmConfig { mu_init: 0.1, ..Default::default() }.validate().is_err());
        assert!(LmConfig { mu_dec: 1.5, ..Default::default() }.validate().is_err());
        assert!(LmConfig { mu_inc: 0.5, ..Default::default() }.validate().is_err());
        assert!(LmConfig { val_fraction: 0.6, test_fraction: 0.4, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn random_split_partitions_rows() {
        let s = Split::random(1000, 0.15, 0.10, 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (750, 150, 100));
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(s, Split::random(1000, 0.15, 0.10, 3).unwrap());
    }

    #[test]
    fn group_split_keeps_groups_whole() {
        let sizes = [5, 3, 4, 6, 2, 7, 3, 5, 4, 1];
        let s = Split::by_groups(&sizes, 0.2, 0.1, 8).unwrap();
        let mut starts = vec![0];
        for sz in sizes {
            starts.push(starts.last().unwrap() + sz);
        }
        let group_of = |r: usize| starts.iter().rposition(|&st| st <= r).unwrap();
        for part in [&s.train, &s.validation, &s.test] {
            for &r in part.iter() {
                let g = group_of(r);
                assert!((starts[g]..starts[g + 1]).all(|x| part.contains(&x)));
            }
        }
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), 40);
    }

    #[test]
    fn normal_equations_match_dense_product() {
        let m = Mlp::init(&[3, 6, 5, 2], 4).unwrap();
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 0.01 * i as f64]).collect();
        let ys: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64 / 7.0, (i % 3) as f64]).collect();
        let data = table(&xs, &ys);
        let rows: Vec<usize> = (0..40).step_by(2).collect();
        let (jtj, jte, err) = normal_equations(&m, &data, &rows, 3);
        let inputs: Vec<f64> = rows.iter().flat_map(|&r| data.input_row(r).to_vec()).collect();
        let targets: Vec<f64> = rows.iter().flat_map(|&r| data.target_row(r).to_vec()).collect();
        let j = super::super::jacobian(&m, &inputs, &targets).unwrap();
        let p = j.cols;
        for a in 0..p {
            for b in 0..p {
                let want: f64 = (0..j.rows).map(|r| j.at(r, a) * j.at(r, b)).sum();
                assert!((jtj[a * p + b] - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
            let want: f64 = (0..j.rows).map(|r| j.at(r, a) * j.residuals[r]).sum();
            assert!((jte[a] - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
        let want: f64 = j.residuals.iter().map(|e| e * e).sum();
        assert!((err - want).abs() <= 1e-12 * want.max(1.0));
        assert!((sse(&m, &data, &rows, 1) - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn learns_a_line() {
        let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 199.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0] - 1.0]).collect();
        let data = table(&xs, &ys);
        let init = Mlp::init(&[1, 5, 1], 11).unwrap();
        let cfg = LmConfig { max_epochs: 50, ..Default::default() };
        let split = Split::random(200, 0.15, 0.10, 1).unwrap();
        let out = train_lm(&init, &data, &split, &cfg).unwrap();
        let y: Vec<f64> = split.test.iter().map(|&r| ys[r][0]).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let ss_res: f64 = split.test.iter().zip(&y).map(|(&r, t)| (out.mlp.forward(&xs[r]).unwrap()[0] - t).powi(2)).sum();
        assert!(1.0 - ss_res / ss_tot >= 0.999, "R2 {}", 1.0 - ss_res / ss_tot);
    }

    #[test]
    fn learns_xor() {
        let xs = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let ys = vec![vec![0.0], vec![1.0], vec![1.0], vec![0.0]];
        let data = table(&xs, &ys);
        let init = Mlp::init(&[2, 4, 1], 2).unwrap();
        let out = train_lm(&init, &data, &everything(4), &LmConfig::default()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let got = out.mlp.forward(x).unwrap()[0];
            assert!((got - y[0]).abs() < 0.1, "{x:?} -> {got}");
        }
    }

    #[test]
    fn accepted_steps_decrease_training_error_and_stay_finite() {
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] * x[1], x[0] - x[1]]).collect();
        let data = table(&xs, &ys);
        let init = Mlp::init(&[2, 8, 8, 2], 6).unwrap();
        let out = train_lm(&init, &data, &Split::random(60, 0.2, 0.1, 0).unwrap(), &LmConfig { max_epochs: 40, ..Default::default() }).unwrap();
        assert!(!out.history.is_empty());
        assert!(out.history.windows(2).all(|w| w[1].train_sse < w[0].train_sse));
        assert!(out.history.iter().all(|r| r.train_sse.is_finite() && r.val_sse.is_finite()));
        let best = out.history.iter().map(|r| r.val_sse).fold(f64::INFINITY, f64::min);
        assert_eq!(out.val_sse, best);
        assert!(out.mlp.is_finite());
    }

    #[test]
    fn training_is_deterministic_across_threads() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0, ((i * 7) % 50) as f64 / 50.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(x[0] + x[1]).sin()]).collect();
        let data = table(&xs, &ys);
        let init = Mlp::init(&[2, 5, 1], 1).unwrap();
        let split = Split::random(50, 0.15, 0.1, 5).unwrap();
        let cfg = LmConfig { max_epochs: 20, ..Default::default() };
        let a = train_lm(&init, &data, &split, &cfg).unwrap();
        let b = train_lm(&init, &data, &split, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train_lm(&init, &data, &split, &LmConfig { threads: 3, ..cfg }).unwrap();
        // Block sums reassociate, so only the first epoch is compared closely.
        assert!((c.history[0].train_sse - a.history[0].train_sse).abs() <= 1e-9 * a.history[0].train_sse);
        assert!(c.mlp.is_finite());
    }

    #[test]
    fn rejects_mismatched_data() {
        let data = table(&[vec![0.0, 1.0]], &[vec![1.0]]);
        let init = Mlp::init(&[3, 2, 1], 0).unwrap();
        assert!(train_lm(&init, &data, &everything(1), &LmConfig::default()).is_err());
        let init = Mlp::init(&[2, 2, 1], 0).unwrap();
        let bad = Split { train: vec![5], validation: vec![], test: vec![] };
        assert!(train_lm(&init, &data, &bad, &LmConfig::default()).is_err());
    }
}
