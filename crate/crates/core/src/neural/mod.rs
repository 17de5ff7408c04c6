//! Fully connected multilayer perceptron with `tanh` hidden layers and a
//! linear output layer, its parameter Jacobian, model files and rank
//! prediction.

mod lm;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::centrality::{degree_centrality, eigenvector_with_fallback, ordinal_ranks, EigenOptions, Measure, Order, RankVector};
use crate::error::{Error, Result};
use crate::features::{input_features, TargetSet};
use crate::graph::Graph;

pub use lm::{train_lm, write_history_csv, EpochRecord, LmConfig, Split, StopReason, TrainOutcome};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Network with the given layer sizes (input first). Weights are uniform
    /// in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("need at least an input and an output layer"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = layer_sizes.len() - 2;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect(),
                    biases: vec![0.0; fan_out],
                    activation: if l == last { Activation::Identity } else { Activation::Tanh },
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// Builds a network from explicit layers, checking that sizes chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::invalid("layer sizes must be positive"));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::invalid(format!("layer {i} parameter arrays do not match its size")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::invalid(format!("layer {i} input size does not chain")));
            }
            if l.weights.iter().chain(&l.biases).any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Flattened parameters: per layer, weights row by row, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut scratch = Scratch::new(self);
        self.forward_into(x, &mut scratch);
        Ok(scratch.acts.last().unwrap().clone())
    }

    fn forward_into(&self, x: &[f64], s: &mut Scratch) {
        s.acts[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = s.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            for (i, o) in out.iter_mut().enumerate() {
                let row = &layer.weights[i * layer.inputs..(i + 1) * layer.inputs];
                let z = row.iter().zip(input.iter()).map(|(w, a)| w * a).sum::<f64>() + layer.biases[i];
                *o = layer.activation.apply(z);
            }
        }
    }

    /// Writes `d(residual_o)/d(params)` for every output `o` into
    /// `jac` (row-major, `outputs x params`) and the residuals
    /// `prediction - target` into `resid`.
    fn jacobian_rows(&self, x: &[f64], target: &[f64], s: &mut Scratch, jac: &mut [f64], resid: &mut [f64]) {
        self.forward_into(x, s);
        let p = self.param_count();
        let outputs = self.output_dim();
        let prediction = s.acts.last().unwrap();
        for o in 0..outputs {
            resid[o] = prediction[o] - target[o];
        }
        let offsets = self.layer_offsets();
        for o in 0..outputs {
            let row = &mut jac[o * p..(o + 1) * p];
            let last = self.layers.len() - 1;
            // Sensitivity of output o with respect to the pre-activations of the current layer.
            s.delta[last].iter_mut().for_each(|d| *d = 0.0);
            s.delta[last][o] = self.layers[last].activation.slope_from_output(prediction[o]);
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input = &s.acts[l];
                let base = offsets[l];
                for i in 0..layer.outputs {
                    let d = s.delta[l][i];
                    let wrow = &mut row[base + i * layer.inputs..base + (i + 1) * layer.inputs];
                    for (g, a) in wrow.iter_mut().zip(input.iter()) {
                        *g = d * a;
                    }
                    row[base + layer.inputs * layer.outputs + i] = d;
                }
                if l > 0 {
                    let prev_act = self.layers[l - 1].activation;
                    let (lower, upper) = s.delta.split_at_mut(l);
                    let below = &mut lower[l - 1];
                    let here = &upper[0];
                    for (j, b) in below.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for i in 0..layer.outputs {
                            acc += layer.weights[i * layer.inputs + j] * here[i];
                        }
                        *b = acc * prev_act.slope_from_output(input[j]);
                    }
                }
            }
        }
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = at;
                at += l.param_count();
                o
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|x| x.is_finite()))
    }
}

/// Per-thread activation and sensitivity buffers.
pub(crate) struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Scratch {
    pub(crate) fn new(m: &Mlp) -> Self {
        let sizes = m.layer_sizes();
        Scratch {
            acts: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            delta: sizes[1..].iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

/// Dense Jacobian of the residuals over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    /// `samples * outputs`; row `s * outputs + o` belongs to sample `s`, output `o`.
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl Jacobian {
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

/// Jacobian of `prediction - target` with respect to every parameter, by
/// reverse-mode accumulation. `inputs` and `targets` are row-major.
pub fn jacobian(m: &Mlp, inputs: &[f64], targets: &[f64]) -> Result<Jacobian> {
    let (din, dout) = (m.input_dim(), m.output_dim());
    if inputs.is_empty() || inputs.len() % din != 0 {
        return Err(Error::invalid("input batch is empty or not a multiple of the input size"));
    }
    let samples = inputs.len() / din;
    if targets.len() != samples * dout {
        return Err(Error::DimensionMismatch { expected: samples * dout, got: targets.len() });
    }
    let p = m.param_count();
    let mut values = vec![0.0; samples * dout * p];
    let mut residuals = vec![0.0; samples * dout];
    let mut s = Scratch::new(m);
    for i in 0..samples {
        m.jacobian_rows(
            &inputs[i * din..(i + 1) * din],
            &targets[i * dout..(i + 1) * dout],
            &mut s,
            &mut values[i * dout * p..(i + 1) * dout * p],
            &mut residuals[i * dout..(i + 1) * dout],
        );
    }
    Ok(Jacobian { rows: samples * dout, cols: p, values, residuals })
}

/// What a model was trained on; stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Variant code such as `NN` or `NN212`.
    pub name: String,
    pub attrs: usize,
    pub targets: TargetSet,
    pub corpus_id: String,
    pub config: LmConfig,
    pub eigen: EigenOptions,
    pub epochs: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub mlp: Mlp,
    pub metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    metadata: ModelMetadata,
}

impl TrainedModel {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            layer_sizes: self.mlp.layer_sizes(),
            activations: self.mlp.layers.iter().map(|l| l.activation).collect(),
            weights: self.mlp.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.mlp.layers.iter().map(|l| l.biases.clone()).collect(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_writer_pretty(out, &file)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Missing("model version".into()))?;
        if version != MODEL_FORMAT_VERSION as u64 {
            return Err(Error::Version { found: version as u32, expected: MODEL_FORMAT_VERSION });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        let count = file.layer_sizes.len().saturating_sub(1);
        if count == 0 || file.activations.len() != count || file.weights.len() != count || file.biases.len() != count {
            return Err(Error::invalid("model file layer arrays disagree with layer_sizes"));
        }
        let layers = (0..count)
            .map(|l| Layer {
                inputs: file.layer_sizes[l],
                outputs: file.layer_sizes[l + 1],
                weights: file.weights[l].clone(),
                biases: file.biases[l].clone(),
                activation: file.activations[l],
            })
            .collect();
        let mlp = Mlp::from_layers(layers)?;
        if mlp.input_dim() != file.metadata.attrs || mlp.output_dim() != file.metadata.targets.tasks() {
            return Err(Error::invalid("model dimensions disagree with its metadata"));
        }
        Ok(TrainedModel { mlp, metadata: file.metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_json(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut text)?;
        Self::from_json(&text)
    }
}

/// Predicts betweenness/closeness ranks of every vertex of `g`. Lower
/// predicted normalized rank means more central; ties go to the smaller id.
pub fn predict_ranks(model: &TrainedModel, g: &Graph, attrs: usize) -> Result<Vec<(Measure, RankVector)>> {
    if attrs != model.metadata.attrs {
        return Err(Error::invalid(format!(
            "model was trained with {} attributes, prediction requested {attrs}",
            model.metadata.attrs
        )));
    }
    let degree = degree_centrality(g);
    let eigen = eigenvector_with_fallback(g, &model.metadata.eigen)?;
    let (_, inputs) = input_features(g, &degree, &eigen.centrality, attrs)?;
    predict_from_inputs(&model.mlp, model.metadata.targets, &inputs)
}

pub(crate) fn predict_from_inputs(mlp: &Mlp, targets: TargetSet, inputs: &[f64]) -> Result<Vec<(Measure, RankVector)>> {
    let din = mlp.input_dim();
    if inputs.len() % din != 0 {
        return Err(Error::DimensionMismatch { expected: din, got: inputs.len() % din });
    }
    let n = inputs.len() / din;
    let mut scratch = Scratch::new(mlp);
    let mut outputs = vec![Vec::with_capacity(n); mlp.output_dim()];
    for r in 0..n {
        mlp.forward_into(&inputs[r * din..(r + 1) * din], &mut scratch);
        for (col, &y) in outputs.iter_mut().zip(scratch.acts.last().unwrap()) {
            col.push(y);
        }
    }
    Ok(targets
        .measures()
        .iter()
        .zip(outputs)
        .map(|(&m, scores)| (m, ordinal_ranks(&scores, Order::LowerFirst)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn split_layers(m: &Mlp) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let w = m
            .layers()
            .iter()
            .map(|l| l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect())
            .collect();
        let b = m.layers().iter().map(|l| l.biases.clone()).collect();
        (w, b)
    }

    #[test]
    fn parameter_count_of_default_architecture() {
        let m = Mlp::init(&[2, 20, 20, 20, 1], 0).unwrap();
        assert_eq!(m.param_count(), 921);
        assert_eq!(m.params().len(), 921);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Mlp::init(&[3, 20, 20, 20, 2], 42).unwrap();
        assert_eq!(a, Mlp::init(&[3, 20, 20, 20, 2], 42).unwrap());
        assert_ne!(a, Mlp::init(&[3, 20, 20, 20, 2], 43).unwrap());
        for l in a.layers() {
            let bound = 1.0 / (l.inputs as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= bound));
            assert!(l.biases.iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.layers().last().unwrap().activation, Activation::Identity);
        assert!(a.layers()[..3].iter().all(|l| l.activation == Activation::Tanh));
    }

    #[test]
    fn init_rejects_bad_sizes() {
        assert!(Mlp::init(&[2, 0, 1], 0).is_err());
        assert!(Mlp::init(&[2], 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = Mlp::init(&[2, 5, 3], 1).unwrap();
        m.set_params(&vec![0.0; m.param_count()]);
        assert_eq!(m.forward(&[0.3, -2.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_linear_unit() {
        let m = Mlp::from_layers(vec![Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![2.5],
            biases: vec![-1.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(m.forward(&[2.0]).unwrap(), vec![4.0]);
        let j = jacobian(&m, &[3.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(j.values, vec![3.0, 1.0, -1.0, 1.0]);
        assert_eq!(j.residuals, vec![6.5, -3.5]);
    }

    #[test]
    fn forward_matches_oracle() {
        let m = Mlp::init(&[3, 7, 4, 2], 9).unwrap();
        let mut p = m.params();
        for (i, x) in p.iter_mut().enumerate() {
            *x += 0.01 * (i as f64).sin();
        }
        let mut m = m;
        m.set_params(&p);
        let (w, b) = split_layers(&m);
        for x in [[0.1, 0.5, 0.9], [-1.0, 2.0, 0.0], [0.3, 0.3, 0.3]] {
            let got = m.forward(&x).unwrap();
            let want = oracle::mlp_forward(&w, &b, &x);
            for (a, e) in got.iter().zip(&want) {
                assert!((a - e).abs() <= 1e-12);
            }
        }
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = Mlp::init(&[3, 5, 2], 3).unwrap();
        let inputs: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 / 10.0 - 0.5).collect();
        let targets: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
        let j = jacobian(&m, &inputs, &targets).unwrap();
        let fd = oracle::central_difference_jacobian(&m.params(), 1e-6, |p| {
            let mut q = m.clone();
            q.set_params(p);
            jacobian(&q, &inputs, &targets).unwrap().residuals
        });
        for r in 0..j.rows {
            for c in 0..j.cols {
                assert!((j.at(r, c) - fd[r][c]).abs() <= 1e-6, "({r}, {c})");
            }
        }
    }

    #[test]
    fn zero_inputs_give_zero_first_layer_weight_columns() {
        let m = Mlp::init(&[2, 4, 1], 5).unwrap();
        let j = jacobian(&m, &[0.0; 6], &[1.0; 3]).unwrap();
        for r in 0..j.rows {
            for c in 0..8 {
                assert_eq!(j.at(r, c), 0.0);
            }
        }
    }

    fn sample_model(attrs: usize, targets: TargetSet) -> TrainedModel {
        TrainedModel {
            mlp: Mlp::init(&[attrs, 4, targets.tasks()], 2).unwrap(),
            metadata: ModelMetadata {
                name: "NN".into(),
                attrs,
                targets,
                corpus_id: "test".into(),
                config: LmConfig::default(),
                eigen: EigenOptions::default(),
                epochs: 0,
                stop_reason: StopReason::MaxEpochs,
            },
        }
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let model = sample_model(3, TargetSet::Both);
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let back = TrainedModel::from_json(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, model);
        let x = [0.2, 0.7, 0.4];
        assert_eq!(back.mlp.forward(&x).unwrap(), model.mlp.forward(&x).unwrap());
    }

    #[test]
    fn corrupt_or_mismatched_files_fail_cleanly() {
        let model = sample_model(2, TargetSet::Closeness);
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(matches!(TrainedModel::from_json(&text[..text.len() / 2]), Err(Error::Json(_))));
        let bumped = text.replacen("\"version\": 1", "\"version\": 7", 1);
        assert!(matches!(TrainedModel::from_json(&bumped), Err(Error::Version { found: 7, .. })));
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]);
        assert!(predict_ranks(&sample_model(3, TargetSet::Both), &g, 2).is_err());
    }

    #[test]
    fn identity_model_reproduces_degree_order() {
        // Output = degree-rank input, so predicted order equals the degree order.
        let mlp = Mlp::from_layers(vec![Layer {
            inputs: 2,
            outputs: 1,
            weights: vec![1.0, 0.0],
            biases: vec![0.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        let mut model = sample_model(2, TargetSet::Closeness);
        model.mlp = mlp;
        let g = oracle::random_connected_graph(30, 0.1, 4);
        let ranks = predict_ranks(&model, &g, 2).unwrap();
        let deg = degree_centrality(&g);
        let expect = ordinal_ranks(&deg.ranks().ranks, Order::LowerFirst);
        assert_eq!(ranks[0].0, Measure::Closeness);
        assert_eq!(ranks[0].1, expect);
    }

    #[test]
    fn predictions_permute_with_vertices() {
        let model = sample_model(3, TargetSet::Both);
        let g = oracle::random_connected_graph(25, 0.15, 8);
        let perm: Vec<usize> = (0..25).map(|v| (v * 11 + 5) % 25).collect();
        let h = Graph::from_edges(25, g.edges().map(|(u, v)| (perm[u], perm[v])));
        let mut model = model;
        model.metadata.eigen.shift = true;
        let a = predict_ranks(&model, &g, 3).unwrap();
        let b = predict_ranks(&model, &h, 3).unwrap();
        let outputs = model_outputs(&model, &g);
        for (col, ((_, ra), (_, rb))) in a.iter().zip(&b).enumerate() {
            // Equal predictions are ordered by id, so compare only vertices without exact ties.
            for v in 0..25 {
                let tied = outputs.iter().filter(|y| y[col] == outputs[v][col]).count() > 1;
                if !tied {
                    assert_eq!(ra.ranks[v], rb.ranks[perm[v]]);
                }
            }
        }
    }

    fn model_outputs(model: &TrainedModel, g: &Graph) -> Vec<Vec<f64>> {
        let degree = degree_centrality(g);
        let eigen = crate::centrality::eigenvector_with_fallback(g, &model.metadata.eigen).unwrap();
        let (_, inputs) = input_features(g, &degree, &eigen.centrality, model.metadata.attrs).unwrap();
        inputs.chunks(model.metadata.attrs).map(|x| model.mlp.forward(x).unwrap()).collect()
    }
}
