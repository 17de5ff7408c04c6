//! Rank-encoded input and target matrices for the regressor.
//!
//! Every column is a fractional rank divided by `n` (rank 1 = most central),
//! so entries lie in `(0, 1]` whatever the network size.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::centrality::{CentralityVector, Measure};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Degree plus the degrees of all neighbors.
pub fn second_level_degree(g: &Graph) -> CentralityVector {
    let values = (0..g.n())
        .map(|w| (g.degree(w) + g.neighbors(w).iter().map(|&u| g.degree(u)).sum::<usize>()) as f64)
        .collect();
    CentralityVector::new(Measure::SecondLevelDegree, values)
}

/// Which ranks the model regresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSet {
    Betweenness,
    Closeness,
    Both,
}

impl TargetSet {
    pub fn measures(self) -> &'static [Measure] {
        match self {
            TargetSet::Betweenness => &[Measure::Betweenness],
            TargetSet::Closeness => &[Measure::Closeness],
            TargetSet::Both => &[Measure::Betweenness, Measure::Closeness],
        }
    }

    pub fn tasks(self) -> usize {
        self.measures().len()
    }
}

/// Exact centralities of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralitySet {
    pub degree: CentralityVector,
    pub eigenvector: CentralityVector,
    pub betweenness: Option<CentralityVector>,
    pub closeness: Option<CentralityVector>,
}

impl CentralitySet {
    pub fn get(&self, measure: Measure) -> Option<&CentralityVector> {
        match measure {
            Measure::Degree => Some(&self.degree),
            Measure::Eigenvector => Some(&self.eigenvector),
            Measure::Betweenness => self.betweenness.as_ref(),
            Measure::Closeness => self.closeness.as_ref(),
            Measure::SecondLevelDegree => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub input_names: Vec<String>,
    /// Row-major, `rows x input_names.len()`.
    pub inputs: Vec<f64>,
    pub target_names: Vec<String>,
    /// Row-major, `rows x target_names.len()`.
    pub targets: Vec<f64>,
}

impl FeatureMatrix {
    pub fn input_dim(&self) -> usize {
        self.input_names.len()
    }

    pub fn target_dim(&self) -> usize {
        self.target_names.len()
    }

    pub fn input_row(&self, r: usize) -> &[f64] {
        let d = self.input_dim();
        &self.inputs[r * d..(r + 1) * d]
    }

    pub fn target_row(&self, r: usize) -> &[f64] {
        let d = self.target_dim();
        &self.targets[r * d..(r + 1) * d]
    }

    /// Stacks matrices with identical columns.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<FeatureMatrix> {
        let mut iter = parts.into_iter();
        let first = iter.next().ok_or(Error::EmptyInput)?;
        let mut out = first.clone();
        for m in iter {
            if m.input_names != out.input_names || m.target_names != out.target_names {
                return Err(Error::invalid("cannot stack feature matrices with different columns"));
            }
            out.rows += m.rows;
            out.inputs.extend_from_slice(&m.inputs);
            out.targets.extend_from_slice(&m.targets);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<&str> = self.input_names.iter().chain(&self.target_names).map(String::as_str).collect();
        writeln!(out, "{}", header.join(","))?;
        for r in 0..self.rows {
            let cells: Vec<String> = self
                .input_row(r)
                .iter()
                .chain(self.target_row(r))
                .map(|x| x.to_string())
                .collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_attrs(attrs: usize) -> Result<()> {
    if attrs == 2 || attrs == 3 {
        Ok(())
    } else {
        Err(Error::invalid(format!("attribute count must be 2 or 3, got {attrs}")))
    }
}

fn rank_column(c: &CentralityVector) -> Vec<f64> {
    c.ranks().normalized()
}

fn interleave(columns: &[Vec<f64>], rows: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * columns.len());
    for r in 0..rows {
        out.extend(columns.iter().map(|c| c[r]));
    }
    out
}

/// Input columns `[degree, eigenvector(, second_level_degree)]` as
/// normalized ranks.
pub fn input_features(
    g: &Graph,
    degree: &CentralityVector,
    eigenvector: &CentralityVector,
    attrs: usize,
) -> Result<(Vec<String>, Vec<f64>)> {
    check_attrs(attrs)?;
    let n = g.n();
    for c in [degree, eigenvector] {
        if c.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.len() });
        }
    }
    let mut columns = vec![rank_column(degree), rank_column(eigenvector)];
    let mut names = vec![Measure::Degree.name().to_string(), Measure::Eigenvector.name().to_string()];
    if attrs == 3 {
        columns.push(rank_column(&second_level_degree(g)));
        names.push(Measure::SecondLevelDegree.name().to_string());
    }
    Ok((names, interleave(&columns, n)))
}

pub fn build_features(g: &Graph, set: &CentralitySet, attrs: usize, targets: TargetSet) -> Result<FeatureMatrix> {
    let (input_names, inputs) = input_features(g, &set.degree, &set.eigenvector, attrs)?;
    let n = g.n();
    let mut columns = Vec::new();
    let mut target_names = Vec::new();
    for &m in targets.measures() {
        let c = set.get(m).ok_or_else(|| Error::Missing(format!("{m} target vector")))?;
        if c.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.len() });
        }
        columns.push(rank_column(c));
        target_names.push(m.name().to_string());
    }
    Ok(FeatureMatrix { rows: n, input_names, inputs, target_names, targets: interleave(&columns, n) })
}
