//! Simple undirected graphs in compressed adjacency form.
//!
//! Every algorithm in the crate runs on [`Graph`]: vertices are dense ids
//! `0..n`, neighbor lists are sorted ascending and stored back to back in one
//! buffer indexed by `offsets`. A graph never contains self-loops or parallel
//! edges.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    /// Builds a simple graph on `n` vertices, dropping self-loops and
    /// duplicate edges in either orientation.
    ///
    /// Panics if an endpoint is `>= n`.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self::from_edges_counted(n, edges).0
    }

    /// Like [`Graph::from_edges`], also returning how many self-loops and
    /// duplicates were discarded.
    pub fn from_edges_counted(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> (Self, usize, usize) {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut self_loops = 0;
        let mut offered = 0;
        for (u, v) in edges {
            assert!(u < n && v < n, "edge ({u}, {v}) out of range for n = {n}");
            if u == v {
                self_loops += 1;
                continue;
            }
            offered += 1;
            lists[u].push(v);
            lists[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * offered);
        offsets.push(0);
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        let graph = Graph { offsets, neighbors };
        let duplicates = offered - graph.m();
        (graph, self_loops, duplicates)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    #[inline]
    pub fn m(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Component label per vertex (labels assigned in order of the smallest
    /// member) and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in self.neighbors(v) {
                    if label[w] == usize::MAX {
                        label[w] = count;
                        queue.push_back(w);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && self.components().1 == 1
    }

    pub(crate) fn require_connected(&self) -> Result<()> {
        let (_, components) = self.components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(())
    }

    /// Writes one `u v` line per edge (`u < v`), using `labels` for vertex
    /// names when given.
    pub fn write_edge_list<W: Write>(&self, mut out: W, labels: Option<&[u64]>) -> Result<()> {
        for (u, v) in self.edges() {
            match labels {
                Some(l) => writeln!(out, "{} {}", l[u], l[v])?,
                None => writeln!(out, "{u} {v}")?,
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub lines: usize,
    pub edges_read: usize,
    pub self_loops: usize,
    pub duplicates: usize,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// Original id of each dense vertex, in first-appearance order.
    pub original_ids: Vec<u64>,
    pub stats: LoadStats,
}

/// Parses a whitespace-separated edge list. Lines starting with `#` or `%`
/// are comments; blank lines are skipped.
pub fn load_edge_list<R: BufRead>(source: R) -> Result<LoadedGraph> {
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut original_ids = Vec::new();
    let mut edges = Vec::new();
    let mut stats = LoadStats::default();

    let mut intern = |raw: u64| -> usize {
        *ids.entry(raw).or_insert_with(|| {
            original_ids.push(raw);
            original_ids.len() - 1
        })
    };

    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        stats.lines = lineno;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 2 tokens, found {}", tokens.len()),
            });
        }
        let parse = |tok: &str| {
            tok.parse::<u64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid vertex id {tok:?}"),
            })
        };
        let (a, b) = (parse(tokens[0])?, parse(tokens[1])?);
        let (u, v) = (intern(a), intern(b));
        edges.push((u, v));
    }

    if edges.is_empty() {
        return Err(Error::EmptyInput);
    }
    stats.edges_read = edges.len();
    let (graph, self_loops, duplicates) = Graph::from_edges_counted(original_ids.len(), edges);
    stats.self_loops = self_loops;
    stats.duplicates = duplicates;
    stats.n = graph.n();
    stats.m = graph.m();

    // A vertex seen only on self-loops would be isolated; drop it.
    if (0..graph.n()).any(|v| graph.degree(v) == 0) {
        let keep: Vec<usize> = (0..graph.n()).filter(|&v| graph.degree(v) > 0).collect();
        if keep.is_empty() {
            return Err(Error::EmptyInput);
        }
        let sub = induced_subgraph(&graph, &keep);
        let original_ids = keep.iter().map(|&v| original_ids[v]).collect();
        stats.n = sub.n();
        return Ok(LoadedGraph { graph: sub, original_ids, stats });
    }

    Ok(LoadedGraph { graph, original_ids, stats })
}

/// Induced subgraph on `keep` (ascending), relabeled densely in that order.
fn induced_subgraph(g: &Graph, keep: &[usize]) -> Graph {
    let mut new_id = vec![usize::MAX; g.n()];
    for (i, &v) in keep.iter().enumerate() {
        new_id[v] = i;
    }
    let mut offsets = Vec::with_capacity(keep.len() + 1);
    let mut neighbors = Vec::new();
    offsets.push(0);
    for &v in keep {
        // Relabeling is monotone, so sorted order is preserved.
        neighbors.extend(
            g.neighbors(v)
                .iter()
                .filter(|&&w| new_id[w] != usize::MAX)
                .map(|&w| new_id[w]),
        );
        offsets.push(neighbors.len());
    }
    Graph { offsets, neighbors }
}

#[derive(Debug, Clone)]
pub struct Component {
    pub graph: Graph,
    /// `new_to_old[i]` is the vertex of the source graph that became `i`.
    pub new_to_old: Vec<usize>,
    /// Inverse of `new_to_old`; `None` for vertices outside the component.
    pub old_to_new: Vec<Option<usize>>,
}

/// Induced subgraph on the largest connected component. Equal-size
/// components are broken in favor of the one holding the smallest vertex id.
pub fn largest_connected_component(g: &Graph) -> Component {
    let (label, count) = g.components();
    let mut sizes = vec![0usize; count];
    for &l in &label {
        sizes[l] += 1;
    }
    // Labels are assigned in order of smallest member, so the first maximum wins ties.
    let best = sizes
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (l, &s)| if s > acc.1 { (l, s) } else { acc })
        .0;
    let new_to_old: Vec<usize> = (0..g.n()).filter(|&v| label[v] == best).collect();
    let mut old_to_new = vec![None; g.n()];
    for (i, &v) in new_to_old.iter().enumerate() {
        old_to_new[v] = Some(i);
    }
    let graph = if new_to_old.len() == g.n() {
        g.clone()
    } else {
        induced_subgraph(g, &new_to_old)
    };
    Component { graph, new_to_old, old_to_new }
}

/// Number of vertices per degree, for degrees `>= 1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeHistogram {
    pub counts: BTreeMap<usize, usize>,
}

impl DegreeHistogram {
    /// Histogram of a degree sequence; zero degrees are ignored.
    pub fn from_degrees(degrees: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        for d in degrees.into_iter().filter(|&d| d > 0) {
            *counts.entry(d).or_insert(0) += 1;
        }
        DegreeHistogram { counts }
    }

    /// Number of vertices.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn degree_sum(&self) -> usize {
        self.counts.iter().map(|(d, c)| d * c).sum()
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.counts.keys().next_back().copied()
    }

    /// Degrees in ascending order, one entry per vertex.
    pub fn degree_sequence(&self) -> Vec<usize> {
        self.counts
            .iter()
            .flat_map(|(&d, &c)| std::iter::repeat_n(d, c))
            .collect()
    }

    /// Total-variation distance between the two normalized histograms.
    pub fn total_variation(&self, other: &DegreeHistogram) -> f64 {
        let (na, nb) = (self.total() as f64, other.total() as f64);
        let mut keys: Vec<usize> = self.counts.keys().chain(other.counts.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        0.5 * keys
            .into_iter()
            .map(|d| {
                let a = *self.counts.get(&d).unwrap_or(&0) as f64 / na;
                let b = *other.counts.get(&d).unwrap_or(&0) as f64 / nb;
                (a - b).abs()
            })
            .sum::<f64>()
    }
}

pub fn degree_histogram(g: &Graph) -> DegreeHistogram {
    DegreeHistogram::from_degrees((0..g.n()).map(|v| g.degree(v)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringProfile {
    /// Mean local clustering over all vertices (degree < 2 counts as 0).
    pub global: f64,
    /// Mean local clustering per degree, for degrees >= 2.
    pub per_degree: BTreeMap<usize, f64>,
    pub local: Vec<f64>,
}

/// Triangles through each vertex.
pub fn triangle_counts(g: &Graph) -> Vec<usize> {
    let mut tri = vec![0usize; g.n()];
    for u in 0..g.n() {
        let nu = g.neighbors(u);
        for &v in nu.iter().filter(|&&v| v > u) {
            let nv = g.neighbors(v);
            // Common neighbors w > v, so each triangle u < v < w is seen once.
            let (mut i, mut j) = (nu.partition_point(|&x| x <= v), nv.partition_point(|&x| x <= v));
            while i < nu.len() && j < nv.len() {
                match nu[i].cmp(&nv[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        let w = nu[i];
                        tri[u] += 1;
                        tri[v] += 1;
                        tri[w] += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    tri
}

pub fn clustering_profile(g: &Graph) -> ClusteringProfile {
    let tri = triangle_counts(g);
    let local: Vec<f64> = (0..g.n())
        .map(|v| {
            let d = g.degree(v);
            if d < 2 {
                0.0
            } else {
                tri[v] as f64 / (d * (d - 1) / 2) as f64
            }
        })
        .collect();
    let global = if local.is_empty() {
        0.0
    } else {
        local.iter().sum::<f64>() / local.len() as f64
    };
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (v, &c) in local.iter().enumerate() {
        let d = g.degree(v);
        if d >= 2 {
            let e = sums.entry(d).or_insert((0.0, 0));
            e.0 += c;
            e.1 += 1;
        }
    }
    let per_degree = sums.into_iter().map(|(d, (s, c))| (d, s / c as f64)).collect();
    ClusteringProfile { global, per_degree, local }
}
