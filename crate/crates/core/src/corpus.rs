//! Training corpora: BTER networks reduced to their largest connected
//! component, with exact centralities attached.
//!
//! On disk a corpus is a directory holding `manifest.json` and one
//! `record_NNNN/` directory per network with `graph.edges`, `targets.csv`
//! and `meta.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bter::{bter_generate, sample_degree_histogram, shrink_histogram, BterConfig, ClusteringSpec, DegreeModel};
use crate::centrality::{betweenness_closeness, degree_centrality, eigenvector_with_fallback, CentralityVector, EigenOptions, Measure};
use crate::error::{Error, Result};
use crate::features::{build_features, CentralitySet, FeatureMatrix, TargetSet};
use crate::graph::{clustering_profile, degree_histogram, largest_connected_component, DegreeHistogram, Graph};
use crate::parallel::map_items;

pub const CORPUS_FORMAT_VERSION: u32 = 1;
/// Smallest component accepted as a record.
pub const MIN_RECORD_SIZE: usize = 10;
pub const MAX_ATTEMPTS: usize = 100;

/// One step of the SplitMix64 sequence.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for attempt `attempt` of record `index`.
pub fn record_seed(master: u64, index: usize, attempt: usize) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(index as u64)) ^ attempt as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericParams {
    pub count: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub clustering_min: f64,
    pub clustering_max: f64,
}

impl Default for GenericParams {
    fn default() -> Self {
        GenericParams { count: 300, size_min: 100, size_max: 1000, clustering_min: 0.0, clustering_max: 0.7 }
    }
}

/// Degree distribution and clustering taken from a reference network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificParams {
    pub reference_name: String,
    pub histogram: DegreeHistogram,
    pub clustering: ClusteringSpec,
    pub sizes: Vec<usize>,
    pub count_per_size: usize,
}

impl SpecificParams {
    /// Uses the per-degree clustering profile of `g` unless `global` is set.
    pub fn from_reference(g: &Graph, name: &str, sizes: Vec<usize>, count_per_size: usize, global: bool) -> Self {
        let profile = clustering_profile(g);
        let clustering = if global || profile.per_degree.is_empty() {
            ClusteringSpec::Global(profile.global)
        } else {
            ClusteringSpec::PerDegree(profile.per_degree)
        };
        SpecificParams {
            reference_name: name.to_string(),
            histogram: degree_histogram(g),
            clustering,
            sizes,
            count_per_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusParams {
    Generic(GenericParams),
    Specific(SpecificParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub params: CorpusParams,
    pub seed: u64,
    pub eigen: EigenOptions,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.params {
            CorpusParams::Generic(p) => {
                if p.count == 0 {
                    return Err(Error::invalid("corpus count must be positive"));
                }
                if p.size_min < MIN_RECORD_SIZE || p.size_min > p.size_max {
                    return Err(Error::invalid(format!(
                        "size range [{}, {}] invalid (minimum {MIN_RECORD_SIZE})",
                        p.size_min, p.size_max
                    )));
                }
                let ok = |c: f64| (0.0..=1.0).contains(&c);
                if !(ok(p.clustering_min) && ok(p.clustering_max) && p.clustering_min <= p.clustering_max) {
                    return Err(Error::invalid("clustering range must lie in [0, 1]"));
                }
            }
            CorpusParams::Specific(p) => {
                if p.count_per_size == 0 || p.sizes.is_empty() {
                    return Err(Error::invalid("specific corpus needs sizes and a positive count per size"));
                }
                if p.histogram.total() < MIN_RECORD_SIZE {
                    return Err(Error::invalid("reference network is too small"));
                }
                if let Some(&s) = p.sizes.iter().find(|&&s| s < MIN_RECORD_SIZE) {
                    return Err(Error::invalid(format!("network size {s} below {MIN_RECORD_SIZE}")));
                }
            }
        }
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        match &self.params {
            CorpusParams::Generic(p) => p.count,
            CorpusParams::Specific(p) => p.sizes.len() * p.count_per_size,
        }
    }

    /// Short content hash, stable for identical specs.
    pub fn id(&self) -> String {
        let kind = match self.params {
            CorpusParams::Generic(_) => "generic",
            CorpusParams::Specific(_) => "specific",
        };
        let json = serde_json::to_vec(self).expect("corpus spec serializes");
        let digest = Sha256::digest(&json);
        let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        format!("{kind}-{hex}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub index: usize,
    /// Seed of the accepted attempt.
    pub seed: u64,
    pub attempts: usize,
    pub requested_size: usize,
    /// Vertices of the generated graph before taking the component.
    pub generated_size: usize,
    pub n: usize,
    pub m: usize,
    pub degree_model: Option<DegreeModel>,
    pub clustering: ClusteringSpec,
    pub eigen: EigenStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub meta: RecordMeta,
    pub graph: Graph,
    pub centralities: CentralitySet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub id: String,
    pub spec: CorpusSpec,
    pub records: Vec<CorpusRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EigenStatus {
    pub converged: bool,
    pub shifted: bool,
    pub iterations: usize,
}

/// Exact degree, eigenvector, betweenness and closeness of a connected graph.
pub fn exact_centralities(g: &Graph, eigen: &EigenOptions, threads: usize) -> Result<(CentralitySet, EigenStatus)> {
    let ev = eigenvector_with_fallback(g, eigen)?;
    let status = EigenStatus { converged: ev.converged, shifted: ev.shifted, iterations: ev.iterations };
    let (b, c) = betweenness_closeness(g, threads)?;
    let set = CentralitySet { degree: degree_centrality(g), eigenvector: ev.centrality, betweenness: Some(b), closeness: Some(c) };
    Ok((set, status))
}

struct Plan {
    requested_size: usize,
    model: Option<DegreeModel>,
    histogram: DegreeHistogram,
    clustering: ClusteringSpec,
}

fn plan_generic(p: &GenericParams, seed: u64) -> Result<Plan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(p.size_min..=p.size_max);
    let c = if p.clustering_max > p.clustering_min { rng.random_range(p.clustering_min..p.clustering_max) } else { p.clustering_min };
    let model = if rng.random_bool(0.5) {
        DegreeModel::PowerLaw { gamma: rng.random_range(2.0..3.0), d_max: n - 1 }
    } else {
        DegreeModel::LogNormal { mu: rng.random_range(0.5..1.5), sigma: rng.random_range(0.5..1.0), d_max: n - 1 }
    };
    let histogram = sample_degree_histogram(&model, n, rng.random())?;
    Ok(Plan { requested_size: n, model: Some(model), histogram, clustering: ClusteringSpec::Global(c) })
}

fn plan_specific(p: &SpecificParams, size: usize, seed: u64) -> Result<Plan> {
    let target = size.min(p.histogram.total());
    let shrunk = shrink_histogram(&p.histogram, target, seed)?;
    Ok(Plan { requested_size: size, model: shrunk.model, histogram: shrunk.histogram, clustering: p.clustering.clone() })
}

fn make_record(spec: &CorpusSpec, index: usize) -> Result<CorpusRecord> {
    for attempt in 0..MAX_ATTEMPTS {
        let seed = record_seed(spec.seed, index, attempt);
        let plan = match &spec.params {
            CorpusParams::Generic(p) => plan_generic(p, seed)?,
            CorpusParams::Specific(p) => plan_specific(p, p.sizes[index / p.count_per_size], seed)?,
        };
        let out = bter_generate(&BterConfig {
            target: plan.histogram,
            clustering: plan.clustering.clone(),
            seed: splitmix64(seed),
        })?;
        let lcc = largest_connected_component(&out.graph);
        if lcc.graph.n() < MIN_RECORD_SIZE {
            continue;
        }
        let g = lcc.graph;
        let (centralities, eigen) = exact_centralities(&g, &spec.eigen, 1)?;
        let meta = RecordMeta {
            index,
            seed,
            attempts: attempt + 1,
            requested_size: plan.requested_size,
            generated_size: out.graph.n(),
            n: g.n(),
            m: g.m(),
            degree_model: plan.model,
            clustering: plan.clustering,
            eigen,
        };
        return Ok(CorpusRecord { meta, graph: g, centralities });
    }
    Err(Error::Numerical(format!(
        "record {index}: no component of at least {MIN_RECORD_SIZE} vertices after {MAX_ATTEMPTS} attempts"
    )))
}

/// Generates every record of `spec`, records in parallel and each one
/// single-threaded, so the result does not depend on `threads`.
pub fn make_corpus(spec: &CorpusSpec, threads: usize) -> Result<Corpus> {
    spec.validate()?;
    let records = map_items(spec.record_count(), threads, |i| make_record(spec, i)).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Corpus { id: spec.id(), spec: spec.clone(), records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordEntry {
    index: usize,
    dir: String,
    n: usize,
    m: usize,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    id: String,
    spec: CorpusSpec,
    records: Vec<RecordEntry>,
}

fn record_dir(index: usize) -> String {
    format!("record_{index:04}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Writes `vertex,degree,eigenvector,betweenness,closeness` rows.
pub fn write_targets_csv<W: Write>(set: &CentralitySet, mut out: W) -> Result<()> {
    let b = set.betweenness.as_ref().ok_or_else(|| Error::Missing("betweenness".into()))?;
    let c = set.closeness.as_ref().ok_or_else(|| Error::Missing("closeness".into()))?;
    writeln!(out, "vertex,degree,eigenvector,betweenness,closeness")?;
    for v in 0..set.degree.len() {
        writeln!(out, "{v},{},{},{},{}", set.degree.values[v], set.eigenvector.values[v], b.values[v], c.values[v])?;
    }
    out.flush()?;
    Ok(())
}

fn read_targets_csv(path: &Path, n: usize) -> Result<CentralitySet> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut cols = vec![Vec::with_capacity(n); 4];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "vertex,degree,eigenvector,betweenness,closeness" {
                return Err(Error::Parse { line: 1, message: "unexpected targets header".into() });
            }
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 || fields[0].parse::<usize>().ok() != Some(i - 1) {
            return Err(Error::Parse { line: i + 1, message: "expected vertex and four values".into() });
        }
        for (col, f) in cols.iter_mut().zip(&fields[1..]) {
            col.push(f.parse::<f64>().map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?);
        }
    }
    if cols[0].len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: cols[0].len() });
    }
    let mut it = cols.into_iter();
    let mut next = |m| CentralityVector::new(m, it.next().unwrap());
    Ok(CentralitySet {
        degree: next(Measure::Degree),
        eigenvector: next(Measure::Eigenvector),
        betweenness: Some(next(Measure::Betweenness)),
        closeness: Some(next(Measure::Closeness)),
    })
}

/// Reads `u v` lines over vertex ids `0..n` as written by
/// [`Graph::write_edge_list`] without labels.
fn read_indexed_edges(path: &Path, n: usize) -> Result<Graph> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse { line: i + 1, message: "expected two vertex ids".into() });
        };
        let parse = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v < n => Ok(v),
                _ => Err(Error::Parse { line: i + 1, message: format!("vertex id {s:?} not in 0..{n}") }),
            }
        };
        edges.push((parse(a)?, parse(b)?));
    }
    Ok(Graph::from_edges(n, edges))
}

impl Corpus {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let name = record_dir(r.meta.index);
            let rdir = dir.join(&name);
            fs::create_dir_all(&rdir)?;
            r.graph.write_edge_list(BufWriter::new(fs::File::create(rdir.join("graph.edges"))?), None)?;
            write_targets_csv(&r.centralities, BufWriter::new(fs::File::create(rdir.join("targets.csv"))?))?;
            write_json(&rdir.join("meta.json"), &r.meta)?;
            entries.push(RecordEntry { index: r.meta.index, dir: name, n: r.meta.n, m: r.meta.m, seed: r.meta.seed });
        }
        let manifest = Manifest { version: CORPUS_FORMAT_VERSION, id: self.id.clone(), spec: self.spec.clone(), records: entries };
        write_json(&dir.join("manifest.json"), &manifest)
    }

    pub fn read_dir(dir: &Path) -> Result<Corpus> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Missing("corpus version".into()))?;
        if version != CORPUS_FORMAT_VERSION as u64 {
            return Err(Error::Version { found: version as u32, expected: CORPUS_FORMAT_VERSION });
        }
        let manifest: Manifest = serde_json::from_value(value)?;
        let mut records = Vec::with_capacity(manifest.records.len());
        for e in &manifest.records {
            let rdir = dir.join(&e.dir);
            let meta: RecordMeta = serde_json::from_str(&fs::read_to_string(rdir.join("meta.json"))?)?;
            let graph = read_indexed_edges(&rdir.join("graph.edges"), meta.n)?;
            if graph.m() != meta.m {
                return Err(Error::invalid(format!("{}: {} edges read, {} expected", e.dir, graph.m(), meta.m)));
            }
            let centralities = read_targets_csv(&rdir.join("targets.csv"), meta.n)?;
            records.push(CorpusRecord { meta, graph, centralities });
        }
        Ok(Corpus { id: manifest.id, spec: manifest.spec, records })
    }

    /// Feature rows of every record stacked in record order, with the row
    /// count of each record.
    pub fn features(&self, attrs: usize, targets: TargetSet) -> Result<(FeatureMatrix, Vec<usize>)> {
        let parts = self
            .records
            .iter()
            .map(|r| build_features(&r.graph, &r.centralities, attrs, targets))
            .collect::<Result<Vec<_>>>()?;
        let sizes = parts.iter().map(|p| p.rows).collect();
        Ok((FeatureMatrix::concat(&parts)?, sizes))
    }
}
