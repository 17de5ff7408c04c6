use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use centrank::graph::{largest_connected_component, load_edge_list, Graph, LoadStats};
use serde::Serialize;

use crate::{CliResult, Context, Failure};

/// Largest connected component of an edge list, with the original id of
/// every component vertex.
pub struct Input {
    pub graph: Graph,
    pub ids: Vec<u64>,
    pub stats: LoadStats,
}

pub fn load_input(path: &Path) -> CliResult<Input> {
    let file = fs::File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let loaded = load_edge_list(BufReader::new(file)).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let lcc = largest_connected_component(&loaded.graph);
    let ids = lcc.new_to_old.iter().map(|&v| loaded.original_ids[v]).collect();
    Ok(Input { graph: lcc.graph, ids, stats: loaded.stats })
}

pub fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// `vertex,<column>` rows in component order.
pub fn write_column(path: &Path, column: &str, ids: &[u64], values: &[f64]) -> CliResult<()> {
    let mut out = create(path)?;
    writeln!(out, "vertex,{column}")?;
    for (id, v) in ids.iter().zip(values) {
        writeln!(out, "{id},{v}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mapping(path: &Path, ids: &[u64]) -> CliResult<()> {
    let mut out = create(path)?;
    writeln!(out, "index,vertex")?;
    for (i, id) in ids.iter().enumerate() {
        writeln!(out, "{i},{id}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a two-column `vertex,value` CSV with a header.
pub fn read_column(path: &Path) -> CliResult<Vec<(u64, f64)>> {
    let file = fs::File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = || Failure::Input(format!("{}:{}: expected vertex,value", path.display(), i + 1));
        let (a, b) = line.trim().split_once(',').ok_or_else(bad)?;
        let id = a.parse::<u64>().map_err(|_| bad())?;
        let value = b.parse::<f64>().map_err(|_| bad())?;
        rows.push((id, value));
    }
    Ok(rows)
}

#[derive(Serialize)]
pub struct RunManifest<'a, C: Serialize, R: Serialize> {
    pub command: &'a str,
    pub tool_version: &'a str,
    pub seed: Option<u64>,
    pub threads: usize,
    pub deterministic: bool,
    pub config: &'a C,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_ms: Option<f64>,
    pub results: R,
}

/// Milliseconds since `start`, or `None` in deterministic mode.
pub fn elapsed_ms(ctx: &Context, start: Instant) -> Option<f64> {
    (!ctx.deterministic).then(|| start.elapsed().as_secs_f64() * 1e3)
}

#[allow(clippy::too_many_arguments)]
pub fn write_manifest<C: Serialize, R: Serialize>(
    ctx: &Context,
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    config: &C,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    start: Instant,
    results: R,
) -> CliResult<()> {
    let manifest = RunManifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed,
        threads: ctx.threads,
        deterministic: ctx.deterministic,
        config,
        inputs,
        outputs,
        wall_time_ms: elapsed_ms(ctx, start),
        results,
    };
    write_json(&dir.join("run.json"), &manifest)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))
}
