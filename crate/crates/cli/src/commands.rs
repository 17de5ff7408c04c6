use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use centrank::centrality::{rank_vertices, EigenOptions, Measure, Order, RankVector};
use centrank::corpus::{exact_centralities, make_corpus, record_seed, splitmix64, Corpus, CorpusParams, CorpusSpec, GenericParams, SpecificParams};
use centrank::eval::{compare_report, format_table, r_squared, MethodRanks};
use centrank::features::TargetSet;
use centrank::neural::{predict_ranks, train_lm, write_history_csv, LmConfig, Mlp, ModelMetadata, Split, TrainedModel};
use centrank::sampling::{approximate_centralities, SamplePlan};
use serde_json::json;

use crate::files::{self, elapsed_ms, ensure_dir, load_input, read_column, write_column, write_json, write_manifest, write_mapping};
use crate::{CliResult, Context, ExactArgs, EvalArgs, Failure, GenArgs, Kind, PredictArgs, SampleArgs, SplitBy, Target, TrainArgs};

const MEASURES: [Measure; 2] = [Measure::Betweenness, Measure::Closeness];

fn eigen_options(shift: bool) -> EigenOptions {
    EigenOptions { shift, ..Default::default() }
}

pub fn gen(ctx: &Context, a: &GenArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut inputs = Vec::new();
    let params = match (a.kind, &a.reference) {
        (Kind::Generic, Some(_)) => return Err(Failure::Usage("--reference only applies to --kind specific".into())),
        (Kind::Specific, None) => return Err(Failure::Usage("--kind specific requires --reference".into())),
        (Kind::Generic, None) => CorpusParams::Generic(GenericParams {
            count: a.count.unwrap_or(300),
            size_min: a.size_min,
            size_max: a.size_max,
            clustering_min: a.clustering_min,
            clustering_max: a.clustering_max,
        }),
        (Kind::Specific, Some(path)) => {
            let reference = load_input(path)?;
            inputs.push(path.clone());
            let name = path.file_stem().map_or_else(|| "reference".into(), |s| s.to_string_lossy().into_owned());
            CorpusParams::Specific(SpecificParams::from_reference(
                &reference.graph,
                &name,
                a.sizes.clone(),
                a.count.unwrap_or(200),
                a.global_clustering,
            ))
        }
    };
    let spec = CorpusSpec { params, seed: a.seed, eigen: eigen_options(a.eigen_shift) };
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let corpus = make_corpus(&spec, ctx.threads)?;
    corpus.write_dir(&a.out)?;
    let shifted = corpus.records.iter().filter(|r| r.meta.eigen.shifted).count();
    let results = json!({
        "corpus_id": corpus.id,
        "records": corpus.records.len(),
        "vertices": corpus.records.iter().map(|r| r.meta.n).sum::<usize>(),
        "eigen_shifted_records": shifted,
    });
    write_manifest(ctx, &a.out, "gen", Some(a.seed), a, inputs, vec![a.out.join("manifest.json")], start, results)
}

pub fn exact(ctx: &Context, a: &ExactArgs) -> CliResult<()> {
    let start = Instant::now();
    let input = load_input(&a.input)?;
    let (set, eigen) = exact_centralities(&input.graph, &eigen_options(a.eigen_shift), ctx.threads)?;
    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    let columns = [
        (Measure::Degree, &set.degree),
        (Measure::Eigenvector, &set.eigenvector),
        (Measure::Betweenness, set.betweenness.as_ref().unwrap()),
        (Measure::Closeness, set.closeness.as_ref().unwrap()),
    ];
    for (m, c) in columns {
        let path = a.out.join(format!("{}.csv", m.name()));
        write_column(&path, "value", &input.ids, &c.values)?;
        outputs.push(path);
    }
    let mapping = a.out.join("mapping.csv");
    write_mapping(&mapping, &input.ids)?;
    outputs.push(mapping);
    let results = json!({ "load": input.stats, "n": input.graph.n(), "m": input.graph.m(), "eigen": eigen });
    write_manifest(ctx, &a.out, "exact", None, a, vec![a.input.clone()], outputs, start, results)
}

pub fn sample(ctx: &Context, a: &SampleArgs) -> CliResult<()> {
    let start = Instant::now();
    if a.trials == 0 {
        return Err(Failure::Usage("--trials must be positive".into()));
    }
    if !(a.fraction > 0.0 && a.fraction <= 1.0) {
        return Err(Failure::Usage(format!("--fraction {} not in (0, 1]", a.fraction)));
    }
    let input = load_input(&a.input)?;
    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    let mut trials = Vec::new();
    for t in 0..a.trials {
        let trial_start = Instant::now();
        let seed = record_seed(a.seed, t, 0);
        let plan = SamplePlan::new(input.graph.n(), a.fraction, seed)?;
        let est = approximate_centralities(&input.graph, &plan, ctx.threads)?;
        let wall = elapsed_ms(ctx, trial_start);
        for (m, c) in [(Measure::Betweenness, &est.betweenness), (Measure::Closeness, &est.closeness)] {
            let path = a.out.join(format!("{}_trial{t}.csv", m.name()));
            write_column(&path, "value", &input.ids, &c.values)?;
            outputs.push(path);
        }
        trials.push(json!({ "trial": t, "seed": seed, "pivots": plan.k(), "wall_time_ms": wall }));
    }
    let mut mapping = a.out.join("mapping.csv");
    write_mapping(&mapping, &input.ids)?;
    outputs.push(std::mem::take(&mut mapping));
    let results = json!({ "n": input.graph.n(), "trials": trials });
    write_manifest(ctx, &a.out, "sample", Some(a.seed), a, vec![a.input.clone()], outputs, start, results)
}

/// Model code: `NN` for generic corpora, `NN{T}{A}{M}` for specific ones,
/// with `T` the network size in thousands, `A` the attribute count and `M`
/// the task count.
fn model_name(corpus: &Corpus, attrs: usize, tasks: usize) -> String {
    match &corpus.spec.params {
        CorpusParams::Generic(_) => "NN".into(),
        CorpusParams::Specific(p) => {
            let sizes: BTreeSet<usize> = p.sizes.iter().copied().collect();
            let t: String = sizes.iter().map(|s| (s / 1000).to_string()).collect();
            format!("NN{t}{attrs}{tasks}")
        }
    }
}

pub fn train(ctx: &Context, a: &TrainArgs) -> CliResult<()> {
    let start = Instant::now();
    if a.attrs != 2 && a.attrs != 3 {
        return Err(Failure::Usage(format!("--attrs must be 2 or 3, got {}", a.attrs)));
    }
    let targets = match (a.tasks, a.target) {
        (2, _) => TargetSet::Both,
        (1, Target::Betweenness) => TargetSet::Betweenness,
        (1, Target::Closeness) => TargetSet::Closeness,
        (t, _) => return Err(Failure::Usage(format!("--tasks must be 1 or 2, got {t}"))),
    };
    if a.hidden.is_empty() || a.hidden.contains(&0) {
        return Err(Failure::Usage("--hidden needs positive layer sizes".into()));
    }
    let cfg = LmConfig {
        mu_init: a.mu,
        mu_dec: a.mu_dec,
        mu_inc: a.mu_inc,
        mu_max: a.mu_max,
        max_epochs: a.max_epochs,
        patience: a.patience,
        val_fraction: a.val_fraction,
        test_fraction: a.test_fraction,
        seed: a.seed,
        threads: ctx.threads,
        ..Default::default()
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let corpus = Corpus::read_dir(&a.corpus)?;
    let (data, sizes) = corpus.features(a.attrs, targets)?;
    let split = match a.split_by {
        SplitBy::Rows => Split::random(data.rows, cfg.val_fraction, cfg.test_fraction, a.seed)?,
        SplitBy::Networks => Split::by_groups(&sizes, cfg.val_fraction, cfg.test_fraction, a.seed)?,
    };
    let mut layers = vec![a.attrs];
    layers.extend(&a.hidden);
    layers.push(targets.tasks());
    let init = Mlp::init(&layers, splitmix64(a.seed))?;
    let outcome = train_lm(&init, &data, &split, &cfg)?;

    let mut test_r2 = serde_json::Map::new();
    if !split.test.is_empty() {
        for (col, name) in data.target_names.iter().enumerate() {
            let mut pred = Vec::with_capacity(split.test.len());
            let mut truth = Vec::with_capacity(split.test.len());
            for &r in &split.test {
                pred.push(outcome.mlp.forward(data.input_row(r))?[col]);
                truth.push(data.target_row(r)[col]);
            }
            let r2 = r_squared(&pred, &truth).ok();
            test_r2.insert(name.clone(), json!(r2));
        }
    }

    let model = TrainedModel {
        mlp: outcome.mlp.clone(),
        metadata: ModelMetadata {
            name: model_name(&corpus, a.attrs, targets.tasks()),
            attrs: a.attrs,
            targets,
            corpus_id: corpus.id.clone(),
            config: cfg,
            eigen: corpus.spec.eigen,
            epochs: outcome.history.len(),
            stop_reason: outcome.stop_reason,
        },
    };
    ensure_dir(&a.out)?;
    let model_path = a.out.join("model.json");
    let history_path = a.out.join("history.csv");
    model.save(&model_path)?;
    write_history_csv(&outcome.history, files::create(&history_path)?)?;
    let results = json!({
        "model": model.metadata.name,
        "rows": { "train": split.train.len(), "validation": split.validation.len(), "test": split.test.len() },
        "epochs": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "stop_reason": outcome.stop_reason,
        "train_sse": outcome.train_sse,
        "val_sse": outcome.val_sse,
        "test_sse": outcome.test_sse,
        "test_r2": test_r2,
    });
    write_manifest(ctx, &a.out, "train", Some(a.seed), a, vec![a.corpus.clone()], vec![model_path, history_path], start, results)
}

fn model_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("model.json")
    } else {
        p.to_path_buf()
    }
}

pub fn predict(ctx: &Context, a: &PredictArgs) -> CliResult<()> {
    let start = Instant::now();
    let path = model_path(&a.model);
    let model = TrainedModel::load(&path)?;
    let attrs = a.attrs.unwrap_or(model.metadata.attrs);
    let input = load_input(&a.input)?;
    let ranks = predict_ranks(&model, &input.graph, attrs)?;
    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    for (m, r) in &ranks {
        let p = a.out.join(format!("{}_rank.csv", m.name()));
        write_column(&p, "rank", &input.ids, &r.ranks)?;
        outputs.push(p);
    }
    let results = json!({ "model": model.metadata.name, "n": input.graph.n(), "measures": ranks.iter().map(|(m, _)| m.name()).collect::<Vec<_>>() });
    write_manifest(ctx, &a.out, "predict", None, a, vec![path, a.input.clone()], outputs, start, results)
}

/// Values of `path` arranged in the vertex order of `ids`.
fn aligned(path: &Path, ids: &[u64], index: &HashMap<u64, usize>) -> CliResult<Vec<f64>> {
    let rows = read_column(path)?;
    if rows.len() != ids.len() {
        return Err(Failure::Input(format!("{}: {} vertices, exact has {}", path.display(), rows.len(), ids.len())));
    }
    let mut out = vec![f64::NAN; ids.len()];
    for (id, v) in rows {
        let &i = index.get(&id).ok_or_else(|| Failure::Input(format!("{}: vertex {id} not in exact output", path.display())))?;
        out[i] = v;
    }
    Ok(out)
}

fn trial_files(dir: &Path, measure: Measure) -> CliResult<Vec<PathBuf>> {
    let prefix = format!("{}_trial", measure.name());
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if let Some(t) = name.strip_prefix(&prefix).and_then(|s| s.strip_suffix(".csv")).and_then(|s| s.parse().ok()) {
            found.push((t, path));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn method_wall_time(dir: &Path) -> Option<f64> {
    let text = fs::read_to_string(dir.join("run.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("wall_time_ms")?.as_f64()
}

pub fn eval(ctx: &Context, a: &EvalArgs) -> CliResult<()> {
    let start = Instant::now();
    let first = read_column(&a.exact.join("closeness.csv"))?;
    let ids: Vec<u64> = first.iter().map(|&(id, _)| id).collect();
    let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut exact = Vec::new();
    for m in MEASURES {
        let values = aligned(&a.exact.join(format!("{}.csv", m.name())), &ids, &index)?;
        exact.push((m, rank_vertices(&values, Order::HigherFirst)));
    }

    let mut methods = Vec::new();
    let mut inputs = vec![a.exact.clone()];
    for spec in &a.methods {
        let (name, dir) = spec
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--method expects NAME=DIR, got {spec:?}")))?;
        let dir = PathBuf::from(dir);
        inputs.push(dir.clone());
        let wall = if ctx.deterministic { None } else { method_wall_time(&dir) };
        let mut any = false;
        for m in MEASURES {
            let rank_file = dir.join(format!("{}_rank.csv", m.name()));
            let trials: Vec<RankVector> = if rank_file.exists() {
                vec![RankVector { ranks: aligned(&rank_file, &ids, &index)? }]
            } else {
                trial_files(&dir, m)?
                    .iter()
                    .map(|p| Ok(rank_vertices(&aligned(p, &ids, &index)?, Order::HigherFirst)))
                    .collect::<CliResult<_>>()?
            };
            if trials.is_empty() {
                continue;
            }
            any = true;
            methods.push(MethodRanks { method: name.to_string(), measure: m, trials, wall_time_ms: wall });
        }
        if !any {
            return Err(Failure::Input(format!("{}: no rank or trial files found", dir.display())));
        }
    }
    let reports = compare_report(&exact, &methods, &a.percentiles)?;
    ensure_dir(&a.out)?;
    let json_path = a.out.join("report.json");
    let table_path = a.out.join("report.txt");
    write_json(&json_path, &reports)?;
    let table = format_table(&reports);
    fs::write(&table_path, &table)?;
    print!("{table}");
    write_manifest(ctx, &a.out, "eval", None, a, inputs, vec![json_path, table_path], start, json!({ "reports": reports.len() }))
}
