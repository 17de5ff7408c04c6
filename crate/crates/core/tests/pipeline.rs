use centrank::centrality::{rank_vertices, EigenOptions, Measure, Order};
use centrank::corpus::{make_corpus, record_seed, splitmix64, Corpus, CorpusParams, CorpusSpec, GenericParams};
use centrank::eval::{compare_report, kendall_tau_b, MethodRanks, DEFAULT_PERCENTILES};
use centrank::features::TargetSet;
use centrank::neural::{predict_ranks, train_lm, LmConfig, Mlp, ModelMetadata, Split, TrainedModel};
use centrank::sampling::{approximate_centralities, make_plan};

fn generic(count: usize, size_min: usize, size_max: usize, seed: u64) -> Corpus {
    let params = GenericParams { count, size_min, size_max, ..GenericParams::default() };
    let spec = CorpusSpec { params: CorpusParams::Generic(params), seed, eigen: EigenOptions::default() };
    make_corpus(&spec, 1).unwrap()
}

#[test]
fn train_predict_and_score_a_held_out_network() {
    let corpus = generic(20, 100, 200, 11);
    let (data, _) = corpus.features(2, TargetSet::Both).unwrap();
    let cfg = LmConfig { max_epochs: 40, ..LmConfig::default() };
    let split = Split::random(data.rows, cfg.val_fraction, cfg.test_fraction, 5).unwrap();
    let init = Mlp::init(&[2, 20, 20, 20, 2], splitmix64(5)).unwrap();
    let outcome = train_lm(&init, &data, &split, &cfg).unwrap();
    assert!(outcome.mlp.is_finite());
    assert!(outcome.val_sse <= outcome.history[0].val_sse);

    let model = TrainedModel {
        mlp: outcome.mlp,
        metadata: ModelMetadata {
            name: "NN".into(),
            attrs: 2,
            targets: TargetSet::Both,
            corpus_id: corpus.id.clone(),
            config: cfg,
            eigen: EigenOptions::default(),
            epochs: outcome.history.len(),
            stop_reason: outcome.stop_reason,
        },
    };
    let held_out = generic(1, 400, 400, 99);
    let record = &held_out.records[0];
    let predicted = predict_ranks(&model, &record.graph, 2).unwrap();
    assert_eq!(predicted.len(), 2);

    let exact: Vec<_> = [Measure::Betweenness, Measure::Closeness]
        .iter()
        .map(|&m| (m, record.centralities.get(m).unwrap().ranks()))
        .collect();
    let methods: Vec<_> = predicted
        .into_iter()
        .map(|(measure, ranks)| MethodRanks { method: "NN".into(), measure, trials: vec![ranks], wall_time_ms: None })
        .collect();
    let reports = compare_report(&exact, &methods, &DEFAULT_PERCENTILES).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert!(r.tau_b > 0.3, "{:?} tau-b {}", r.measure, r.tau_b);
        assert_eq!(r.percentile_match.0.len(), DEFAULT_PERCENTILES.len());
    }
}

#[test]
fn five_percent_pivots_rank_a_large_network_well() {
    let corpus = generic(1, 3000, 3000, 21);
    let record = &corpus.records[0];
    let exact_b = record.centralities.betweenness.as_ref().unwrap().ranks();
    let exact_c = record.centralities.closeness.as_ref().unwrap().ranks();
    let (mut tau_b, mut tau_c) = (0.0, 0.0);
    for t in 0..5 {
        let plan = make_plan(&record.graph, 0.05, record_seed(3, t, 0)).unwrap();
        let est = approximate_centralities(&record.graph, &plan, 1).unwrap();
        let rb = rank_vertices(&est.betweenness.values, Order::HigherFirst);
        let rc = rank_vertices(&est.closeness.values, Order::HigherFirst);
        tau_b += kendall_tau_b(&rb.ranks, &exact_b.ranks).unwrap() / 5.0;
        tau_c += kendall_tau_b(&rc.ranks, &exact_c.ranks).unwrap() / 5.0;
    }
    assert!(tau_c >= 0.8, "closeness tau-b {tau_c}");
    assert!(tau_b >= 0.7, "betweenness tau-b {tau_b}");
}
