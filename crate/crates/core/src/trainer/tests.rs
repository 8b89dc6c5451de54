use approx::assert_relative_eq;

use super::*;
use crate::graph::synthetic::{BipartiteModel, BlockModel};

fn two_blocks(seed: u64) -> Graph {
    BlockModel {
        block_sizes: vec![50, 50],
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 8,
        signal: 1.0,
        noise: 0.2,
        train_frac: 0.6,
        val_frac: 0.2,
    }
    .generate(seed)
    .unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: Some(16),
        learning_rate: 0.01,
        dims: vec![8, 8],
        sample_sizes: vec![5, 5],
        edge_hidden: 8,
        patience: 100,
        ..TrainConfig::default()
    }
}

#[test]
fn lr_schedule_halves_to_floor() {
    let mut s = LrSchedule::new(2e-4, 0.5, 5e-5);
    let mut seq = vec![s.current()];
    for _ in 0..3 {
        seq.push(s.observe(false));
    }
    assert_eq!(seq, vec![2e-4, 1e-4, 5e-5, 5e-5]);
    assert_eq!(s.observe(true), 5e-5);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let cases = [
        TrainConfig { lr_decay: 0.0, ..Default::default() },
        TrainConfig { lr_decay: 1.5, ..Default::default() },
        TrainConfig { lr_floor: 1.0, ..Default::default() },
        TrainConfig { lambda1: -1.0, ..Default::default() },
        TrainConfig { sample_sizes: vec![5], ..Default::default() },
        TrainConfig { aggregators: vec![], ..Default::default() },
        TrainConfig { epsilon: -1.0, ..Default::default() },
        TrainConfig { workers: 0, ..Default::default() },
    ];
    for c in cases {
        let e = c.validate().unwrap_err();
        assert!(e.is_config(), "{e}");
    }
    let e = serde_json::from_str::<TrainConfig>(r#"{"epochz": 3}"#).unwrap_err();
    assert!(e.to_string().contains("epochz"));
    let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "heuristic": "cn", "variant": "gain-3"}"#).unwrap();
    assert_eq!(c.epochs, 3);
    assert_eq!(c.heuristic, Heuristic::CommonNeighbors);
    assert_eq!(c.model_config().aggregators, vec![Aggregator::Mean]);
    assert_eq!(c.batch_size_for(Task::Multiclass), 512);
    assert_eq!(c.batch_size_for(Task::Edge), 1024);
}

/// True when the hyperplane halfway between the two class means puts every
/// node on its own side.
fn midpoint_separates(g: &Graph) -> bool {
    let f = g.features();
    let class = |v: usize| g.labels().unwrap().target(v).unwrap()[1] as usize;
    let mut means = vec![vec![0.0f64; f.cols()]; 2];
    let mut counts = [0.0; 2];
    for v in 0..g.num_nodes() {
        counts[class(v)] += 1.0;
        for (m, &x) in means[class(v)].iter_mut().zip(f.row(v)) {
            *m += x as f64;
        }
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c]);
    }
    let w: Vec<f64> = means[1].iter().zip(&means[0]).map(|(a, b)| a - b).collect();
    let mid: f64 = means[0].iter().zip(&means[1]).zip(&w).map(|((a, b), w)| w * (a + b) / 2.0).sum();
    (0..g.num_nodes()).all(|v| {
        let s: f64 = f.row(v).iter().zip(&w).map(|(&x, w)| x as f64 * w).sum::<f64>() - mid;
        (s > 0.0) == (class(v) == 1)
    })
}

#[test]
fn separable_blocks_train_cleanly() {
    let g = two_blocks(3);
    assert!(midpoint_separates(&g));
    let cfg = TrainConfig {
        epochs: 30,
        ..small_config()
    };
    let out = train(&g, &cfg).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|r| r.train.total).collect();
    for w in losses[..5].windows(2) {
        assert!(w[1] < w[0], "loss not strictly decreasing: {losses:?}");
    }
    let train_f1 = evaluate(&g, &out.model, &cfg, Split::Train).unwrap().micro_f1.unwrap();
    assert!(train_f1 >= 0.99, "train micro-F1 {train_f1}");
}

#[test]
fn history_invariants() {
    let g = two_blocks(4);
    let cfg = TrainConfig {
        epochs: 12,
        lr_floor: 1e-3,
        patience: 4,
        ..small_config()
    };
    let out = train(&g, &cfg).unwrap();
    let h = &out.history;
    for w in h.windows(2) {
        assert!(w[1].lr <= w[0].lr);
    }
    assert!(h.iter().all(|r| r.lr >= cfg.lr_floor));
    let best = h.iter().map(|r| r.val.monitor()).fold(f64::MIN, f64::max);
    assert_eq!(out.best_val.monitor(), best);
    assert!(h.iter().all(|r| !r.val.better_than(&out.best_val)));
    assert!(best >= h.last().unwrap().val.monitor());
    assert!(h[out.best_epoch].improved);
    // selected parameters reproduce the recorded validation score
    let again = evaluate(&g, &out.model, &cfg, Split::Val).unwrap();
    assert_eq!(again, out.best_val);
    for r in h {
        assert_relative_eq!(r.train.total, r.train.recombined(), max_relative = 1e-5);
    }
}

#[test]
fn runs_are_reproducible() {
    let g = two_blocks(5);
    for workers in [1, 3] {
        let cfg = TrainConfig {
            epochs: 3,
            workers,
            ..small_config()
        };
        let a = train(&g, &cfg).unwrap();
        let b = train(&g, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model.params().iter().count(), b.model.params().iter().count());
        for ((_, _, x), (_, _, y)) in a.model.params().iter().zip(b.model.params().iter()) {
            assert_eq!(x, y);
        }
    }
}

#[test]
fn overfits_tiny_graph() {
    // 20 nodes, all in train
    let mut g = BlockModel {
        block_sizes: vec![10, 10],
        p_in: 0.4,
        p_out: 0.05,
        feature_dim: 4,
        signal: 0.3,
        noise: 1.0,
        train_frac: 1.0,
        val_frac: 0.0,
    }
    .generate(1)
    .unwrap();
    g = g.with_node_splits(vec![Some(Split::Train); 20]).unwrap();
    let cfg = TrainConfig {
        epochs: 150,
        batch_size: Some(20),
        learning_rate: 0.02,
        lambda1: 0.0,
        lambda2: 0.0,
        dims: vec![16],
        sample_sizes: vec![4],
        ..small_config()
    };
    let spec = cfg.model_spec(&g).unwrap();
    let model = Model::new(spec, 0).unwrap();
    let out = overfit(&g, model, &cfg);
    assert_eq!(evaluate(&g, &out, &cfg, Split::Train).unwrap().micro_f1, Some(1.0));
}

/// Plain full-batch loop on the train split, no selection.
fn overfit(g: &Graph, mut model: Model, cfg: &TrainConfig) -> Model {
    let sampler = Sampler::new(g, cfg.sampler_config()).unwrap();
    let items = Items::of(g, model.spec().task, Split::Train);
    let batch = prepare(g, &items).unwrap();
    let mut adam = Adam::new(
        model.params(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    for e in 0..cfg.epochs {
        let mut r = rng::stream(cfg.seed, "sample", e as u64, 0);
        let (grads, _) = batch_gradients(&model, &sampler, &batch, &cfg.loss_weights(), &mut r).unwrap();
        adam.step(model.params_mut(), &grads).unwrap();
    }
    model
}

#[test]
fn evaluation_is_repeatable_and_checkpoint_roundtrips() {
    let g = two_blocks(6);
    let cfg = TrainConfig {
        epochs: 2,
        ..small_config()
    };
    let out = train(&g, &cfg).unwrap();
    let a = evaluate(&g, &out.model, &cfg, Split::Test).unwrap();
    let b = evaluate(&g, &out.model, &cfg, Split::Test).unwrap();
    assert_eq!(a, b);
    assert_eq!(Some(a), out.test);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    save_checkpoint(&path, &out, &cfg).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.config, cfg);
    let c = evaluate(&g, &loaded.model, &loaded.config, Split::Test).unwrap();
    let stored = loaded.meta["metrics"]["test"]["micro_f1"].as_f64().unwrap();
    assert!((c.micro_f1.unwrap() - stored).abs() <= 1e-6);

    let hist = dir.path().join("history.jsonl");
    write_history(&hist, &out.history).unwrap();
    let text = std::fs::read_to_string(&hist).unwrap();
    assert_eq!(text.lines().count(), out.history.len());
    let first: EpochRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first, out.history[0]);
}

#[test]
fn embeddings_follow_evaluation_path_and_generalize() {
    let g = two_blocks(7);
    let cfg = TrainConfig {
        epochs: 1,
        dims: vec![8, 128],
        ..small_config()
    };
    let out = train(&g, &cfg).unwrap();
    let nodes = g.labeled_nodes(Split::Train);
    let emb = embed(&g, &out.model, &cfg, &nodes).unwrap();
    assert_eq!(emb.shape(), (nodes.len(), 256));

    // evaluation batch 1 covers the second 16 nodes
    let sampler = Sampler::new(&g, cfg.sampler_config()).unwrap();
    let mb = sampler.build_minibatch(&nodes[16..32], &mut rng::stream(cfg.seed, "eval", 0, 1)).unwrap();
    let mut tape = Tape::inference();
    let fwd = out.model.forward_graph(&mut tape, &g, &mb).unwrap();
    assert_eq!(tape.value(fwd.embeddings).data(), &emb.data()[16 * 256..32 * 256]);

    // a different graph with the same feature width
    let unseen = two_blocks(99);
    let all: Vec<usize> = (0..unseen.num_nodes()).collect();
    let e = embed(&unseen, &out.model, &cfg, &all).unwrap();
    for r in 0..e.rows() {
        let n: f32 = e.row(r).iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((n - 1.0).abs() < 1e-5, "row {r} norm {n}");
    }

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("emb.bin");
    write_embeddings(&p, &e).unwrap();
    let back = gio::read_features(&p).unwrap();
    assert_eq!(back.data(), e.data());

    let narrow = BlockModel {
        feature_dim: 5,
        ..BlockModel::default()
    }
    .generate(0)
    .unwrap();
    assert!(embed(&narrow, &out.model, &cfg, &[0]).unwrap_err().is_config());
}

#[test]
fn overflow_is_a_numeric_error() {
    let g = two_blocks(8);
    let huge = g.features().scaled(3e38);
    let g = g.with_features(huge).unwrap();
    let err = train(&g, &small_config()).unwrap_err();
    assert!(err.is_numeric(), "{err}");
}

#[test]
fn edge_task_and_variants_train() {
    let g = BipartiteModel {
        users: 40,
        items: 40,
        labeled_edges: 300,
        feature_dim: 6,
        ..BipartiteModel::default()
    }
    .generate(2)
    .unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: Some(64),
        ..small_config()
    };
    assert_eq!(cfg.resolve_task(&g).unwrap(), Task::Edge);
    let out = train(&g, &cfg).unwrap();
    let auc = out.test.unwrap().auc.unwrap();
    assert!((0.0..=1.0).contains(&auc));

    let nodes = two_blocks(9);
    for v in ["gain-1", "gain-2", "gain-3", "gain-4", "gain-5"] {
        let cfg = TrainConfig {
            epochs: 1,
            variant: Some(v.parse().unwrap()),
            ..small_config()
        };
        let out = train(&nodes, &cfg).unwrap();
        assert!(out.history[0].train.total.is_finite(), "{v}");
    }
}

#[test]
fn seed_report_aggregates_population_std() {
    let g = two_blocks(10);
    let cfg = TrainConfig {
        epochs: 1,
        ..small_config()
    };
    let r = train_seeds(&g, &cfg, &[1, 2, 3]).unwrap();
    assert_eq!(r.scores.len(), 3);
    let (m, s) = objective::mean_std(&r.scores);
    assert_eq!((r.mean, r.std), (m, s));
}
