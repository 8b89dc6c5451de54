use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use gain_core::graph::convert::{self, ConvertOptions, Format};
use gain_core::graph::io::{load_graph, write_graph, GraphPaths};
use gain_core::graph::synthetic::{BipartiteModel, BlockModel};
use gain_core::graph::{Graph, Split};
use gain_core::model::Task;
use gain_core::objective;
use gain_core::rng;
use gain_core::sampler::Sampler;
use gain_core::trainer::{self, TrainConfig, TrainError};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{parse_sets, read_object, ConfigFlags};
use crate::Fail;

fn load(dir: &Path) -> Result<Graph, Fail> {
    if !dir.is_dir() {
        return Err(Fail::Data(format!("data directory {} does not exist", dir.display())));
    }
    Ok(load_graph(&GraphPaths::in_dir(dir))?)
}

fn make_dir(dir: &Path) -> Result<(), Fail> {
    fs::create_dir_all(dir).map_err(|e| Fail::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Fail> {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Fail::Data(format!("cannot write {}: {e}", path.display())))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Nodes whose attention is dumped: test nodes, or test edge endpoints.
fn test_nodes(g: &Graph, task: Task) -> Vec<usize> {
    match task {
        Task::Edge => {
            let set: BTreeSet<usize> = g.edges_in(Split::Test).iter().flat_map(|e| [e.src, e.dst]).collect();
            set.into_iter().collect()
        }
        _ => g.labeled_nodes(Split::Test),
    }
}

fn train_one(g: &Graph, cfg: &TrainConfig, out: &Path, attention: bool) -> Result<Value, Fail> {
    make_dir(out)?;
    let outcome = trainer::train(g, cfg)?;
    let history = out.join("history.jsonl");
    let ckpt = out.join("best.ckpt");
    let config = out.join("config.json");
    trainer::write_history(&history, &outcome.history)?;
    trainer::save_checkpoint(&ckpt, &outcome, cfg)?;
    write_json(&config, cfg)?;
    let task = outcome.model.spec().task;
    let mut artifacts = json!({
        "history": path_str(&history),
        "checkpoint": path_str(&ckpt),
        "config": path_str(&config),
    });
    if attention {
        let path = out.join("attention.jsonl");
        let records = trainer::attention_dump(g, &outcome.model, cfg, &test_nodes(g, task))?;
        let mut text = String::new();
        for r in records {
            text.push_str(&r.to_string());
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| Fail::Data(format!("cannot write {}: {e}", path.display())))?;
        artifacts["attention"] = path_str(&path).into();
    }
    let summary = json!({
        "task": task,
        "seed": cfg.seed,
        "epochs_run": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "stopped_early": outcome.stopped_early,
        "val": outcome.best_val,
        "test": outcome.test,
        "test_monitor": outcome.test.as_ref().map(|m| m.monitor()),
        "artifacts": artifacts,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn train(
    data: &Path,
    out: &Path,
    seeds: Option<&[u64]>,
    attention: bool,
    flags: &ConfigFlags,
) -> Result<Value, Fail> {
    let cfg = flags.resolve()?;
    if seeds.is_some_and(|s| s.is_empty()) {
        return Err(Fail::Usage("--seeds needs at least one seed".into()));
    }
    let g = load(data)?;
    // Catch task/label mismatches before any epoch runs.
    cfg.model_spec(&g)?;
    let Some(seeds) = seeds else {
        return train_one(&g, &cfg, out, attention);
    };
    let mut runs = Vec::new();
    let mut scores = Vec::new();
    for &seed in seeds {
        let c = TrainConfig { seed, ..cfg.clone() };
        let s = train_one(&g, &c, &out.join(format!("seed-{seed}")), attention)?;
        let score = s["test_monitor"]
            .as_f64()
            .ok_or_else(|| Fail::Data("test split is empty".into()))?;
        scores.push(score);
        runs.push(s);
    }
    let (mean, std) = objective::mean_std(&scores);
    let summary = json!({ "seeds": seeds, "scores": scores, "mean": mean, "std": std, "runs": runs });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn eval(checkpoint: &Path, data: &Path, split: Split, out: Option<&Path>) -> Result<Value, Fail> {
    let loaded = trainer::load_checkpoint(checkpoint).map_err(|e| Fail::Data(e.to_string()))?;
    let g = load(data)?;
    let metrics = trainer::evaluate(&g, &loaded.model, &loaded.config, split)?;
    let stored = loaded.meta["metrics"].get(split.as_str()).cloned().unwrap_or(Value::Null);
    let stored_monitor = stored
        .get("micro_f1")
        .or_else(|| stored.get("auc"))
        .and_then(Value::as_f64);
    let summary = json!({
        "split": split,
        "metrics": metrics,
        "monitor": metrics.monitor(),
        "stored": stored,
        "delta": stored_monitor.map(|s| (s - metrics.monitor()).abs()),
    });
    if let Some(dir) = out {
        make_dir(dir)?;
        write_json(&dir.join("eval.json"), &summary)?;
    }
    Ok(summary)
}

fn read_nodes(path: &Path) -> Result<Vec<usize>, Fail> {
    let text = fs::read_to_string(path).map_err(|e| Fail::Data(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Fail::Data(format!("{}:{}: expected node index, got {:?}", path.display(), i + 1, l.trim())))
        })
        .collect()
}

pub fn embed(checkpoint: &Path, data: &Path, nodes: Option<&Path>, out: &Path) -> Result<Value, Fail> {
    let loaded = trainer::load_checkpoint(checkpoint).map_err(|e| Fail::Data(e.to_string()))?;
    let g = load(data)?;
    let nodes = match nodes {
        Some(p) => read_nodes(p)?,
        None => (0..g.num_nodes()).collect(),
    };
    if let Some(&v) = nodes.iter().find(|&&v| v >= g.num_nodes()) {
        return Err(Fail::Data(format!("node {v} out of range ({} nodes)", g.num_nodes())));
    }
    let emb = trainer::embed(&g, &loaded.model, &loaded.config, &nodes).map_err(|e| match e {
        // width mismatch between graph and checkpoint is a data problem
        TrainError::Config(m) => Fail::Data(m),
        other => other.into(),
    })?;
    make_dir(out)?;
    let path = out.join("embeddings.bin");
    trainer::write_embeddings(&path, &emb)?;
    Ok(json!({ "rows": emb.rows(), "cols": emb.cols(), "embeddings": path_str(&path) }))
}

pub fn sample(
    data: &Path,
    nodes: &[usize],
    hops: Option<usize>,
    out: Option<&Path>,
    flags: &ConfigFlags,
) -> Result<Value, Fail> {
    let mut cfg = flags.merged()?;
    if let Some(h) = hops {
        if h == 0 {
            return Err(Fail::Usage("--hops must be at least 1".into()));
        }
        for v in [&mut cfg.sample_sizes, &mut cfg.dims] {
            if let Some(&last) = v.last() {
                v.resize(h, last);
            }
        }
    }
    cfg.validate().map_err(|e| Fail::Usage(e.to_string()))?;
    let g = load(data)?;
    let sampler = Sampler::new(&g, cfg.sampler_config()).map_err(TrainError::from)?;
    let mb = sampler
        .build_minibatch(nodes, &mut rng::stream(cfg.seed, "sample", 0, 0))
        .map_err(TrainError::from)?;
    let dump = mb.to_json();
    if let Some(dir) = out {
        make_dir(dir)?;
        write_json(&dir.join("minibatch.json"), &dump)?;
    }
    Ok(json!({ "sample_sizes": cfg.sample_sizes, "seed": cfg.seed, "minibatch": dump }))
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SynthKind {
    Block,
    Bipartite,
}

fn layered<T: Serialize + DeserializeOwned + Default>(config: Option<&Path>, sets: &[String]) -> Result<T, Fail> {
    let mut merged: Map<String, Value> = match serde_json::to_value(T::default()).expect("serializable") {
        Value::Object(m) => m,
        _ => unreachable!("generator parameters serialize to an object"),
    };
    if let Some(p) = config {
        merged.extend(read_object(p)?);
    }
    merged.extend(parse_sets(sets)?);
    serde_json::from_value(Value::Object(merged)).map_err(|e| Fail::Usage(format!("generator config: {e}")))
}

pub fn synth(kind: SynthKind, config: Option<&Path>, sets: &[String], seed: u64, out: &Path) -> Result<Value, Fail> {
    let (g, params) = match kind {
        SynthKind::Block => {
            let m: BlockModel = layered(config, sets)?;
            (m.generate(seed).map_err(|e| Fail::Usage(e.to_string()))?, serde_json::to_value(&m))
        }
        SynthKind::Bipartite => {
            let m: BipartiteModel = layered(config, sets)?;
            (m.generate(seed).map_err(|e| Fail::Usage(e.to_string()))?, serde_json::to_value(&m))
        }
    };
    write_graph(&g, out)?;
    let splits = if g.labeled_edges().is_empty() {
        g.split_counts()
    } else {
        [Split::Train, Split::Val, Split::Test].map(|s| g.edges_in(s).len())
    };
    Ok(json!({
        "kind": format!("{kind:?}").to_lowercase(),
        "seed": seed,
        "params": params.expect("serializable"),
        "nodes": g.num_nodes(),
        "edges": g.num_undirected_edges(),
        "features": g.feature_dim(),
        "classes": g.labels().map(|l| l.num_classes()),
        "splits": splits,
        "out": path_str(out),
    }))
}

pub fn convert(format: Format, raw: &Path, split_file: Option<PathBuf>, seed: u64, out: &Path) -> Result<Value, Fail> {
    let (g, report) = convert::convert(raw, format, &ConvertOptions { split_file, seed })?;
    write_graph(&g, out)?;
    let mut v = serde_json::to_value(&report).expect("serializable");
    v["out"] = path_str(out).into();
    Ok(v)
}
