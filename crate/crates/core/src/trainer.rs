//! Minibatch training, evaluation and embedding export.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::graph::{io as gio, Graph, GraphError, LabeledEdge, Split};
use crate::model::{Aggregator, GainModel, ModelConfig, ModelError, ModelSpec, Task, Variant};
use crate::objective::{self, LossBreakdown, LossWeights, Metrics, ObjectiveError};
use crate::rng;
use crate::sampler::{Heuristic, MiniBatch, SampleError, Sampler, SamplerConfig};
use crate::tensor::checkpoint::{self, AdamScalars, CheckpointError};
use crate::tensor::{Adam, AdamConfig, ParamGrads, Tape, Tensor, Var};

/// Training runs in single precision; gradient checks use `f64` directly.
pub type Model = GainModel<f32>;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    #[error("non-finite gradient for {name} at epoch {epoch}, step {step}")]
    NonFiniteGradient { epoch: usize, step: usize, name: String },
}

impl TrainError {
    /// Overflow or NaN during the numeric pipeline, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } | TrainError::Model(ModelError::Numeric(_))
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            TrainError::Config(_) | TrainError::Model(ModelError::Config(_)) | TrainError::Sample(SampleError::Config(_))
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Items per minibatch; 512 nodes or 1024 edges when unset.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub lr_floor: f64,
    pub lr_decay: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Regularize every layer instead of the last one.
    pub all_layers: bool,
    pub sample_sizes: Vec<usize>,
    pub dims: Vec<usize>,
    pub aggregators: Vec<Aggregator>,
    pub cross: bool,
    pub autoencoder: bool,
    /// Applied on top of the fields above.
    pub variant: Option<Variant>,
    pub edge_hidden: usize,
    pub heuristic: Heuristic,
    pub epsilon: f64,
    pub seed: u64,
    pub patience: usize,
    /// Inferred from the graph's labels when unset.
    pub task: Option<Task>,
    /// Minibatches evaluated concurrently per optimizer step.
    pub workers: usize,
    /// Draw fresh neighborhoods every epoch; otherwise epoch 0's draw is reused.
    pub redraw: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let sampler = SamplerConfig::default();
        let loss = LossWeights::default();
        Self {
            epochs: 100,
            batch_size: None,
            learning_rate: 0.01,
            lr_floor: 5e-5,
            lr_decay: 0.5,
            lambda1: loss.lambda1,
            lambda2: loss.lambda2,
            all_layers: loss.all_layers,
            sample_sizes: sampler.sizes,
            dims: model.dims,
            aggregators: model.aggregators,
            cross: model.cross,
            autoencoder: model.autoencoder,
            variant: None,
            edge_hidden: model.edge_hidden,
            heuristic: sampler.heuristic,
            epsilon: sampler.epsilon,
            seed: 0,
            patience: 10,
            task: None,
            workers: 1,
            redraw: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay {} must be in (0, 1]", self.lr_decay));
        }
        if !(self.lr_floor >= 0.0 && self.lr_floor <= self.learning_rate) {
            return bad(format!("lr_floor {} must be in [0, learning_rate]", self.lr_floor));
        }
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("{name} {l} must be >= 0"));
            }
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.sample_sizes.len() != self.dims.len() {
            return bad(format!(
                "{} sample sizes for {} layers",
                self.sample_sizes.len(),
                self.dims.len()
            ));
        }
        self.sampler_config().validate()?;
        self.model_config().validate()?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let cfg = ModelConfig {
            dims: self.dims.clone(),
            aggregators: self.aggregators.clone(),
            cross: self.cross,
            autoencoder: self.autoencoder,
            edge_hidden: self.edge_hidden,
        };
        match self.variant {
            Some(v) => cfg.with_variant(v),
            None => cfg,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            heuristic: self.heuristic,
            epsilon: self.epsilon,
            sizes: self.sample_sizes.clone(),
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            all_layers: self.all_layers,
        }
    }

    pub fn resolve_task(&self, g: &Graph) -> Result<Task, TrainError> {
        let inferred = if !g.labeled_edges().is_empty() {
            Some(Task::Edge)
        } else {
            g.labels().map(|l| if l.is_multilabel() { Task::Multilabel } else { Task::Multiclass })
        };
        match (self.task, inferred) {
            (None, None) => Err(TrainError::Config("graph has neither node labels nor labeled edges".into())),
            (None, Some(t)) => Ok(t),
            (Some(Task::Edge), _) if g.labeled_edges().is_empty() => {
                Err(TrainError::Config("edge task on a graph without labeled edges".into()))
            }
            (Some(t @ (Task::Multiclass | Task::Multilabel)), _) => match g.labels() {
                None => Err(TrainError::Config(format!("{t} task on a graph without node labels"))),
                Some(l) if l.is_multilabel() && t == Task::Multiclass => {
                    Err(TrainError::Config("multiclass task on multi-label node labels".into()))
                }
                Some(_) => Ok(t),
            },
            (Some(t), _) => Ok(t),
        }
    }

    pub fn batch_size_for(&self, task: Task) -> usize {
        self.batch_size.unwrap_or(match task {
            Task::Edge => 1024,
            _ => 512,
        })
    }

    pub fn model_spec(&self, g: &Graph) -> Result<ModelSpec, TrainError> {
        let task = self.resolve_task(g)?;
        Ok(ModelSpec {
            config: self.model_config(),
            input_dim: g.feature_dim(),
            sample_sizes: self.sample_sizes.clone(),
            task,
            num_classes: match task {
                Task::Edge => 1,
                _ => g.labels().map_or(0, |l| l.num_classes()),
            },
        })
    }
}

/// Multiplies the rate by `decay` after every non-improving epoch, never
/// going below `floor`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    lr: f64,
    decay: f64,
    floor: f64,
}

impl LrSchedule {
    pub fn new(initial: f64, decay: f64, floor: f64) -> Self {
        Self {
            lr: initial,
            decay,
            floor,
        }
    }

    pub fn current(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's outcome and returns the rate for the next one.
    pub fn observe(&mut self, improved: bool) -> f64 {
        if !improved {
            self.lr = (self.lr * self.decay).max(self.floor);
        }
        self.lr
    }
}

/// Items of one split: labeled nodes or labeled edges.
#[derive(Clone, Debug)]
enum Items {
    Nodes(Vec<usize>),
    Edges(Vec<LabeledEdge>),
}

impl Items {
    fn of(g: &Graph, task: Task, split: Split) -> Self {
        match task {
            Task::Edge => Items::Edges(g.edges_in(split)),
            _ => Items::Nodes(g.labeled_nodes(split)),
        }
    }

    fn len(&self) -> usize {
        match self {
            Items::Nodes(v) => v.len(),
            Items::Edges(e) => e.len(),
        }
    }

    fn shuffle(&mut self, r: &mut rng::Rng) {
        match self {
            Items::Nodes(v) => v.shuffle(r),
            Items::Edges(e) => e.shuffle(r),
        }
    }

    fn batches(&self, size: usize) -> Vec<Items> {
        match self {
            Items::Nodes(v) => v.chunks(size).map(|c| Items::Nodes(c.to_vec())).collect(),
            Items::Edges(e) => e.chunks(size).map(|c| Items::Edges(c.to_vec())).collect(),
        }
    }
}

/// A batch ready for the model: the deduplicated nodes `B^K`, targets, and
/// for edges the endpoint rows.
struct Prepared {
    nodes: Vec<usize>,
    targets: Tensor<f32>,
    pairs: Option<(Arc<Vec<usize>>, Arc<Vec<usize>>)>,
}

fn prepare(g: &Graph, items: &Items) -> Result<Prepared, TrainError> {
    match items {
        Items::Nodes(nodes) => {
            let labels = g
                .labels()
                .ok_or_else(|| TrainError::Config("graph has no node labels".into()))?;
            let c = labels.num_classes();
            let mut data = Vec::with_capacity(nodes.len() * c);
            for &v in nodes {
                let t = labels
                    .target(v)
                    .ok_or_else(|| TrainError::Config(format!("node {v} has no label")))?;
                data.extend(t.into_iter().map(|x| x as f32));
            }
            Ok(Prepared {
                nodes: nodes.clone(),
                targets: Tensor::from_vec(nodes.len(), c, data).map_err(ModelError::from)?,
                pairs: None,
            })
        }
        Items::Edges(edges) => {
            let mut nodes = Vec::new();
            let mut pos = HashMap::new();
            let mut at = |v: usize| {
                *pos.entry(v).or_insert_with(|| {
                    nodes.push(v);
                    nodes.len() - 1
                })
            };
            let (mut src, mut dst) = (Vec::with_capacity(edges.len()), Vec::with_capacity(edges.len()));
            for e in edges {
                src.push(at(e.src));
                dst.push(at(e.dst));
            }
            let y = edges.iter().map(|e| e.label as f32).collect();
            Ok(Prepared {
                nodes,
                targets: Tensor::from_vec(edges.len(), 1, y).map_err(ModelError::from)?,
                pairs: Some((Arc::new(src), Arc::new(dst))),
            })
        }
    }
}

/// Forward pass through embeddings and the task head.
fn predict(
    model: &Model,
    tape: &mut Tape<f32>,
    g: &Graph,
    mb: &MiniBatch,
    batch: &Prepared,
) -> Result<(crate::model::Forward, Var), TrainError> {
    let fwd = model.forward_graph(tape, g, mb)?;
    let probs = match &batch.pairs {
        Some((s, d)) => model.edge_probabilities(tape, fwd.embeddings, s.clone(), d.clone())?,
        None => model.node_probabilities(tape, fwd.embeddings)?,
    };
    tape.check().map_err(ModelError::from)?;
    Ok((fwd, probs))
}

/// Per-batch gradients and loss terms.
fn batch_gradients(
    model: &Model,
    sampler: &Sampler,
    batch: &Prepared,
    weights: &LossWeights,
    rng: &mut rng::Rng,
) -> Result<(ParamGrads<f32>, LossBreakdown), TrainError> {
    let g = sampler.graph();
    let mb = sampler.build_minibatch(&batch.nodes, rng)?;
    debug_assert_eq!(mb.targets(), batch.nodes.as_slice());
    let mut tape = Tape::new();
    let (fwd, probs) = predict(model, &mut tape, g, &mb, batch)?;
    let sup = objective::supervised_loss(&mut tape, probs, &batch.targets, model.spec().task)?;
    let vars = objective::total_loss(&mut tape, sup, &fwd.layers, weights)?;
    let breakdown = LossBreakdown::read(&tape, &vars, weights);
    let grads = tape.backward(vars.total).map_err(ModelError::from)?;
    Ok((model.params().collect_grads(&tape, &grads), breakdown))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Rate used during this epoch.
    pub lr: f64,
    /// Mean of the per-batch loss terms.
    pub train: LossBreakdown,
    pub val: Metrics,
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: Metrics,
    pub test: Option<Metrics>,
    pub stopped_early: bool,
    pub adam: AdamScalars,
}

/// Trains a fresh model on `g`'s train split, selecting on validation and
/// reporting test metrics for the selected parameters.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let spec = cfg.model_spec(g)?;
    let model = Model::new(spec, cfg.seed)?;
    train_model(g, model, cfg)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_model(g: &Graph, mut model: Model, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let task = model.spec().task;
    let sampler = Sampler::new(g, cfg.sampler_config())?;
    let mut train_items = Items::of(g, task, Split::Train);
    let val_items = Items::of(g, task, Split::Val);
    if train_items.len() == 0 {
        return Err(TrainError::Config("train split is empty".into()));
    }
    if val_items.len() == 0 {
        return Err(TrainError::Config("validation split is empty".into()));
    }
    let batch_size = cfg.batch_size_for(task);
    let weights = cfg.loss_weights();
    let mut schedule = LrSchedule::new(cfg.learning_rate, cfg.lr_decay, cfg.lr_floor);
    let mut adam = Adam::new(
        model.params(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut history = Vec::new();
    let mut best: Option<(usize, Metrics, Model)> = None;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let lr = schedule.current();
        adam.set_learning_rate(lr);
        train_items.shuffle(&mut rng::stream(cfg.seed, "shuffle", epoch as u64, 0));
        let batches: Vec<Prepared> = train_items
            .batches(batch_size)
            .iter()
            .map(|b| prepare(g, b))
            .collect::<Result<_, _>>()?;
        let draw = if cfg.redraw { epoch as u64 } else { 0 };
        let mut sums = [0.0f64; 4];
        for (step, group) in batches.chunks(cfg.workers).enumerate() {
            let first = step * cfg.workers;
            let results: Vec<Result<(ParamGrads<f32>, LossBreakdown), TrainError>> = if group.len() == 1 {
                let mut r = rng::stream(cfg.seed, "sample", draw, first as u64);
                vec![batch_gradients(&model, &sampler, &group[0], &weights, &mut r)]
            } else {
                let model = &model;
                let sampler = &sampler;
                let weights = &weights;
                std::thread::scope(|s| {
                    let handles: Vec<_> = group
                        .iter()
                        .enumerate()
                        .map(|(i, b)| {
                            s.spawn(move || {
                                let mut r = rng::stream(cfg.seed, "sample", draw, (first + i) as u64);
                                batch_gradients(model, sampler, b, weights, &mut r)
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
                })
            };
            let mut total = ParamGrads::zeros_like(model.params());
            let scale = 1.0 / group.len() as f32;
            for (i, res) in results.into_iter().enumerate() {
                let (grads, b) = res?;
                if !b.total.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch: first + i,
                        value: b.total,
                    });
                }
                for (acc, x) in sums.iter_mut().zip([b.total, b.sup, b.greg, b.rec]) {
                    *acc += x;
                }
                total.accumulate(&grads, scale);
            }
            adam.step(model.params_mut(), &total)
                .map_err(|e| TrainError::NonFiniteGradient {
                    epoch,
                    step,
                    name: e.name,
                })?;
        }
        let n = batches.len() as f64;
        let train = LossBreakdown {
            total: sums[0] / n,
            sup: sums[1] / n,
            greg: sums[2] / n,
            rec: sums[3] / n,
            lambda1: weights.lambda1,
            lambda2: weights.lambda2,
        };
        let val = evaluate_items(&model, &sampler, &val_items, batch_size, cfg.seed)?;
        let improved = best.as_ref().is_none_or(|(_, m, _)| val.better_than(m));
        if improved {
            best = Some((epoch, val, model.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        schedule.observe(improved);
        history.push(EpochRecord {
            epoch,
            lr,
            train,
            val,
            improved,
        });
        if stale >= cfg.patience {
            stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }

    let (best_epoch, best_val, model) = best.expect("at least one epoch ran");
    let test_items = Items::of(g, task, Split::Test);
    let test = if test_items.len() > 0 {
        Some(evaluate_items(&model, &sampler, &test_items, batch_size, cfg.seed)?)
    } else {
        None
    };
    let c = adam.config;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val,
        test,
        stopped_early,
        adam: AdamScalars {
            step: adam.steps(),
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            delta: c.delta,
        },
    })
}

fn evaluate_items(
    model: &Model,
    sampler: &Sampler,
    items: &Items,
    batch_size: usize,
    seed: u64,
) -> Result<Metrics, TrainError> {
    let task = model.spec().task;
    let g = sampler.graph();
    let mut probs = Vec::new();
    let mut targets = Vec::new();
    let mut cols = 0;
    for (b, chunk) in items.batches(batch_size).iter().enumerate() {
        let batch = prepare(g, chunk)?;
        let mb = sampler.build_minibatch(&batch.nodes, &mut rng::stream(seed, "eval", 0, b as u64))?;
        let mut tape = Tape::inference();
        let (_, p) = predict(model, &mut tape, g, &mb, &batch)?;
        cols = batch.targets.cols();
        probs.extend(tape.value(p).data().iter().map(|&x| x as f64));
        targets.extend(batch.targets.data().iter().map(|&x| x as f64));
    }
    if probs.is_empty() {
        return Err(ObjectiveError::Empty.into());
    }
    let rows = probs.len() / cols;
    let probs = Tensor::from_vec(rows, cols, probs).map_err(ModelError::from)?;
    let targets = Tensor::from_vec(rows, cols, targets).map_err(ModelError::from)?;
    Ok(objective::metrics(&probs, &targets, task)?)
}

/// Metrics of `model` on one split. Neighborhoods are drawn from the fixed
/// evaluation streams of `seed`, so repeated calls agree exactly.
pub fn evaluate(g: &Graph, model: &Model, cfg: &TrainConfig, split: Split) -> Result<Metrics, TrainError> {
    let task = model.spec().task;
    let items = Items::of(g, task, split);
    if items.len() == 0 {
        return Err(TrainError::Config(format!("{split} split is empty")));
    }
    let sampler = Sampler::new(g, cfg.sampler_config())?;
    evaluate_items(model, &sampler, &items, cfg.batch_size_for(task), cfg.seed)
}

/// L2-normalized embeddings of `nodes`, one row each, in the given order.
/// Uses the same batching and neighborhood streams as node evaluation.
pub fn embed(g: &Graph, model: &Model, cfg: &TrainConfig, nodes: &[usize]) -> Result<Tensor<f32>, TrainError> {
    if g.feature_dim() != model.spec().input_dim {
        return Err(TrainError::Config(format!(
            "graph has {} feature columns, checkpoint expects {}",
            g.feature_dim(),
            model.spec().input_dim
        )));
    }
    let sampler = Sampler::new(g, cfg.sampler_config())?;
    let width = model.spec().embedding_dim();
    let mut out = Vec::with_capacity(nodes.len() * width);
    let size = cfg.batch_size_for(Task::Multiclass);
    for (b, chunk) in nodes.chunks(size).enumerate() {
        let mb = sampler.build_minibatch(chunk, &mut rng::stream(cfg.seed, "eval", 0, b as u64))?;
        let mut tape = Tape::inference();
        let fwd = model.forward_graph(&mut tape, g, &mb)?;
        let emb = tape.value(fwd.embeddings);
        let row_of: HashMap<usize, usize> = mb.targets().iter().enumerate().map(|(r, &v)| (v, r)).collect();
        for v in chunk {
            out.extend_from_slice(emb.row(row_of[v]));
        }
    }
    Ok(Tensor::from_vec(nodes.len(), width, out).map_err(ModelError::from)?)
}

/// Attention weights over the aggregators for every layer's rows while
/// embedding `nodes`, one JSON object per (layer, node).
pub fn attention_dump(
    g: &Graph,
    model: &Model,
    cfg: &TrainConfig,
    nodes: &[usize],
) -> Result<Vec<serde_json::Value>, TrainError> {
    let sampler = Sampler::new(g, cfg.sampler_config())?;
    let mut out = Vec::new();
    for (b, chunk) in nodes.chunks(cfg.batch_size_for(Task::Multiclass)).enumerate() {
        let mb = sampler.build_minibatch(chunk, &mut rng::stream(cfg.seed, "eval", 0, b as u64))?;
        let mut tape = Tape::inference();
        let fwd = model.forward_graph(&mut tape, g, &mb)?;
        out.extend(model.attention_records(&tape, &fwd, &mb));
    }
    Ok(out)
}

/// Writes embeddings in the binary feature format.
pub fn write_embeddings(path: &Path, emb: &Tensor<f32>) -> Result<(), TrainError> {
    gio::write_features(path, emb.rows(), emb.cols(), emb.data())?;
    Ok(())
}

/// One JSON object per line, no timing fields.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<(), TrainError> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in history {
        serde_json::to_writer(&mut w, rec).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Saves the selected parameters with the model layout, the training
/// configuration and the metrics they reached.
pub fn save_checkpoint(path: &Path, out: &TrainOutcome, cfg: &TrainConfig) -> Result<(), TrainError> {
    let meta = serde_json::json!({
        "spec": out.model.spec(),
        "train": cfg,
        "best_epoch": out.best_epoch,
        "metrics": { "val": out.best_val, "test": out.test },
    });
    checkpoint::save(path, out.model.params(), Some(out.adam.clone()), meta)?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Loaded {
    pub model: Model,
    pub config: TrainConfig,
    pub meta: serde_json::Value,
}

pub fn load_checkpoint(path: &Path) -> Result<Loaded, TrainError> {
    let (manifest, params) = checkpoint::load::<f32>(path)?;
    let field = |k: &str| {
        manifest
            .meta
            .get(k)
            .cloned()
            .ok_or_else(|| TrainError::Config(format!("checkpoint metadata lacks {k:?}")))
    };
    let spec: ModelSpec = serde_json::from_value(field("spec")?)
        .map_err(|e| TrainError::Config(format!("checkpoint model spec: {e}")))?;
    let config: TrainConfig = serde_json::from_value(field("train")?)
        .map_err(|e| TrainError::Config(format!("checkpoint train config: {e}")))?;
    Ok(Loaded {
        model: Model::from_params(spec, params)?,
        config,
        meta: manifest.meta,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedReport {
    pub seeds: Vec<u64>,
    /// Test monitor (micro-F1 or AUC) per seed.
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Trains once per seed and summarizes the test monitor metric.
pub fn train_seeds(g: &Graph, cfg: &TrainConfig, seeds: &[u64]) -> Result<SeedReport, TrainError> {
    let mut scores = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let out = train(g, &TrainConfig { seed, ..cfg.clone() })?;
        let test = out
            .test
            .ok_or_else(|| TrainError::Config("test split is empty".into()))?;
        scores.push(test.monitor());
    }
    let (mean, std) = objective::mean_std(&scores);
    Ok(SeedReport {
        seeds: seeds.to_vec(),
        scores,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests;
