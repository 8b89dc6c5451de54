//! The K-layer GAIN model and its prediction heads.

mod layer;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::rng;
use crate::sampler::MiniBatch;
use crate::tensor::{NumericFault, ParamSet, Real, Tape, Tensor, TensorError, Var};

pub use layer::LayerAux;

/// The explicit cross `x · (y · w)` used inside every layer: a per-row
/// scalar times `x`, equal to `(x yᵀ) w` row by row.
pub fn cross_term<T: Real>(tape: &mut Tape<T>, x: Var, y: Var, w: Var) -> Result<Var, ModelError> {
    layer::LayerParams::cross_term(tape, x, y, w)
}
use layer::{LayerParams, Linear};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Numeric(#[from] NumericFault),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[serde(alias = "mean_pool")]
    Mean,
    #[serde(alias = "max_pool")]
    Max,
    #[serde(alias = "importance_pool")]
    Importance,
}

impl FromStr for Aggregator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "mean_pool" => Ok(Self::Mean),
            "max" | "max_pool" => Ok(Self::Max),
            "importance" | "importance_pool" => Ok(Self::Importance),
            other => Err(format!("unknown aggregator {other:?} (expected mean|max|importance)")),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Max => "max",
            Self::Importance => "importance",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Multilabel,
    Multiclass,
    Edge,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Multilabel => "multilabel",
            Self::Multiclass => "multiclass",
            Self::Edge => "edge",
        })
    }
}

/// Named ablations: `gain-1` drops the cross, `gain-2` the autoencoder,
/// `gain-3/4/5` keep only the mean / max / importance aggregator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "gain-1")]
    NoCross,
    #[serde(rename = "gain-2")]
    NoAutoencoder,
    #[serde(rename = "gain-3")]
    MeanOnly,
    #[serde(rename = "gain-4")]
    MaxOnly,
    #[serde(rename = "gain-5")]
    ImportanceOnly,
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full" | "gain" => Ok(Self::Full),
            "gain-1" => Ok(Self::NoCross),
            "gain-2" => Ok(Self::NoAutoencoder),
            "gain-3" => Ok(Self::MeanOnly),
            "gain-4" => Ok(Self::MaxOnly),
            "gain-5" => Ok(Self::ImportanceOnly),
            other => Err(format!("unknown variant {other:?} (expected full|gain-1..gain-5)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `d_k` per layer; layer `k` outputs `2·d_k` columns.
    pub dims: Vec<usize>,
    pub aggregators: Vec<Aggregator>,
    pub cross: bool,
    pub autoencoder: bool,
    /// Hidden width of the two hidden layers in the edge head.
    pub edge_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dims: vec![64, 32],
            aggregators: vec![Aggregator::Mean, Aggregator::Max, Aggregator::Importance],
            cross: true,
            autoencoder: true,
            edge_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(mut self, v: Variant) -> Self {
        match v {
            Variant::Full => {}
            Variant::NoCross => self.cross = false,
            Variant::NoAutoencoder => self.autoencoder = false,
            Variant::MeanOnly => self.aggregators = vec![Aggregator::Mean],
            Variant::MaxOnly => self.aggregators = vec![Aggregator::Max],
            Variant::ImportanceOnly => self.aggregators = vec![Aggregator::Importance],
        }
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(ModelError::Config("layer widths must be non-empty and positive".into()));
        }
        if self.aggregators.is_empty() {
            return Err(ModelError::Config("at least one aggregator required".into()));
        }
        let mut seen = self.aggregators.clone();
        seen.sort_by_key(|a| *a as u8);
        seen.dedup();
        if seen.len() != self.aggregators.len() {
            return Err(ModelError::Config("aggregators listed twice".into()));
        }
        if self.edge_hidden == 0 {
            return Err(ModelError::Config("edge_hidden must be positive".into()));
        }
        Ok(())
    }
}

/// Everything needed to rebuild a model's parameter layout; stored in the
/// checkpoint manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub config: ModelConfig,
    pub input_dim: usize,
    /// Per-layer sample caps (importance gate lengths).
    pub sample_sizes: Vec<usize>,
    pub task: Task,
    /// Classes for node tasks; ignored for edges.
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn num_layers(&self) -> usize {
        self.config.dims.len()
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.config.dims.last().copied().unwrap_or(0)
    }

    fn validate(&self) -> Result<(), ModelError> {
        self.config.validate()?;
        if self.sample_sizes.len() != self.config.dims.len() {
            return Err(ModelError::Config(format!(
                "{} sample sizes for {} layers",
                self.sample_sizes.len(),
                self.config.dims.len()
            )));
        }
        if self.input_dim == 0 {
            return Err(ModelError::Config("input width must be positive".into()));
        }
        if self.task != Task::Edge && self.num_classes == 0 {
            return Err(ModelError::Config("node task needs at least one class".into()));
        }
        Ok(())
    }

    fn layer_dims(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut d_in = self.input_dim;
        self.config.dims.iter().enumerate().map(move |(k, &d)| {
            let item = (k, d_in, d);
            d_in = 2 * d;
            item
        })
    }
}

#[derive(Clone, Debug)]
enum Head {
    Node(Linear),
    Edge([Linear; 3]),
}

/// Forward results for one minibatch.
#[derive(Clone, Debug)]
pub struct Forward {
    /// L2-normalized embeddings, rows in `B^K` order.
    pub embeddings: Var,
    /// Per-layer auxiliaries, `layers[k-1]` for layer `k`.
    pub layers: Vec<LayerAux>,
}

#[derive(Clone, Debug)]
pub struct GainModel<T> {
    spec: ModelSpec,
    params: ParamSet<T>,
    layers: Vec<LayerParams>,
    head: Head,
}

impl<T: Real> GainModel<T> {
    /// Fresh model: Glorot-uniform matrices, zero biases and gates.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = rng::stream(seed, "init", 0, 0);
        let mut params = ParamSet::new();
        let cfg = &spec.config;
        let layers = spec
            .layer_dims()
            .map(|(k, d_in, d)| {
                LayerParams::new(
                    &mut params,
                    &mut rng,
                    &format!("layer{}", k + 1),
                    &cfg.aggregators,
                    d_in,
                    d,
                    spec.sample_sizes[k],
                    cfg.cross,
                    cfg.autoencoder,
                )
            })
            .collect();
        let emb = spec.embedding_dim();
        let head = match spec.task {
            Task::Edge => Head::Edge([
                Linear::new(&mut params, &mut rng, "head.fc1", 2 * emb, cfg.edge_hidden),
                Linear::new(&mut params, &mut rng, "head.fc2", cfg.edge_hidden, cfg.edge_hidden),
                Linear::new(&mut params, &mut rng, "head.fc3", cfg.edge_hidden, 1),
            ]),
            _ => Head::Node(Linear::new(&mut params, &mut rng, "head.out", emb, spec.num_classes)),
        };
        Ok(Self {
            spec,
            params,
            layers,
            head,
        })
    }

    /// Rebinds a parameter set (e.g. from a checkpoint) to its layout.
    pub fn from_params(spec: ModelSpec, params: ParamSet<T>) -> Result<Self, ModelError> {
        spec.validate()?;
        let cfg = &spec.config;
        let layers = spec
            .layer_dims()
            .map(|(k, d_in, d)| {
                LayerParams::lookup(
                    &params,
                    &format!("layer{}", k + 1),
                    &cfg.aggregators,
                    d_in,
                    d,
                    spec.sample_sizes[k],
                    cfg.cross,
                    cfg.autoencoder,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let head = match spec.task {
            Task::Edge => Head::Edge([
                Linear::lookup(&params, "head.fc1")?,
                Linear::lookup(&params, "head.fc2")?,
                Linear::lookup(&params, "head.fc3")?,
            ]),
            _ => Head::Node(Linear::lookup(&params, "head.out")?),
        };
        let expected = Self::new(spec.clone(), 0)?;
        if expected.params.len() != params.len() {
            return Err(ModelError::Config(format!(
                "parameter count {} does not match architecture ({})",
                params.len(),
                expected.params.len()
            )));
        }
        for (_, name, t) in expected.params.iter() {
            let got = params.by_name(name).expect("looked up above");
            if got.shape() != t.shape() {
                return Err(ModelError::Config(format!(
                    "{name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(Self {
            spec,
            params,
            layers,
            head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    pub fn cast<U: Real>(&self) -> GainModel<U> {
        GainModel {
            spec: self.spec.clone(),
            params: self.params.cast(),
            layers: self.layers.clone(),
            head: self.head.clone(),
        }
    }

    /// Feature rows of `B^0` as a tensor.
    pub fn input_features(&self, g: &Graph, nodes: &[usize]) -> Result<Tensor<T>, ModelError> {
        let f = g.features();
        if f.cols() != self.spec.input_dim {
            return Err(ModelError::Config(format!(
                "graph has {} feature columns, model expects {}",
                f.cols(),
                self.spec.input_dim
            )));
        }
        let mut data = Vec::with_capacity(nodes.len() * f.cols());
        for &v in nodes {
            data.extend(f.row(v).iter().map(|&x| T::lit(x as f64)));
        }
        Ok(Tensor::from_vec(nodes.len(), f.cols(), data)?)
    }

    /// Runs layers `1..=K` over `batch` from the `B^0` rows in `input`.
    pub fn forward(&self, tape: &mut Tape<T>, input: Var, batch: &MiniBatch) -> Result<Forward, ModelError> {
        if batch.num_hops() != self.layers.len() {
            return Err(ModelError::Config(format!(
                "minibatch has {} hops, model has {} layers",
                batch.num_hops(),
                self.layers.len()
            )));
        }
        if tape.shape(input).0 != batch.inputs().len() {
            return Err(ModelError::Config("input rows do not match B^0".into()));
        }
        let mut h = input;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (layer, hop) in self.layers.iter().zip(&batch.hops) {
            let aux = layer.forward(tape, &self.params, h, hop)?;
            h = aux.output;
            layers.push(aux);
        }
        let embeddings = tape.normalize_rows(h);
        tape.check()?;
        Ok(Forward { embeddings, layers })
    }

    /// Convenience: features, tape input and forward in one call.
    pub fn forward_graph(&self, tape: &mut Tape<T>, g: &Graph, batch: &MiniBatch) -> Result<Forward, ModelError> {
        let x = self.input_features(g, batch.inputs())?;
        let input = tape.constant(x);
        self.forward(tape, input, batch)
    }

    /// Class logits for node tasks.
    pub fn node_logits(&self, tape: &mut Tape<T>, emb: Var) -> Result<Var, ModelError> {
        match &self.head {
            Head::Node(out) => out.apply(tape, &self.params, emb),
            Head::Edge(_) => Err(ModelError::Config("node prediction on an edge model".into())),
        }
    }

    /// Per-class sigmoid (multilabel) or row softmax (multiclass).
    pub fn node_probabilities(&self, tape: &mut Tape<T>, emb: Var) -> Result<Var, ModelError> {
        let logits = self.node_logits(tape, emb)?;
        Ok(match self.spec.task {
            Task::Multilabel => tape.sigmoid(logits),
            Task::Multiclass => tape.row_softmax(logits),
            Task::Edge => unreachable!("checked by node_logits"),
        })
    }

    /// `σ(FC₃(ReLU(FC₂(ReLU(FC₁(h_src ∥ h_dst))))))`, one row per pair;
    /// `src`/`dst` index rows of `emb`.
    pub fn edge_probabilities(
        &self,
        tape: &mut Tape<T>,
        emb: Var,
        src: Arc<Vec<usize>>,
        dst: Arc<Vec<usize>>,
    ) -> Result<Var, ModelError> {
        let Head::Edge([fc1, fc2, fc3]) = &self.head else {
            return Err(ModelError::Config("edge prediction on a node model".into()));
        };
        let a = tape.gather_rows(emb, src)?;
        let b = tape.gather_rows(emb, dst)?;
        let x = tape.concat_cols(&[a, b])?;
        let x = fc1.apply_relu(tape, &self.params, x)?;
        let x = fc2.apply_relu(tape, &self.params, x)?;
        let logit = fc3.apply(tape, &self.params, x)?;
        Ok(tape.sigmoid(logit))
    }

    /// One JSON object per `(layer, node)` with the attention weights over
    /// the configured aggregators.
    pub fn attention_records(&self, tape: &Tape<T>, fwd: &Forward, batch: &MiniBatch) -> Vec<serde_json::Value> {
        let names: Vec<String> = self.spec.config.aggregators.iter().map(|a| a.to_string()).collect();
        let mut out = Vec::new();
        for (k, aux) in fwd.layers.iter().enumerate() {
            let alpha = tape.value(aux.alpha);
            for (r, &node) in batch.frontiers[k + 1].iter().enumerate() {
                let w: Vec<f64> = alpha.row(r).iter().map(|x| x.as_f64()).collect();
                out.push(serde_json::json!({
                    "layer": k + 1,
                    "node": node,
                    "weights": w,
                    "aggregators": names,
                }));
            }
        }
        out
    }
}
