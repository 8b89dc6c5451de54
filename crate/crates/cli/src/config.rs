//! Layered training configuration: defaults, then a JSON file, then flags.

use std::path::Path;

use clap::Args;
use gain_core::model::{Aggregator, Variant};
use gain_core::sampler::Heuristic;
use gain_core::trainer::TrainConfig;
use serde_json::{Map, Value};

use crate::Fail;

/// Flags shared by every command that builds a [`TrainConfig`].
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigFlags {
    /// JSON file with TrainConfig fields; missing fields keep their defaults.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// jaccard | cn | degree | uniform
    #[arg(long)]
    pub heuristic: Option<Heuristic>,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    /// Neighbors kept per layer, e.g. 25,10.
    #[arg(long, value_delimiter = ',')]
    pub sample_sizes: Option<Vec<usize>>,
    /// Any of mean,max,importance.
    #[arg(long, value_delimiter = ',')]
    pub aggregators: Option<Vec<Aggregator>>,
    /// Hidden width per layer, e.g. 64,32.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// full | gain-1 .. gain-5
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Reuse the first epoch's neighborhoods instead of redrawing.
    #[arg(long)]
    pub no_redraw: bool,
    /// Any config field as key=value; the value is read as JSON, falling
    /// back to a plain string. Named flags win over --set.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Parses `key=value` pairs into JSON values.
pub fn parse_sets(sets: &[String]) -> Result<Vec<(String, Value)>, Fail> {
    sets.iter()
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Fail::Usage(format!("--set expects key=value, got {s:?}")))?;
            let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Reads a JSON object from `path`.
pub fn read_object(path: &Path) -> Result<Map<String, Value>, Fail> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Fail::Usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Fail::Usage(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(Fail::Usage(format!("{}: {e}", path.display()))),
    }
}

fn to_value<T: serde::Serialize>(x: T) -> Value {
    serde_json::to_value(x).expect("config values serialize")
}

impl ConfigFlags {
    fn overrides(&self) -> Result<Vec<(String, Value)>, Fail> {
        let mut out = parse_sets(&self.set)?;
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        put("seed", self.seed.map(to_value));
        put("heuristic", self.heuristic.map(to_value));
        put("epsilon", self.epsilon.map(to_value));
        put("sample_sizes", self.sample_sizes.as_ref().map(to_value));
        put("aggregators", self.aggregators.as_ref().map(to_value));
        put("dims", self.dims.as_ref().map(to_value));
        put("variant", self.variant.map(to_value));
        put("lambda1", self.lambda1.map(to_value));
        put("lambda2", self.lambda2.map(to_value));
        put("learning_rate", self.lr.map(to_value));
        put("epochs", self.epochs.map(to_value));
        put("batch_size", self.batch_size.map(to_value));
        put("patience", self.patience.map(to_value));
        put("workers", self.workers.map(to_value));
        put("redraw", self.no_redraw.then_some(Value::Bool(false)));
        Ok(out)
    }

    /// Defaults, overlaid by the config file, overlaid by flags; validated.
    pub fn resolve(&self) -> Result<TrainConfig, Fail> {
        let cfg = self.merged()?;
        cfg.validate().map_err(|e| Fail::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Like [`resolve`](Self::resolve) without validation.
    pub fn merged(&self) -> Result<TrainConfig, Fail> {
        let mut merged = match to_value(TrainConfig::default()) {
            Value::Object(m) => m,
            _ => unreachable!("TrainConfig serializes to an object"),
        };
        if let Some(path) = &self.config {
            merged.extend(read_object(path)?);
        }
        merged.extend(self.overrides()?);
        serde_json::from_value(Value::Object(merged)).map_err(|e| Fail::Usage(format!("config: {e}")))
    }
}
