//! Training loss (supervised + graph regularization + reconstruction) and
//! evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::model::{LayerAux, Task};
use crate::tensor::{Real, Tape, Tensor, TensorError, Var};

/// Probabilities are clipped to `[CLIP, 1 - CLIP]` before any logarithm.
pub const CLIP: f64 = 1e-7;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("label {label} outside 0..{num_classes}")]
    LabelRange { label: usize, num_classes: usize },
    #[error("target values must be 0 or 1, found {0}")]
    Target(f64),
    #[error("predictions are {pred:?} but targets are {target:?}")]
    Shape {
        pred: (usize, usize),
        target: (usize, usize),
    },
    #[error("empty evaluation set")]
    Empty,
    #[error("AUC is undefined: no {0} examples")]
    AucUndefined(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One-hot rows for single-label classes.
pub fn one_hot<T: Real>(labels: &[usize], num_classes: usize) -> Result<Tensor<T>, ObjectiveError> {
    let mut t = Tensor::zeros(labels.len(), num_classes);
    for (r, &c) in labels.iter().enumerate() {
        if c >= num_classes {
            return Err(ObjectiveError::LabelRange { label: c, num_classes });
        }
        t.set(r, c, T::one());
    }
    Ok(t)
}

fn check_targets<T: Real>(pred: (usize, usize), target: &Tensor<T>) -> Result<(), ObjectiveError> {
    if pred != target.shape() {
        return Err(ObjectiveError::Shape {
            pred,
            target: target.shape(),
        });
    }
    if let Some(bad) = target.data().iter().find(|&&y| y != T::zero() && y != T::one()) {
        return Err(ObjectiveError::Target(bad.as_f64()));
    }
    Ok(())
}

/// Mean cross-entropy over the batch. `probs` holds sigmoid outputs for
/// multilabel and edge tasks (binary cross-entropy averaged over classes,
/// then samples) or softmax rows for multiclass.
pub fn supervised_loss<T: Real>(
    tape: &mut Tape<T>,
    probs: Var,
    targets: &Tensor<T>,
    task: Task,
) -> Result<Var, ObjectiveError> {
    check_targets(tape.shape(probs), targets)?;
    let m = targets.rows();
    if m == 0 {
        return Err(ObjectiveError::Empty);
    }
    let p = tape.clamp(probs, T::lit(CLIP), T::lit(1.0 - CLIP));
    let y = tape.constant(targets.clone());
    let log_p = tape.ln(p);
    let pos = tape.mul(y, log_p)?;
    match task {
        Task::Multiclass => {
            let s = tape.sum(pos);
            Ok(tape.scale(s, T::lit(-1.0 / m as f64)))
        }
        Task::Multilabel | Task::Edge => {
            let q = tape.one_minus(p);
            let log_q = tape.ln(q);
            let not_y = tape.constant(targets.map(|v| T::one() - v));
            let neg = tape.mul(not_y, log_q)?;
            let both = tape.add(pos, neg)?;
            let mean = tape.mean(both);
            Ok(tape.scale(mean, T::lit(-1.0)))
        }
    }
}

/// Batch mean of `‖h'_v − h'_N‖₂`.
pub fn graph_regularization<T: Real>(tape: &mut Tape<T>, enc_v: Var, enc_n: Var) -> Result<Var, ObjectiveError> {
    let diff = tape.sub(enc_v, enc_n)?;
    let norms = tape.row_norm(diff);
    Ok(tape.mean(norms))
}

/// Batch mean of `‖h_v − ĥ_v‖₂ + ‖h_N − ĥ_N‖₂`.
pub fn reconstruction_loss<T: Real>(
    tape: &mut Tape<T>,
    h_v: Var,
    dec_v: Var,
    h_n: Var,
    dec_n: Var,
) -> Result<Var, ObjectiveError> {
    let a = tape.sub(h_v, dec_v)?;
    let b = tape.sub(h_n, dec_n)?;
    let na = tape.row_norm(a);
    let nb = tape.row_norm(b);
    let per_row = tape.add(na, nb)?;
    Ok(tape.mean(per_row))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Sum the regularizers over every layer instead of the last one only.
    pub all_layers: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.008,
            lambda2: 0.4,
            all_layers: false,
        }
    }
}

/// Tape handles of the loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub sup: Var,
    pub greg: Var,
    pub rec: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub sup: f64,
    pub greg: f64,
    pub rec: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LossBreakdown {
    pub fn read<T: Real>(tape: &Tape<T>, vars: &LossVars, w: &LossWeights) -> Self {
        let get = |v: Var| tape.value(v).item().as_f64();
        Self {
            total: get(vars.total),
            sup: get(vars.sup),
            greg: get(vars.greg),
            rec: get(vars.rec),
            lambda1: w.lambda1,
            lambda2: w.lambda2,
        }
    }

    /// `sup + λ₁·greg + λ₂·rec` in f64.
    pub fn recombined(&self) -> f64 {
        self.sup + self.lambda1 * self.greg + self.lambda2 * self.rec
    }
}

/// `L = L_sup + λ₁·L_greg + λ₂·L_rec`. Models without an autoencoder
/// contribute a zero reconstruction term.
pub fn total_loss<T: Real>(
    tape: &mut Tape<T>,
    sup: Var,
    layers: &[LayerAux],
    w: &LossWeights,
) -> Result<LossVars, ObjectiveError> {
    let used = match (w.all_layers, layers.last()) {
        (_, None) => &layers[..0],
        (true, _) => layers,
        (false, Some(_)) => &layers[layers.len() - 1..],
    };
    let mut greg = tape.constant(Tensor::scalar(T::zero()));
    let mut rec = tape.constant(Tensor::scalar(T::zero()));
    for aux in used {
        let g = graph_regularization(tape, aux.enc_v, aux.enc_n)?;
        greg = tape.add(greg, g)?;
        if let Some((dv, dn)) = aux.dec {
            let r = reconstruction_loss(tape, aux.h_v, dv, aux.h_n, dn)?;
            rec = tape.add(rec, r)?;
        }
    }
    let a = tape.scale(greg, T::lit(w.lambda1));
    let b = tape.scale(rec, T::lit(w.lambda2));
    let total = tape.add(sup, a)?;
    let total = tape.add(total, b)?;
    Ok(LossVars { total, sup, greg, rec })
}

/// Pooled TP/FP/FN F1. Multilabel thresholds at 0.5, multiclass takes the
/// arg-max (first on ties), edges threshold the single column at 0.5. With
/// no positives predicted or present the score is 1.
pub fn micro_f1(probs: &Tensor<f64>, targets: &Tensor<f64>, task: Task) -> Result<f64, ObjectiveError> {
    check_targets(probs.shape(), targets)?;
    if probs.rows() == 0 {
        return Err(ObjectiveError::Empty);
    }
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for r in 0..probs.rows() {
        let (p, y) = (probs.row(r), targets.row(r));
        match task {
            Task::Multiclass => {
                let pred = argmax(p);
                if y[pred] == 1.0 {
                    tp += 1;
                } else {
                    fp += 1;
                    fneg += y.iter().filter(|&&t| t == 1.0).count() as u64;
                }
            }
            Task::Multilabel | Task::Edge => {
                for (&pi, &yi) in p.iter().zip(y) {
                    match (pi > 0.5, yi == 1.0) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fneg += 1,
                        (false, false) => {}
                    }
                }
            }
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 { 1.0 } else { 2.0 * tp as f64 / denom as f64 })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Mann-Whitney estimate of the ROC area: the fraction of (positive,
/// negative) pairs ranked correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, ObjectiveError> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 {
        return Err(ObjectiveError::AucUndefined("positive"));
    }
    if n_neg == 0 {
        return Err(ObjectiveError::AucUndefined("negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // ranks are 1-based; tied runs share their average rank
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Clipped binary cross-entropy averaged over every entry.
pub fn logloss(probs: &[f64], targets: &[f64]) -> Result<f64, ObjectiveError> {
    assert_eq!(probs.len(), targets.len());
    if probs.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    let s: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(CLIP, 1.0 - CLIP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(s / probs.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    pub logloss: f64,
    pub count: usize,
}

impl Metrics {
    /// Micro-F1 for node tasks, AUC for edges.
    pub fn monitor(&self) -> f64 {
        self.micro_f1.or(self.auc).unwrap_or(f64::NAN)
    }

    /// Higher monitor wins; equal monitors fall back to lower logloss.
    pub fn better_than(&self, other: &Metrics) -> bool {
        let (a, b) = (self.monitor(), other.monitor());
        a > b || (a == b && self.logloss < other.logloss)
    }
}

/// Node tasks report micro-F1, edges AUC; both report logloss (categorical
/// for multiclass, binary otherwise).
pub fn metrics(probs: &Tensor<f64>, targets: &Tensor<f64>, task: Task) -> Result<Metrics, ObjectiveError> {
    check_targets(probs.shape(), targets)?;
    if probs.rows() == 0 {
        return Err(ObjectiveError::Empty);
    }
    let count = probs.rows();
    Ok(match task {
        Task::Edge => {
            let labels: Vec<bool> = targets.data().iter().map(|&y| y == 1.0).collect();
            Metrics {
                micro_f1: None,
                auc: Some(auc(probs.data(), &labels)?),
                logloss: logloss(probs.data(), targets.data())?,
                count,
            }
        }
        Task::Multilabel => Metrics {
            micro_f1: Some(micro_f1(probs, targets, task)?),
            auc: None,
            logloss: logloss(probs.data(), targets.data())?,
            count,
        },
        Task::Multiclass => {
            let ce: f64 = probs
                .data()
                .iter()
                .zip(targets.data())
                .filter(|(_, &y)| y == 1.0)
                .map(|(&p, _)| -p.clamp(CLIP, 1.0 - CLIP).ln())
                .sum();
            Metrics {
                micro_f1: Some(micro_f1(probs, targets, task)?),
                auc: None,
                logloss: ce / count as f64,
                count,
            }
        }
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
