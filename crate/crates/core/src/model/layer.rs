//! One GAIN layer: aggregators, aggregator-level attention, shared
//! autoencoder, rank-one cross, two-direction GRU fusion and the final
//! projection.

use std::sync::Arc;

use rand::Rng as _;

use super::{Aggregator, ModelError};
use crate::rng::Rng;
use crate::sampler::Hop;
use crate::tensor::{ParamId, ParamSet, Real, Tape, Tensor, Var};

pub(crate) fn glorot<T: Real>(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.random_range(-limit..=limit)))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("glorot shape")
}

/// `x·W + b`.
pub(crate) fn fc<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var, ModelError> {
    let xw = tape.matmul(x, w)?;
    Ok(tape.add_row(xw, b)?)
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Real>(params: &mut ParamSet<T>, rng: &mut Rng, name: &str, d_in: usize, d_out: usize) -> Self {
        Self {
            w: params.insert(format!("{name}.weight"), glorot(rng, d_in, d_out)),
            b: params.insert(format!("{name}.bias"), Tensor::zeros(1, d_out)),
        }
    }

    pub fn lookup<T: Real>(params: &ParamSet<T>, name: &str) -> Result<Self, ModelError> {
        Ok(Self {
            w: find(params, &format!("{name}.weight"))?,
            b: find(params, &format!("{name}.bias"))?,
        })
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, params: &ParamSet<T>, x: Var) -> Result<Var, ModelError> {
        let w = tape.param(params, self.w);
        let b = tape.param(params, self.b);
        fc(tape, x, w, b)
    }

    /// `ReLU(x·W + b)`.
    pub fn apply_relu<T: Real>(&self, tape: &mut Tape<T>, params: &ParamSet<T>, x: Var) -> Result<Var, ModelError> {
        let y = self.apply(tape, params, x)?;
        Ok(tape.relu(y))
    }
}

pub(crate) fn find<T: Real>(params: &ParamSet<T>, name: &str) -> Result<ParamId, ModelError> {
    params
        .id(name)
        .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))
}

const GRU_NAMES: [&str; 6] = ["w_z", "u_z", "w_r", "u_r", "w", "u"];

#[derive(Clone, Debug)]
pub(crate) struct Gru {
    /// `W_z, U_z, W_r, U_r, W, U`, all `d_in × d_in`.
    pub m: [ParamId; 6],
}

impl Gru {
    fn new<T: Real>(params: &mut ParamSet<T>, rng: &mut Rng, name: &str, d: usize) -> Self {
        Self {
            m: GRU_NAMES.map(|n| params.insert(format!("{name}.{n}"), glorot(rng, d, d))),
        }
    }

    fn lookup<T: Real>(params: &ParamSet<T>, name: &str) -> Result<Self, ModelError> {
        let ids = GRU_NAMES
            .iter()
            .map(|n| find(params, &format!("{name}.{n}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            m: ids.try_into().expect("six GRU matrices"),
        })
    }

    /// Two-step sequence `(a, b)`: `z = σ(aW_z + bU_z)`, `r = σ(aW_r + bU_r)`,
    /// `h̃ = tanh(aW + (r⊙b)U)`, `out = (1−z)⊙b + z⊙h̃`.
    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, params: &ParamSet<T>, a: Var, b: Var) -> Result<Var, ModelError> {
        let [wz, uz, wr, ur, w, u] = self.m.map(|id| tape.param(params, id));
        let az = tape.matmul(a, wz)?;
        let bz = tape.matmul(b, uz)?;
        let z = tape.add(az, bz)?;
        let z = tape.sigmoid(z);
        let ar = tape.matmul(a, wr)?;
        let br = tape.matmul(b, ur)?;
        let r = tape.add(ar, br)?;
        let r = tape.sigmoid(r);
        let aw = tape.matmul(a, w)?;
        let rb = tape.mul(r, b)?;
        let rbu = tape.matmul(rb, u)?;
        let cand = tape.add(aw, rbu)?;
        let cand = tape.tanh(cand);
        let keep = tape.one_minus(z);
        let old = tape.mul(keep, b)?;
        let new = tape.mul(z, cand)?;
        Ok(tape.add(old, new)?)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LayerParams {
    pub aggregators: Vec<Aggregator>,
    pub d_in: usize,
    /// `FC_θ` (d_in→d_in) and `FC_α` (2d_in→1); absent with one aggregator.
    pub attention: Option<(Linear, Linear)>,
    pub gates: Option<ParamId>,
    pub encoder: Option<Linear>,
    pub decoder: Option<Linear>,
    /// Cross vectors `W₁`, `W₂`, stored as columns.
    pub cross: Option<(ParamId, ParamId)>,
    pub gru_v: Gru,
    pub gru_n: Gru,
    pub proj_v: Linear,
    pub proj_n: Linear,
}

/// Values one layer exposes to the loss and to attention dumps. Rows follow
/// `B^k`.
#[derive(Clone, Copy, Debug)]
pub struct LayerAux {
    /// Raw center rows `h_v`.
    pub h_v: Var,
    /// Fused neighborhood `h_N(v)`.
    pub h_n: Var,
    /// Encoded `h'_v`, `h'_N`; the raw rows when the autoencoder is off.
    pub enc_v: Var,
    pub enc_n: Var,
    /// Reconstructions `ĥ_v`, `ĥ_N`.
    pub dec: Option<(Var, Var)>,
    /// Attention weights, one column per aggregator.
    pub alpha: Var,
    /// `CONCAT(h_new_v, h_new_N)`.
    pub output: Var,
}

impl LayerParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        params: &mut ParamSet<T>,
        rng: &mut Rng,
        prefix: &str,
        aggregators: &[Aggregator],
        d_in: usize,
        d: usize,
        sample_size: usize,
        cross: bool,
        autoencoder: bool,
    ) -> Self {
        let attention = (aggregators.len() > 1).then(|| {
            (
                Linear::new(params, rng, &format!("{prefix}.fc_theta"), d_in, d_in),
                Linear::new(params, rng, &format!("{prefix}.fc_alpha"), 2 * d_in, 1),
            )
        });
        let gates = aggregators
            .contains(&Aggregator::Importance)
            .then(|| params.insert(format!("{prefix}.gates"), Tensor::zeros(1, sample_size)));
        let (encoder, decoder) = if autoencoder {
            (
                Some(Linear::new(params, rng, &format!("{prefix}.encoder"), d_in, d)),
                Some(Linear::new(params, rng, &format!("{prefix}.decoder"), d, d_in)),
            )
        } else {
            (None, None)
        };
        let cross_width = if autoencoder { d } else { d_in };
        let cross = cross.then(|| {
            (
                params.insert(format!("{prefix}.cross_w1"), glorot(rng, cross_width, 1)),
                params.insert(format!("{prefix}.cross_w2"), glorot(rng, cross_width, 1)),
            )
        });
        Self {
            aggregators: aggregators.to_vec(),
            d_in,
            attention,
            gates,
            encoder,
            decoder,
            cross,
            gru_v: Gru::new(params, rng, &format!("{prefix}.gru_v"), d_in),
            gru_n: Gru::new(params, rng, &format!("{prefix}.gru_n"), d_in),
            proj_v: Linear::new(params, rng, &format!("{prefix}.proj_v"), d_in, d),
            proj_n: Linear::new(params, rng, &format!("{prefix}.proj_n"), d_in, d),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn lookup<T: Real>(
        params: &ParamSet<T>,
        prefix: &str,
        aggregators: &[Aggregator],
        d_in: usize,
        d: usize,
        sample_size: usize,
        cross: bool,
        autoencoder: bool,
    ) -> Result<Self, ModelError> {
        let attention = if aggregators.len() > 1 {
            Some((
                Linear::lookup(params, &format!("{prefix}.fc_theta"))?,
                Linear::lookup(params, &format!("{prefix}.fc_alpha"))?,
            ))
        } else {
            None
        };
        let gates = if aggregators.contains(&Aggregator::Importance) {
            let id = find(params, &format!("{prefix}.gates"))?;
            if params.get(id).shape() != (1, sample_size) {
                return Err(ModelError::Config(format!("{prefix}.gates has the wrong length")));
            }
            Some(id)
        } else {
            None
        };
        let (encoder, decoder) = if autoencoder {
            (
                Some(Linear::lookup(params, &format!("{prefix}.encoder"))?),
                Some(Linear::lookup(params, &format!("{prefix}.decoder"))?),
            )
        } else {
            (None, None)
        };
        let cross = if cross {
            Some((
                find(params, &format!("{prefix}.cross_w1"))?,
                find(params, &format!("{prefix}.cross_w2"))?,
            ))
        } else {
            None
        };
        let layer = Self {
            aggregators: aggregators.to_vec(),
            d_in,
            attention,
            gates,
            encoder,
            decoder,
            cross,
            gru_v: Gru::lookup(params, &format!("{prefix}.gru_v"))?,
            gru_n: Gru::lookup(params, &format!("{prefix}.gru_n"))?,
            proj_v: Linear::lookup(params, &format!("{prefix}.proj_v"))?,
            proj_n: Linear::lookup(params, &format!("{prefix}.proj_n"))?,
        };
        let w = params.get(layer.proj_v.w);
        if w.shape() != (d_in, d) {
            return Err(ModelError::Config(format!(
                "{prefix}.proj_v is {:?}, expected {:?}",
                w.shape(),
                (d_in, d)
            )));
        }
        Ok(layer)
    }

    /// Pools neighbor rows of `prev` with one aggregator.
    pub(crate) fn aggregate<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        agg: Aggregator,
        prev: Var,
        hop: &Hop,
    ) -> Result<Var, ModelError> {
        let seg = Arc::clone(&hop.neighbors);
        Ok(match agg {
            Aggregator::Mean => tape.segment_mean(prev, seg)?,
            Aggregator::Max => tape.segment_max(prev, seg)?,
            Aggregator::Importance => {
                let gates = tape.param(params, self.gates.expect("importance gates"));
                let w = tape.slot_softmax(gates, Arc::clone(&seg))?;
                tape.segment_weighted(prev, seg, w)?
            }
        })
    }

    /// Aggregator-level attention: `e_i = ReLU(FC_α(ReLU(FC_θ h_v) ∥
    /// ReLU(FC_θ h_AGG_i)))`, `α = softmax(e)`, `h_N = Σ α_i h_AGG_i`.
    pub fn attention_fuse<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        h_v: Var,
        pooled: &[Var],
    ) -> Result<(Var, Var), ModelError> {
        let Some((theta, alpha)) = &self.attention else {
            let n = tape.shape(h_v).0;
            let ones = tape.constant(Tensor::filled(n, 1, T::one()));
            return Ok((pooled[0], ones));
        };
        let t_v = theta.apply_relu(tape, params, h_v)?;
        let mut scores = Vec::with_capacity(pooled.len());
        for &p in pooled {
            let t_i = theta.apply_relu(tape, params, p)?;
            let both = tape.concat_cols(&[t_v, t_i])?;
            scores.push(alpha.apply_relu(tape, params, both)?);
        }
        let e = tape.concat_cols(&scores)?;
        let a = tape.row_softmax(e);
        let mut fused = None;
        for (i, &p) in pooled.iter().enumerate() {
            let ai = tape.slice_cols(a, i, 1)?;
            let term = tape.mul_col(p, ai)?;
            fused = Some(match fused {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        Ok((fused.expect("at least one aggregator"), a))
    }

    /// `x · (y · w)`: a per-row scalar times `x`, never forming `x yᵀ`.
    pub fn cross_term<T: Real>(tape: &mut Tape<T>, x: Var, y: Var, w: Var) -> Result<Var, ModelError> {
        let s = tape.matmul(y, w)?;
        Ok(tape.mul_col(x, s)?)
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        prev: Var,
        hop: &Hop,
    ) -> Result<LayerAux, ModelError> {
        let (rows, cols) = tape.shape(prev);
        if cols != self.d_in {
            return Err(ModelError::Config(format!(
                "layer expects width {}, got {cols}",
                self.d_in
            )));
        }
        if hop.neighbors.max_index().is_some_and(|m| m >= rows) {
            return Err(ModelError::Config("minibatch does not match layer input".into()));
        }
        let h_v = tape.gather_rows(prev, Arc::clone(&hop.centers))?;
        let mut pooled = Vec::with_capacity(self.aggregators.len());
        for &agg in &self.aggregators {
            pooled.push(self.aggregate(tape, params, agg, prev, hop)?);
        }
        let (h_n, alpha) = self.attention_fuse(tape, params, h_v, &pooled)?;

        let (enc_v, enc_n, dec) = match (&self.encoder, &self.decoder) {
            (Some(enc), Some(dec)) => {
                let ev = enc.apply_relu(tape, params, h_v)?;
                let en = enc.apply_relu(tape, params, h_n)?;
                let dv = dec.apply_relu(tape, params, ev)?;
                let dn = dec.apply_relu(tape, params, en)?;
                (ev, en, Some((dv, dn)))
            }
            _ => (h_v, h_n, None),
        };

        let gv = self.gru_v.apply(tape, params, h_v, h_n)?;
        let gn = self.gru_n.apply(tape, params, h_n, h_v)?;

        let cross = match self.cross {
            Some((w1, w2)) => {
                let w1 = tape.param(params, w1);
                let w2 = tape.param(params, w2);
                Some((
                    Self::cross_term(tape, enc_v, enc_n, w1)?,
                    Self::cross_term(tape, enc_n, enc_v, w2)?,
                ))
            }
            None => None,
        };

        let (new_v, new_n) = if self.encoder.is_some() {
            // cross lives in d, GRU output is projected d_in → d
            let pv = self.proj_v.apply(tape, params, gv)?;
            let pn = self.proj_n.apply(tape, params, gn)?;
            match cross {
                Some((cv, cn)) => (tape.add(cv, pv)?, tape.add(cn, pn)?),
                None => (pv, pn),
            }
        } else {
            // no autoencoder: cross lives in d_in and is projected with the GRU output
            let (sv, sn) = match cross {
                Some((cv, cn)) => (tape.add(cv, gv)?, tape.add(cn, gn)?),
                None => (gv, gn),
            };
            (
                self.proj_v.apply(tape, params, sv)?,
                self.proj_n.apply(tape, params, sn)?,
            )
        };
        let output = tape.concat_cols(&[new_v, new_n])?;
        Ok(LayerAux {
            h_v,
            h_n,
            enc_v,
            enc_n,
            dec,
            alpha,
            output,
        })
    }
}
