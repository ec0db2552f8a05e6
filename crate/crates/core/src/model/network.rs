use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use super::config::{Head, ModelConfig, Temporal, VariantConfig};
use super::instances::Instance;
use crate::completion::{Relation, SocialContext};
use crate::data::SessionSequence;
use crate::error::{Error, Result};
use crate::numkernel::{dot, matvec, BatchStats, Tape, Tensor, Var, BATCH_NORM_EPS};
use crate::params::{glorot, uniform, Binder, Forward, ParamId, ParamStore};
use crate::rgat::RgatParams;
use crate::rng;
use crate::seq_encoder::GruParams;
use crate::tie::Tie;

/// Two-layer scoring head `w₂ · relu(W₁ [u ∥ v] + b₁) + b₂`.
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

/// Batch normalization of the attention pre-activation.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Momentum of the running batch-norm statistics.
pub const NORM_MOMENTUM: f64 = 0.1;

/// Everything a forward pass reads besides the parameters.
pub struct Inputs<'a> {
    /// Training sessions of every user.
    pub sessions: &'a [SessionSequence],
    pub social: &'a SocialContext,
    /// Training epoch, for per-epoch friend resampling.
    pub epoch: Option<u64>,
}

/// Output of one gradient computation.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: f64,
    pub data_loss: f64,
    pub norm_stats: Vec<BatchStats>,
}

#[derive(Clone, Debug)]
pub struct DreamModel {
    pub config: ModelConfig,
    pub variant: VariantConfig,
    pub store: ParamStore,
    pub user_emb: ParamId,
    pub item_emb: ParamId,
    pub gru: GruParams,
    pub rgat: RgatParams,
    pub tie: Option<Tie>,
    pub tgru: Option<GruParams>,
    pub head: Option<MlpHead>,
    pub norm: Option<Norm>,
}

impl DreamModel {
    pub fn new(num_users: usize, num_items: usize, config: ModelConfig, variant: VariantConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        variant.validate()?;
        if num_users == 0 || num_items == 0 {
            return Err(Error::Config("model needs at least one user and one item".into()));
        }
        let d = config.dim;
        let mut r: ChaCha8Rng = rng::stream(seed, &[rng::TAG_INIT]);
        let mut store = ParamStore::new();
        let user_emb = store.register("user_emb", uniform(&mut r, &[num_users, d], config.init_scale))?;
        let item_emb = store.register("item_emb", uniform(&mut r, &[num_items, d], config.init_scale))?;
        let gru = GruParams::register(&mut store, "gru", d, &mut r)?;
        let rgat = RgatParams::register(&mut store, "rgat", d, config.rgat(), &mut r)?;
        let (tie, tgru) = match variant.temporal {
            Temporal::Tie => {
                let positions = if config.per_session_params { variant.sessions } else { 1 };
                (Some(Tie::register(&mut store, d, positions, config.literal_linear_gates, &mut r)?), None)
            }
            Temporal::Gru => (None, Some(GruParams::register(&mut store, "tgru", d, &mut r)?)),
            Temporal::None => (None, None),
        };
        let head = match config.head {
            Head::Dot => None,
            Head::Mlp => Some(MlpHead {
                w1: store.register("head.w1", glorot(&mut r, d, 2 * d))?,
                b1: store.register("head.b1", Tensor::zeros(&[d]))?,
                w2: store.register("head.w2", Tensor::vector(glorot(&mut r, 1, d).into_data()))?,
                b2: store.register("head.b2", Tensor::scalar(0.0))?,
            }),
        };
        let norm = if config.batch_norm {
            Some(Norm {
                gamma: store.register("norm.gamma", Tensor::vector(vec![1.0; d]))?,
                beta: store.register("norm.beta", Tensor::zeros(&[d]))?,
                running_mean: vec![0.0; d],
                running_var: vec![1.0; d],
            })
        } else {
            None
        };
        Ok(DreamModel { config, variant, store, user_emb, item_emb, gru, rgat, tie, tgru, head, norm })
    }

    pub fn num_users(&self) -> usize {
        self.store.value(self.user_emb).shape()[0]
    }

    pub fn num_items(&self) -> usize {
        self.store.value(self.item_emb).shape()[0]
    }

    /// The same parameters read under different variant switches. Fails if
    /// the temporal component differs, since its parameters would be missing.
    pub fn with_variant(&self, variant: VariantConfig) -> Result<Self> {
        variant.validate()?;
        if variant.temporal != self.variant.temporal {
            return Err(Error::Config("with_variant cannot change the temporal component".into()));
        }
        Ok(DreamModel { variant, ..self.clone() })
    }

    fn check(&self, inputs: &Inputs, inst: &Instance) -> Result<()> {
        let seq = inputs
            .sessions
            .get(inst.user as usize)
            .ok_or_else(|| Error::Modeling(format!("user {} has no session sequence", inst.user)))?;
        if inst.context.len() != self.variant.sessions {
            return Err(Error::Modeling(format!(
                "user {}: context has {} sessions, model expects {}",
                inst.user,
                inst.context.len(),
                self.variant.sessions
            )));
        }
        if let Some(&p) = inst.context.iter().find(|&&p| p >= seq.sessions.len()) {
            return Err(Error::Modeling(format!("user {}: context session {p} does not exist", inst.user)));
        }
        Ok(())
    }

    /// Node state of a friend: her GRU-encoded session, or her latent
    /// embedding when she has no session before the center's.
    fn friend_state(
        &self,
        f: &mut Forward,
        inputs: &Inputs,
        cache: &mut HashMap<(u32, Option<usize>), Var>,
        friend: u32,
        prior: Option<usize>,
    ) -> Result<Var> {
        if let Some(v) = cache.get(&(friend, prior)) {
            return Ok(*v);
        }
        let v = match prior {
            None => f.row(self.user_emb, friend as usize),
            Some(k) => {
                let items = &inputs.sessions[friend as usize].sessions[k].items;
                let tail = &items[items.len().saturating_sub(self.config.max_session_len)..];
                let xs: Vec<Var> = tail.iter().map(|&i| f.row(self.item_emb, i as usize)).collect();
                self.gru.encode(f, &xs)?
            }
        };
        cache.insert((friend, prior), v);
        Ok(v)
    }

    fn normalize(&self, f: &mut Forward, pres: Vec<Var>, training: bool, stats: &mut Vec<BatchStats>) -> Result<Vec<Var>> {
        let Some(norm) = &self.norm else { return Ok(pres) };
        let gamma = f.param(norm.gamma);
        let beta = f.param(norm.beta);
        if training {
            let x = f.tape.stack(&pres)?;
            let (y, s) = f.tape.batch_norm(x, gamma, beta)?;
            stats.push(s);
            return (0..pres.len()).map(|b| f.tape.row(y, b)).collect();
        }
        let shift = f.tape.constant(Tensor::vector(norm.running_mean.clone()));
        let inv_std =
            f.tape.constant(Tensor::vector(norm.running_var.iter().map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt()).collect()));
        pres.into_iter()
            .map(|p| {
                let centered = f.tape.sub(p, shift)?;
                let scaled = f.tape.mul(centered, inv_std)?;
                let g = f.tape.mul(scaled, gamma)?;
                f.tape.add(g, beta)
            })
            .collect()
    }

    fn temporal_step(&self, f: &mut Forward, t: usize, prev: Var, current: Var) -> Result<Var> {
        match self.variant.temporal {
            Temporal::Tie => self.tie.as_ref().expect("tie registered").step(f, t, prev, current),
            Temporal::Gru => self.tgru.as_ref().expect("tgru registered").cell(f, current, prev),
            Temporal::None => Ok(prev),
        }
    }

    /// User representations for a batch of instances, processed in lockstep
    /// over session positions so batch normalization sees the whole batch.
    pub fn represent(
        &self,
        f: &mut Forward,
        inputs: &Inputs,
        batch: &[&Instance],
        training: bool,
    ) -> Result<(Vec<Var>, Vec<BatchStats>)> {
        for inst in batch {
            self.check(inputs, inst)?;
        }
        let t_max = self.variant.sessions;
        let mut cache = HashMap::new();
        let mut stats = Vec::new();
        let mut states: Vec<Var> = batch.iter().map(|i| f.row(self.user_emb, i.user as usize)).collect();
        let mut outputs = states.clone();
        for t in 1..=t_max {
            let mut pres = Vec::with_capacity(batch.len());
            for (b, inst) in batch.iter().enumerate() {
                let session = &inputs.sessions[inst.user as usize].sessions[inst.context[t - 1]];
                let graph = inputs.social.graph(inst.user, session, inputs.sessions, inputs.epoch);
                let mut neighbors = Vec::with_capacity(graph.neighbors.len());
                for n in &graph.neighbors {
                    let keep = match n.relation {
                        Relation::Real => self.variant.use_real,
                        Relation::Virtual => self.variant.use_virtual,
                    };
                    if keep {
                        let h = self.friend_state(f, inputs, &mut cache, n.user, n.prior_session)?;
                        neighbors.push((n.relation, h));
                    }
                }
                let (_, pre) = self.rgat.attend(f, states[b], &neighbors, self.variant.relation_aware)?;
                pres.push(pre);
            }
            let pres = self.normalize(f, pres, training, &mut stats)?;
            for (b, pre) in pres.into_iter().enumerate() {
                let u_t = f.tape.tanh(pre)?;
                outputs[b] = u_t;
                if t < t_max || self.config.predict_from_tie_state {
                    states[b] = self.temporal_step(f, t, states[b], u_t)?;
                }
            }
        }
        Ok((if self.config.predict_from_tie_state { states } else { outputs }, stats))
    }

    /// Logit `f(u, v)` on the tape.
    pub fn logit(&self, f: &mut Forward, user: Var, item: u32) -> Result<Var> {
        let v = f.row(self.item_emb, item as usize);
        match &self.head {
            None => f.tape.dot(user, v),
            Some(h) => {
                let x = f.tape.concat(&[user, v])?;
                let pre = f.linear(h.w1, x, h.b1)?;
                let hidden = f.tape.relu(pre)?;
                let w2 = f.param(h.w2);
                let s = f.tape.dot(w2, hidden)?;
                let b2 = f.param(h.b2);
                f.tape.add(s, b2)
            }
        }
    }

    /// Plain logits of `items` for a user representation, without a tape.
    pub fn score_items(&self, user: &[f64], items: &[u32]) -> Vec<f64> {
        let emb = self.store.value(self.item_emb);
        match &self.head {
            None => items.iter().map(|&i| dot(user, emb.row(i as usize))).collect(),
            Some(h) => {
                let d = self.config.dim;
                let w1 = self.store.value(h.w1).data();
                let b1 = self.store.value(h.b1).data();
                let w2 = self.store.value(h.w2).data();
                let b2 = self.store.value(h.b2).data()[0];
                items
                    .iter()
                    .map(|&i| {
                        let x: Vec<f64> = user.iter().chain(emb.row(i as usize)).copied().collect();
                        let hidden = matvec(w1, d, &x);
                        let s: f64 = hidden.iter().zip(b1).zip(w2).map(|((a, b), w)| (a + b).max(0.0) * w).sum();
                        s + b2
                    })
                    .collect()
            }
        }
    }

    /// Mean binary cross-entropy over every (user, item, label) pair of the
    /// batch plus `l2 · Σ‖θ‖²` over the parameters the batch touched.
    /// Returns `(loss, data loss, norm stats)`.
    pub fn loss(
        &self,
        f: &mut Forward,
        inputs: &Inputs,
        batch: &[&Instance],
        l2: f64,
        training: bool,
    ) -> Result<(Var, Var, Vec<BatchStats>)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let (reps, stats) = self.represent(f, inputs, batch, training)?;
        let mut terms = Vec::new();
        for (inst, &rep) in batch.iter().zip(&reps) {
            let z = self.logit(f, rep, inst.positive)?;
            terms.push(f.tape.bce_with_logits(z, 1.0)?);
            for &n in &inst.negatives {
                let z = self.logit(f, rep, n)?;
                terms.push(f.tape.bce_with_logits(z, 0.0)?);
            }
        }
        let total = f.tape.add_n(&terms)?;
        let data = f.tape.affine(total, 1.0 / terms.len() as f64, 0.0)?;
        let loss = match (l2 > 0.0, f.binder.squared_norm(f.tape)?) {
            (true, Some(norm)) => {
                let reg = f.tape.affine(norm, l2, 0.0)?;
                f.tape.add(data, reg)?
            }
            _ => data,
        };
        Ok((loss, data, stats))
    }

    /// Forward and backward pass over a batch; gradients are added to the
    /// store's gradient slots.
    pub fn accumulate_gradients(&mut self, inputs: &Inputs, batch: &[&Instance], l2: f64) -> Result<StepOutput> {
        let mut tape = Tape::new();
        let mut binder = Binder::trainable();
        let (loss, data, norm_stats) = {
            let mut f = Forward::new(&mut tape, &mut binder, &self.store);
            self.loss(&mut f, inputs, batch, l2, true)?
        };
        let out = StepOutput { loss: tape.value(loss).data()[0], data_loss: tape.value(data).data()[0], norm_stats };
        tape.backward(loss)?;
        binder.accumulate(&tape, &mut self.store);
        Ok(out)
    }

    /// Loss value without gradients, in training mode.
    pub fn loss_value(&self, inputs: &Inputs, batch: &[&Instance], l2: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let mut binder = Binder::frozen();
        let mut f = Forward::new(&mut tape, &mut binder, &self.store);
        let (loss, _, _) = self.loss(&mut f, inputs, batch, l2, true)?;
        Ok(tape.value(loss).data()[0])
    }

    /// Inference-mode user representations as plain vectors.
    pub fn representations(&self, inputs: &Inputs, batch: &[&Instance]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let mut binder = Binder::frozen();
        let mut f = Forward::new(&mut tape, &mut binder, &self.store);
        let (reps, _) = self.represent(&mut f, inputs, batch, false)?;
        Ok(reps.iter().map(|v| tape.value(*v).data().to_vec()).collect())
    }

    /// Folds batch statistics into the running statistics.
    pub fn update_running_stats(&mut self, stats: &[BatchStats]) {
        let Some(norm) = &mut self.norm else { return };
        for s in stats {
            for k in 0..norm.running_mean.len() {
                norm.running_mean[k] = (1.0 - NORM_MOMENTUM) * norm.running_mean[k] + NORM_MOMENTUM * s.mean[k];
                norm.running_var[k] = (1.0 - NORM_MOMENTUM) * norm.running_var[k] + NORM_MOMENTUM * s.var[k];
            }
        }
    }
}
