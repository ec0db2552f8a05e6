//! Relation-aware graph attention over one completed ego graph.
//!
//! Each neighbor `j` with relation `r` is scored by
//! `f_r(h_u, P_r h_j) = leaky_relu(w_r · [h_u ∥ P_r h_j])`, the center by
//! `f_self(h_u, h_u)`. The scores are softmax-normalized over the center and
//! its neighbors and the aggregate is `tanh(Σ α_j h_j)`.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::completion::Relation;
use crate::error::{Error, Result};
use crate::numkernel::{Tensor, Var};
use crate::params::{glorot, Forward, ParamId, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RgatConfig {
    /// Number of layers in each scoring network `f_r`. One is a single
    /// attention vector; deeper networks insert relu hidden layers of width d.
    pub attention_layers: usize,
    /// Aggregate `P_r h_j` instead of the raw neighbor state.
    pub aggregate_projected: bool,
}

impl Default for RgatConfig {
    fn default() -> Self {
        RgatConfig { attention_layers: 1, aggregate_projected: false }
    }
}

/// Which parameter set scores a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    SelfLoop,
    Friend(Relation),
}

/// Scoring network of one relation.
#[derive(Clone, Debug)]
pub struct Scorer {
    /// `(weight, bias)` hidden layers, applied before the final vector.
    pub hidden: Vec<(ParamId, ParamId)>,
    pub w: ParamId,
}

#[derive(Clone, Debug)]
pub struct RgatParams {
    pub dim: usize,
    pub config: RgatConfig,
    pub p_real: ParamId,
    pub p_virtual: ParamId,
    pub score_real: Scorer,
    pub score_virtual: Scorer,
    pub score_self: Scorer,
}

impl RgatParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        config: RgatConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if config.attention_layers == 0 {
            return Err(Error::Config("attention_layers must be at least 1".into()));
        }
        let p_real = store.register(&format!("{prefix}.p_real"), glorot(rng, dim, dim))?;
        let p_virtual = store.register(&format!("{prefix}.p_virtual"), glorot(rng, dim, dim))?;
        let mut scorer = |name: &str, rng: &mut ChaCha8Rng| -> Result<Scorer> {
            let mut hidden = Vec::new();
            let mut width = 2 * dim;
            for l in 1..config.attention_layers {
                let w = store.register(&format!("{prefix}.{name}.hidden{l}.w"), glorot(rng, dim, width))?;
                let b = store.register(&format!("{prefix}.{name}.hidden{l}.b"), Tensor::zeros(&[dim]))?;
                hidden.push((w, b));
                width = dim;
            }
            let w = glorot(rng, 1, width).into_data();
            let w = store.register(&format!("{prefix}.{name}.w"), Tensor::vector(w))?;
            Ok(Scorer { hidden, w })
        };
        let score_real = scorer("real", rng)?;
        let score_virtual = scorer("virtual", rng)?;
        let score_self = scorer("self", rng)?;
        Ok(RgatParams { dim, config, p_real, p_virtual, score_real, score_virtual, score_self })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.p_real, self.p_virtual];
        for s in [&self.score_real, &self.score_virtual, &self.score_self] {
            for &(w, b) in &s.hidden {
                ids.extend([w, b]);
            }
            ids.push(s.w);
        }
        ids
    }

    /// Parameters used for `role`. Without relation awareness every role
    /// shares the real-friend parameters.
    fn resolve(&self, role: Role, relation_aware: bool) -> (Option<ParamId>, &Scorer) {
        match (role, relation_aware) {
            (Role::SelfLoop, true) => (None, &self.score_self),
            (Role::SelfLoop, false) => (None, &self.score_real),
            (Role::Friend(Relation::Virtual), true) => (Some(self.p_virtual), &self.score_virtual),
            (Role::Friend(_), _) => (Some(self.p_real), &self.score_real),
        }
    }

    fn score(&self, f: &mut Forward, scorer: &Scorer, center: Var, z: Var) -> Result<Var> {
        let mut x = f.tape.concat(&[center, z])?;
        for &(w, b) in &scorer.hidden {
            let pre = f.linear(w, x, b)?;
            x = f.tape.relu(pre)?;
        }
        let w = f.param(scorer.w);
        let s = f.tape.dot(w, x)?;
        f.tape.leaky_relu(s)
    }

    /// Attention weights over `[center, neighbors...]` (center first) and the
    /// pre-activation aggregate `Σ α_j h_j`.
    pub fn attend(
        &self,
        f: &mut Forward,
        center: Var,
        neighbors: &[(Relation, Var)],
        relation_aware: bool,
    ) -> Result<(Var, Var)> {
        let mut scores = Vec::with_capacity(neighbors.len() + 1);
        let mut rows = Vec::with_capacity(neighbors.len() + 1);
        let (_, self_scorer) = self.resolve(Role::SelfLoop, relation_aware);
        scores.push(self.score(f, self_scorer, center, center)?);
        rows.push(center);
        for &(rel, h) in neighbors {
            let (p, scorer) = self.resolve(Role::Friend(rel), relation_aware);
            let p = f.param(p.expect("friends are projected"));
            let z = f.tape.matmul(p, h)?;
            scores.push(self.score(f, scorer, center, z)?);
            rows.push(if self.config.aggregate_projected { z } else { h });
        }
        let e = f.tape.concat(&scores)?;
        let alpha = f.tape.softmax(e)?;
        let stacked = f.tape.stack(&rows)?;
        let pre = f.tape.matmul(alpha, stacked)?;
        Ok((alpha, pre))
    }

    /// `tanh(Σ α_j h_j)` together with the attention weights.
    pub fn forward(
        &self,
        f: &mut Forward,
        center: Var,
        neighbors: &[(Relation, Var)],
        relation_aware: bool,
    ) -> Result<(Var, Var)> {
        let (alpha, pre) = self.attend(f, center, neighbors, relation_aware)?;
        Ok((f.tape.tanh(pre)?, alpha))
    }
}
