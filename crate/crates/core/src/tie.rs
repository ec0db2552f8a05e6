//! Temporal information encoding: a gated interpolation between the carried
//! user state `ũ_{t−1}` and the current session's attention output `u_t`.
//!
//! ```text
//! u_q = gate(W_q ũ_{t−1} + b_q)
//! u_e = gate(W_e u_t + b_e)
//! h̃_t = tanh(W_h u_t + u_e ∘ U_h ũ_{t−1} + b_h)
//! ũ_t = (1 − u_q) ∘ ũ_{t−1} + u_q ∘ h̃_t
//! ```
//!
//! `gate` is the logistic function unless literal linear gates are requested.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkernel::{Tensor, Var};
use crate::params::{glorot, Forward, ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct TieParams {
    pub dim: usize,
    pub w_q: ParamId,
    pub w_e: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_q: ParamId,
    pub b_e: ParamId,
    pub b_h: ParamId,
}

impl TieParams {
    pub fn register(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut mat = |name: &str, rng: &mut ChaCha8Rng| store.register(&format!("{prefix}.{name}"), glorot(rng, dim, dim));
        let w_q = mat("w_q", rng)?;
        let w_e = mat("w_e", rng)?;
        let w_h = mat("w_h", rng)?;
        let u_h = mat("u_h", rng)?;
        let mut bias = |name: &str| store.register(&format!("{prefix}.{name}"), Tensor::zeros(&[dim]));
        Ok(TieParams { dim, w_q, w_e, w_h, u_h, b_q: bias("b_q")?, b_e: bias("b_e")?, b_h: bias("b_h")? })
    }

    pub fn ids(&self) -> [ParamId; 7] {
        [self.w_q, self.w_e, self.w_h, self.u_h, self.b_q, self.b_e, self.b_h]
    }
}

/// The TIE cell, with one parameter set shared across sessions or one per
/// session position.
#[derive(Clone, Debug)]
pub struct Tie {
    pub layers: Vec<TieParams>,
    pub literal_linear_gates: bool,
}

impl Tie {
    /// Registers `positions` parameter sets (1 means shared).
    pub fn register(
        store: &mut ParamStore,
        dim: usize,
        positions: usize,
        literal_linear_gates: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if positions == 0 {
            return Err(Error::Config("tie needs at least one parameter set".into()));
        }
        let layers = if positions == 1 {
            vec![TieParams::register(store, "tie", dim, rng)?]
        } else {
            (1..=positions).map(|t| TieParams::register(store, &format!("tie.{t}"), dim, rng)).collect::<Result<_>>()?
        };
        Ok(Tie { layers, literal_linear_gates })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| l.ids()).collect()
    }

    /// Parameters for 1-based session position `t`.
    pub fn params(&self, t: usize) -> &TieParams {
        &self.layers[(t.max(1) - 1).min(self.layers.len() - 1)]
    }

    fn gate(&self, f: &mut Forward, pre: Var) -> Result<Var> {
        if self.literal_linear_gates {
            Ok(pre)
        } else {
            f.tape.logistic(pre)
        }
    }

    /// Update gate `u_q`.
    pub fn update_gate(&self, f: &mut Forward, p: &TieParams, prev: Var) -> Result<Var> {
        let pre = f.linear(p.w_q, prev, p.b_q)?;
        self.gate(f, pre)
    }

    /// Candidate `h̃_t`, computing the input gate `u_e` internally.
    pub fn candidate(&self, f: &mut Forward, p: &TieParams, prev: Var, current: Var) -> Result<Var> {
        let pre_e = f.linear(p.w_e, current, p.b_e)?;
        let u_e = self.gate(f, pre_e)?;
        let wh = f.linear(p.w_h, current, p.b_h)?;
        let uh = f.param(p.u_h);
        let uh_prev = f.tape.matmul(uh, prev)?;
        let gated = f.tape.mul(u_e, uh_prev)?;
        let pre = f.tape.add(wh, gated)?;
        f.tape.tanh(pre)
    }

    /// `(1 − u_q) ∘ prev + u_q ∘ candidate`.
    pub fn combine(f: &mut Forward, prev: Var, u_q: Var, candidate: Var) -> Result<Var> {
        let keep = f.tape.one_minus(u_q)?;
        let carried = f.tape.mul(keep, prev)?;
        let fresh = f.tape.mul(u_q, candidate)?;
        f.tape.add(carried, fresh)
    }

    /// One step at session position `t`.
    pub fn step(&self, f: &mut Forward, t: usize, prev: Var, current: Var) -> Result<Var> {
        let p = self.params(t);
        if f.tape.shape(prev) != [p.dim] || f.tape.shape(current) != [p.dim] {
            return Err(Error::Dimension(format!(
                "tie step expects {}-vectors, got {:?} and {:?}",
                p.dim,
                f.tape.shape(prev),
                f.tape.shape(current)
            )));
        }
        let u_q = self.update_gate(f, p, prev)?;
        let cand = self.candidate(f, p, prev, current)?;
        Tie::combine(f, prev, u_q, cand)
    }

    /// `[ũ_1 … ũ_T]` from `ũ_0` and `[u_1 … u_T]`.
    pub fn unroll(&self, f: &mut Forward, initial: Var, inputs: &[Var]) -> Result<Vec<Var>> {
        if inputs.is_empty() {
            return Err(Error::Argument("tie unroll over an empty sequence".into()));
        }
        let mut states = Vec::with_capacity(inputs.len());
        let mut prev = initial;
        for (i, &u) in inputs.iter().enumerate() {
            prev = self.step(f, i + 1, prev, u)?;
            states.push(prev);
        }
        Ok(states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::check::{central_difference, max_relative_error};
    use crate::numkernel::{logistic, matvec, Tape};
    use crate::params::Binder;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn setup(dim: usize, seed: u64) -> (ParamStore, Tie) {
        let mut store = ParamStore::new();
        let tie = Tie::register(&mut store, dim, 1, false, &mut rng::stream(seed, &[])).unwrap();
        (store, tie)
    }

    fn random(dim: usize, r: &mut impl Rng, scale: f64) -> Vec<f64> {
        (0..dim).map(|_| r.gen_range(-scale..scale)).collect()
    }

    fn with<T>(store: &ParamStore, body: impl FnOnce(&mut Forward) -> T) -> T {
        let mut tape = Tape::new();
        let mut binder = Binder::frozen();
        let mut f = Forward::new(&mut tape, &mut binder, store);
        body(&mut f)
    }

    fn constant(f: &mut Forward, v: &[f64]) -> Var {
        f.tape.constant(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn injected_gate_limits_are_exact() {
        let (store, tie) = setup(4, 0);
        let mut r = rng::stream(0, &[1]);
        let prev = random(4, &mut r, 2.0);
        let cur = random(4, &mut r, 1.0);
        with(&store, |f| {
            let pv = constant(f, &prev);
            let cv = constant(f, &cur);
            let cand = tie.candidate(f, tie.params(1), pv, cv).unwrap();
            let zero = constant(f, &[0.0; 4]);
            let one = constant(f, &[1.0; 4]);
            let kept = Tie::combine(f, pv, zero, cand).unwrap();
            let replaced = Tie::combine(f, pv, one, cand).unwrap();
            assert_eq!(f.tape.value(kept).data(), prev.as_slice());
            assert_eq!(f.tape.value(replaced).data(), f.tape.value(cand).data());
        });
    }

    /// Standalone transcription of the four update equations.
    fn oracle_step(store: &ParamStore, p: &TieParams, prev: &[f64], cur: &[f64], literal: bool) -> Vec<f64> {
        let d = p.dim;
        let v = |id: ParamId| store.value(id).data().to_vec();
        let g = |x: f64| if literal { x } else { logistic(x) };
        let wq = matvec(&v(p.w_q), d, prev);
        let we = matvec(&v(p.w_e), d, cur);
        let wh = matvec(&v(p.w_h), d, cur);
        let uh = matvec(&v(p.u_h), d, prev);
        let (bq, be, bh) = (v(p.b_q), v(p.b_e), v(p.b_h));
        (0..d)
            .map(|k| {
                let uq = g(wq[k] + bq[k]);
                let ue = g(we[k] + be[k]);
                let cand = (wh[k] + ue * uh[k] + bh[k]).tanh();
                (1.0 - uq) * prev[k] + uq * cand
            })
            .collect()
    }

    #[test]
    fn step_matches_transcribed_equations() {
        for literal in [false, true] {
            let mut store = ParamStore::new();
            let tie = Tie::register(&mut store, 4, 1, literal, &mut rng::stream(3, &[])).unwrap();
            let mut r = rng::stream(3, &[2]);
            for id in [tie.layers[0].b_q, tie.layers[0].b_e, tie.layers[0].b_h] {
                *store.value_mut(id) = Tensor::vector(random(4, &mut r, 0.5));
            }
            let prev = random(4, &mut r, 1.0);
            let cur = random(4, &mut r, 1.0);
            let got = with(&store, |f| {
                let (pv, cv) = (constant(f, &prev), constant(f, &cur));
                let out = tie.step(f, 1, pv, cv).unwrap();
                f.tape.value(out).data().to_vec()
            });
            let want = oracle_step(&store, &tie.layers[0], &prev, &cur, literal);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_steps_with_zero_parameters() {
        let (mut store, tie) = setup(3, 4);
        for id in tie.ids() {
            store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let u0 = [0.8, -0.4, 0.2];
        let us = [[0.5, 0.1, -0.3], [0.9, -0.2, 0.7]];
        let got = with(&store, |f| {
            let init = constant(f, &u0);
            let inputs: Vec<Var> = us.iter().map(|u| constant(f, u)).collect();
            let states = tie.unroll(f, init, &inputs).unwrap();
            f.tape.value(states[1]).data().to_vec()
        });
        // Zero weights: gates are 0.5 and every candidate is tanh(0) = 0, so
        // each step halves the state and ũ₂ = 0.25 ũ₀.
        for (a, b) in got.iter().zip(&u0) {
            assert!((a - 0.25 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_unroll_is_a_step() {
        let (store, tie) = setup(4, 5);
        let mut r = rng::stream(5, &[1]);
        let (prev, cur) = (random(4, &mut r, 1.0), random(4, &mut r, 1.0));
        let (a, b) = with(&store, |f| {
            let (pv, cv) = (constant(f, &prev), constant(f, &cur));
            let s = tie.step(f, 1, pv, cv).unwrap();
            let u = tie.unroll(f, pv, &[cv]).unwrap();
            (f.tape.value(s).data().to_vec(), f.tape.value(u[0]).data().to_vec())
        });
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn empty_unroll_and_bad_shapes_are_rejected() {
        let (store, tie) = setup(3, 0);
        with(&store, |f| {
            let u0 = constant(f, &[0.0; 3]);
            assert!(tie.unroll(f, u0, &[]).is_err());
            let short = constant(f, &[0.0; 2]);
            assert!(matches!(tie.step(f, 1, u0, short), Err(Error::Dimension(_))));
        });
    }

    #[test]
    fn per_session_parameters_are_distinct() {
        let mut store = ParamStore::new();
        let tie = Tie::register(&mut store, 2, 3, false, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(tie.layers.len(), 3);
        assert_eq!(tie.params(2).w_q, tie.layers[1].w_q);
        assert_eq!(tie.params(9).w_q, tie.layers[2].w_q);
        assert!(store.id("tie.3.b_h").is_some());
    }

    #[test]
    fn temporal_credit_reaches_the_initial_state() {
        let d = 3;
        let (store, tie) = setup(d, 6);
        let mut r = rng::stream(6, &[1]);
        let init = Tensor::vector(random(d, &mut r, 1.0));
        let inputs: Vec<Tensor> = (0..3).map(|_| Tensor::vector(random(d, &mut r, 1.0))).collect();
        let readout = Tensor::vector(vec![1.0, -0.5, 0.25]);
        let ids = tie.ids();
        let mut params: Vec<Tensor> = ids.iter().map(|id| store.value(*id).clone()).collect();
        params.push(init);
        params.extend(inputs);

        let eval = |ps: &[Tensor], grads: bool| -> (f64, Vec<Vec<f64>>) {
            let mut s = store.clone();
            for (id, t) in ids.iter().zip(ps) {
                *s.value_mut(*id) = t.clone();
            }
            let mut tape = Tape::new();
            let mut binder = Binder::trainable();
            let mut f = Forward::new(&mut tape, &mut binder, &s);
            let leaves: Vec<Var> = ps[ids.len()..].iter().map(|t| f.tape.variable(t.clone())).collect();
            let states = tie.unroll(&mut f, leaves[0], &leaves[1..]).unwrap();
            let w = f.tape.constant(readout.clone());
            let y = f.tape.dot(*states.last().unwrap(), w).unwrap();
            let value = tape.value(y).data()[0];
            if !grads {
                return (value, vec![]);
            }
            tape.backward(y).unwrap();
            binder.accumulate(&tape, &mut s);
            let mut g: Vec<Vec<f64>> = ids.iter().map(|id| s.grad(*id).data().to_vec()).collect();
            g.extend(leaves.iter().map(|v| tape.grad(*v).unwrap().to_vec()));
            (value, g)
        };
        let (_, analytic) = eval(&params, true);
        let numeric = central_difference(&params, 1e-5, |ps| eval(ps, false).0);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = max_relative_error(a, n);
            assert!(err < 1e-4, "tensor {i}: {err}");
        }
        assert!(analytic[ids.len()].iter().any(|g| g.abs() > 1e-6));
    }

    proptest! {
        #[test]
        fn logistic_gates_keep_states_bounded(seed in any::<u64>(), steps in 1usize..6, scale in 0.1f64..5.0) {
            let (mut store, tie) = setup(4, seed);
            let mut r = rng::stream(seed, &[2]);
            for id in tie.ids() {
                let t = store.value_mut(id);
                t.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            let init = random(4, &mut r, 3.0);
            let inputs: Vec<Vec<f64>> = (0..steps).map(|_| random(4, &mut r, 3.0)).collect();
            let bound = init.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let states = with(&store, |f| {
                let i = constant(f, &init);
                let us: Vec<Var> = inputs.iter().map(|u| constant(f, u)).collect();
                let s = tie.unroll(f, i, &us).unwrap();
                s.iter().map(|v| f.tape.value(*v).data().to_vec()).collect::<Vec<_>>()
            });
            for s in states {
                for v in s {
                    prop_assert!(v.abs() <= bound);
                }
            }
        }
    }
}
