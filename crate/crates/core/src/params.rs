//! Named learnable tensors and their binding onto a [`Tape`].

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkernel::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Every learnable tensor with a gradient slot of the same shape.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    lookup: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.lookup.contains_key(name) {
            return Err(Error::Argument(format!("parameter {name:?} registered twice")));
        }
        let id = ParamId(self.values.len());
        self.names.push(name.to_owned());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.lookup.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    /// Simultaneous access to a value and its gradient.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor, &Tensor) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn global_grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g.squared_norm()).sum::<f64>().sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// First parameter holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.ids().find(|id| !self.value(*id).is_finite()).map(|id| self.name(id))
    }

    pub fn first_non_finite_grad(&self) -> Option<&str> {
        self.ids().find(|id| !self.grad(*id).is_finite()).map(|id| self.name(id))
    }
}

/// Uniform initializer in `[-scale, scale]`.
pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-scale..=scale)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

/// Glorot-uniform initializer for a `rows × cols` matrix.
pub fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    uniform(rng, &[rows, cols], (6.0 / (rows + cols) as f64).sqrt())
}

/// Lazily places parameters (whole tensors or single embedding rows) on a
/// tape, at most once each, and routes their gradients back to the store.
#[derive(Debug, Default)]
pub struct Binder {
    frozen: bool,
    full: HashMap<ParamId, Var>,
    rows: HashMap<(ParamId, usize), Var>,
    order: Vec<(ParamId, Option<usize>, Var)>,
}

impl Binder {
    /// Binder whose leaves receive gradients.
    pub fn trainable() -> Self {
        Binder::default()
    }

    /// Binder whose leaves are constants (inference).
    pub fn frozen() -> Self {
        Binder { frozen: true, ..Binder::default() }
    }

    fn leaf(&self, tape: &mut Tape, value: Tensor) -> Var {
        if self.frozen {
            tape.constant(value)
        } else {
            tape.variable(value)
        }
    }

    pub fn param(&mut self, tape: &mut Tape, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.full.get(&id) {
            return *v;
        }
        let v = self.leaf(tape, store.value(id).clone());
        self.full.insert(id, v);
        self.order.push((id, None, v));
        v
    }

    /// Row `r` of a matrix parameter as a vector leaf.
    pub fn row(&mut self, tape: &mut Tape, store: &ParamStore, id: ParamId, r: usize) -> Var {
        if let Some(v) = self.rows.get(&(id, r)) {
            return *v;
        }
        let v = self.leaf(tape, Tensor::vector(store.value(id).row(r).to_vec()));
        self.rows.insert((id, r), v);
        self.order.push((id, Some(r), v));
        v
    }

    /// Bound leaves in binding order.
    pub fn bound(&self) -> &[(ParamId, Option<usize>, Var)] {
        &self.order
    }

    /// `Σ ‖θ‖²` over every bound leaf, or `None` if nothing is bound.
    pub fn squared_norm(&self, tape: &mut Tape) -> Result<Option<Var>> {
        if self.order.is_empty() {
            return Ok(None);
        }
        let norms = self.order.iter().map(|(_, _, v)| tape.squared_norm(*v)).collect::<Result<Vec<_>>>()?;
        Ok(Some(tape.add_n(&norms)?))
    }

    /// Adds the tape gradients of every bound leaf into the store.
    pub fn accumulate(&self, tape: &Tape, store: &mut ParamStore) {
        for &(id, row, v) in &self.order {
            let Some(g) = tape.grad(v) else { continue };
            let slot = match row {
                None => store.grad_mut(id).data_mut(),
                Some(r) => store.grad_mut(id).row_mut(r),
            };
            slot.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
}

/// A forward pass in progress: the tape, the binder placing parameters on it
/// and the store they come from.
pub struct Forward<'a> {
    pub tape: &'a mut Tape,
    pub binder: &'a mut Binder,
    pub store: &'a ParamStore,
}

impl<'a> Forward<'a> {
    pub fn new(tape: &'a mut Tape, binder: &'a mut Binder, store: &'a ParamStore) -> Self {
        Forward { tape, binder, store }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.binder.param(self.tape, self.store, id)
    }

    pub fn row(&mut self, id: ParamId, r: usize) -> Var {
        self.binder.row(self.tape, self.store, id, r)
    }

    /// `W x + b`.
    pub fn linear(&mut self, w: ParamId, x: Var, b: ParamId) -> Result<Var> {
        let w = self.param(w);
        let b = self.param(b);
        let wx = self.tape.matmul(w, x)?;
        self.tape.add(wx, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_bind_once_and_gradients_land_in_place() {
        let mut store = ParamStore::new();
        let emb = store.register("emb", Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let mut b = Binder::trainable();
        let r1 = b.row(&mut tape, &store, emb, 1);
        assert_eq!(b.row(&mut tape, &store, emb, 1), r1);
        assert_eq!(tape.value(r1).data(), &[3.0, 4.0]);
        let s = tape.sum(r1).unwrap();
        tape.backward(s).unwrap();
        b.accumulate(&tape, &mut store);
        assert_eq!(store.grad(emb).data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn frozen_binder_yields_no_gradients() {
        let mut store = ParamStore::new();
        let w = store.register("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let mut b = Binder::frozen();
        let v = b.param(&mut tape, &store, w);
        assert!(!tape.requires_grad(v));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::new();
        store.register("a", Tensor::scalar(1.0)).unwrap();
        assert!(store.register("a", Tensor::scalar(1.0)).is_err());
    }
}
