//! GRU over a session's item embeddings; the final hidden state is the
//! session's short-term interest vector.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkernel::{Tensor, Var};
use crate::params::{glorot, Forward, ParamId, ParamStore};

/// Weights of one GRU cell with equal input and hidden width.
#[derive(Clone, Debug)]
pub struct GruParams {
    pub dim: usize,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

impl GruParams {
    pub fn register(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut mat = |name: &str, rng: &mut ChaCha8Rng| store.register(&format!("{prefix}.{name}"), glorot(rng, dim, dim));
        let w_z = mat("w_z", rng)?;
        let u_z = mat("u_z", rng)?;
        let w_r = mat("w_r", rng)?;
        let u_r = mat("u_r", rng)?;
        let w_h = mat("w_h", rng)?;
        let u_h = mat("u_h", rng)?;
        let mut bias = |name: &str| store.register(&format!("{prefix}.{name}"), Tensor::zeros(&[dim]));
        Ok(GruParams { dim, w_z, u_z, b_z: bias("b_z")?, w_r, u_r, b_r: bias("b_r")?, w_h, u_h, b_h: bias("b_h")? })
    }

    pub fn ids(&self) -> [ParamId; 9] {
        [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h, self.u_h, self.b_h]
    }

    /// One step:
    /// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
    /// `h̃ = tanh(W_h x + U_h (r∘h) + b_h)`, `h' = (1−z)∘h + z∘h̃`.
    pub fn cell(&self, f: &mut Forward, x: Var, h: Var) -> Result<Var> {
        let gate = |f: &mut Forward, w: ParamId, u: ParamId, b: ParamId| -> Result<Var> {
            let wx = f.linear(w, x, b)?;
            let u = f.param(u);
            let uh = f.tape.matmul(u, h)?;
            let pre = f.tape.add(wx, uh)?;
            f.tape.logistic(pre)
        };
        let z = gate(f, self.w_z, self.u_z, self.b_z)?;
        let r = gate(f, self.w_r, self.u_r, self.b_r)?;
        let wx = f.linear(self.w_h, x, self.b_h)?;
        let rh = f.tape.mul(r, h)?;
        let u_h = f.param(self.u_h);
        let urh = f.tape.matmul(u_h, rh)?;
        let pre = f.tape.add(wx, urh)?;
        let cand = f.tape.tanh(pre)?;
        let keep = f.tape.one_minus(z)?;
        let carried = f.tape.mul(keep, h)?;
        let fresh = f.tape.mul(z, cand)?;
        f.tape.add(carried, fresh)
    }

    /// Runs the recurrence from a zero state over `inputs` and returns the
    /// final hidden state.
    pub fn encode(&self, f: &mut Forward, inputs: &[Var]) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::Argument("cannot encode an empty session".into()));
        }
        let mut h = f.tape.constant(Tensor::zeros(&[self.dim]));
        for &x in inputs {
            h = self.cell(f, x, h)?;
        }
        Ok(h)
    }
}
