//! The temporal interaction cell unrolled over a session sequence: the
//! injected-gate limits and the state bound.
//!
//! `cargo run --release --example tie_unroll -- [steps]`

use dream::numkernel::{Tape, Tensor};
use dream::params::{Binder, Forward, ParamStore};
use dream::tie::Tie;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dream::Result<()> {
    let steps: usize = std::env::args().nth(1).map_or(8, |s| s.parse().expect("step count"));
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let tie = Tie::register(&mut store, d, 1, false, &mut rng)?;
    let mut tape = Tape::new();
    let mut binder = Binder::frozen();
    let mut f = Forward::new(&mut tape, &mut binder, &store);

    let u0 = Tensor::vector(vec![2.5, -1.5, 0.5, 0.0]);
    let bound = u0.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let initial = f.tape.constant(u0);
    let inputs: Vec<_> = (0..steps)
        .map(|_| f.tape.constant(Tensor::vector((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())))
        .collect();
    let states = tie.unroll(&mut f, initial, &inputs)?;

    let cand = tie.candidate(&mut f, tie.params(1), initial, inputs[0])?;
    let zero = f.tape.constant(Tensor::zeros(&[d]));
    let one = f.tape.constant(Tensor::vector(vec![1.0; d]));
    let keep = Tie::combine(&mut f, initial, zero, cand)?;
    let take = Tie::combine(&mut f, initial, one, cand)?;

    for (t, s) in states.iter().enumerate() {
        let v = tape.value(*s).data();
        let top = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        println!("t={:<2} |u|max {top:.4} (bound {bound}) {v:.3?}", t + 1);
    }
    println!("gate 0 keeps the previous state exactly: {}", tape.value(keep) == tape.value(initial));
    println!("gate 1 takes the candidate exactly: {}", tape.value(take) == tape.value(cand));
    Ok(())
}
