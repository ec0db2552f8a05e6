//! Relation-aware attention over one completed ego graph, printing the
//! attention weights for the user, a real friend and a virtual friend, and
//! how they change when relation awareness is switched off.
//!
//! `cargo run --release --example relational_attention`

use dream::completion::Relation;
use dream::numkernel::{Tape, Tensor};
use dream::params::{Binder, Forward, ParamStore};
use dream::rgat::{RgatConfig, RgatParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dream::Result<()> {
    let d = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let params = RgatParams::register(&mut store, "rgat", d, RgatConfig::default(), &mut rng)?;
    let vector = |rng: &mut ChaCha8Rng| Tensor::vector((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let center = vector(&mut rng);
    let neighbors = [
        (Relation::Real, vector(&mut rng)),
        (Relation::Real, vector(&mut rng)),
        (Relation::Virtual, vector(&mut rng)),
    ];

    for aware in [true, false] {
        let mut tape = Tape::new();
        let mut binder = Binder::frozen();
        let mut f = Forward::new(&mut tape, &mut binder, &store);
        let c = f.tape.constant(center.clone());
        let nb: Vec<_> = neighbors.iter().map(|(r, h)| (*r, f.tape.constant(h.clone()))).collect();
        let (out, alpha) = params.forward(&mut f, c, &nb, aware)?;
        println!("relation aware: {aware}");
        let labels = ["self", "real", "real", "virtual"];
        for (label, a) in labels.iter().zip(tape.value(alpha).data()) {
            println!("  alpha {label:<8} {a:.4}");
        }
        let rep: Vec<String> = tape.value(out).data().iter().map(|v| format!("{v:+.3}")).collect();
        println!("  representation [{}]", rep.join(", "));
    }
    Ok(())
}
