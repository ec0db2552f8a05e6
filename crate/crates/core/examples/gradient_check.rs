//! Finite-difference check of the full model's gradients on a small
//! synthetic batch, reported per parameter tensor.
//!
//! `cargo run --release --example gradient_check`

use dream::config::RunConfig;
use dream::model::{make_training_instances, DreamModel, Inputs, Instance, ModelConfig};
use dream::numkernel::check::{central_difference, max_relative_error};
use dream::numkernel::Tensor;
use dream::pipeline::{build_social, prepare};

fn main() -> dream::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.data.synthetic.users = 8;
    cfg.data.synthetic.items = 16;
    cfg.glove.dim = 4;
    cfg.glove.epochs = 5;
    let prep = prepare(&cfg)?;
    let variant = cfg.variant_config();
    let social = build_social(&prep, &variant, &cfg)?;
    let (instances, _) =
        make_training_instances(&prep.ds, &prep.split, &prep.train_sessions, prep.granularity, 2, 3, 1)?;
    let batch: Vec<&Instance> = instances.iter().take(6).collect();

    let model_cfg = ModelConfig { dim: 4, init_scale: 0.5, ..ModelConfig::default() };
    let model = DreamModel::new(prep.ds.num_users(), prep.ds.num_items(), model_cfg, variant, 3)?;
    let inputs = Inputs { sessions: &prep.train_sessions, social: &social.context, epoch: None };

    let mut analytic = model.clone();
    let step = analytic.accumulate_gradients(&inputs, &batch, 1e-3)?;
    println!("loss {:.6} on {} instances", step.loss, batch.len());
    let ids: Vec<_> = model.store.ids().collect();
    let values: Vec<Tensor> = ids.iter().map(|id| model.store.value(*id).clone()).collect();
    let numeric = central_difference(&values, 1e-5, |ps| {
        let mut probe = model.clone();
        for (id, p) in ids.iter().zip(ps) {
            *probe.store.value_mut(*id) = p.clone();
        }
        probe.loss_value(&inputs, &batch, 1e-3).expect("forward pass")
    });
    println!("{:<24} {:>10} {:>12}", "tensor", "shape", "rel error");
    for (id, n) in ids.iter().zip(&numeric) {
        let err = max_relative_error(analytic.store.grad(*id).data(), n);
        let shape = format!("{:?}", model.store.value(*id).shape());
        println!("{:<24} {shape:>10} {err:>12.3e}", model.store.name(*id));
    }
    Ok(())
}
