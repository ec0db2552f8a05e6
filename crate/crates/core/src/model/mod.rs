//! The full recommender: per-session completed graphs feed relational
//! attention, whose outputs are chained across sessions by the temporal
//! cell; the last representation scores items.

mod checkpoint;
mod config;
mod instances;
mod network;

pub use checkpoint::Checkpoint;
pub use config::{Head, ModelConfig, Temporal, Variant, VariantConfig};
pub use instances::{
    build_instances, context_positions, draw_training_negatives, make_training_instances, Instance, InstanceReport,
};
pub use network::{DreamModel, Inputs, MlpHead, Norm, StepOutput, NORM_MOMENTUM};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::completion::{CompletionConfig, GloveEmbeddings, Relation, SocialContext, VirtualFriends};
    use crate::data::{segment_sessions, Dataset, Event, SessionSequence};
    use crate::numkernel::check::{central_difference, max_relative_error};
    use crate::numkernel::{dot, leaky_relu, logistic, matvec, Tensor};
    use crate::params::ParamId;
    use crate::rng;
    use rand::Rng;

    const DAY: i64 = 86_400;

    /// Five users over three weeks, ten items, a few real edges.
    fn fixture() -> (Dataset, Vec<SessionSequence>) {
        let mut events = Vec::new();
        let mut r = rng::stream(42, &[]);
        for u in 0..5u32 {
            for week in 0..3i64 {
                for k in 0..2 + (u as i64 + week) % 2 {
                    let ts = 4 * DAY + week * 7 * DAY + k * 3600;
                    events.push(Event { user: u, item: r.gen_range(0..10), timestamp: ts });
                }
            }
        }
        let edges = vec![(0, 1), (0, 2), (1, 0), (2, 3), (3, 4), (4, 0)];
        let ds = Dataset::from_parts(
            (0..5).map(|u| format!("u{u}")).collect(),
            (0..10).map(|i| format!("i{i}")).collect(),
            events,
            edges,
        )
        .unwrap();
        let sessions = segment_sessions(&ds, crate::data::Granularity::Week);
        (ds, sessions)
    }

    fn social(ds: &Dataset, real: bool, virt: bool) -> SocialContext {
        let mut r = rng::stream(5, &[]);
        let g = GloveEmbeddings::new(5, 3, (0..15).map(|_| r.gen_range(-1.0..1.0)).collect());
        let lists = SocialContext::real_lists(ds);
        let vf = VirtualFriends::select_all(&g, 2, Some(&lists));
        SocialContext::new(
            real.then_some(lists),
            virt.then_some(vf),
            CompletionConfig { k_real: 10, k_virtual: 2, resample_real_per_epoch: false },
            3,
        )
    }

    fn instance(user: u32, context: Vec<usize>, positive: u32, negatives: Vec<u32>) -> Instance {
        Instance { event: 0, user, context, window: i64::MAX, positive, negatives }
    }

    fn small_config(dim: usize) -> ModelConfig {
        ModelConfig { dim, init_scale: 0.5, ..ModelConfig::default() }
    }

    #[test]
    fn isolated_user_collapses_to_tanh_of_embedding() {
        let (ds, sessions) = fixture();
        let ctx = SocialContext::new(None, None, CompletionConfig::default(), 0);
        let mut variant = Variant::DreamS1.config(1);
        variant.use_real = false;
        variant.use_virtual = false;
        variant.allow_center_only = true;
        let model = DreamModel::new(ds.num_users(), ds.num_items(), small_config(4), variant, 1).unwrap();
        let inputs = Inputs { sessions: &sessions, social: &ctx, epoch: None };
        let inst = instance(2, vec![1], 0, vec![]);
        let rep = model.representations(&inputs, &[&inst]).unwrap().remove(0);
        let emb = model.store.value(model.user_emb).row(2).to_vec();
        assert_eq!(rep, emb.iter().map(|v| v.tanh()).collect::<Vec<_>>());
    }

    fn vals(model: &DreamModel, id: ParamId) -> Vec<f64> {
        model.store.value(id).data().to_vec()
    }

    fn gru_oracle(model: &DreamModel, items: &[u32]) -> Vec<f64> {
        let g = &model.gru;
        let d = g.dim;
        let emb = model.store.value(model.item_emb);
        let mut h = vec![0.0; d];
        for &i in items {
            let x = emb.row(i as usize);
            let lin = |w: ParamId, u: ParamId, b: ParamId, hh: &[f64]| -> Vec<f64> {
                let (a, c) = (matvec(&vals(model, w), d, x), matvec(&vals(model, u), d, hh));
                (0..d).map(|k| a[k] + c[k] + vals(model, b)[k]).collect()
            };
            let z: Vec<f64> = lin(g.w_z, g.u_z, g.b_z, &h).into_iter().map(logistic).collect();
            let r: Vec<f64> = lin(g.w_r, g.u_r, g.b_r, &h).into_iter().map(logistic).collect();
            let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
            let c: Vec<f64> = lin(g.w_h, g.u_h, g.b_h, &rh).into_iter().map(f64::tanh).collect();
            h = (0..d).map(|k| (1.0 - z[k]) * h[k] + z[k] * c[k]).collect();
        }
        h
    }

    fn rgat_oracle(model: &DreamModel, center: &[f64], neighbors: &[(Relation, Vec<f64>)]) -> Vec<f64> {
        let p = &model.rgat;
        let d = p.dim;
        let f = |w: &[f64], z: &[f64]| leaky_relu(dot(&w[..d], center) + dot(&w[d..], z));
        let mut e = vec![f(&vals(model, p.score_self.w), center)];
        for (rel, h) in neighbors {
            let (pm, w) = match rel {
                Relation::Real => (p.p_real, p.score_real.w),
                Relation::Virtual => (p.p_virtual, p.score_virtual.w),
            };
            e.push(f(&vals(model, w), &matvec(&vals(model, pm), d, h)));
        }
        let total: f64 = e.iter().map(|x| x.exp()).sum();
        let alpha: Vec<f64> = e.iter().map(|x| x.exp() / total).collect();
        (0..d)
            .map(|k| (alpha[0] * center[k] + neighbors.iter().zip(&alpha[1..]).map(|((_, h), a)| a * h[k]).sum::<f64>()).tanh())
            .collect()
    }

    fn tie_oracle(model: &DreamModel, prev: &[f64], cur: &[f64]) -> Vec<f64> {
        let t = &model.tie.as_ref().unwrap().layers[0];
        let d = t.dim;
        let mv = |w: ParamId, x: &[f64]| matvec(&vals(model, w), d, x);
        let (wq, we, wh, uh) = (mv(t.w_q, prev), mv(t.w_e, cur), mv(t.w_h, cur), mv(t.u_h, prev));
        let (bq, be, bh) = (vals(model, t.b_q), vals(model, t.b_e), vals(model, t.b_h));
        (0..d)
            .map(|k| {
                let uq = logistic(wq[k] + bq[k]);
                let ue = logistic(we[k] + be[k]);
                let c = (wh[k] + ue * uh[k] + bh[k]).tanh();
                (1.0 - uq) * prev[k] + uq * c
            })
            .collect()
    }

    #[test]
    fn forward_matches_module_composition_oracle() {
        let (ds, sessions) = fixture();
        let ctx = social(&ds, true, true);
        let model = DreamModel::new(5, 10, small_config(3), Variant::Dream.config(2), 7).unwrap();
        let inputs = Inputs { sessions: &sessions, social: &ctx, epoch: None };
        for user in 0..5u32 {
            let inst = instance(user, vec![1, 2], 0, vec![]);
            let got = model.representations(&inputs, &[&inst]).unwrap().remove(0);

            let mut state = model.store.value(model.user_emb).row(user as usize).to_vec();
            let mut out = Vec::new();
            for (t, &pos) in inst.context.iter().enumerate() {
                let graph = ctx.graph(user, &sessions[user as usize].sessions[pos], &sessions, None);
                let ns: Vec<(Relation, Vec<f64>)> = graph
                    .neighbors
                    .iter()
                    .map(|n| {
                        let h = match n.prior_session {
                            Some(k) => gru_oracle(&model, &sessions[n.user as usize].sessions[k].items),
                            None => model.store.value(model.user_emb).row(n.user as usize).to_vec(),
                        };
                        (n.relation, h)
                    })
                    .collect();
                out = rgat_oracle(&model, &state, &ns);
                if t + 1 < inst.context.len() {
                    state = tie_oracle(&model, &state, &out);
                }
            }
            for (a, b) in got.iter().zip(&out) {
                assert!((a - b).abs() < 1e-12, "user {user}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn prediction_is_the_logistic_of_the_dot_product() {
        let mut model = DreamModel::new(2, 3, small_config(3), Variant::Dream.config(2), 0).unwrap();
        model.store.value_mut(model.item_emb).row_mut(1).copy_from_slice(&[1.0, 0.0, 0.0]);
        let s = model.score_items(&[1.0, 0.0, 0.0], &[1])[0];
        assert!((logistic(s) - 0.7310585786300049).abs() < 1e-12);
        model.store.value_mut(model.item_emb).row_mut(2).copy_from_slice(&[0.0, 1.0, 0.0]);
        assert_eq!(logistic(model.score_items(&[1.0, 0.0, 0.0], &[2])[0]), 0.5);
        let sweep: Vec<f64> = (-5..=5).map(|k| logistic(k as f64)).collect();
        assert!(sweep.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn plain_scores_match_tape_logits() {
        let (ds, sessions) = fixture();
        let ctx = social(&ds, true, true);
        for head in [Head::Dot, Head::Mlp] {
            let cfg = ModelConfig { head, ..small_config(4) };
            let model = DreamModel::new(5, 10, cfg, Variant::Dream.config(2), 3).unwrap();
            let inputs = Inputs { sessions: &sessions, social: &ctx, epoch: None };
            let inst = instance(1, vec![0, 1], 0, vec![]);
            let rep = model.representations(&inputs, &[&inst]).unwrap().remove(0);
            let items: Vec<u32> = (0..10).collect();
            let plain = model.score_items(&rep, &items);
            let mut tape = crate::numkernel::Tape::new();
            let mut binder = crate::params::Binder::frozen();
            let mut f = crate::params::Forward::new(&mut tape, &mut binder, &model.store);
            let u = f.tape.constant(Tensor::vector(rep.clone()));
            for (&i, p) in items.iter().zip(&plain) {
                let z = model.logit(&mut f, u, i).unwrap();
                assert!((f.tape.value(z).data()[0] - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn data_loss_of_a_zero_logit_is_ln_two() {
        let (ds, sessions) = fixture();
        let ctx = social(&ds, true, true);
        let mut model = DreamModel::new(5, 10, small_config(3), Variant::Dream.config(2), 3).unwrap();
        model.store.value_mut(model.item_emb).data_mut().iter_mut().for_each(|v| *v = 0.0);
        let inputs = Inputs { sessions: &sessions, social: &ctx, epoch: None };
        let inst = instance(0, vec![1, 2], 3, vec![4, 5]);
        let loss = model.loss_value(&inputs, &[&inst], 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn tied_relation_parameters_reproduce_plain_attention_bitwise() {
        let (ds, sessions) = fixture();
        let ctx = social(&ds, true, true);
        let mut model = DreamModel::new(5, 10, small_config(4), Variant::Dream.config(2), 9).unwrap();
        let r = model.rgat.clone();
        let p = model.store.value(r.p_real).clone();
        let w = model.store.value(r.score_real.w).clone();
        *model.store.value_mut(r.p_virtual) = p;
        *model.store.value_mut(r.score_virtual.w) = w.clone();
        *model.store.value_mut(r.score_self.w) = w;
        let gat = model.with_variant(Variant::DreamGat.config(2)).unwrap();
        let inputs = Inputs { sessions: &sessions, social: &ctx, epoch: None };
        let batch: Vec<Instance> = (0..5).map(|u| instance(u, vec![1, 2], 0, vec![])).collect();
        let refs: Vec<&Instance> = batch.iter().collect();
        let a = model.representations(&inputs, &refs).unwrap();
        let b = gat.representations(&inputs, &refs).unwrap();
        let bits = |x: &Vec<Vec<f64>>| x.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn wrong_context_length_is_a_modeling_error() {
        let (ds, sessions) = fixture();
        let ctx = social(&ds, true, true);
        let model = DreamModel::new(5, 10, small_config(3), Variant::Dream.config(2), 0).unwrap();
        let inputs = Inputs { sessions: &sessions, social: &ctx, epoch: None };
        let err = model.representations(&inputs, &[&instance(3, vec![1], 0, vec![])]).unwrap_err();
        assert!(matches!(err, crate::Error::Modeling(ref m) if m.contains("user 3")));
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let (ds, sessions) = fixture();
        let ctx = social(&ds, true, true);
        for cfg in [small_config(3), ModelConfig { head: Head::Mlp, batch_norm: true, ..small_config(3) }] {
            let model = DreamModel::new(5, 10, cfg, Variant::Dream.config(2), 11).unwrap();
            let inputs = Inputs { sessions: &sessions, social: &ctx, epoch: None };
            let batch: Vec<Instance> =
                (0..5).map(|u| instance(u, vec![1, 2], u % 10, vec![(u + 3) % 10, (u + 7) % 10])).collect();
            let refs: Vec<&Instance> = batch.iter().collect();
            let mut m = model.clone();
            m.accumulate_gradients(&inputs, &refs, 1e-3).unwrap();
            let ids: Vec<ParamId> = m.store.ids().collect();
            let params: Vec<Tensor> = ids.iter().map(|id| m.store.value(*id).clone()).collect();
            let numeric = central_difference(&params, 1e-5, |ps| {
                let mut probe = model.clone();
                for (id, p) in ids.iter().zip(ps) {
                    *probe.store.value_mut(*id) = p.clone();
                }
                probe.loss_value(&inputs, &refs, 1e-3).unwrap()
            });
            for (id, n) in ids.iter().zip(&numeric) {
                let err = max_relative_error(m.store.grad(*id).data(), n);
                assert!(err < 1e-4, "{}: {err}", m.store.name(*id));
            }
        }
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly() {
        let cfg = ModelConfig { batch_norm: true, head: Head::Mlp, ..small_config(3) };
        let mut model = DreamModel::new(5, 10, cfg, Variant::DreamTgru.config(2), 4).unwrap();
        model.norm.as_mut().unwrap().running_mean[1] = 0.1 + 0.2;
        let ck = Checkpoint { model, metadata: serde_json::json!({"note": "x"}) };
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        for id in ck.model.store.ids() {
            let a: Vec<u64> = ck.model.store.value(id).data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.model.store.value(id).data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "{}", ck.model.store.name(id));
        }
        assert_eq!(back.model.norm.unwrap().running_mean, ck.model.norm.as_ref().unwrap().running_mean);
        assert_eq!(back.metadata, ck.metadata);
        assert_eq!(back.model.variant, ck.model.variant);
        assert!(Checkpoint::from_json("{\"format\":\"other\"}").is_err());
    }
}
