//! Central-difference verification of loss gradients for every trainable
//! parameter, across all fusion modes, heads, and adapter settings.

use ndarray::Array2;
use turnkit_core::autograd::Tape;
use turnkit_core::model::{
    EncoderConfig, FusionOption, HeadKind, Model, TaskExample, ThreeWayExample, Vocab,
};
use turnkit_core::train::FreezePolicy;

const H: f32 = 1e-4;

fn enc(seed: u64) -> EncoderConfig {
    EncoderConfig {
        acoustic_frame_dim: 3,
        acoustic_proj_dim: 2,
        text_embed_dim: 8,
        text_layers: 1,
        text_heads: 2,
        text_ff_dim: 8,
        max_seq_len: 16,
        seed,
    }
}

fn vocab() -> Vocab {
    Vocab::build(["red", "green", "blue"])
}

fn frames(shift: f64) -> Array2<f64> {
    Array2::from_shape_fn((3, 3), |(i, j)| ((i * 3 + j) as f64).sin() * 0.4 + shift)
}

enum Batch {
    Three(Vec<ThreeWayExample>),
    Multi([Vec<TaskExample>; 3]),
}

fn three_way_batch(model: &Model) -> Batch {
    let texts = ["red", "red green", "blue green red"];
    let examples = texts
        .iter()
        .enumerate()
        .map(|(i, t)| ThreeWayExample {
            frames: model.fusion.uses_acoustic().then(|| frames(i as f64 * 0.3 - 0.2)),
            token_ids: model.fusion.uses_text().then(|| model.vocab.encode_text(t)),
            label: i % 3,
        })
        .collect();
    Batch::Three(examples)
}

fn multitask_batch(model: &Model) -> Batch {
    let ex = |text: &str, shift: f64, label: f64| TaskExample {
        frames: model.fusion.uses_acoustic().then(|| frames(shift)),
        token_ids: model.vocab.encode_text(text),
        binary_label: label,
    };
    Batch::Multi([
        vec![ex("red green", 0.1, 1.0), ex("blue", -0.3, 0.0)],
        vec![ex("green", 0.2, 0.0)],
        vec![ex("blue red", 0.0, 1.0)],
    ])
}

fn loss_of(model: &Model, batch: &Batch) -> f64 {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let node = match batch {
        Batch::Three(examples) => {
            model
                .three_way_batch_graph(&mut tape, &bound, examples)
                .unwrap()
                .1
        }
        Batch::Multi(tasks) => {
            model
                .multitask_graph(&mut tape, &bound, tasks)
                .unwrap()
                .total_loss
        }
    };
    tape.value(node)[[0, 0]]
}

/// Compare every trainable scalar's analytic gradient against a central
/// difference taken through the single-precision parameter storage.
fn check_all_trainable(model: &Model, batch: &Batch) {
    let policy = FreezePolicy::for_model(model);
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let node = match batch {
        Batch::Three(examples) => {
            model
                .three_way_batch_graph(&mut tape, &bound, examples)
                .unwrap()
                .1
        }
        Batch::Multi(tasks) => {
            model
                .multitask_graph(&mut tape, &bound, tasks)
                .unwrap()
                .total_loss
        }
    };
    let grads = tape.backward(node);
    let mut perturbed = model.clone();
    let mut checked = 0usize;
    for name in policy.trainable_names() {
        let analytic = grads.get(bound.node(name)).cloned();
        let (rows, cols) = model.params.get(name).dim();
        for r in 0..rows {
            for c in 0..cols {
                let a = analytic.as_ref().map_or(0.0, |g| g[[r, c]]);
                let orig = perturbed.params.get(name)[[r, c]];
                let hp = orig + H;
                let hm = orig - H;
                perturbed.params.get_mut(name)[[r, c]] = hp;
                let lp = loss_of(&perturbed, batch);
                perturbed.params.get_mut(name)[[r, c]] = hm;
                let lm = loss_of(&perturbed, batch);
                perturbed.params.get_mut(name)[[r, c]] = orig;
                let eff_h = f64::from(hp) - f64::from(hm);
                let fd = (lp - lm) / eff_h;
                let tol = 1e-3 * a.abs().max(fd.abs()) + 3e-5;
                assert!(
                    (fd - a).abs() <= tol,
                    "{name}[{r},{c}]: finite difference {fd} vs analytic {a}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 0, "no trainable scalars were checked");
}

#[test]
fn acoustic_three_way_gradients() {
    let m = Model::new(enc(5), vocab(), FusionOption::AcousticOnly, HeadKind::ThreeWay, None)
        .unwrap();
    let b = three_way_batch(&m);
    check_all_trainable(&m, &b);
}

#[test]
fn text_three_way_gradients() {
    let m =
        Model::new(enc(6), vocab(), FusionOption::TextOnly, HeadKind::ThreeWay, None).unwrap();
    let b = three_way_batch(&m);
    check_all_trainable(&m, &b);
}

#[test]
fn fused_opt1_three_way_gradients() {
    let m =
        Model::new(enc(7), vocab(), FusionOption::FusionOpt1, HeadKind::ThreeWay, None).unwrap();
    let b = three_way_batch(&m);
    check_all_trainable(&m, &b);
}

#[test]
fn fused_opt2_three_way_gradients() {
    let m =
        Model::new(enc(8), vocab(), FusionOption::FusionOpt2, HeadKind::ThreeWay, None).unwrap();
    let b = three_way_batch(&m);
    check_all_trainable(&m, &b);
}

#[test]
fn text_multitask_gradients() {
    let m = Model::new(
        enc(9),
        vocab(),
        FusionOption::TextOnly,
        HeadKind::MultiTaskBinary,
        None,
    )
    .unwrap();
    let b = multitask_batch(&m);
    check_all_trainable(&m, &b);
}

#[test]
fn fused_opt1_multitask_gradients() {
    let m = Model::new(
        enc(10),
        vocab(),
        FusionOption::FusionOpt1,
        HeadKind::MultiTaskBinary,
        None,
    )
    .unwrap();
    let b = multitask_batch(&m);
    check_all_trainable(&m, &b);
}

#[test]
fn adapter_three_way_gradients() {
    let m = Model::new(enc(11), vocab(), FusionOption::TextOnly, HeadKind::ThreeWay, Some(2))
        .unwrap();
    let b = three_way_batch(&m);
    check_all_trainable(&m, &b);
}

#[test]
fn adapter_fused_multitask_gradients() {
    let m = Model::new(
        enc(12),
        vocab(),
        FusionOption::FusionOpt1,
        HeadKind::MultiTaskBinary,
        Some(2),
    )
    .unwrap();
    let b = multitask_batch(&m);
    check_all_trainable(&m, &b);
}
