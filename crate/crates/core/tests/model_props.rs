use hae::data::{gen_hierarchy, HierSpec, Split};
use hae::geometry::radius;
use hae::losses::{nll_single, total_loss, LossTerms, LossWeights};
use hae::model::{HaeModel, ModelConfig};
use hae::train::{Checkpoint, TrainConfig};
use proptest::prelude::*;

fn small() -> ModelConfig {
    ModelConfig {
        input_dim: 12,
        latent_dim: 8,
        euclid_dim: 6,
        ball_dim: 4,
        hidden_dim: 10,
        encoder_layers: 3,
        decoder_layers: 3,
        classes: 3,
        probe_dim: 5,
        ..ModelConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nll_is_permutation_equivariant(
        (logits, label, perm) in prop::collection::vec(-10.0f64..10.0, 2..8).prop_flat_map(|l| {
            let k = l.len();
            (Just(l), 0..k, Just((0..k).collect::<Vec<usize>>()).prop_shuffle())
        }),
    ) {
        let permuted: Vec<f64> = perm.iter().map(|&j| logits[j]).collect();
        let new_label = perm.iter().position(|&j| j == label).unwrap();
        let a = nll_single(&logits, label).unwrap();
        let b = nll_single(&permuted, new_label).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn total_is_the_exact_weighted_sum(
        t in prop::collection::vec(0.0f64..10.0, 4),
        w in prop::collection::vec(0.0f64..2.0, 3),
    ) {
        let terms = LossTerms { l2: t[0], perceptual_proxy: t[1], latent_rec: t[2], hyper: t[3] };
        let weights = LossWeights { lambda1: w[0], lambda2: w[1], lambda3: w[2] };
        let b = total_loss(&terms, &weights).unwrap();
        prop_assert_eq!(b.total, t[0] + w[0] * t[1] + w[1] * t[2] + w[2] * t[3]);
    }

    #[test]
    fn codes_never_pass_the_maximum_radius(x in prop::collection::vec(-1e3f64..1e3, 12), seed in 0u64..50) {
        let model = HaeModel::new(ModelConfig { init_seed: seed, ..small() }).unwrap();
        let (_, z) = model.encode(&x).unwrap();
        prop_assert!(radius(&z).get() <= model.ball.r_max());
        let out = model.forward(&x, Some(0)).unwrap();
        let t = out.terms;
        prop_assert!([t.l2, t.perceptual_proxy, t.latent_rec, t.hyper].iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn frozen_parts_have_no_parameters() {
    let model = HaeModel::new(small()).unwrap();
    let ps = model.params().unwrap();
    let names: Vec<&str> = ps.iter().map(|t| t.name.as_str()).collect();
    assert!(
        names.iter().all(|n| ["encoder.", "hyper.", "decoder.", "mlr."]
            .iter()
            .any(|p| n.starts_with(p))),
        "{names:?}"
    );
    let frozen = model.backbone.matrix.len() + model.generator.pinv.len() + model.probe.matrix.len();
    assert!(ps.numel() > 0 && frozen > 0);
}

#[test]
fn save_load_forward_is_bit_identical() {
    let ds = gen_hierarchy(&HierSpec {
        per_class: 4,
        dim: 12,
        ..HierSpec::default()
    })
    .unwrap();
    let cfg = ModelConfig {
        classes: ds.classes(Split::Seen).len(),
        ..small()
    };
    let model = HaeModel::new(cfg).unwrap();
    let ckpt = Checkpoint::new(&model, &TrainConfig::default(), 0, None).unwrap();
    let back = Checkpoint::from_json(&ckpt.to_json().unwrap())
        .unwrap()
        .model()
        .unwrap();
    for s in &ds.samples {
        let a = model.forward(&s.features, None).unwrap();
        let b = back.forward(&s.features, None).unwrap();
        assert_eq!(a.z.coords(), b.z.coords());
        assert_eq!(a.recon, b.recon);
        let (ta, tb) = (a.terms, b.terms);
        assert_eq!(
            [ta.l2, ta.perceptual_proxy, ta.latent_rec, ta.hyper],
            [tb.l2, tb.perceptual_proxy, tb.latent_rec, tb.hyper]
        );
    }
}
