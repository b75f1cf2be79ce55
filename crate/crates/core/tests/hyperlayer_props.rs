use hae::geometry::kernels;
use hae::hyperlayers::{softmax, Dense, HyperMlr, Mlp, MobiusLinear};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 4e-3;

fn point(dim: usize, max_radius: f64, c: f64) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, dim), 0.0..max_radius).prop_filter_map("zero direction", move |(d, r)| {
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        (n > 1e-3).then(|| d.iter().map(|v| v * kernels::norm_at_radius(r, c) / n).collect())
    })
}

fn mlr(classes: usize, dim: usize, seed: u64) -> HyperMlr {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = HyperMlr::init(classes, dim, &mut rng).unwrap();
    // push prototypes off the origin so translation matters
    m.offsets.iter_mut().for_each(|q| *q *= 10.0);
    m
}

/// Reflection of `u` through the hyperplane `⟨u, a⟩ = 0`.
fn reflect(u: &[f64], a: &[f64]) -> Vec<f64> {
    let aa: f64 = a.iter().map(|v| v * v).sum();
    let ua: f64 = u.iter().zip(a).map(|(x, y)| x * y).sum();
    u.iter().zip(a).map(|(x, y)| x - 2.0 * ua / aa * y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Left translation by `−p` is an isometry taking the class hyperplane
    /// to `⟨u, a⟩ = 0`; reflecting across it is another isometry, so the
    /// distance to the hyperplane is half the distance to the mirror image.
    #[test]
    fn logits_match_the_reflection_oracle(
        (dim, classes, seed) in (2usize..6, 2usize..5, any::<u64>()),
        c in 0.5f64..2.0,
        raw in prop::collection::vec(-1.0f64..1.0, 6),
        r in 0.0f64..4.0,
    ) {
        let m = mlr(classes, dim, seed);
        let n = raw[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let x: Vec<f64> = raw[..dim].iter().map(|v| v * kernels::norm_at_radius(r, c) / n).collect();
        let logits = m.logits(&x, c, EPS).unwrap();
        for (k, &got) in logits.iter().enumerate() {
            let a = &m.normals[k * dim..(k + 1) * dim];
            let p = m.prototype(k, c, EPS);
            let u = kernels::mobius_add(&kernels::neg(&p), &x, c);
            let dist_to_plane = kernels::distance(&u, &reflect(&u, a), c) / 2.0;
            let side: f64 = u.iter().zip(a).map(|(x, y)| x * y).sum::<f64>().signum();
            let a_norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let want = side * kernels::conformal_factor(&p, c) * a_norm * dist_to_plane;
            prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "class {k}: {got} vs {want}");
        }
    }

    #[test]
    fn prototypes_lie_on_their_own_boundary((dim, classes, seed) in (2usize..8, 2usize..6, any::<u64>())) {
        let m = mlr(classes, dim, seed);
        for k in 0..classes {
            let p = m.prototype(k, 1.0, EPS);
            prop_assert_eq!(m.logits(&p, 1.0, EPS).unwrap()[k], 0.0);
        }
    }

    #[test]
    fn scaling_normals_scales_logits(
        (dim, classes, seed) in (2usize..8, 2usize..6, any::<u64>()),
        s in 0.1f64..10.0,
        x in point(7, 5.0, 1.0),
    ) {
        let x = &x[..dim];
        let m = mlr(classes, dim, seed);
        let mut scaled = m.clone();
        scaled.normals.iter_mut().for_each(|a| *a *= s);
        let base = m.logits(x, 1.0, EPS).unwrap();
        let got = scaled.logits(x, 1.0, EPS).unwrap();
        for k in 0..classes {
            prop_assert!((got[k] - s * base[k]).abs() <= 1e-10 * (s * base[k]).abs().max(1.0));
        }
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert_eq!(argmax(&got), argmax(&base));
    }

    #[test]
    fn scaled_identity_layer_is_scalar_multiplication(t in 0.0f64..3.0, x in point(5, 1.5, 1.0)) {
        let layer = MobiusLinear::scaled_identity(5, t);
        let got = layer.forward(&x, 1.0, EPS).unwrap();
        let want = kernels::project(&kernels::mobius_scalar_mul(t, &x, 1.0), 1.0, EPS);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-8);
        }
    }

    #[test]
    fn mobius_linear_outputs_stay_inside(seed in any::<u64>(), x in point(6, 6.0, 1.0), act in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = MobiusLinear::glorot(6, 4, &mut rng);
        layer.weight.iter_mut().for_each(|w| *w *= 5.0);
        layer.activation = act;
        let y = layer.forward(&x, 1.0, EPS).unwrap();
        prop_assert!(kernels::sq_norm(&y).sqrt() <= 1.0 - EPS + 1e-14);
    }

    #[test]
    fn identity_mlp_preserves_inputs(dim in 1usize..6, depth in 1usize..6, x in prop::collection::vec(-100.0f64..100.0, 6)) {
        let x = &x[..dim];
        let y = Mlp::identity(dim, depth).forward(x).unwrap();
        for (a, b) in y.iter().zip(x) {
            prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn constant_layer_ignores_its_input() {
    let layer = Dense {
        in_dim: 3,
        out_dim: 2,
        weight: vec![0.0; 6],
        bias: vec![1.0, 2.0],
    };
    let mlp = Mlp::new(vec![layer]).unwrap();
    assert_eq!(mlp.forward(&[5.0, -3.0, 0.25]).unwrap(), vec![1.0, 2.0]);
}
