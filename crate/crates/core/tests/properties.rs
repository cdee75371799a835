use dsthcn::data::{decode_skl, encode_skl, preprocess, Dataset, SkeletonSample};
use dsthcn::hypergraph::{normalize, IncidenceMatrix, SkeletonDefinition, SkeletonId};
use dsthcn::training::{derive_stream, fuse_scores, lr_at, sgd_step, StreamKind, TrainConfig, Velocity};
use dsthcn::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn incidence() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<f64>)> {
    (1usize..=7, 1usize..=6).prop_flat_map(|(n, e)| {
        (
            Just(n),
            Just(e),
            prop::collection::vec(any::<bool>(), n * e),
            prop::collection::vec(0.05f64..5.0, e),
        )
    })
}

fn joints(skeleton: SkeletonId) -> usize {
    skeleton.definition().unwrap().num_joints()
}

fn skeleton() -> impl Strategy<Value = SkeletonId> {
    prop_oneof![Just(SkeletonId::Ntu25), Just(SkeletonId::Ucla20)]
}

fn sample_tensor(c: usize, t: usize, v: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-10.0f64..10.0, c * t * v).prop_map(move |d| Tensor::new(&[c, t, v], d).unwrap())
}

fn dataset() -> impl Strategy<Value = Dataset> {
    (skeleton(), 2usize..6, 1usize..4, 1usize..5).prop_flat_map(|(sk, k, c, t)| {
        let v = joints(sk);
        let sample = (0..k, prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO, c * t * v))
            .prop_map(move |(label, d)| {
                let data = d.into_iter().map(f64::from).collect();
                SkeletonSample::new(label, Tensor::new(&[c, t, v], data).unwrap()).unwrap()
            });
        prop::collection::vec(sample, 0..4).prop_map(move |samples| Dataset::new(sk, k, samples).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_operator_is_symmetric_psd_and_bounded((n, e, h, w) in incidence()) {
        let dense = Tensor::new(&[n, e], h.iter().map(|&b| f64::from(u8::from(b))).collect()).unwrap();
        let inc = IncidenceMatrix::from_dense(dense).unwrap().with_weights(w).unwrap();
        let op = normalize(&inc).unwrap().into_matrix();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((op.at2(i, j) - op.at2(j, i)).abs() <= 1e-12);
                m[(i, j)] = op.at2(i, j);
            }
        }
        for ev in SymmetricEigen::new(m).eigenvalues.iter() {
            prop_assert!(*ev >= -1e-8 && *ev <= 1.0 + 1e-8, "eigenvalue {ev}");
        }
    }

    #[test]
    fn lr_never_increases_after_warmup(epochs in 2usize..200, warm in 0usize..10, base in 1e-3f64..1.0, floor in 0.0f64..1e-3) {
        prop_assume!(warm < epochs);
        let cfg = TrainConfig { epochs, warmup_epochs: warm, base_lr: base, eta_min: floor, ..TrainConfig::default() };
        let lrs: Vec<f64> = (0..epochs).map(|e| lr_at(e, &cfg).unwrap()).collect();
        for e in warm.max(1)..epochs {
            if e > warm {
                prop_assert!(lrs[e] <= lrs[e - 1] + 1e-15, "epoch {e}: {} > {}", lrs[e], lrs[e - 1]);
            }
            prop_assert!(lrs[e] >= floor - 1e-15);
        }
        let last = if warm + 1 == epochs { base } else { floor };
        prop_assert!((lrs[epochs - 1] - last).abs() <= 1e-12);
    }

    #[test]
    fn zero_gradient_step_leaves_parameters_alone(
        values in prop::collection::vec(-100.0f64..100.0, 1..20),
        lr in 0.0f64..2.0,
        momentum in 0.0f64..0.99,
    ) {
        let cfg = TrainConfig { momentum, weight_decay: 0.0, ..TrainConfig::default() };
        let mut p = vec![Tensor::new(&[values.len()], values.clone()).unwrap()];
        let g = vec![Tensor::zeros(&[values.len()])];
        let mut v = Velocity::zeros(&p);
        for _ in 0..3 {
            sgd_step(&mut p, &g, lr, &cfg, &mut v).unwrap();
        }
        prop_assert_eq!(p[0].data(), &values[..]);
    }

    #[test]
    fn bones_sum_back_to_joints(sk in skeleton(), data in (1usize..4).prop_flat_map(|t| sample_tensor(3, t, 25))) {
        let def = sk.definition().unwrap();
        let v = def.num_joints();
        let (c, t, _) = data.dims3().unwrap();
        let x = Tensor::new(&[c, t, v], data.data()[..c * t * v].to_vec()).unwrap();
        let joint = SkeletonSample::new(0, x.clone()).unwrap();
        let bone = derive_stream(&joint, &def, StreamKind::Bone).unwrap().data;
        let root = (0..v).find(|&j| def.parent(j) == j).unwrap();
        for ch in 0..c {
            for tt in 0..t {
                for j in 0..v {
                    let (mut sum, mut u) = (0.0, j);
                    while def.parent(u) != u {
                        sum += bone.at3(ch, tt, u);
                        u = def.parent(u);
                    }
                    let want = x.at3(ch, tt, j) - x.at3(ch, tt, root);
                    prop_assert!((sum - want).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn fused_argmax_ignores_a_common_scale(
        (b, k, s) in (1usize..6, 2usize..6, 1usize..5),
        seed in any::<u64>(),
        scale in 0.01f64..100.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let tables: Vec<Tensor> = (0..s)
            .map(|_| Tensor::new(&[b, k], (0..b * k).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap())
            .collect();
        let weights: Vec<f64> = (0..s).map(|_| rng.gen_range(0.1..2.0)).collect();
        let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let (_, a) = fuse_scores(&tables, &weights).unwrap();
        let (_, bb) = fuse_scores(&tables, &scaled).unwrap();
        prop_assert_eq!(a, bb);
    }

    #[test]
    fn skl_round_trip_is_bitwise(d in dataset()) {
        let bytes = encode_skl(&d).unwrap();
        let back = decode_skl(&bytes).unwrap();
        prop_assert_eq!(encode_skl(&back).unwrap(), bytes);
        prop_assert_eq!(back.len(), d.len());
    }

    #[test]
    fn preprocess_ignores_translation(
        x in (1usize..5).prop_flat_map(|t| sample_tensor(3, t, 25)),
        shift in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let sk = SkeletonDefinition::ntu25();
        let (_, t, v) = x.dims3().unwrap();
        let moved = Tensor::new(&[3, t, v], x.data().iter().enumerate().map(|(i, a)| a + shift[i / (t * v)]).collect()).unwrap();
        let a = preprocess(&SkeletonSample::new(0, x).unwrap(), &sk).unwrap();
        let b = preprocess(&SkeletonSample::new(0, moved).unwrap(), &sk).unwrap();
        prop_assert!(a.data.max_abs_diff(&b.data) <= 1e-6);
    }
}
