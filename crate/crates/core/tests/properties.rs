use proptest::prelude::*;

use npmerge::align::{apply_alignment, weight_matching, PermutationSet};
use npmerge::checkpoint::{decode, encode, Checkpoint, Payload, Provenance};
use npmerge::data::{synth_blobs, SplitSpec};
use npmerge::merge::{containment_violations, finetune, np_compose, np_optimize, uniform_merge, AlphaSet, MergeConfig};
use npmerge::nn::{bn_reset, predict, train_model, MlpSpec, ModelParams, TrainConfig};
use npmerge::numerics::{lap_solve, Permutation, Rng, Sense, Tensor};

fn random_model(widths: &[usize], bn: bool, seed: u64) -> ModelParams {
    let spec = MlpSpec::uniform(widths, bn).unwrap();
    let mut rng = Rng::new(seed);
    let mut m = ModelParams::init(&spec, &mut rng);
    for t in m.trainable_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += 0.3 * rng.normal());
    }
    m
}

fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn widths() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..7, 3..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn composition_stays_between_endpoints(w in widths(), bn: bool, seed: u64) {
        let a = random_model(&w, bn, seed);
        let b = random_model(&w, bn, seed.wrapping_add(1));
        let mut rng = Rng::new(seed);
        let alphas = AlphaSet::from_tensors(
            a.trainable().iter().map(|t| random_tensor(t.shape(), &mut rng).map(|v| 8.0 * v)).collect(),
        ).unwrap();
        let merged = np_compose(&a, &b, &alphas).unwrap();
        prop_assert_eq!(containment_violations(&a, &b, &merged), 0);
        prop_assert!(alphas.in_range());
    }

    #[test]
    fn uniform_endpoints_are_exact(w in widths(), bn: bool, seed: u64) {
        let a = random_model(&w, bn, seed);
        let b = random_model(&w, bn, seed.wrapping_add(7));
        let at_a = uniform_merge(&a, &b, 1.0).unwrap();
        let at_b = uniform_merge(&a, &b, 0.0).unwrap();
        let same = uniform_merge(&a, &a, 0.3).unwrap();
        prop_assert_eq!(at_a.trainable(), a.trainable());
        prop_assert_eq!(at_b.trainable(), b.trainable());
        prop_assert_eq!(same.trainable(), a.trainable());
    }

    #[test]
    fn alignment_preserves_function_and_inverts(w in widths(), bn: bool, seed: u64) {
        let mut model = random_model(&w, bn, seed);
        let mut rng = Rng::new(seed ^ 0xABCD);
        if bn {
            model = bn_reset(&model, &random_tensor(&[16, w[0]], &mut rng), 8).unwrap().0;
        }
        let p = PermutationSet::random(&model, &mut rng);
        let moved = apply_alignment(&model, &p).unwrap();
        let x = random_tensor(&[10, w[0]], &mut rng);
        let d = predict(&model, &x).unwrap().max_abs_diff(&predict(&moved, &x).unwrap()).unwrap();
        prop_assert!(d <= 1e-9);
        let back = apply_alignment(&moved, &p.inverse()).unwrap();
        prop_assert_eq!(back, model);
    }

    #[test]
    fn lap_beats_random_assignments(n in 1usize..12, seed: u64) {
        let mut rng = Rng::new(seed);
        let cost = random_tensor(&[n, n], &mut rng);
        let best = lap_solve(&cost, Sense::Maximize).unwrap();
        for _ in 0..20 {
            let p = Permutation::random(n, &mut rng);
            let v: f64 = (0..n).map(|i| cost.at(i, p.as_slice()[i])).sum();
            prop_assert!(v <= best.value + 1e-9);
        }
        let worst = lap_solve(&cost, Sense::Minimize).unwrap();
        prop_assert!(worst.value <= best.value);
    }

    #[test]
    fn weight_matching_never_lowers_the_objective(w in widths(), seed: u64) {
        let a = random_model(&w, false, seed);
        let b = random_model(&w, false, seed.wrapping_add(3));
        let wm = weight_matching(&a, &b, 50, seed).unwrap();
        prop_assert!(wm.objective.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn splits_partition_the_pool(alpha in 0.1f64..5.0, parts in 2usize..5, seed: u64) {
        let data = synth_blobs(4, 12, 3, 1.0, seed).unwrap();
        let spec = SplitSpec::Dirichlet { alphas: vec![alpha; parts], seed };
        let p = spec.partition(&data).unwrap();
        prop_assert!(p.covers(data.len()));
        prop_assert_eq!(p.parts.len(), parts);
    }

    #[test]
    fn checkpoints_round_trip(w in widths(), bn: bool, seed: u64, note in "[a-z ]{0,12}") {
        let model = random_model(&w, bn, seed);
        let ckpt = Checkpoint { payload: Payload::Model(model), provenance: Provenance::new(seed, [7; 32], note) };
        let back = decode(&encode(&ckpt), "mem").unwrap();
        prop_assert_eq!(encode(&back), encode(&ckpt));
        prop_assert_eq!(back, ckpt);
    }
}

/// The learned coefficients stay close to the starting average: per seed,
/// the merged model lies nearer the 0.5 average than the fine-tuned one.
#[test]
fn np_moves_less_than_finetuning() {
    let data = synth_blobs(4, 60, 6, 1.2, 3).unwrap();
    let spec = MlpSpec::uniform(&[6, 16, 4], true).unwrap();
    for seed in 0..3u64 {
        let train = |s| {
            let cfg = TrainConfig {
                epochs: 5,
                seed: s,
                ..TrainConfig::default()
            };
            train_model(&spec, &data, &cfg).unwrap().params
        };
        let (a, b) = (train(10 + seed), train(20 + seed));
        let cfg = MergeConfig {
            seed,
            ..MergeConfig::default()
        };
        let avg = uniform_merge(&a, &b, 0.5).unwrap();
        let np = np_optimize(&a, &b, &data, &cfg).unwrap();
        assert!(np.loss_curve.last() < np.loss_curve.first());
        assert_eq!(np.invariants.violations(), 0);
        let ft = finetune(&avg, &data, &cfg).unwrap().params;
        let d_np = np.merged.trainable_distance(&avg).unwrap();
        let d_ft = ft.trainable_distance(&avg).unwrap();
        assert!(d_np <= d_ft, "seed {seed}: np {d_np} vs finetune {d_ft}");
    }
}
