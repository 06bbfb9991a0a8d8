//! Property tests over randomly generated inputs.

use kneeaug::augment::{apply_affine, apply_condition, cube_shuffle, AffineDraw};
use kneeaug::imagecore::{equalize_histogram, horizontal_mirror, invert, resize_bilinear};
use kneeaug::nn::checkpoint::{decode_state, encode_state};
use kneeaug::nn::{
    softmax_rows, Activation, AdamConfig, BlockSpec, ConvLayer, Layer, Padding, TrainState,
};
use kneeaug::pipeline::{split_indices, RunConfig, Sample, Side, SplitFractions};
use kneeaug::{
    confusion, prf1, roc_one_vs_all, AugmentationCondition, ConditionName, GrayImage, LayerStack,
    Tensor4,
};
use proptest::prelude::*;

fn image(max_side: usize) -> impl Strategy<Value = GrayImage> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h)
            .prop_map(move |p| GrayImage::new(w, h, p).unwrap())
    })
}

fn image_at_least(min_side: usize, max_side: usize) -> impl Strategy<Value = GrayImage> {
    (min_side..=max_side, min_side..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), w * h)
            .prop_map(move |p| GrayImage::new(w, h, p).unwrap())
    })
}

fn sorted(img: &GrayImage) -> Vec<u8> {
    let mut p = img.pixels().to_vec();
    p.sort_unstable();
    p
}

proptest! {
    #[test]
    fn equalized_range_and_order(img in image(32)) {
        let out = equalize_histogram(&img);
        let (lo, hi) = (img.pixels().iter().min().unwrap(), img.pixels().iter().max().unwrap());
        if lo == hi {
            prop_assert_eq!(&out, &img);
        } else {
            prop_assert_eq!(out.pixels().iter().min(), Some(&0));
            prop_assert_eq!(out.pixels().iter().max(), Some(&255));
        }
        for (i, &a) in img.pixels().iter().enumerate() {
            for (j, &b) in img.pixels().iter().enumerate().step_by(7) {
                if a <= b {
                    prop_assert!(out.pixels()[i] <= out.pixels()[j]);
                }
            }
        }
    }

    #[test]
    fn constant_images_are_fixed(w in 1usize..20, h in 1usize..20, v in any::<u8>()) {
        let img = GrayImage::filled(w, h, v);
        prop_assert_eq!(equalize_histogram(&img), img);
    }

    #[test]
    fn mirror_and_invert_are_involutions(img in image(24)) {
        prop_assert_eq!(horizontal_mirror(&horizontal_mirror(&img)), img.clone());
        prop_assert_eq!(invert(&invert(&img)), img);
    }

    #[test]
    fn resize_has_requested_dims(img in image(16), w in 1usize..40, h in 1usize..40) {
        prop_assert_eq!(resize_bilinear(&img, w, h).dims(), (w, h));
    }

    #[test]
    fn constant_resize_stays_constant(w in 1usize..12, h in 1usize..12, v in any::<u8>(), ow in 1usize..30, oh in 1usize..30) {
        let out = resize_bilinear(&GrayImage::filled(w, h, v), ow, oh);
        prop_assert!(out.pixels().iter().all(|&p| p == v));
    }

    #[test]
    fn conditions_emit_declared_counts(img in image_at_least(8, 40), seed in any::<u64>()) {
        for name in ConditionName::ALL {
            let out = apply_condition(&img, &AugmentationCondition::new(name, seed)).unwrap();
            prop_assert_eq!(out.len(), name.output_count(), "{}", name);
            prop_assert!(out.iter().all(|o| o.dims() == img.dims()), "{}", name);
        }
    }

    #[test]
    fn cube_shuffle_keeps_multiset(img in image_at_least(6, 40), grid in prop::sample::select(vec![2usize, 3, 6]), seed in any::<u64>()) {
        let out = cube_shuffle(&img, grid, seed).unwrap().remove(0);
        prop_assert_eq!(sorted(&out), sorted(&img));
    }

    #[test]
    fn identity_affine_is_identity(img in image(24)) {
        prop_assert_eq!(apply_affine(&img, &AffineDraw::IDENTITY), img);
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, k in 1usize..8, seed in any::<u64>()) {
        let mut s = seed;
        let data: Vec<f64> = (0..rows * k).map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 60.0
        }).collect();
        let p = softmax_rows(&Tensor4::from_vec([rows, k, 1, 1], data).unwrap());
        for row in p.chunks(k) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn conv_output_dims(u in 1usize..20, v in 1usize..20, k in 1usize..6, s in 1usize..4, same in any::<bool>()) {
        let padding = if same { Padding::Same } else { Padding::Valid };
        let conv = Layer::Conv(ConvLayer::new(2, 3, (k, k), s, padding, 1, Activation::Relu).unwrap());
        let x = Tensor4::zeros([1, 2, u, v]);
        let res = conv.forward(&x);
        if same {
            let (y, _) = res.unwrap();
            prop_assert_eq!(y.dims(), [1, 3, u.div_ceil(s), v.div_ceil(s)]);
        } else if u < k || v < k {
            prop_assert!(res.is_err());
        } else {
            let (y, _) = res.unwrap();
            prop_assert_eq!(y.dims(), [1, 3, (u - k) / s + 1, (v - k) / s + 1]);
        }
    }

    #[test]
    fn config_text_round_trips(
        epochs in 1u32..100,
        batch in 1usize..64,
        lr in 1e-6f64..1.0,
        rot in 0.0f64..90.0,
        roi in 0.05f64..0.95,
        seeds in any::<[u64; 4]>(),
        cond in prop::sample::select(ConditionName::ALL.to_vec()),
        eval in any::<bool>(),
    ) {
        let mut cfg = RunConfig { epochs, batch_size: batch, condition: cond, augment_eval: eval, ..RunConfig::default() };
        cfg.optimizer.learning_rate = lr;
        cfg.policy.max_rotation_deg = rot;
        cfg.roi.center_fraction = roi;
        [cfg.init_seed, cfg.split_seed, cfg.augment_seed, cfg.order_seed] = seeds;
        prop_assert_eq!(RunConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
    }

    #[test]
    fn auc_bounded_and_roc_monotone(scores in proptest::collection::vec(0u8..6, 2..60), labels in proptest::collection::vec(any::<bool>(), 2..60)) {
        let n = scores.len().min(labels.len());
        let mut truth: Vec<usize> = labels[..n].iter().map(|&b| usize::from(b)).collect();
        truth[0] = 1;
        truth[1] = 0;
        let rows: Vec<Vec<f64>> = scores[..n].iter().map(|&s| vec![0.0, s as f64 / 5.0]).collect();
        let roc = roc_one_vs_all(&rows, &truth, 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&roc.auc));
        prop_assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        prop_assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        prop_assert!(roc.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }

    #[test]
    fn macro_scores_ignore_class_names(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..80), perm in Just([0usize, 1, 2, 3, 4]).prop_shuffle()) {
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let a = prf1(&confusion(&t, &p, 5).unwrap()).unwrap();
        let tp: Vec<usize> = t.iter().map(|&x| perm[x]).collect();
        let pp: Vec<usize> = p.iter().map(|&x| perm[x]).collect();
        let b = prf1(&confusion(&tp, &pp, 5).unwrap()).unwrap();
        prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
        prop_assert!((a.macro_precision - b.macro_precision).abs() < 1e-12);
        prop_assert!((a.macro_recall - b.macro_recall).abs() < 1e-12);
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        for (k, scores) in a.per_class.iter().enumerate() {
            prop_assert_eq!(*scores, b.per_class[perm[k]]);
        }
    }

    #[test]
    fn splits_are_patient_disjoint(knees in proptest::collection::vec(1usize..=2, 3..60), seed in any::<u64>()) {
        let samples: Vec<Sample> = knees.iter().enumerate().flat_map(|(p, &n)| {
            [Side::Left, Side::Right].into_iter().take(n).map(move |side| Sample {
                image_path: format!("{p}{side}.png").into(),
                patient_id: format!("P{p}"),
                side,
                kl_grade: (p % 5) as u8,
            })
        }).collect();
        if let Ok(parts) = split_indices(&samples, SplitFractions::default(), seed) {
            let mut owner = std::collections::HashMap::new();
            for (s, part) in parts.iter().enumerate() {
                for &i in part {
                    prop_assert_eq!(*owner.entry(&samples[i].patient_id).or_insert(s), s);
                }
            }
            prop_assert_eq!(parts.iter().map(Vec::len).sum::<usize>(), samples.len());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>(), step in 0u64..1000, epoch in 0u32..50, loss in 0.0f64..10.0) {
        let blocks = [
            BlockSpec::conv(3, 3, 2, Activation::Relu),
            BlockSpec::fused_mbconv(3, 2, 2, true),
            BlockSpec::mbconv(4, 2, 2, false),
            BlockSpec::pool(2, 2),
            BlockSpec::flatten(),
            BlockSpec::dense(3, Activation::Identity),
        ];
        let net = LayerStack::from_blocks((1, 12, 12), &blocks, seed).unwrap();
        let mut state = TrainState::new(net, AdamConfig { learning_rate: 3e-3, ..AdamConfig::default() });
        state.adam.step = step;
        state.adam.m.iter_mut().flatten().enumerate().for_each(|(i, v)| *v = i as f64 * 1e-3);
        state.epoch = epoch;
        state.observe_validation(loss);
        let decoded = decode_state(&encode_state(&state)).unwrap();
        prop_assert_eq!(decoded, state);
    }
}
