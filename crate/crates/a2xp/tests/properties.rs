//! Property tests over the core invariants: prompt geometry, normalization,
//! schedule bounds, attention equivariances, ANOVA invariances, and config
//! round-trips.

use proptest::prelude::*;

use a2xp::data::EpochSampler;
use a2xp::generalize::{make_lr_schedule, ScheduleConfig};
use a2xp::mixer::{self, embed_experts, MixerConfig, MixerHeads};
use a2xp::nn::Net;
use a2xp::objective::{kl_smoothed_loss, LossConfig, LossKind};
use a2xp::prompt::{apply_prompt, init_prompt, normalize_expert, ExpertBank, InitStrategy};
use a2xp::stats::rm_anova;
use a2xp::tensor::{Image, Shape3};

fn arb_geometry() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    // (c, h, w, border) with 2*border < min(h, w).
    (1usize..4, 8usize..40, 8usize..40).prop_flat_map(|(c, h, w)| {
        let max_b = (h.min(w) - 1) / 2;
        (Just(c), Just(h), Just(w), 1usize..=max_b.max(1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn interior_is_zero_for_every_strategy((c, h, w, b) in arb_geometry(), seed in 0u64..1000) {
        let shape = Shape3::new(c, h, w);
        for strategy in [
            InitStrategy::Zero,
            InitStrategy::Uniform { scale: 0.05 },
            InitStrategy::Normal { scale: 0.05 },
        ] {
            let p = init_prompt(shape, b, &strategy, seed).unwrap();
            prop_assert!(p.interior_is_zero());
            // values on ~mask are exactly zero, and the count formula holds.
            let expected = c * (h * w - (h - 2 * b) * (w - 2 * b));
            prop_assert_eq!(p.trainable_count(), expected);
            prop_assert_eq!(p.mask().iter().filter(|&&m| m).count(), expected);
        }
    }

    #[test]
    fn normalize_absorbs_positive_scale((c, h, w, b) in arb_geometry(), seed in 0u64..1000, alpha in 1e-3f64..1e3) {
        let shape = Shape3::new(c, h, w);
        let p = init_prompt(shape, b, &InitStrategy::Normal { scale: 0.4 }, seed).unwrap();
        let n1 = normalize_expert(&p).unwrap();
        let mut scaled = p.clone();
        scaled.values_mut().scale(alpha);
        let n2 = normalize_expert(&scaled).unwrap();
        prop_assert!(n1.values().max_abs_diff(n2.values()) < 1e-6);
        let n3 = normalize_expert(&n1).unwrap();
        prop_assert!(n1.values().max_abs_diff(n3.values()) < 1e-7);
    }

    #[test]
    fn apply_then_unapply_recovers_input((c, h, w, b) in arb_geometry(), seed in 0u64..1000) {
        let shape = Shape3::new(c, h, w);
        let p = init_prompt(shape, b, &InitStrategy::Uniform { scale: 0.5 }, seed).unwrap();
        let x = Image::from_vec(
            shape,
            (0..shape.len()).map(|i| ((i as f64) * 0.7).sin()).collect(),
        ).unwrap();
        let mut neg = p.clone();
        neg.values_mut().scale(-1.0);
        let round = apply_prompt(&apply_prompt(&[x.clone()], &p).unwrap(), &neg).unwrap();
        prop_assert!(round[0].max_abs_diff(&x) < 1e-6);
    }

    #[test]
    fn schedule_respects_bounds(total in 2usize..3000, cycles in 1usize..6, base_exp in -6i32..0) {
        let base = 10f64.powi(base_exp);
        let cfg = ScheduleConfig { cycles, ..Default::default() };
        let s = make_lr_schedule(base, total, &cfg).unwrap();
        prop_assert_eq!(s.len(), total);
        prop_assert!((s[0] - base).abs() < base * 1e-12);
        prop_assert!(s.iter().all(|&v| v > 0.0 && v <= base));
        prop_assert!(*s.last().unwrap() <= 0.10 * base + 1e-9);
    }

    #[test]
    fn anova_is_invariant_to_subject_shifts_and_permutation(seed in 0u64..500) {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let table: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let base = rm_anova(&table).unwrap();
        let shifted: Vec<Vec<f64>> = table
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|v| v + i as f64).collect())
            .collect();
        prop_assert!((rm_anova(&shifted).unwrap().p_value - base.p_value).abs() < 1e-9);
        let permuted: Vec<Vec<f64>> = table
            .iter()
            .map(|row| vec![row[3], row[1], row[0], row[2]])
            .collect();
        prop_assert!((rm_anova(&permuted).unwrap().p_value - base.p_value).abs() < 1e-9);
    }

    #[test]
    fn loss_is_shift_invariant(shift in -20.0f64..20.0, seed in 0u64..200) {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        let cfg = LossConfig { kind: LossKind::KlSmoothed, smoothing: 0.05 };
        let (a, _) = kl_smoothed_loss(&[logits], &[2], &cfg).unwrap();
        let (b, _) = kl_smoothed_loss(&[shifted], &[2], &cfg).unwrap();
        prop_assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn sampler_epochs_partition_indices(n in 1usize..50, batch in 1usize..12, seed in 0u64..100) {
        let mut s = EpochSampler::new((0..n).collect(), seed).unwrap();
        let mut drawn = Vec::new();
        while drawn.len() < n {
            drawn.extend(s.next_batch(batch));
        }
        let mut sorted = drawn[..n].to_vec();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }
}

proptest! {
    // Forward passes are heavier; fewer cases.
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cache_on_off_agree_on_random_banks(seed in 0u64..1000, n_experts in 1usize..5) {
        let shape = Shape3::new(2, 10, 10);
        let heads = MixerHeads::with_embed_dim(Net::tiny_mlp(shape, 6, 5, seed), 12, seed + 1);
        let experts: Vec<_> = (0..n_experts)
            .map(|i| init_prompt(shape, 2, &InitStrategy::Normal { scale: 0.4 }, seed + 10 + i as u64).unwrap())
            .collect();
        let names = (0..n_experts).map(|i| format!("d{i}")).collect();
        let mut bank = ExpertBank::new(experts, names, true).unwrap();
        let images: Vec<Image> = (0..5)
            .map(|k| {
                Image::from_vec(
                    shape,
                    (0..shape.len()).map(|i| (((i + 17 * k) % 23) as f64) / 23.0).collect(),
                )
                .unwrap()
            })
            .collect();
        let cfg = MixerConfig::default();
        let (off, _) = mixer::forward(&heads, &bank, &cfg, &images, "t").unwrap();
        embed_experts(&heads, &mut bank).unwrap();
        let (on, _) = mixer::forward(&heads, &bank, &cfg, &images, "t").unwrap();
        for (a, b) in off.iter().zip(&on) {
            prop_assert!(a.max_abs_diff(b) < 1e-6);
        }
    }

    #[test]
    fn weight_bounds_hold_for_all_flag_combinations(seed in 0u64..1000) {
        let shape = Shape3::new(2, 10, 10);
        let heads = MixerHeads::with_embed_dim(Net::tiny_mlp(shape, 6, 5, seed), 12, seed + 1);
        let experts: Vec<_> = (0..3)
            .map(|i| init_prompt(shape, 2, &InitStrategy::Normal { scale: 0.6 }, seed + 30 + i as u64).unwrap())
            .collect();
        let names = vec!["a".into(), "b".into(), "c".into()];
        let image = Image::from_vec(
            shape,
            (0..shape.len()).map(|i| ((i % 13) as f64) / 13.0).collect(),
        ).unwrap();
        for cfg in MixerConfig::all_combinations() {
            let bank = ExpertBank::new(experts.clone(), names.clone(), cfg.use_expert_norm).unwrap();
            let (_, recs) = mixer::forward(&heads, &bank, &cfg, &[image.clone()], "t").unwrap();
            prop_assert!(recs[0].check_bounds(&cfg), "bounds for {}", cfg.label());
        }
    }
}

#[test]
fn config_round_trip_is_lossless() {
    use a2xp::experiment::{DatasetSpec, ExperimentConfig, StyleStrength};
    let tmp = tempfile::tempdir().unwrap();
    for seed in 0..5u64 {
        let mut cfg = ExperimentConfig::synthetic_default(seed, tmp.path().join("out"));
        if seed % 2 == 0 {
            cfg.mixer.use_softmax = true;
            cfg.tune_experts = true;
            cfg.init.kind = "meta".into();
        }
        if seed == 3 {
            cfg.dataset = DatasetSpec::Synthetic {
                classes: 5,
                per_class: 9,
                image_size: 24,
                style_strength: StyleStrength::Hard,
            };
        }
        let path = tmp.path().join(format!("cfg_{seed}.json"));
        cfg.save(&path).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded, cfg);
    }
}
