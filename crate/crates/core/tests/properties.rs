mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lmrj::io::data::{read_responses, write_responses};
use lmrj::model::{forward_loglik, PanelDataset};
use lmrj::postprocess::{best_permutation, hpd_intervals, relabel, HPD_LEVELS};
use lmrj::priors::PriorSpec;

fn shuffled(k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loglik_ignores_labels_and_scale(seed in any::<u64>(), variant in 0usize..3, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, params, data) = common::random_instance(common::VARIANTS[variant], &mut rng);
        let base = forward_loglik(&spec, &params, &data).unwrap();

        let perm = shuffled(params.k(), &mut rng);
        let permuted = forward_loglik(&spec, &params.permuted(&perm), &data).unwrap();
        prop_assert!((base - permuted).abs() <= 1e-10 * base.abs().max(1.0));

        let mut scaled = params.clone();
        scaled.initial.iter_mut().for_each(|x| *x *= c);
        let row = rng.random_range(0..params.k());
        scaled.transition[row].iter_mut().for_each(|x| *x *= c);
        let rescaled = forward_loglik(&spec, &scaled, &data).unwrap();
        prop_assert!((base - rescaled).abs() <= 1e-10 * base.abs().max(1.0));
    }

    #[test]
    fn hpd_intervals_nest_and_cover(draws in prop::collection::vec(-50.0f64..50.0, 1..400)) {
        let iv = hpd_intervals(&draws, &HPD_LEVELS).unwrap();
        for w in iv.windows(2) {
            prop_assert!(w[1].contains(&w[0]));
        }
        for i in &iv {
            let inside = draws.iter().filter(|x| **x >= i.lower && **x <= i.upper).count();
            prop_assert!(inside as f64 >= (i.level * draws.len() as f64).ceil());
        }
    }

    #[test]
    fn relabeling_undoes_scrambling(seed in any::<u64>(), variant in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_spec(common::VARIANTS[variant], 2, &mut rng);
        let k = rng.random_range(1..=4);
        let pivot = PriorSpec::default().sample(&spec, k, &mut rng);
        let scrambled: Vec<_> = (0..5).map(|_| pivot.permuted(&shuffled(k, &mut rng))).collect();
        let fixed = relabel(&scrambled, &pivot).unwrap();
        for f in &fixed {
            prop_assert_eq!(f, &pivot);
            prop_assert_eq!(best_permutation(f, &pivot).unwrap(), (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn csv_export_round_trips(seed in any::<u64>(), n in 1usize..6, t in 1usize..5, r in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels: Vec<usize> = (0..r).map(|_| rng.random_range(2..5)).collect();
        let mut values = Vec::with_capacity(n * t * r);
        for _ in 0..n * t {
            for l in &levels {
                values.push(rng.random_range(0..*l as u16));
            }
        }
        let data = PanelDataset::new(levels.clone(), n, t, values).unwrap();
        let mut buf = Vec::new();
        write_responses(&mut buf, &data).unwrap();
        let declared: BTreeMap<String, usize> = data.variables.iter().cloned().zip(levels).collect();
        let back = read_responses(buf.as_slice(), &declared).unwrap();
        prop_assert_eq!(back, data);
    }
}
