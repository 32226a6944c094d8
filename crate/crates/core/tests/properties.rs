use ppml_audit::dataset::{
    imbalance_linear, linear_imbalance_sizes, reduce_class_count, reduce_class_size, to_grayscale,
    ImageDataset, Split, SplitKind,
};
use ppml_audit::lira::{evaluate_attack, lira_score, roc_curve};
use ppml_audit::metrics::{accuracy, compression_ratio, f1_macro, fdr_features, shannon_entropy, Codec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(seed: u64, classes: usize, per_class: usize, channels: usize) -> ImageDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [3, 2, channels];
    let len = 6 * channels;
    let mut split = |n: usize| {
        let labels: Vec<u32> = (0..classes as u32).flat_map(|c| std::iter::repeat_n(c, n)).collect();
        let images = (0..labels.len() * len).map(|_| rng.random()).collect();
        Split { images, labels }
    };
    let train = split(per_class);
    let test = split(2);
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    ImageDataset::new(dims, train, test, names).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_keep_histograms_consistent_and_test_split_intact(
        seed in any::<u64>(),
        classes in 3usize..7,
        per_class in 2usize..20,
        i in 0.0f64..=1.0,
    ) {
        let ds = random_dataset(seed, classes, per_class, 3);
        let c = per_class / 2 + 1;
        let outputs = [
            reduce_class_size(&ds, c, seed).unwrap(),
            imbalance_linear(&ds, i, seed).unwrap(),
            to_grayscale(&ds).unwrap(),
        ];
        for out in &outputs {
            prop_assert_eq!(out.histogram(SplitKind::Train).total(), out.train().len());
            prop_assert_eq!(out.test().labels.clone(), ds.test().labels.clone());
        }
        prop_assert_eq!(&outputs[0].test().images, &ds.test().images);
        prop_assert!(outputs[0].histogram(SplitKind::Train).counts.iter().all(|&n| n == c));
        prop_assert_eq!(&outputs[1].test().images, &ds.test().images);

        let fewer = reduce_class_count(&ds, 3).unwrap();
        prop_assert_eq!(fewer.num_classes(), 3);
        prop_assert_eq!(fewer.histogram(SplitKind::Test).total(), fewer.test().len());
        prop_assert!(fewer.test().labels.iter().all(|&l| l < 3));
    }

    #[test]
    fn operators_are_deterministic(seed in any::<u64>(), i in 0.0f64..=1.0) {
        let ds = random_dataset(seed, 4, 12, 1);
        prop_assert_eq!(reduce_class_size(&ds, 5, seed).unwrap(), reduce_class_size(&ds, 5, seed).unwrap());
        prop_assert_eq!(imbalance_linear(&ds, i, seed).unwrap(), imbalance_linear(&ds, i, seed).unwrap());
    }

    #[test]
    fn linear_sizes_strictly_increase(s in 10usize..5000, k in 2usize..12, i in 0.001f64..=1.0) {
        prop_assume!(s > 2 * k);
        let sizes = linear_imbalance_sizes(s, k, i).unwrap();
        prop_assert!(sizes.windows(2).all(|w| w[0] < w[1]), "{sizes:?}");
        prop_assert!(*sizes.last().unwrap() <= s);
    }

    #[test]
    fn entropy_ignores_pixel_order_and_stays_in_unit_range(
        mut pixels in prop::collection::vec(any::<u8>(), 1..300),
        seed in any::<u64>(),
    ) {
        let h = shannon_entropy(&pixels, 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        pixels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((shannon_entropy(&pixels, 1).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn fdr_is_translation_invariant(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u32> = (0..60).map(|i| i % 3).collect();
        let x: Vec<f64> = labels
            .iter()
            .flat_map(|&l| [rng.random::<f64>() + l as f64, rng.random::<f64>()])
            .collect();
        let moved: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let a = fdr_features(&x, 2, &labels, 3).unwrap().value();
        let b = fdr_features(&moved, 2, &labels, 3).unwrap().value();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn diagonal_confusion_gives_f1_equal_to_accuracy(mut truth in prop::collection::vec(0usize..5, 0..100)) {
        truth.extend(0..5);
        prop_assert!((f1_macro(&truth, &truth, 5).unwrap() - accuracy(&truth, &truth).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn roc_runs_corner_to_corner_monotonically(
        scores in prop::collection::vec(0.0f64..1.0, 2..200),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut truths: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.5)).collect();
        truths[0] = true;
        truths[1] = false;
        let roc = roc_curve(&scores, &truths).unwrap();
        prop_assert_eq!(roc[0], (0.0, 0.0));
        prop_assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
        prop_assert!(roc.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        let report = evaluate_attack(&scores, &truths).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.auc));
        prop_assert!((0.0..=1.0).contains(&report.tpr_at_fpr_0_1));
    }

    #[test]
    fn score_increases_with_confidence(
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
        mu in -5.0f64..5.0,
        sigma in 0.0f64..3.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (lira_score(lo, mu, sigma), lira_score(hi, mu, sigma));
        prop_assert!(s_lo.is_finite() && s_hi.is_finite());
        prop_assert!(s_lo <= s_hi);
    }
}

#[test]
fn uniform_histogram_has_maximal_entropy() {
    let pixels: Vec<u8> = (0..=255).collect();
    assert!((shannon_entropy(&pixels, 1).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn constant_image_compresses_better_than_noise() {
    let dims = [32, 32, 3];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise: Vec<u8> = (0..32 * 32 * 3).map(|_| rng.random()).collect();
    let flat = vec![128u8; 32 * 32 * 3];
    assert!(compression_ratio(&flat, dims, Codec::Lossless).unwrap() > compression_ratio(&noise, dims, Codec::Lossless).unwrap());
}

#[test]
fn permuted_scores_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truths: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
    let mut scores: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
    scores.shuffle(&mut rng);
    let auc = evaluate_attack(&scores, &truths).unwrap().auc;
    assert!((0.45..=0.55).contains(&auc), "{auc}");
}
