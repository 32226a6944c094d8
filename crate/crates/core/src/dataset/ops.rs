//! Dataset modification operators. All of them leave the test split alone,
//! except `reduce_class_count`, which drops the removed classes there too.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetError, ImageDataset, Split, SplitKind};
use crate::rng;

/// Lower and upper clip of the normal-mode size factor.
pub const NORMAL_FACTOR_BOUNDS: (f64, f64) = (0.05, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImbalanceMode {
    Linear,
    Normal,
}

/// Alphanumeric order of class names: all-digit names compare numerically,
/// everything else lexicographically.
fn name_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

/// Label ids sorted by class name.
fn sorted_labels(ds: &ImageDataset) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..ds.num_classes()).collect();
    labels.sort_by(|&a, &b| name_order(&ds.class_names()[a], &ds.class_names()[b]));
    labels
}

/// Keep `targets[label]` randomly chosen training samples of every class,
/// preserving the original sample order.
fn subsample(ds: &ImageDataset, targets: &[usize], rng: &mut ChaCha8Rng) -> ImageDataset {
    let mut keep = Vec::with_capacity(targets.iter().sum());
    for (label, members) in ds.indices_by_class(SplitKind::Train).iter().enumerate() {
        let target = targets[label];
        debug_assert!(target <= members.len());
        keep.extend(
            index::sample(rng, members.len(), target)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    keep.sort_unstable();
    ds.with_train_subset(&keep)
}

pub fn reduce_class_size(ds: &ImageDataset, c: usize, seed: u64) -> Result<ImageDataset, DatasetError> {
    let counts = ds.histogram(SplitKind::Train).counts;
    for label in sorted_labels(ds) {
        if counts[label] < c {
            return Err(DatasetError::ClassTooSmall {
                class: ds.class_names()[label].clone(),
                available: counts[label],
                requested: c,
            });
        }
    }
    let mut rng = rng::stream(seed, &format!("reduce_class_size/c={c}"));
    Ok(subsample(ds, &vec![c; ds.num_classes()], &mut rng))
}

pub fn reduce_class_count(ds: &ImageDataset, n: usize) -> Result<ImageDataset, DatasetError> {
    let k = ds.num_classes();
    if n < 3 || n > k {
        return Err(DatasetError::Input(format!(
            "class count must lie in [3, {k}], got {n}"
        )));
    }
    let mut kept = sorted_labels(ds);
    kept.truncate(n);
    kept.sort_unstable();
    let mut remap = vec![None; k];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = Some(new as u32);
    }
    let image_len = ds.image_len();
    let filter = |split: &Split| {
        let mut out = Split::default();
        for (i, &l) in split.labels.iter().enumerate() {
            if let Some(new) = remap[l as usize] {
                out.images
                    .extend_from_slice(&split.images[i * image_len..(i + 1) * image_len]);
                out.labels.push(new);
            }
        }
        out
    };
    ImageDataset::new(
        ds.dims(),
        filter(ds.train()),
        filter(ds.test()),
        kept.iter().map(|&l| ds.class_names()[l].clone()).collect(),
    )
}

/// Class sizes of the linear imbalance mode, smallest first. Sizes that
/// collide after rounding are separated by lowering the smaller class.
pub fn linear_imbalance_sizes(s: usize, k: usize, i: f64) -> Result<Vec<usize>, DatasetError> {
    check_factor(i)?;
    if k < 2 {
        return Err(DatasetError::Input(
            "imbalance needs at least 2 classes".into(),
        ));
    }
    let s_f = s as f64;
    let mut sizes: Vec<usize> = (0..k)
        .map(|j| (s_f * (1.0 - i) + j as f64 * s_f * i / (k - 1) as f64).round() as usize)
        .collect();
    if i > 0.0 {
        for j in (0..k - 1).rev() {
            if sizes[j] >= sizes[j + 1] {
                sizes[j] = sizes[j + 1].saturating_sub(1);
            }
        }
    }
    Ok(sizes)
}

/// Draw one clipped-normal size factor per class.
pub fn normal_imbalance_factors(k: usize, i: f64, rng: &mut impl Rng) -> Result<Vec<f64>, DatasetError> {
    check_factor(i)?;
    let normal = Normal::new(1.0 - i, i).map_err(|e| DatasetError::Input(e.to_string()))?;
    let (lo, hi) = NORMAL_FACTOR_BOUNDS;
    Ok((0..k).map(|_| normal.sample(rng).clamp(lo, hi)).collect())
}

fn check_factor(i: f64) -> Result<(), DatasetError> {
    if (0.0..=1.0).contains(&i) {
        Ok(())
    } else {
        Err(DatasetError::Input(format!(
            "imbalance factor must lie in [0, 1], got {i}"
        )))
    }
}

fn balanced_size(ds: &ImageDataset) -> Result<usize, DatasetError> {
    if ds.num_classes() < 2 {
        return Err(DatasetError::Input(
            "imbalance needs at least 2 classes".into(),
        ));
    }
    let counts = ds.histogram(SplitKind::Train).counts;
    let s = counts[0];
    if counts.iter().any(|&c| c != s) {
        return Err(DatasetError::Input(format!(
            "imbalance requires equal class sizes, found {counts:?}; apply a class size reduction first"
        )));
    }
    Ok(s)
}

pub fn imbalance_linear(ds: &ImageDataset, i: f64, seed: u64) -> Result<ImageDataset, DatasetError> {
    let s = balanced_size(ds)?;
    let sizes = linear_imbalance_sizes(s, ds.num_classes(), i)?;
    let mut targets = vec![0; ds.num_classes()];
    for (&label, size) in sorted_labels(ds).iter().zip(sizes) {
        targets[label] = size;
    }
    let mut rng = rng::stream(seed, &format!("imbalance_linear/i={i}"));
    Ok(subsample(ds, &targets, &mut rng))
}

pub fn imbalance_normal(ds: &ImageDataset, i: f64, seed: u64) -> Result<ImageDataset, DatasetError> {
    let s = balanced_size(ds)?;
    let mut rng = rng::stream(seed, &format!("imbalance_normal/i={i}"));
    let factors = normal_imbalance_factors(ds.num_classes(), i, &mut rng)?;
    let mut targets = vec![0; ds.num_classes()];
    for (&label, f) in sorted_labels(ds).iter().zip(factors) {
        targets[label] = ((f * s as f64).round() as usize).clamp(1, s);
    }
    Ok(subsample(ds, &targets, &mut rng))
}

/// Luminance conversion `0.299 R + 0.587 G + 0.114 B`, rounded, applied to
/// both splits.
pub fn to_grayscale(ds: &ImageDataset) -> Result<ImageDataset, DatasetError> {
    match ds.channels() {
        1 => {
            log::warn!("dataset is already grayscale; leaving it unchanged");
            Ok(ds.clone())
        }
        3 => {
            let convert = |split: &Split| Split {
                images: split
                    .images
                    .chunks_exact(3)
                    .map(|p| {
                        (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                            .round()
                            .min(255.0) as u8
                    })
                    .collect(),
                labels: split.labels.clone(),
            };
            ImageDataset::new(
                [ds.height(), ds.width(), 1],
                convert(ds.train()),
                convert(ds.test()),
                ds.class_names().to_vec(),
            )
        }
        c => Err(DatasetError::Input(format!(
            "grayscale conversion needs 3 channels, found {c}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::balanced;

    fn pixel_dataset(rgb: [u8; 3]) -> ImageDataset {
        let train = Split {
            images: rgb.to_vec(),
            labels: vec![0],
        };
        ImageDataset::new([1, 1, 3], train, Split::default(), vec!["a".into()]).unwrap()
    }

    #[test]
    fn grayscale_reference_colours() {
        for (rgb, expected) in [([255, 255, 255], 255), ([255, 0, 0], 76), ([0, 0, 0], 0)] {
            let g = to_grayscale(&pixel_dataset(rgb)).unwrap();
            assert_eq!(g.train().images, vec![expected]);
            assert_eq!(g.channels(), 1);
        }
        let g = to_grayscale(&pixel_dataset([1, 2, 3])).unwrap();
        assert_eq!(to_grayscale(&g).unwrap(), g);
    }

    #[test]
    fn class_size_reduction() {
        let ds = balanced(4, 10, [2, 2, 1]);
        let r = reduce_class_size(&ds, 3, 42).unwrap();
        assert_eq!(r.histogram(SplitKind::Train).counts, vec![3; 4]);
        assert_eq!(r.test(), ds.test());
        assert!(r.train().labels.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(reduce_class_size(&ds, 10, 42).unwrap(), ds);
        assert_eq!(reduce_class_size(&ds, 3, 42).unwrap(), r);
        let err = reduce_class_size(&ds, 11, 42).unwrap_err();
        assert!(err.to_string().contains("'0'"));
    }

    #[test]
    fn class_count_reduction_uses_alphanumeric_order() {
        let ds = balanced(12, 2, [1, 1, 1]);
        let r = reduce_class_count(&ds, 3).unwrap();
        assert_eq!(r.class_names(), &["0", "1", "2"]);
        assert_eq!(r.train().len(), 6);
        assert_eq!(r.test().len(), 6);
        assert_eq!(reduce_class_count(&ds, 12).unwrap(), ds);
        assert!(reduce_class_count(&ds, 2).is_err());
        assert!(reduce_class_count(&ds, 13).is_err());
    }

    #[test]
    fn class_count_reindexes_densely() {
        let ds = balanced(4, 1, [1, 1, 1]);
        let renamed = ImageDataset::new(
            ds.dims(),
            ds.train().clone(),
            ds.test().clone(),
            vec!["d".into(), "a".into(), "c".into(), "b".into()],
        )
        .unwrap();
        let r = reduce_class_count(&renamed, 3).unwrap();
        assert_eq!(r.class_names(), &["a", "c", "b"]);
        assert_eq!(r.train().labels, vec![0, 1, 2]);
        // Pixel values carry the original label.
        assert_eq!(r.train().images, vec![1, 2, 3]);
    }

    #[test]
    fn linear_sizes_closed_form() {
        let sizes = linear_imbalance_sizes(5000, 10, 0.9).unwrap();
        assert_eq!(sizes, (1..=10).map(|k| 500 * k).collect::<Vec<_>>());
        assert_eq!(linear_imbalance_sizes(5000, 10, 0.0).unwrap(), vec![5000; 10]);
        let s = linear_imbalance_sizes(5000, 10, 0.3).unwrap();
        assert_eq!((s[0], s[9]), (3500, 5000));
        assert_eq!(s[1], 3667);
        assert!(linear_imbalance_sizes(5000, 1, 0.3).is_err());
    }

    #[test]
    fn linear_collisions_are_separated() {
        let s = linear_imbalance_sizes(10, 8, 0.2).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]), "{s:?}");
        assert_eq!(s[7], 10);
    }

    #[test]
    fn linear_operator_applies_sizes_in_name_order() {
        let ds = balanced(4, 20, [1, 1, 1]);
        let r = imbalance_linear(&ds, 0.5, 1).unwrap();
        assert_eq!(r.histogram(SplitKind::Train).counts, vec![10, 13, 17, 20]);
        assert_eq!(r.test(), ds.test());
        let unbalanced = reduce_class_count(&r, 3).unwrap();
        assert!(imbalance_linear(&unbalanced, 0.5, 1).is_err());
    }

    #[test]
    fn normal_mode_bounds_and_identity() {
        let ds = balanced(5, 40, [1, 1, 1]);
        assert_eq!(imbalance_normal(&ds, 0.0, 3).unwrap(), ds);
        let r = imbalance_normal(&ds, 0.9, 3).unwrap();
        for c in r.histogram(SplitKind::Train).counts {
            assert!((2..=40).contains(&c));
        }
    }
}
