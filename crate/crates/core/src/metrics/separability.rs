//! Class separability on flattened pixel features scaled to `[0, 1]`.

use super::MetricsError;
use crate::dataset::ImageDataset;

/// Fisher discriminant ratio `trace(S_b) / trace(S_w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fdr {
    Finite(f64),
    /// Within-class scatter vanishes while the class means differ.
    Infinite,
}

impl Fdr {
    pub fn value(self) -> f64 {
        match self {
            Fdr::Finite(v) => v,
            Fdr::Infinite => f64::INFINITY,
        }
    }
}

struct Moments {
    counts: Vec<usize>,
    /// `counts.len() × dim` class means.
    means: Vec<f64>,
    dim: usize,
}

fn check(labels: &[u32], num_classes: usize, dim: usize) -> Result<Vec<usize>, MetricsError> {
    if dim == 0 {
        return Err(MetricsError::Input("features must have at least one dimension".into()));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        let slot = counts.get_mut(l as usize).ok_or_else(|| {
            MetricsError::Input(format!("label {l} out of range for {num_classes} classes"))
        })?;
        *slot += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(MetricsError::Input(format!("class {empty} has no samples")));
    }
    Ok(counts)
}

fn class_means(
    labels: &[u32],
    counts: Vec<usize>,
    dim: usize,
    fill: &impl Fn(usize, &mut [f64]),
) -> Moments {
    let mut means = vec![0.0; counts.len() * dim];
    let mut x = vec![0.0; dim];
    for (i, &l) in labels.iter().enumerate() {
        fill(i, &mut x);
        let row = &mut means[l as usize * dim..(l as usize + 1) * dim];
        for (m, v) in row.iter_mut().zip(&x) {
            *m += v;
        }
    }
    for (k, &n) in counts.iter().enumerate() {
        for m in &mut means[k * dim..(k + 1) * dim] {
            *m /= n as f64;
        }
    }
    Moments { counts, means, dim }
}

/// Per class and feature, the sum of squared deviations from the class mean.
fn class_sq_dev(m: &Moments, labels: &[u32], fill: &impl Fn(usize, &mut [f64])) -> Vec<f64> {
    let dim = m.dim;
    let mut out = vec![0.0; m.counts.len() * dim];
    let mut x = vec![0.0; dim];
    for (i, &l) in labels.iter().enumerate() {
        fill(i, &mut x);
        let k = l as usize;
        let mean = &m.means[k * dim..(k + 1) * dim];
        let acc = &mut out[k * dim..(k + 1) * dim];
        for ((a, v), mu) in acc.iter_mut().zip(&x).zip(mean) {
            *a += (v - mu) * (v - mu);
        }
    }
    out
}

fn fdr_impl(
    labels: &[u32],
    num_classes: usize,
    dim: usize,
    fill: impl Fn(usize, &mut [f64]),
) -> Result<Fdr, MetricsError> {
    let counts = check(labels, num_classes, dim)?;
    if num_classes < 2 {
        return Err(MetricsError::Input("separability needs at least 2 classes".into()));
    }
    let m = class_means(labels, counts, dim, &fill);
    let n: usize = m.counts.iter().sum();
    let mut global = vec![0.0; dim];
    for (k, &c) in m.counts.iter().enumerate() {
        for (g, mu) in global.iter_mut().zip(&m.means[k * dim..(k + 1) * dim]) {
            *g += c as f64 * mu;
        }
    }
    global.iter_mut().for_each(|g| *g /= n as f64);
    let mut between = 0.0;
    for (k, &c) in m.counts.iter().enumerate() {
        let d2: f64 = m.means[k * dim..(k + 1) * dim]
            .iter()
            .zip(&global)
            .map(|(mu, g)| (mu - g) * (mu - g))
            .sum();
        between += c as f64 * d2;
    }
    let within: f64 = class_sq_dev(&m, labels, &fill).iter().sum();
    if within > 0.0 {
        Ok(Fdr::Finite(between / within))
    } else if between > 0.0 {
        Ok(Fdr::Infinite)
    } else {
        Err(MetricsError::Input(
            "all samples are identical; separability is undefined".into(),
        ))
    }
}

fn std_impl(
    labels: &[u32],
    num_classes: usize,
    dim: usize,
    fill: impl Fn(usize, &mut [f64]),
) -> Result<f64, MetricsError> {
    let counts = check(labels, num_classes, dim)?;
    let m = class_means(labels, counts, dim, &fill);
    let dev = class_sq_dev(&m, labels, &fill);
    let mut total = 0.0;
    for (k, &c) in m.counts.iter().enumerate() {
        let mean_std: f64 = dev[k * dim..(k + 1) * dim]
            .iter()
            .map(|s| (s / c as f64).sqrt())
            .sum::<f64>()
            / dim as f64;
        total += mean_std;
    }
    Ok(total / num_classes as f64)
}

fn check_rows(features: &[f64], dim: usize, labels: &[u32]) -> Result<(), MetricsError> {
    if dim == 0 || features.len() != labels.len() * dim {
        return Err(MetricsError::Input(format!(
            "{} feature values do not form {} rows of {dim}",
            features.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// FDR of row-major `features` (`labels.len() × dim`).
pub fn fdr_features(
    features: &[f64],
    dim: usize,
    labels: &[u32],
    num_classes: usize,
) -> Result<Fdr, MetricsError> {
    check_rows(features, dim, labels)?;
    fdr_impl(labels, num_classes, dim, |i, x| {
        x.copy_from_slice(&features[i * dim..(i + 1) * dim])
    })
}

/// Per-class population standard deviation averaged over features, then
/// averaged over classes.
pub fn in_class_std_features(
    features: &[f64],
    dim: usize,
    labels: &[u32],
    num_classes: usize,
) -> Result<f64, MetricsError> {
    check_rows(features, dim, labels)?;
    std_impl(labels, num_classes, dim, |i, x| {
        x.copy_from_slice(&features[i * dim..(i + 1) * dim])
    })
}

fn pixel_filler(ds: &ImageDataset) -> impl Fn(usize, &mut [f64]) + '_ {
    let len = ds.image_len();
    let images = &ds.train().images;
    move |i, x| {
        for (d, &s) in x.iter_mut().zip(&images[i * len..(i + 1) * len]) {
            *d = s as f64 / 255.0;
        }
    }
}

/// FDR of the train split at its native resolution.
pub fn fdr(ds: &ImageDataset) -> Result<Fdr, MetricsError> {
    fdr_impl(&ds.train().labels, ds.num_classes(), ds.image_len(), pixel_filler(ds))
}

pub fn in_class_std(ds: &ImageDataset) -> Result<f64, MetricsError> {
    std_impl(&ds.train().labels, ds.num_classes(), ds.image_len(), pixel_filler(ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn single_points_are_infinitely_separable() {
        let f = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        assert_eq!(fdr_features(&f, 2, &[0, 0, 1], 2).unwrap(), Fdr::Infinite);
    }

    #[test]
    fn equal_means_give_zero() {
        let f = [0.0, 2.0, 1.0, 1.0];
        let r = fdr_features(&f, 1, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r, Fdr::Finite(0.0));
    }

    #[test]
    fn identical_samples_are_an_error() {
        assert!(fdr_features(&[1.0; 4], 1, &[0, 0, 1, 1], 2).is_err());
        assert!(fdr_features(&[1.0; 2], 1, &[0, 0], 2).is_err());
    }

    #[test]
    fn gaussian_pair_trace_ratio() {
        // Means (0,0) and (1,0), unit variance: S_b/N = 0.25, S_w/N = 2.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut f = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10_000 {
            let k = (i % 2) as u32;
            f.push(k as f64 + normal.sample(&mut rng));
            f.push(normal.sample(&mut rng));
            labels.push(k);
        }
        let v = fdr_features(&f, 2, &labels, 2).unwrap().value();
        assert!((v - 0.125).abs() < 0.01, "fdr {v}");
    }

    #[test]
    fn translation_invariant() {
        let f = [0.1, 0.5, 0.3, 0.9, 0.2, 0.4, 0.8, 0.7];
        let shifted: Vec<f64> = f.iter().enumerate().map(|(i, v)| v + [3.0, -2.0][i % 2]).collect();
        let labels = [0, 1, 0, 1];
        let a = fdr_features(&f, 2, &labels, 2).unwrap().value();
        let b = fdr_features(&shifted, 2, &labels, 2).unwrap().value();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn in_class_std_reference() {
        assert_eq!(in_class_std_features(&[0.0, 1.0], 1, &[0, 0], 1).unwrap(), 0.5);
        let r = in_class_std_features(&[0.0, 1.0, 4.0, 4.0], 1, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r, 0.25);
        assert!(in_class_std_features(&[0.0], 1, &[0], 2).is_err());
    }
}
