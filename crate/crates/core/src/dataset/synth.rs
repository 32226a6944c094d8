//! Class-conditional synthetic images.
//!
//! Every class gets a prototype made of a few coloured Gaussian blobs.
//! Samples shift the prototype by a random offset, add pixel noise and,
//! for the train split, optionally flip the label to a random other class.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DatasetError, ImageDataset, Split};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub blobs_per_class: usize,
    /// Pixel noise standard deviation in units of the full intensity range.
    pub noise: f64,
    /// Maximum translation in pixels along each axis.
    pub jitter: usize,
    /// Probability that a training label is replaced by another class.
    pub label_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            train_per_class: 100,
            test_per_class: 50,
            height: 32,
            width: 32,
            channels: 3,
            blobs_per_class: 2,
            noise: 0.2,
            jitter: 2,
            label_noise: 0.0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DatasetError> {
        if self.num_classes < 2 {
            return Err(DatasetError::Input("synthetic data needs at least 2 classes".into()));
        }
        if self.height == 0 || self.width == 0 || !(self.channels == 1 || self.channels == 3) {
            return Err(DatasetError::Input(format!(
                "unsupported synthetic image shape {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(DatasetError::Input(format!("noise must be >= 0, got {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(DatasetError::Input(format!(
                "label_noise must lie in [0, 1], got {}",
                self.label_noise
            )));
        }
        if self.blobs_per_class == 0 {
            return Err(DatasetError::Input("blobs_per_class must be positive".into()));
        }
        Ok(())
    }
}

struct Blob {
    cy: f64,
    cx: f64,
    radius: f64,
    colour: [f64; 3],
}

fn prototypes(spec: &SynthSpec, seed: u64) -> Vec<Vec<Blob>> {
    let mut rng = rng::stream(seed, "synth/prototypes");
    let (h, w) = (spec.height as f64, spec.width as f64);
    (0..spec.num_classes)
        .map(|_| {
            (0..spec.blobs_per_class)
                .map(|_| Blob {
                    cy: rng.random_range(0.2..0.8) * h,
                    cx: rng.random_range(0.2..0.8) * w,
                    radius: rng.random_range(0.08..0.2) * h.min(w),
                    colour: [rng.random(), rng.random(), rng.random()],
                })
                .collect()
        })
        .collect()
}

fn render(
    spec: &SynthSpec,
    blobs: &[Blob],
    rng: &mut impl Rng,
    noise: &Normal<f64>,
    out: &mut Vec<u8>,
) {
    let j = spec.jitter as i64;
    let dy = rng.random_range(-j..=j) as f64;
    let dx = rng.random_range(-j..=j) as f64;
    for y in 0..spec.height {
        for x in 0..spec.width {
            let mut pixel = [0.1f64; 3];
            for b in blobs {
                let d2 = (y as f64 - b.cy - dy).powi(2) + (x as f64 - b.cx - dx).powi(2);
                let weight = (-d2 / (2.0 * b.radius * b.radius)).exp();
                for (p, c) in pixel.iter_mut().zip(b.colour) {
                    *p += weight * c;
                }
            }
            if spec.channels == 1 {
                let v = (pixel[0] + pixel[1] + pixel[2]) / 3.0 + noise.sample(rng);
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            } else {
                for p in pixel {
                    let v = p + noise.sample(rng);
                    out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    }
}

/// Generate a balanced dataset; class `k` is named `class_k` with the
/// index zero-padded so names sort in label order.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<ImageDataset, DatasetError> {
    spec.validate()?;
    let protos = prototypes(spec, seed);
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let mut sample_rng = rng::stream(seed, "synth/samples");
    let mut label_rng = rng::stream(seed, "synth/labels");
    let mut make = |per_class: usize, flip_labels: bool| {
        let mut split = Split::default();
        for (class, blobs) in protos.iter().enumerate() {
            for _ in 0..per_class {
                render(spec, blobs, &mut sample_rng, &noise, &mut split.images);
                let mut label = class;
                if flip_labels && spec.label_noise > 0.0 && label_rng.random_bool(spec.label_noise) {
                    label = (class + label_rng.random_range(1..spec.num_classes)) % spec.num_classes;
                }
                split.labels.push(label as u32);
            }
        }
        split
    };
    let train = make(spec.train_per_class, true);
    let test = make(spec.test_per_class, false);
    let width = (spec.num_classes - 1).to_string().len();
    let names = (0..spec.num_classes)
        .map(|k| format!("class_{k:0width$}"))
        .collect();
    ImageDataset::new([spec.height, spec.width, spec.channels], train, test, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitKind;

    #[test]
    fn shape_and_balance() {
        let spec = SynthSpec {
            train_per_class: 5,
            test_per_class: 2,
            ..SynthSpec::default()
        };
        let ds = synth_generate(&spec, 1).unwrap();
        assert_eq!(ds.dims(), [32, 32, 3]);
        assert_eq!(ds.histogram(SplitKind::Train).counts, vec![5; 4]);
        assert_eq!(ds.histogram(SplitKind::Test).counts, vec![2; 4]);
        assert_eq!(ds.class_names()[3], "class_3");
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec {
            train_per_class: 3,
            test_per_class: 1,
            ..SynthSpec::default()
        };
        assert_eq!(synth_generate(&spec, 9).unwrap(), synth_generate(&spec, 9).unwrap());
        assert_ne!(synth_generate(&spec, 9).unwrap(), synth_generate(&spec, 10).unwrap());
    }

    #[test]
    fn label_noise_flips_some_train_labels() {
        let spec = SynthSpec {
            train_per_class: 200,
            test_per_class: 10,
            height: 4,
            width: 4,
            label_noise: 0.3,
            ..SynthSpec::default()
        };
        let ds = synth_generate(&spec, 5).unwrap();
        let flipped = ds
            .train()
            .labels
            .iter()
            .enumerate()
            .filter(|(i, &l)| l as usize != i / 200)
            .count();
        let rate = flipped as f64 / 800.0;
        assert!((rate - 0.3).abs() < 0.06, "flip rate {rate}");
        let test_ok = ds.test().labels.iter().enumerate().all(|(i, &l)| l as usize == i / 10);
        assert!(test_ok);
    }

    #[test]
    fn rejects_bad_spec() {
        let spec = SynthSpec {
            label_noise: 1.5,
            ..SynthSpec::default()
        };
        assert!(synth_generate(&spec, 0).is_err());
    }
}
