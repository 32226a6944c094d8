//! Conversion of 8-bit images into model input tensors.

use super::{DatasetError, ImageDataset, SplitKind};
use crate::nn::{Samples, Tensor};

/// Height, width and channel count expected by the classifier.
pub const MODEL_INPUT: [usize; 3] = [32, 32, 3];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessOptions {
    /// Permit area-averaged shrinking of images larger than the model input.
    pub allow_downscale: bool,
}

/// Per output index, the contributing source indices and their weights.
fn axis_weights(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    if input == output {
        return (0..output).map(|i| vec![(i, 1.0)]).collect();
    }
    let scale = input as f64 / output as f64;
    if input < output {
        // Bilinear with half-pixel centres, clamped at the borders.
        (0..output)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(input - 1);
                let t = src - lo as f64;
                if hi == lo || t == 0.0 {
                    vec![(lo, 1.0)]
                } else {
                    vec![(lo, 1.0 - t), (hi, t)]
                }
            })
            .collect()
    } else {
        // Area averaging over the source interval each output pixel covers.
        (0..output)
            .map(|o| {
                let start = o as f64 * scale;
                let end = (o + 1) as f64 * scale;
                let mut taps = Vec::new();
                let mut s = start.floor() as usize;
                while (s as f64) < end && s < input {
                    let overlap = (end.min(s as f64 + 1.0) - start.max(s as f64)).max(0.0);
                    if overlap > 0.0 {
                        taps.push((s, overlap / scale));
                    }
                    s += 1;
                }
                taps
            })
            .collect()
    }
}

/// Resample one HWC image with values already scaled to `[0, 1]`.
/// Upscaling is bilinear, downscaling area-averaged, each axis independently.
pub fn resize_image(
    image: &[f64],
    [h, w, c]: [usize; 3],
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let rows = axis_weights(h, out_h);
    let cols = axis_weights(w, out_w);
    let mut tmp = vec![0.0; out_h * w * c];
    for (oy, taps) in rows.iter().enumerate() {
        let dst = &mut tmp[oy * w * c..(oy + 1) * w * c];
        for &(sy, wt) in taps {
            let src = &image[sy * w * c..(sy + 1) * w * c];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    let mut out = vec![0.0; out_h * out_w * c];
    for oy in 0..out_h {
        for (ox, taps) in cols.iter().enumerate() {
            let dst = &mut out[(oy * out_w + ox) * c..(oy * out_w + ox + 1) * c];
            for &(sx, wt) in taps {
                let src = &tmp[(oy * w + sx) * c..(oy * w + sx + 1) * c];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
    }
    out
}

/// Turn one split into `(N, 32, 32, 3)` samples with values in `[0, 1]`.
/// Grayscale images are replicated across the three channels.
pub fn preprocess(
    ds: &ImageDataset,
    kind: SplitKind,
    options: PreprocessOptions,
) -> Result<Samples, DatasetError> {
    let [h, w, c] = ds.dims();
    let [th, tw, tc] = MODEL_INPUT;
    if c != 1 && c != 3 {
        return Err(DatasetError::Input(format!(
            "images need 1 or 3 channels, found {c}"
        )));
    }
    if (h > th || w > tw) && !options.allow_downscale {
        return Err(DatasetError::Input(format!(
            "images of {h}x{w} exceed the {th}x{tw} model input; downscaling must be enabled explicitly"
        )));
    }
    let split = ds.split(kind);
    let n = split.len();
    let mut data = Vec::with_capacity(n * th * tw * tc);
    let mut scaled = vec![0.0; h * w * c];
    for i in 0..n {
        for (d, &s) in scaled.iter_mut().zip(ds.image(kind, i)) {
            *d = s as f64 / 255.0;
        }
        let resized = if (h, w) == (th, tw) {
            scaled.clone()
        } else {
            resize_image(&scaled, [h, w, c], th, tw)
        };
        if c == 1 {
            for v in resized {
                let v = v.clamp(0.0, 1.0);
                data.extend_from_slice(&[v, v, v]);
            }
        } else {
            data.extend(resized.into_iter().map(|v| v.clamp(0.0, 1.0)));
        }
    }
    let images = Tensor::new(vec![n, th, tw, tc], data).map_err(|e| DatasetError::Input(e.to_string()))?;
    let labels = split.labels.iter().map(|&l| l as usize).collect();
    Samples::new(images, labels).map_err(|e| DatasetError::Input(e.to_string()))
}
