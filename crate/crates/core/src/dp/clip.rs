use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DpError;
use crate::nn::ParamSet;

/// Rescale `grad` so its global L2 norm is at most `clip_norm`.
///
/// Gradients already inside the ball are returned unchanged. An infinite
/// `clip_norm` disables clipping.
pub fn clip_gradient(grad: &ParamSet, clip_norm: f64) -> Result<ParamSet, DpError> {
    let mut out = grad.clone();
    clip_in_place(&mut out, clip_norm)?;
    Ok(out)
}

/// In-place variant of [`clip_gradient`]; returns the post-clip norm.
pub fn clip_in_place(grad: &mut ParamSet, clip_norm: f64) -> Result<f64, DpError> {
    if !(clip_norm > 0.0) {
        return Err(DpError::Config(format!(
            "clip norm must be positive, got {clip_norm}"
        )));
    }
    if !grad.is_finite() {
        return Err(DpError::Numeric("non-finite gradient".into()));
    }
    let norm = grad.l2_norm();
    if norm > clip_norm {
        grad.scale(clip_norm / norm);
        Ok(grad.l2_norm())
    } else {
        Ok(norm)
    }
}

/// Streaming sum of clipped per-example gradients.
///
/// The private and non-private training paths both aggregate through this
/// type; with `clip_norm = ∞` and `noise_multiplier = 0` it reduces to the
/// plain mean of the gradients, and no noise is drawn.
#[derive(Debug, Clone)]
pub struct ClippedAccumulator {
    sum: ParamSet,
    count: usize,
    clip_norm: f64,
    max_clipped_norm: f64,
}

impl ClippedAccumulator {
    pub fn new(template: &ParamSet, clip_norm: f64) -> Result<Self, DpError> {
        if !(clip_norm > 0.0) {
            return Err(DpError::Config(format!(
                "clip norm must be positive, got {clip_norm}"
            )));
        }
        Ok(Self {
            sum: ParamSet::zeros_like(template),
            count: 0,
            clip_norm,
            max_clipped_norm: 0.0,
        })
    }

    /// Clip `grad` in place and add it to the running sum.
    pub fn add(&mut self, grad: &mut ParamSet) -> Result<(), DpError> {
        let norm = clip_in_place(grad, self.clip_norm)?;
        self.max_clipped_norm = self.max_clipped_norm.max(norm);
        self.sum.add_assign(grad);
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Largest post-clip norm seen so far.
    pub fn max_clipped_norm(&self) -> f64 {
        self.max_clipped_norm
    }

    /// `(Σ clip(g_i) + N(0, σ²C² I)) / B`.
    pub fn finish<R: Rng + ?Sized>(
        mut self,
        noise_multiplier: f64,
        rng: &mut R,
    ) -> Result<ParamSet, DpError> {
        if self.count == 0 {
            return Err(DpError::Input("cannot aggregate an empty batch".into()));
        }
        if !(noise_multiplier >= 0.0) || !noise_multiplier.is_finite() {
            return Err(DpError::Config(format!(
                "noise multiplier must be finite and >= 0, got {noise_multiplier}"
            )));
        }
        if noise_multiplier > 0.0 {
            let std = noise_multiplier * self.clip_norm;
            if !std.is_finite() {
                return Err(DpError::Config(
                    "noise requires a finite clip norm".into(),
                ));
            }
            for v in self.sum.values_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += std * z;
            }
        }
        self.sum.scale(1.0 / self.count as f64);
        Ok(self.sum)
    }
}

/// Clip every per-example gradient, sum, add Gaussian noise with standard
/// deviation `σ·C` per coordinate, and divide by the batch size.
pub fn noisy_aggregate<R: Rng + ?Sized>(
    per_example: &[ParamSet],
    clip_norm: f64,
    noise_multiplier: f64,
    rng: &mut R,
) -> Result<ParamSet, DpError> {
    let first = per_example
        .first()
        .ok_or_else(|| DpError::Input("cannot aggregate an empty batch".into()))?;
    let mut acc = ClippedAccumulator::new(first, clip_norm)?;
    for g in per_example {
        if !g.same_shape(first) {
            return Err(DpError::Shape("per-example gradients differ in shape".into()));
        }
        let mut g = g.clone();
        acc.add(&mut g)?;
    }
    acc.finish(noise_multiplier, rng)
}
