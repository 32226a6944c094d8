use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::LiraError;
use crate::dp::{mode_for_budget, train, PrivacyBudget, TrainConfig, TrainHistory};
use crate::nn::{ModelConfig, ModelParams, Samples};
use crate::rng;

/// Environment variable holding the number of concurrent shadow trainings.
pub const WORKERS_ENV: &str = "PPML_AUDIT_WORKERS";

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// One mask per model selecting `floor(size / 2)` samples uniformly.
pub fn sample_membership_masks(
    n_models: usize,
    size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<bool>>, LiraError> {
    if size < 2 {
        return Err(LiraError::Input(format!(
            "membership masks need at least 2 samples, got {size}"
        )));
    }
    if n_models < 2 {
        return Err(LiraError::Input(format!(
            "an ensemble needs at least 2 models, got {n_models}"
        )));
    }
    Ok((0..n_models)
        .map(|_| {
            let mut mask = vec![false; size];
            for i in index::sample(rng, size, size / 2) {
                mask[i] = true;
            }
            mask
        })
        .collect())
}

/// Shadow models with their training masks and the true-class confidence
/// each model assigns to every sample of the attacked dataset.
#[derive(Debug, Clone)]
pub struct ShadowEnsemble {
    pub masks: Vec<Vec<bool>>,
    /// `confidences[m][s]`, queried on the un-augmented image.
    pub confidences: Vec<Vec<f64>>,
    pub models: Vec<ModelParams>,
    pub histories: Vec<TrainHistory>,
}

impl ShadowEnsemble {
    /// Ensemble known only through its observations.
    pub fn from_observations(
        masks: Vec<Vec<bool>>,
        confidences: Vec<Vec<f64>>,
    ) -> Result<Self, LiraError> {
        if masks.len() != confidences.len() || masks.is_empty() {
            return Err(LiraError::Input(format!(
                "{} masks for {} confidence rows",
                masks.len(),
                confidences.len()
            )));
        }
        let size = masks[0].len();
        if masks.iter().any(|m| m.len() != size)
            || confidences.iter().any(|c| c.len() != size)
        {
            return Err(LiraError::Input("ragged membership or confidence rows".into()));
        }
        Ok(Self {
            masks,
            confidences,
            models: Vec::new(),
            histories: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dataset_size(&self) -> usize {
        self.masks.first().map_or(0, Vec::len)
    }
}

type ShadowModel = (ModelParams, TrainHistory, Vec<f64>);

/// Train `n_models` shadows, model `m` on its mask with seed `base_seed + m`.
/// Private budgets are calibrated for the shadow training-set size.
pub fn train_shadows(
    data: &Samples,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    budget: &PrivacyBudget,
    n_models: usize,
    base_seed: u64,
    workers: usize,
) -> Result<ShadowEnsemble, LiraError> {
    let mut mask_rng = rng::stream(base_seed, "lira/masks");
    let masks = sample_membership_masks(n_models, data.len(), &mut mask_rng)?;
    let mode = mode_for_budget(train_config, budget, data.len() / 2)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LiraError::Input(format!("thread pool: {e}")))?;
    let results: Vec<Result<ShadowModel, LiraError>> = pool.install(|| {
        masks
            .par_iter()
            .enumerate()
            .map(|(m, mask)| {
                let indices: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
                let subset = data.subset(&indices);
                let seed = base_seed.wrapping_add(m as u64);
                let (params, history) = train(&subset, None, model_config, train_config, &mode, seed)
                    .map_err(|source| LiraError::Train { model: m, source })?;
                let conf = params.true_class_confidence(data)?;
                log::debug!("shadow {m} trained, final loss {:?}", history.train_loss.last());
                Ok((params, history, conf))
            })
            .collect()
    });
    let mut ensemble = ShadowEnsemble {
        masks,
        confidences: Vec::with_capacity(n_models),
        models: Vec::with_capacity(n_models),
        histories: Vec::with_capacity(n_models),
    };
    for r in results {
        let (params, history, conf) = r?;
        ensemble.models.push(params);
        ensemble.histories.push(history);
        ensemble.confidences.push(conf);
    }
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn masks_select_half() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let masks = sample_membership_masks(32, 1000, &mut rng).unwrap();
        assert!(masks.iter().all(|m| m.iter().filter(|&&b| b).count() == 500));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_membership_masks(32, 1000, &mut rng).unwrap(), masks);
        let odd = sample_membership_masks(2, 7, &mut rng).unwrap();
        assert!(odd.iter().all(|m| m.iter().filter(|&&b| b).count() == 3));
        assert!(sample_membership_masks(4, 1, &mut rng).is_err());
    }

    #[test]
    fn in_counts_follow_binomial_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let masks = sample_membership_masks(32, 1000, &mut rng).unwrap();
        let mean = (0..1000)
            .map(|s| masks.iter().filter(|m| m[s]).count() as f64)
            .sum::<f64>()
            / 1000.0;
        // Binomial(32, 1/2) per sample: sd of the mean is sqrt(8/1000).
        assert!((mean - 16.0).abs() < 3.0 * (8.0f64 / 1000.0).sqrt(), "{mean}");
    }
}
