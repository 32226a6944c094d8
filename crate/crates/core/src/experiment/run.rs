use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Epsilon, ExperimentConfig, Operation, SCHEMA_VERSION};
use super::report::{summary_rows, to_json_fixed, write_summary_csv};
use super::ExperimentError;
use crate::dataset::{preprocess, PreprocessOptions, SplitKind};
use crate::dp::{mode_for_budget, train, TrainMode};
use crate::lira::{default_workers, round_robin_attack, train_shadows, write_scores_csv, RoundRobinReport};
use crate::metrics::{utility, DatasetCharacteristics, UtilityReport};
use crate::nn::write_checkpoint;
use crate::rng::derive_seed;

pub(crate) const RESULTS_FILE: &str = "results.json";
const MANIFEST_FILE: &str = "manifest.json";
const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub variant: Option<String>,
    pub epsilon: Option<Epsilon>,
    pub status: StageStatus,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Provenance of a run. Wall-clock timings appear only here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub stages: Vec<StageRecord>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn failed(&self) -> bool {
        self.stages.iter().any(|s| s.status == StageStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: usize,
    pub auc: f64,
    pub tpr_at_fpr_0_1: f64,
    pub tpr_at_fpr_0_001: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub shadows: usize,
    pub shadow_train_size: usize,
    pub shadow_noise_multiplier: f64,
    pub auc: f64,
    pub tpr_at_fpr_0_1: f64,
    pub tpr_at_fpr_0_001: f64,
    pub fallback_count: usize,
    pub per_target: Vec<TargetSummary>,
    /// Vertically averaged ROC; omitted from the combined results file.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roc: Vec<(f64, f64)>,
}

impl AttackSummary {
    pub fn new(report: &RoundRobinReport, shadow_train_size: usize, shadow_noise_multiplier: f64) -> Self {
        Self {
            shadows: report.per_target.len(),
            shadow_train_size,
            shadow_noise_multiplier,
            auc: report.auc,
            tpr_at_fpr_0_1: report.tpr_at_fpr_0_1,
            tpr_at_fpr_0_001: report.tpr_at_fpr_0_001,
            fallback_count: report.fallback_count,
            per_target: report
                .per_target
                .iter()
                .enumerate()
                .map(|(t, r)| TargetSummary {
                    target: t,
                    auc: r.auc,
                    tpr_at_fpr_0_1: r.tpr_at_fpr_0_1,
                    tpr_at_fpr_0_001: r.tpr_at_fpr_0_001,
                })
                .collect(),
            roc: report.roc.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetResult {
    pub epsilon: Epsilon,
    /// σ of the model trained on the full split; 0 when non-private.
    pub noise_multiplier: Option<f64>,
    pub utility: Option<UtilityReport>,
    pub attack: Option<AttackSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub name: String,
    pub ops: Vec<Operation>,
    pub train_size: Option<usize>,
    pub num_classes: Option<usize>,
    pub class_histogram: Option<Vec<usize>>,
    pub characteristics: Option<DatasetCharacteristics>,
    pub budgets: Vec<BudgetResult>,
}

/// Every numeric outcome of a run; fully determined by the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub variants: Vec<VariantResult>,
}

struct Recorder<'a> {
    root: &'a Path,
    manifest: RunManifest,
}

impl Recorder<'_> {
    fn stage<T>(
        &mut self,
        stage: &str,
        variant: Option<&str>,
        epsilon: Option<Epsilon>,
        f: impl FnOnce() -> Result<T, String>,
    ) -> Option<T> {
        let start = Instant::now();
        let out = f();
        let seconds = start.elapsed().as_secs_f64();
        let (status, error, value) = match out {
            Ok(v) => (StageStatus::Ok, None, Some(v)),
            Err(e) => {
                log::error!("stage {stage} failed: {e}");
                (StageStatus::Failed, Some(e), None)
            }
        };
        self.manifest.stages.push(StageRecord {
            stage: stage.to_string(),
            variant: variant.map(str::to_string),
            epsilon,
            status,
            seconds,
            error,
        });
        value
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), ExperimentError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.manifest.artifacts.push(rel.to_string());
        Ok(())
    }
}

/// Run every variant under every budget and write the reports into the
/// configured output directory. Stage failures are recorded in the manifest
/// and skip only the work that depends on them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest, ExperimentError> {
    config.validate()?;
    let root: PathBuf = config.output_dir.clone();
    std::fs::create_dir_all(&root)?;
    let hash = config.hash();
    let workers = config.workers.unwrap_or_else(default_workers);
    let mut rec = Recorder {
        root: &root,
        manifest: RunManifest {
            schema_version: SCHEMA_VERSION,
            config_hash: hash.clone(),
            seed: config.seed,
            workers,
            stages: Vec::new(),
            artifacts: Vec::new(),
        },
    };
    let mut results = ExperimentResults {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        seed: config.seed,
        variants: Vec::new(),
    };
    let seed = config.seed;
    let base = rec.stage("load", None, None, || {
        config.source.load(seed).map_err(|e| e.to_string())
    });

    if let Some(base) = base {
        for variant in &config.variants {
            let name = variant.name.as_str();
            log::info!("variant {name}");
            let mut vr = VariantResult {
                name: name.to_string(),
                ops: variant.ops.clone(),
                train_size: None,
                num_classes: None,
                class_histogram: None,
                characteristics: None,
                budgets: Vec::new(),
            };
            let ds = rec.stage("modify", Some(name), None, || {
                let mut ds = base.clone();
                for op in &variant.ops {
                    ds = op.apply(&ds, seed).map_err(|e| format!("{op:?}: {e}"))?;
                }
                Ok(ds)
            });
            let Some(ds) = ds else {
                results.variants.push(vr);
                continue;
            };
            vr.train_size = Some(ds.train().len());
            vr.num_classes = Some(ds.num_classes());
            vr.class_histogram = Some(ds.histogram(SplitKind::Train).counts);
            vr.characteristics = rec.stage("characteristics", Some(name), None, || {
                DatasetCharacteristics::compute(&ds).map_err(|e| e.to_string())
            });
            if let Some(ch) = &vr.characteristics {
                rec.write(&format!("variants/{name}/characteristics.json"), to_json_fixed(ch).as_bytes())?;
            }
            let options = PreprocessOptions {
                allow_downscale: config.allow_downscale,
            };
            let samples = rec.stage("preprocess", Some(name), None, || {
                let tr = preprocess(&ds, SplitKind::Train, options).map_err(|e| e.to_string())?;
                let te = preprocess(&ds, SplitKind::Test, options).map_err(|e| e.to_string())?;
                if te.is_empty() {
                    return Err("test split is empty".into());
                }
                Ok((tr, te))
            });
            let model_config = config.model.model_config(ds.num_classes());
            for &eps in &config.budgets {
                let mut br = BudgetResult {
                    epsilon: eps,
                    noise_multiplier: None,
                    utility: None,
                    attack: None,
                };
                let Some((train_samples, test_samples)) = &samples else {
                    vr.budgets.push(br);
                    continue;
                };
                let budget = config.budget(eps);
                let dir = format!("variants/{name}/eps_{}", eps.label());
                log::info!("variant {name}, epsilon {}", eps.label());
                let target = rec.stage("train", Some(name), Some(eps), || {
                    let mode = mode_for_budget(&config.train, &budget, train_samples.len())
                        .map_err(|e| e.to_string())?;
                    let target_seed = derive_seed(seed, &format!("target/{name}/{}", eps.label()));
                    let (params, history) = train(
                        train_samples,
                        None,
                        &model_config,
                        &config.train,
                        &mode,
                        target_seed,
                    )
                    .map_err(|e| e.to_string())?;
                    let report = utility(&params, train_samples, test_samples).map_err(|e| e.to_string())?;
                    let sigma = match mode {
                        TrainMode::NonPrivate => 0.0,
                        TrainMode::Private(dp) => dp.noise_multiplier,
                    };
                    Ok((params, history, report, sigma))
                });
                if let Some((params, history, report, sigma)) = target {
                    br.noise_multiplier = Some(sigma);
                    br.utility = Some(report);
                    rec.write(&format!("{dir}/utility.json"), to_json_fixed(&report).as_bytes())?;
                    rec.write(&format!("{dir}/history.json"), to_json_fixed(&history).as_bytes())?;
                    let mut ckpt = Vec::new();
                    write_checkpoint(&params, &mut ckpt).map_err(|e| std::io::Error::other(e.to_string()))?;
                    rec.write(&format!("{dir}/model.ckpt"), &ckpt)?;
                }
                let attack = rec.stage("attack", Some(name), Some(eps), || {
                    let shadow_seed = derive_seed(seed, &format!("shadows/{name}/{}", eps.label()));
                    let ensemble = train_shadows(
                        train_samples,
                        &model_config,
                        &config.train,
                        &budget,
                        config.shadows,
                        shadow_seed,
                        workers,
                    )
                    .map_err(|e| e.to_string())?;
                    let sigma = ensemble.histories.first().map_or(0.0, |h| h.noise_multiplier);
                    let report = round_robin_attack(&ensemble).map_err(|e| e.to_string())?;
                    Ok((report, train_samples.len() / 2, sigma))
                });
                if let Some((report, shadow_size, sigma)) = attack {
                    let summary = AttackSummary::new(&report, shadow_size, sigma);
                    rec.write(&format!("{dir}/attack.json"), to_json_fixed(&summary).as_bytes())?;
                    let mut roc = String::from("fpr,tpr\n");
                    for (f, t) in &summary.roc {
                        roc.push_str(&format!("{f:.6},{t:.4}\n"));
                    }
                    rec.write(&format!("{dir}/roc.csv"), roc.as_bytes())?;
                    let mut scores = Vec::new();
                    write_scores_csv(&report.scores, &mut scores).map_err(|e| std::io::Error::other(e.to_string()))?;
                    rec.write(&format!("{dir}/scores.csv"), &scores)?;
                    br.attack = Some(AttackSummary {
                        roc: Vec::new(),
                        ..summary
                    });
                }
                vr.budgets.push(br);
            }
            results.variants.push(vr);
        }
    }

    rec.write(RESULTS_FILE, to_json_fixed(&results).as_bytes())?;
    let mut csv = Vec::new();
    let label = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_summary_csv(&summary_rows(&label, &results), &mut csv)?;
    rec.write(SUMMARY_FILE, &csv)?;
    rec.manifest.artifacts.push(MANIFEST_FILE.to_string());
    let manifest_json = serde_json::to_string_pretty(&rec.manifest).expect("manifest serializes");
    std::fs::write(root.join(MANIFEST_FILE), manifest_json + "\n")?;
    Ok(rec.manifest)
}
