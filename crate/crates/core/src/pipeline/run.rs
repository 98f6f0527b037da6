//! The five-stage runner: self-supervised pretraining (A), fine-tuning on
//! sparse labels with training-set inference (B), uncertainty/spectrum
//! analysis with mixture fitting and harvesting (C), re-fine-tuning on the
//! harvested pseudo labels (D), and held-out evaluation (E).
//!
//! Artifacts land under the output directory as they are produced, so an
//! aborted run keeps everything finished before the failing stage:
//!
//! ```text
//! out/
//!   config.json                resolved configuration echo
//!   checkpoint_a.bin           encoder after pretraining
//!   checkpoint_b.bin           encoder + head after sparse fine-tuning
//!   checkpoint_d.bin           encoder + head after pseudo fine-tuning
//!   <scene>/predictions.csv    stage-B argmax per vertex
//!   <scene>/uncertainty.csv    MC-dropout uncertainty per vertex
//!   <scene>/spectrum.csv       spectrum distance per vertex
//!   <scene>/distances.bin      combined distance cache
//!   <scene>/pseudo.csv         harvested pseudo labels
//!   <scene>/models.json        per-category mixture fits
//!   histograms.csv             per-category uncertainty/spectrum histograms
//!   metrics.json               stage-B and stage-E IoU metrics
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::harvest::harvest_pseudo_labels;
use super::metrics::{accumulate_confusion, SegMetrics};
use super::uncertainty::mc_dropout_uncertainty;
use super::{PipelineConfig, UncertaintyField};
use crate::geometry::{
    angular_distance_matrix, combined_distance_matrix, decimate_qem, estimate_normals,
    heat_geodesics, save_distance_cache, CombinedDistanceConfig, DistanceCache,
    HeatGeodesicConfig,
};
use crate::scene::{
    save_pseudo_labels, PredictionField, PseudoLabelSet, SceneMesh, SparseLabelSet,
};
use crate::seed::{self, tag};
use crate::spectral::{
    build_normalized_affinity, map_distances, seeded_kmeans, spectral_embed, AffinityConfig,
    SigmaMode,
};
use crate::vb::{
    save_checkpoint, Checkpoint, ClassifierHead, EncoderParams, Finetuner, Pretrainer,
    SegmentationModel, SgdConfig, TrainingLabels, VBConfig,
};
use crate::{Error, Result};

/// One scene with whatever labels exist for it.
#[derive(Debug, Clone)]
pub struct SceneInput {
    pub mesh: SceneMesh,
    pub sparse: Option<SparseLabelSet>,
    /// Dense per-vertex ground truth, for evaluation scenes.
    pub gt: Option<Vec<u32>>,
}

/// Everything the pipeline hands back in memory; files land in `out_dir`.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub stage_b_metrics: Option<SegMetrics>,
    pub stage_e_metrics: Option<SegMetrics>,
    pub pseudo_labels: BTreeMap<String, PseudoLabelSet>,
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct MetricsReport<'a> {
    stage_b: &'a Option<SegMetrics>,
    stage_e: &'a Option<SegMetrics>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Per-vertex spectrum distances of one scene (steps 1-8 of the spectral
/// analysis), plus the cached combined matrix.
pub fn spectrum_distances(
    mesh: &SceneMesh,
    sparse: &SparseLabelSet,
    cfg: &PipelineConfig,
) -> Result<(Vec<f64>, DistanceCache)> {
    let dec = decimate_qem(mesh, cfg.decimation_target)?;
    if !dec.reached_target {
        log::warn!(
            "{}: decimation stopped at {} vertices (target {})",
            mesh.scene_id,
            dec.mesh.vertex_count(),
            cfg.decimation_target
        );
    }
    let normals = estimate_normals(&dec.mesh, cfg.normal_neighbors)?;
    let geodesic = heat_geodesics(
        &dec.mesh,
        &HeatGeodesicConfig {
            time_scale: cfg.heat_time_scale,
        },
    )?;
    let angular = angular_distance_matrix(&normals)?;
    let combined = combined_distance_matrix(
        &geodesic,
        &angular,
        &CombinedDistanceConfig { delta: cfg.delta },
    )?;

    let affinity_cfg = AffinityConfig {
        sigma: cfg.sigma.map_or(SigmaMode::Auto, SigmaMode::Fixed),
        embedding_length: cfg.embedding_length.min(dec.mesh.vertex_count()),
    };
    let affinity = build_normalized_affinity(&combined, &affinity_cfg)?;
    let embedding = spectral_embed(&affinity, &affinity_cfg)?;

    let mut seeds: Vec<u32> = sparse
        .entries()
        .keys()
        .map(|&v| dec.origin_map[v as usize])
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "scene {} has no labeled vertices to seed the clustering",
            mesh.scene_id
        )));
    }
    let clusters = seeded_kmeans(&embedding, &seeds)?;
    let distances = map_distances(&clusters, &dec);
    Ok((
        distances,
        DistanceCache {
            matrix: combined,
            delta: cfg.delta,
            heat_time_scale: cfg.heat_time_scale,
        },
    ))
}

fn write_scalar_csv(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v:.9e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_predictions_csv(path: &Path, pred: &PredictionField) -> Result<()> {
    let mut out = String::from("vertex_index,category_id\n");
    for (i, &c) in pred.predicted().iter().enumerate() {
        out.push_str(&format!("{i},{c}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

const HISTOGRAM_BINS: usize = 40;

fn histogram_rows(
    rows: &mut String,
    scene: &str,
    field: &str,
    pred: &PredictionField,
    values: &[f64],
) {
    let mut by_category: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (&c, &v) in pred.predicted().iter().zip(values) {
        by_category.entry(c).or_default().push(v);
    }
    for (category, vals) in by_category {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo {
            (hi - lo) / HISTOGRAM_BINS as f64
        } else {
            1.0
        };
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &v in &vals {
            let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[b] += 1;
        }
        for (b, &count) in counts.iter().enumerate() {
            let bin_lo = lo + b as f64 * width;
            rows.push_str(&format!(
                "{scene},{category},{field},{bin_lo:.9e},{:.9e},{count}\n",
                bin_lo + width
            ));
        }
    }
}

fn pooled_metrics(
    model: &SegmentationModel,
    scenes: &[&SceneInput],
    num_categories: usize,
) -> Result<Option<SegMetrics>> {
    let mut confusion = vec![vec![0u64; num_categories]; num_categories];
    let mut any = false;
    for scene in scenes {
        let Some(gt) = &scene.gt else { continue };
        let pred = PredictionField::from_logits(model.infer_logits(&scene.mesh)?)?;
        accumulate_confusion(&mut confusion, &pred, gt)?;
        any = true;
    }
    if !any {
        return Ok(None);
    }
    Ok(Some(SegMetrics::from_confusion(confusion)?))
}

/// Run stages A-E. `train` scenes need sparse labels; `eval` scenes need
/// dense ground truth (scenes may appear in both roles).
pub fn run_pipeline(
    train: &[SceneInput],
    eval: &[SceneInput],
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let labeled: Vec<&SceneInput> = train
        .iter()
        .filter(|s| s.sparse.as_ref().is_some_and(|l| !l.is_empty()))
        .collect();
    if labeled.is_empty() {
        return Err(Error::InvalidArgument(
            "pipeline needs at least one training scene with sparse labels".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg)? + "\n",
    )?;
    for scene in train {
        fs::create_dir_all(out_dir.join(&scene.mesh.scene_id))?;
    }

    // --- stage A: self-supervised pretraining ---
    let lambda = cfg.require_lambda().map_err(|e| e.in_stage("A"))?;
    let vb = stage(
        "A",
        VBConfig::with_dims(lambda, cfg.feature_dim, cfg.fps_target).map(|mut v| {
            v.squared_norm = cfg.squared_norm;
            v
        }),
    )?;
    let encoder = stage(
        "A",
        EncoderParams::init(cfg.hidden_dim, cfg.feature_dim, cfg.dropout_rate, cfg.seed),
    )?;
    let sgd = SgdConfig {
        base_lr: cfg.base_lr,
        momentum: cfg.momentum,
        lr_power: cfg.lr_power,
        total_steps: cfg.pretrain_steps.max(1),
    };
    let mut pretrainer = stage("A", Pretrainer::new(encoder, vb, sgd))?;
    for step in 0..cfg.pretrain_steps {
        let mesh = &train[step % train.len()].mesh;
        stage("A", pretrainer.step(mesh, cfg.seed))?;
    }
    let pretrained = pretrainer.into_params();
    stage(
        "A",
        save_checkpoint(
            &Checkpoint {
                encoder: pretrained.clone(),
                head: None,
            },
            &out_dir.join("checkpoint_a.bin"),
        ),
    )?;

    // --- stage B: fine-tune on sparse labels, infer on the training set ---
    let head = stage(
        "B",
        ClassifierHead::init(
            cfg.feature_dim,
            cfg.num_categories as usize,
            seed::mix(cfg.seed, tag::HEAD_INIT),
        ),
    )?;
    let finetune_sgd = SgdConfig {
        total_steps: cfg.finetune_epochs.max(1),
        ..sgd
    };
    let mut tuner = stage(
        "B",
        Finetuner::new(
            SegmentationModel {
                encoder: pretrained.clone(),
                head,
            },
            finetune_sgd,
        ),
    )?;
    {
        let batches: Vec<(&SceneMesh, TrainingLabels)> = labeled
            .iter()
            .map(|s| {
                (
                    &s.mesh,
                    TrainingLabels::Sparse(s.sparse.as_ref().expect("filtered")),
                )
            })
            .collect();
        for _ in 0..cfg.finetune_epochs {
            stage("B", tuner.epoch(&batches, cfg.seed))?;
        }
    }
    let model_b = tuner.into_model();
    stage(
        "B",
        save_checkpoint(
            &Checkpoint {
                encoder: model_b.encoder.clone(),
                head: Some(model_b.head.clone()),
            },
            &out_dir.join("checkpoint_b.bin"),
        ),
    )?;
    let mut predictions: BTreeMap<String, PredictionField> = BTreeMap::new();
    for scene in train {
        let pred = stage(
            "B",
            model_b
                .infer_logits(&scene.mesh)
                .and_then(PredictionField::from_logits),
        )?;
        stage(
            "B",
            write_predictions_csv(
                &out_dir.join(&scene.mesh.scene_id).join("predictions.csv"),
                &pred,
            ),
        )?;
        predictions.insert(scene.mesh.scene_id.clone(), pred);
    }
    let eval_refs: Vec<&SceneInput> = eval.iter().collect();
    let stage_b_metrics = stage(
        "B",
        pooled_metrics(&model_b, &eval_refs, cfg.num_categories as usize),
    )?;

    // --- stage C: uncertainty + spectrum analysis, harvesting ---
    let mut pseudo_labels: BTreeMap<String, PseudoLabelSet> = BTreeMap::new();
    if cfg.harvest_enabled {
        let mut histogram = String::from("scene,category,field,bin_lo,bin_hi,count\n");
        for scene in &labeled {
            let scene_id = scene.mesh.scene_id.clone();
            let scene_dir = out_dir.join(&scene_id);
            let sparse = scene.sparse.as_ref().expect("filtered");
            let pred = &predictions[&scene_id];

            let uncertainty: UncertaintyField = stage(
                "C",
                mc_dropout_uncertainty(
                    &model_b,
                    &scene.mesh,
                    cfg.mc_passes,
                    cfg.dropout_rate,
                    cfg.uncertainty_mode,
                    seed::mix2(cfg.seed, tag::MC_PASS, hash_id(&scene_id)),
                ),
            )?;
            stage(
                "C",
                write_scalar_csv(
                    &scene_dir.join("uncertainty.csv"),
                    "vertex_index,uncertainty",
                    &uncertainty.values,
                ),
            )?;

            let (spectrum, cache) = stage("C", spectrum_distances(&scene.mesh, sparse, cfg))?;
            stage(
                "C",
                write_scalar_csv(
                    &scene_dir.join("spectrum.csv"),
                    "vertex_index,spectrum_distance",
                    &spectrum,
                ),
            )?;
            stage(
                "C",
                save_distance_cache(&cache, &scene_dir.join("distances.bin")),
            )?;

            let (labels, reports) = stage(
                "C",
                harvest_pseudo_labels(
                    pred,
                    &uncertainty,
                    &spectrum,
                    sparse,
                    &cfg.harvest_config(),
                ),
            )?;
            stage(
                "C",
                save_pseudo_labels(&labels, &scene_dir.join("pseudo.csv")),
            )?;
            stage(
                "C",
                serde_json::to_string_pretty(&reports)
                    .map_err(Error::from)
                    .and_then(|json| {
                        fs::write(scene_dir.join("models.json"), json + "\n").map_err(Error::from)
                    }),
            )?;
            histogram_rows(&mut histogram, &scene_id, "uncertainty", pred, &uncertainty.values);
            histogram_rows(&mut histogram, &scene_id, "spectrum", pred, &spectrum);
            pseudo_labels.insert(scene_id, labels);
        }
        stage(
            "C",
            fs::write(out_dir.join("histograms.csv"), histogram).map_err(Error::from),
        )?;
    }

    // --- stage D: fine-tune again on the harvested labels ---
    let harvested_any = pseudo_labels.values().any(|l| !l.is_empty());
    let final_model = if cfg.harvest_enabled && harvested_any {
        let start = if cfg.restart_from_pretrain {
            SegmentationModel {
                encoder: pretrained.clone(),
                head: stage(
                    "D",
                    ClassifierHead::init(
                        cfg.feature_dim,
                        cfg.num_categories as usize,
                        seed::mix(cfg.seed, tag::HEAD_INIT),
                    ),
                )?,
            }
        } else {
            model_b.clone()
        };
        let mut tuner = stage("D", Finetuner::new(start, finetune_sgd))?;
        let batches: Vec<(&SceneMesh, TrainingLabels)> = labeled
            .iter()
            .filter_map(|s| {
                pseudo_labels
                    .get(&s.mesh.scene_id)
                    .filter(|l| !l.is_empty())
                    .map(|l| (&s.mesh, TrainingLabels::Pseudo(l)))
            })
            .collect();
        for _ in 0..cfg.finetune_epochs {
            stage("D", tuner.epoch(&batches, seed::mix(cfg.seed, tag::STEP)))?;
        }
        let model_d = tuner.into_model();
        stage(
            "D",
            save_checkpoint(
                &Checkpoint {
                    encoder: model_d.encoder.clone(),
                    head: Some(model_d.head.clone()),
                },
                &out_dir.join("checkpoint_d.bin"),
            ),
        )?;
        model_d
    } else {
        model_b.clone()
    };

    // --- stage E: evaluate on the held-out scenes ---
    let stage_e_metrics = stage(
        "E",
        pooled_metrics(&final_model, &eval_refs, cfg.num_categories as usize),
    )?;
    let report = MetricsReport {
        stage_b: &stage_b_metrics,
        stage_e: &stage_e_metrics,
    };
    stage(
        "E",
        serde_json::to_string_pretty(&report)
            .map_err(Error::from)
            .and_then(|json| {
                fs::write(out_dir.join("metrics.json"), json + "\n").map_err(Error::from)
            }),
    )?;

    Ok(PipelineOutcome {
        stage_b_metrics,
        stage_e_metrics,
        pseudo_labels,
        out_dir: out_dir.to_path_buf(),
    })
}

fn hash_id(id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::corner_scene;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap as Map;

    fn toy_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.lambda = Some(0.005);
        cfg.feature_dim = 16;
        cfg.hidden_dim = 24;
        cfg.fps_target = 128;
        cfg.pretrain_steps = 60;
        cfg.finetune_epochs = 120;
        cfg.num_categories = 3;
        cfg.mc_passes = 6;
        cfg.em_iterations = 30;
        cfg.seed = 7;
        cfg
    }

    fn toy_inputs(seed: u64) -> (Vec<SceneInput>, Vec<SceneInput>) {
        let (mesh, classes) = corner_scene(9, 18.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let mut entries = Map::new();
        while entries.len() < 20 {
            let v = rng.random_range(0..mesh.vertex_count() as u32);
            entries.insert(v, classes[v as usize]);
        }
        let sparse = SparseLabelSet::new(entries, 3, &mesh).unwrap();
        let train = SceneInput {
            mesh: mesh.clone(),
            sparse: Some(sparse),
            gt: Some(classes.clone()),
        };
        let (eval_mesh, eval_classes) = corner_scene(9, 18.0, seed + 1000);
        let eval = SceneInput {
            mesh: eval_mesh,
            sparse: None,
            gt: Some(eval_classes),
        };
        (vec![train], vec![eval])
    }

    #[test]
    fn pipeline_produces_artifacts_and_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let (train, eval) = toy_inputs(1);
        let cfg = toy_config();
        let outcome = run_pipeline(&train, &eval, &cfg, dir.path()).unwrap();
        assert!(outcome.stage_b_metrics.is_some());
        assert!(outcome.stage_e_metrics.is_some());
        let scene_dir = dir.path().join(&train[0].mesh.scene_id);
        for file in [
            "predictions.csv",
            "uncertainty.csv",
            "spectrum.csv",
            "distances.bin",
            "pseudo.csv",
            "models.json",
        ] {
            assert!(scene_dir.join(file).exists(), "missing {file}");
        }
        for file in [
            "config.json",
            "checkpoint_a.bin",
            "checkpoint_b.bin",
            "metrics.json",
            "histograms.csv",
        ] {
            assert!(dir.path().join(file).exists(), "missing {file}");
        }
    }

    /// Disabling stage C reproduces the stage-B baseline exactly.
    #[test]
    fn disabled_harvest_equals_stage_b() {
        let dir = tempfile::tempdir().unwrap();
        let (train, eval) = toy_inputs(2);
        let mut cfg = toy_config();
        cfg.harvest_enabled = false;
        let outcome = run_pipeline(&train, &eval, &cfg, dir.path()).unwrap();
        assert_eq!(outcome.stage_b_metrics, outcome.stage_e_metrics);
        assert!(outcome.pseudo_labels.is_empty());
        assert!(!dir.path().join("checkpoint_d.bin").exists());
    }

    /// Same seed, same bytes: harvested CSVs are identical across reruns.
    #[test]
    fn identical_seeds_give_byte_identical_artifacts() {
        let run = |dir: &Path| {
            let (train, eval) = toy_inputs(3);
            run_pipeline(&train, &eval, &toy_config(), dir).unwrap();
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run(dir_a.path());
        run(dir_b.path());
        let scene = "corner9_3";
        for file in [
            format!("{scene}/pseudo.csv"),
            format!("{scene}/uncertainty.csv"),
            format!("{scene}/spectrum.csv"),
            "metrics.json".to_string(),
            "histograms.csv".to_string(),
        ] {
            let a = fs::read(dir_a.path().join(&file)).unwrap();
            let b = fs::read(dir_b.path().join(&file)).unwrap();
            assert_eq!(a, b, "artifact {file} differs between reruns");
        }
    }

    #[test]
    fn missing_labels_abort_early() {
        let dir = tempfile::tempdir().unwrap();
        let (mut train, eval) = toy_inputs(4);
        train[0].sparse = None;
        let err = run_pipeline(&train, &eval, &toy_config(), dir.path()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn missing_lambda_fails_in_stage_a() {
        let dir = tempfile::tempdir().unwrap();
        let (train, eval) = toy_inputs(5);
        let mut cfg = toy_config();
        cfg.lambda = None;
        let err = run_pipeline(&train, &eval, &cfg, dir.path()).unwrap_err();
        match err {
            Error::Stage { stage: "A", .. } => {}
            other => panic!("expected stage A error, got {other:?}"),
        }
    }
}
