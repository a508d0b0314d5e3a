//! Forest segmentation under three input configurations.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::gan::{predict_nir_tile, run_training, Trainer};
use crate::losses::bce_with_logits_map;
use crate::metrics::{confusion, seg_scores, ConfusionCounts, SegScoreReport};
use crate::nets::{build_segmenter, ArchSpec, UNet};
use crate::optim::Optimizer;
use crate::raster::{BandArray, BandName, DatasetManifest, ForestMask, RasterTile, Split};
use crate::train::{
    assemble_batch, derive_seed, tile_tensor, Checkpoint, LossRecord, ModelRole, Sample, TrainConfig, TrainingSet,
};

/// Where the NIR channel comes from while training an `RgbGenNir` model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NirSource {
    /// Train on measured NIR, substitute generated NIR at evaluation.
    #[default]
    Real,
    /// Train and evaluate on generated NIR.
    Generated,
}

/// Serializable name of a channel configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Rgb,
    RgbNir,
    RgbGennir,
}

impl ModeKind {
    pub const ALL: [ModeKind; 3] = [ModeKind::Rgb, ModeKind::RgbNir, ModeKind::RgbGennir];

    pub fn channels(self) -> usize {
        match self {
            ModeKind::Rgb => 3,
            _ => 4,
        }
    }

    /// Column label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ModeKind::Rgb => "RGB",
            ModeKind::RgbNir => "RGB+NIR",
            ModeKind::RgbGennir => "RGB+artificial NIR",
        }
    }
}

#[derive(Clone, Debug)]
pub enum ChannelMode {
    Rgb,
    RgbNir,
    RgbGenNir {
        generator: Arc<Checkpoint>,
        nir_source_at_train: NirSource,
    },
}

impl ChannelMode {
    pub fn generated(generator: Arc<Checkpoint>) -> Self {
        ChannelMode::RgbGenNir {
            generator,
            nir_source_at_train: NirSource::Real,
        }
    }

    pub fn kind(&self) -> ModeKind {
        match self {
            ChannelMode::Rgb => ModeKind::Rgb,
            ChannelMode::RgbNir => ModeKind::RgbNir,
            ChannelMode::RgbGenNir { .. } => ModeKind::RgbGennir,
        }
    }

    pub fn bands(&self) -> &'static [BandName] {
        match self {
            ChannelMode::Rgb => &BandName::RGB,
            _ => &BandName::ALL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ChannelMode::RgbGenNir { generator, .. } = self {
            if !matches!(generator.role, ModelRole::Generator | ModelRole::Regression) {
                return Err(Error::Config("RGB+generated NIR needs an NIR generator checkpoint".into()));
            }
        }
        Ok(())
    }

    fn describe(&self) -> serde_json::Value {
        match self {
            ChannelMode::RgbGenNir {
                generator,
                nir_source_at_train,
            } => serde_json::json!({
                "mode": self.kind(),
                "generator": generator.fingerprint(),
                "nir_source_at_train": nir_source_at_train,
            }),
            _ => serde_json::json!({ "mode": self.kind() }),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stage {
    Train,
    Eval,
}

/// The tile with exactly the mode's input bands, NIR generated when the
/// mode and stage call for it.
fn model_input(tile: &RasterTile, mode: &ChannelMode, stage: Stage) -> Result<RasterTile> {
    match mode {
        ChannelMode::Rgb => tile.select(&BandName::RGB),
        ChannelMode::RgbNir => tile.select(&BandName::ALL),
        ChannelMode::RgbGenNir {
            generator,
            nir_source_at_train,
        } => {
            if stage == Stage::Train && *nir_source_at_train == NirSource::Real {
                return tile.select(&BandName::ALL);
            }
            let rgb = tile.select(&BandName::RGB)?;
            let nir = predict_nir_tile(&generator.model, &rgb)?;
            rgb.with_band(BandName::Nir, nir)
        }
    }
}

fn prepare(samples: &[Sample], mode: &ChannelMode, stage: Stage) -> Result<Vec<Sample>> {
    samples
        .iter()
        .map(|s| {
            Ok(Sample {
                tile: model_input(&s.tile, mode, stage)?,
                mask: s.mask.clone(),
            })
        })
        .collect()
}

struct SegTrainer<'a> {
    model: UNet,
    opt: Optimizer,
    bands: &'static [BandName],
    cfg: &'a TrainConfig,
    config: serde_json::Value,
    fingerprint: String,
}

impl Trainer for SegTrainer<'_> {
    fn step(&mut self, batch: &[&Sample], epoch: usize, step: usize, aug_seed: u64) -> Result<LossRecord> {
        let b = assemble_batch(batch, self.bands, None, true, &self.cfg.augment, aug_seed)?;
        let mask = b.mask.expect("mask requested");
        let mut g = Graph::new();
        let p = self.model.params.bind(&mut g);
        let xv = g.input(b.x);
        let logits = self.model.forward_logits(&mut g, &p, xv);
        let (loss, grad) = bce_with_logits_map(g.value(logits), &mask);
        g.backward(vec![(logits, grad)]);
        self.model.params.accumulate_grads(&g, &p);
        self.opt.step(&mut self.model.params);
        Ok(LossRecord {
            epoch,
            step,
            d_loss: None,
            g_adv: None,
            g_l1: None,
            g_total: loss,
        })
    }

    fn lr(&self) -> f64 {
        self.opt.lr()
    }

    fn set_lr(&mut self, lr: f64) {
        self.opt.set_lr(lr);
    }

    fn monitored(r: &LossRecord) -> f64 {
        r.g_total
    }

    fn snapshot(&self, epoch: usize, losses: &[LossRecord]) -> Checkpoint {
        Checkpoint {
            role: ModelRole::Segmenter,
            model: self.model.clone(),
            discriminator: None,
            input_bands: self.bands.to_vec(),
            config: self.config.clone(),
            epoch,
            losses: losses.to_vec(),
            manifest_fingerprint: self.fingerprint.clone(),
            parent_fingerprint: None,
        }
    }
}

pub fn train_segmentation(
    dataset: &DatasetManifest,
    mode: &ChannelMode,
    arch: &ArchSpec,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    let set = TrainingSet::from_manifest(dataset, Some(Split::Train))?;
    train_segmentation_on(&set, mode, arch, cfg)
}

/// Minimises per-pixel BCE between the sigmoid output and the forest mask.
pub fn train_segmentation_on(set: &TrainingSet, mode: &ChannelMode, arch: &ArchSpec, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    mode.validate()?;
    if arch.in_channels != mode.kind().channels() {
        return Err(Error::Config(format!(
            "{} mode needs {} input channels, architecture has {}",
            mode.kind().label(),
            mode.kind().channels(),
            arch.in_channels
        )));
    }
    arch.check_input_dims(cfg.tile_size, cfg.tile_size)?;
    if set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    set.require_masks()?;
    let prepared = TrainingSet {
        samples: prepare(&set.samples, mode, Stage::Train)?,
        fingerprint: set.fingerprint.clone(),
    };
    let model = build_segmenter(arch, derive_seed(&[cfg.seed, 20]))?;
    let mut t = SegTrainer {
        opt: Optimizer::new(cfg.optimizer.clone(), &model.params),
        model,
        bands: mode.bands(),
        cfg,
        config: serde_json::json!({ "train": cfg, "arch": arch, "channels": mode.describe() }),
        fingerprint: set.fingerprint.clone(),
    };
    let losses = run_training(&mut t, cfg, &prepared)?;
    Ok(t.snapshot(cfg.epochs, &losses))
}

/// Probabilities `>= 0.5` become forest.
pub fn threshold_mask(probs: &BandArray) -> Result<ForestMask> {
    let (h, w) = probs.dims();
    ForestMask::new(h, w, probs.values().iter().map(|&p| (p >= 0.5) as u8).collect())
}

fn check_segmenter(ckpt: &Checkpoint, mode: &ChannelMode) -> Result<()> {
    if ckpt.role != ModelRole::Segmenter {
        return Err(Error::InvalidArgument("checkpoint is not a segmenter".into()));
    }
    if ckpt.input_bands != mode.bands() {
        return Err(Error::InvalidArgument(format!(
            "segmenter consumes {:?}, mode {} supplies {:?}",
            ckpt.input_bands,
            mode.kind().label(),
            mode.bands()
        )));
    }
    Ok(())
}

pub fn predict_proba(ckpt: &Checkpoint, tile: &RasterTile, mode: &ChannelMode) -> Result<BandArray> {
    check_segmenter(ckpt, mode)?;
    let input = model_input(tile, mode, Stage::Eval)?;
    let out = ckpt.model.predict(&tile_tensor(&input))?;
    let (h, w) = tile.dims();
    BandArray::from_clamped(h, w, out.into_vec())
}

pub fn predict_mask(ckpt: &Checkpoint, tile: &RasterTile, mode: &ChannelMode) -> Result<ForestMask> {
    threshold_mask(&predict_proba(ckpt, tile, mode)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub counts: ConfusionCounts,
    pub scores: SegScoreReport,
}

impl GroupScore {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        GroupScore {
            counts,
            scores: seg_scores(&counts),
        }
    }
}

/// Per-domain scores, the pooled group and the mean over all present rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegEvaluation {
    pub domains: BTreeMap<String, GroupScore>,
    pub pooled: Option<GroupScore>,
    /// Unweighted mean of precision, recall and F1 over the domain rows and
    /// the pooled row.
    pub average: Option<SegScoreReport>,
}

impl SegEvaluation {
    /// Micro-averaging: counts are summed per group before scoring.
    pub fn from_counts(per_domain: &BTreeMap<String, ConfusionCounts>) -> Self {
        let domains: BTreeMap<String, GroupScore> = per_domain
            .iter()
            .map(|(d, c)| (d.clone(), GroupScore::from_counts(*c)))
            .collect();
        let pooled = (!domains.is_empty()).then(|| GroupScore::from_counts(per_domain.values().copied().sum()));
        let rows: Vec<SegScoreReport> = domains.values().chain(pooled.iter()).map(|g| g.scores).collect();
        let average = (!rows.is_empty()).then(|| {
            let n = rows.len() as f64;
            SegScoreReport {
                precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
                recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
                f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
            }
        });
        SegEvaluation { domains, pooled, average }
    }
}

pub fn evaluate_segmentation(ckpt: &Checkpoint, test: &DatasetManifest, mode: &ChannelMode) -> Result<SegEvaluation> {
    let set = TrainingSet::from_manifest(test, Some(Split::Test))?;
    evaluate_segmentation_on(ckpt, &set.samples, mode)
}

pub fn evaluate_segmentation_on(ckpt: &Checkpoint, samples: &[Sample], mode: &ChannelMode) -> Result<SegEvaluation> {
    let mut per_domain: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    for s in samples {
        let truth = s
            .mask
            .as_ref()
            .ok_or_else(|| Error::Config(format!("test tile {} has no mask", s.tile.tile_id)))?;
        let pred = predict_mask(ckpt, &s.tile, mode)?;
        *per_domain.entry(s.tile.domain.clone()).or_default() += confusion(&pred, truth)?;
    }
    Ok(SegEvaluation::from_counts(&per_domain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::train_regression_on;
    use crate::synth::{synth_tiles, DomainStyle, SceneSpec};
    use crate::tensor::Tensor;

    fn tiny_seg(ch: usize) -> ArchSpec {
        ArchSpec {
            depth: 2,
            base_filters: 4,
            stage_blocks: vec![1, 1],
            ..ArchSpec::seg_desk(ch)
        }
    }

    fn set(n: u64, style: DomainStyle) -> TrainingSet {
        let specs: Vec<SceneSpec> = (0..n).map(|s| SceneSpec::ambiguity(16, s)).collect();
        TrainingSet::from_samples(
            synth_tiles(&specs, &style, 16)
                .unwrap()
                .into_iter()
                .map(|(tile, mask)| Sample { tile, mask: Some(mask) })
                .collect(),
        )
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            steps_per_epoch: Some(4),
            batch_size: 2,
            tile_size: 16,
            ..TrainConfig::seg_desk()
        }
    }

    fn generator() -> Arc<Checkpoint> {
        let arch = ArchSpec {
            depth: 2,
            base_filters: 4,
            stage_blocks: vec![1, 1],
            ..ArchSpec::gen_desk()
        };
        Arc::new(train_regression_on(&set(4, DomainStyle::spotlike()), &arch, &cfg()).unwrap())
    }

    #[test]
    fn smoke_run_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let c = TrainConfig {
            run_dir: Some(dir.path().into()),
            ..cfg()
        };
        let ckpt = train_segmentation_on(&set(8, DomainStyle::spotlike()), &ChannelMode::Rgb, &tiny_seg(3), &c).unwrap();
        assert!(ckpt.losses.iter().all(|r| r.g_total.is_finite()));
        assert!(Checkpoint::run_path(dir.path(), "segmentation", 2).join("model.bin").exists());
    }

    #[test]
    fn channel_contracts() {
        let s = set(2, DomainStyle::spotlike());
        let err = train_segmentation_on(&s, &ChannelMode::Rgb, &tiny_seg(4), &cfg()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let ckpt = train_segmentation_on(&s, &ChannelMode::Rgb, &tiny_seg(3), &cfg()).unwrap();
        let four = Tensor::full([1, 4, 16, 16], 0.5f32);
        assert!(matches!(ckpt.model.predict(&four), Err(Error::Shape(_))));
        // a 3-channel model cannot be driven in a 4-band mode
        assert!(matches!(
            predict_mask(&ckpt, &s.samples[0].tile, &ChannelMode::RgbNir),
            Err(Error::InvalidArgument(_))
        ));
        let mut no_mask = s.clone();
        no_mask.samples[0].mask = None;
        assert!(matches!(
            train_segmentation_on(&no_mask, &ChannelMode::Rgb, &tiny_seg(3), &cfg()),
            Err(Error::Config(_))
        ));
        let rgb_only = s.samples[0].tile.select(&BandName::RGB).unwrap();
        let nir_model = train_segmentation_on(&s, &ChannelMode::RgbNir, &tiny_seg(4), &cfg()).unwrap();
        assert!(matches!(
            predict_mask(&nir_model, &rgb_only, &ChannelMode::RgbNir),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn threshold_examples() {
        for (p, want) in [(0.9f32, 1u8), (0.1, 0), (0.5, 1)] {
            let m = threshold_mask(&BandArray::filled(3, 3, p).unwrap()).unwrap();
            assert!(m.values().iter().all(|&v| v == want), "{p}");
        }
    }

    #[test]
    fn pooled_scores_use_summed_counts() {
        // domain a: tp 8, fp 2, fn 2 -> f1 0.8; domain b: perfect
        let mut per = BTreeMap::new();
        per.insert("a".to_string(), ConfusionCounts { tp: 8, fp: 2, fn_: 2, tn: 88 });
        per.insert("b".to_string(), ConfusionCounts { tp: 2, fp: 0, fn_: 0, tn: 98 });
        let e = SegEvaluation::from_counts(&per);
        assert!((e.domains["a"].scores.f1 - 0.8).abs() < 1e-12);
        assert_eq!(e.domains["b"].scores.f1, 1.0);
        let pooled = e.pooled.unwrap().scores.f1;
        // 2*10 / (2*10 + 2 + 2)
        assert!((pooled - 20.0 / 24.0).abs() < 1e-12);
        assert!((pooled - 0.9).abs() > 1e-3);
        let avg = e.average.unwrap().f1;
        assert!((avg - (0.8 + 1.0 + 20.0 / 24.0) / 3.0).abs() < 1e-12);
        let empty = SegEvaluation::from_counts(&BTreeMap::new());
        assert!(empty.pooled.is_none() && empty.average.is_none());
    }

    #[test]
    fn perfect_single_tile() {
        // a segmenter is not needed to check the group plumbing: score the
        // truth against itself
        let s = &set(1, DomainStyle::spotlike()).samples[0];
        let m = s.mask.as_ref().unwrap();
        let mut per = BTreeMap::new();
        per.insert(s.tile.domain.clone(), confusion(m, m).unwrap());
        let e = SegEvaluation::from_counts(&per);
        assert_eq!(e.domains["spotlike"].scores.f1, 1.0);
        assert_eq!(e.pooled.unwrap().scores.f1, 1.0);
    }

    #[test]
    fn generated_mode_equals_precomputed_substitution() {
        let g = generator();
        let train = set(4, DomainStyle::spotlike());
        let test = set(3, DomainStyle::planetlike());
        let mode = ChannelMode::generated(g.clone());
        let ckpt = train_segmentation_on(&train, &mode, &tiny_seg(4), &cfg()).unwrap();
        let end_to_end = evaluate_segmentation_on(&ckpt, &test.samples, &mode).unwrap();
        let substituted: Vec<Sample> = test
            .samples
            .iter()
            .map(|s| {
                let nir = predict_nir_tile(&g.model, &s.tile).unwrap();
                Sample {
                    tile: s.tile.clone().with_band(BandName::Nir, nir).unwrap(),
                    mask: s.mask.clone(),
                }
            })
            .collect();
        let mut nir_ckpt = ckpt.clone();
        nir_ckpt.input_bands = BandName::ALL.to_vec();
        let direct = evaluate_segmentation_on(&nir_ckpt, &substituted, &ChannelMode::RgbNir).unwrap();
        assert_eq!(end_to_end, direct);
        // deterministic and idempotent
        let t = &test.samples[0].tile;
        assert_eq!(predict_mask(&ckpt, t, &mode).unwrap(), predict_mask(&ckpt, t, &mode).unwrap());
    }

    #[test]
    fn nir_source_changes_training_input() {
        let g = generator();
        let train = set(4, DomainStyle::spotlike());
        let real = train_segmentation_on(&train, &ChannelMode::generated(g.clone()), &tiny_seg(4), &cfg()).unwrap();
        let gen_mode = ChannelMode::RgbGenNir {
            generator: g,
            nir_source_at_train: NirSource::Generated,
        };
        let generated = train_segmentation_on(&train, &gen_mode, &tiny_seg(4), &cfg()).unwrap();
        assert_ne!(real.losses, generated.losses);
        let seg = train_segmentation_on(&train, &ChannelMode::RgbNir, &tiny_seg(4), &cfg()).unwrap();
        assert_eq!(real.losses, seg.losses);
        let bad = ChannelMode::generated(Arc::new(seg));
        assert!(matches!(
            train_segmentation_on(&train, &bad, &tiny_seg(4), &cfg()),
            Err(Error::Config(_))
        ));
    }
}
