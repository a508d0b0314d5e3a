//! RGB to NIR translation: pix2pix training, the plain regression baseline,
//! fine-tuning and full-scene generation.

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::losses::{bce_with_logits, l1};
use crate::metrics::{BandErrorAccumulator, BandErrorReport};
use crate::nets::{build_discriminator, build_generator, ArchSpec, DiscSpec, Discriminator, HeadActivation, UNet};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::raster::{stitch_tiles, tile_scene, BandArray, BandName, Blend, DatasetManifest, RasterTile, Split};
use crate::tensor::Tensor;
use crate::train::{
    assemble_batch, derive_seed, epoch_mean, schedule_step, should_checkpoint, tile_tensor, BatchSampler, Checkpoint,
    GanLossSpec, LossRecord, ModelRole, Sample, TrainConfig, TrainingSet,
};

/// A step-wise trainer driven by [`run_training`].
pub(crate) trait Trainer {
    fn step(&mut self, batch: &[&Sample], epoch: usize, step: usize, aug_seed: u64) -> Result<LossRecord>;
    fn lr(&self) -> f64;
    fn set_lr(&mut self, lr: f64);
    /// Loss watched by the plateau schedule.
    fn monitored(record: &LossRecord) -> f64;
    fn snapshot(&self, epoch: usize, losses: &[LossRecord]) -> Checkpoint;
}

/// Runs `cfg.epochs` epochs, logging every step, applying the schedule at
/// epoch ends and writing checkpoints per cadence. Returns the loss log.
pub(crate) fn run_training<T: Trainer>(trainer: &mut T, cfg: &TrainConfig, set: &TrainingSet) -> Result<Vec<LossRecord>> {
    let steps = cfg.steps_for(set.len());
    let mut sampler = BatchSampler::new(set.len(), derive_seed(&[cfg.seed, 1]));
    let mut schedule = cfg.schedule.clone();
    let mut losses = Vec::with_capacity(cfg.epochs * steps);
    for epoch in 1..=cfg.epochs {
        for step in 0..steps {
            let idx = sampler.next_batch(cfg.batch_size);
            let batch: Vec<&Sample> = idx.iter().map(|&i| &set.samples[i]).collect();
            let rec = trainer.step(&batch, epoch, step, derive_seed(&[cfg.seed, 2, epoch as u64, step as u64]))?;
            losses.push(rec);
            if !rec.is_finite() {
                let checkpoint = match &cfg.run_dir {
                    Some(dir) => {
                        let path = dir.join("runs").join(&cfg.name).join(format!("diagnostic_epoch_{epoch}_step_{step}"));
                        trainer.snapshot(epoch, &losses).save(&path)?;
                        Some(path)
                    }
                    None => None,
                };
                log::error!("non-finite loss at epoch {epoch} step {step}: {rec:?}");
                return Err(Error::NonFiniteLoss { epoch, step, checkpoint });
            }
        }
        if let Some(mean) = epoch_mean(&losses, epoch, T::monitored) {
            log::info!("{} epoch {epoch}/{}: monitored loss {mean:.5}", cfg.name, cfg.epochs);
            if let Some(lr) = schedule_step(&mut schedule, mean, trainer.lr()) {
                trainer.set_lr(lr);
            }
        }
        if should_checkpoint(cfg, epoch) {
            let dir = cfg.run_dir.as_ref().expect("checked by should_checkpoint");
            trainer.snapshot(epoch, &losses).save(&Checkpoint::run_path(dir, &cfg.name, epoch))?;
        }
    }
    Ok(losses)
}

/// Generator/discriminator pair with their optimizers.
pub struct Pix2Pix {
    pub gen: UNet,
    pub disc: Discriminator,
    pub loss: GanLossSpec,
    opt_g: Optimizer,
    opt_d: Optimizer,
}

impl Pix2Pix {
    pub fn new(gen: UNet, disc: Discriminator, loss: GanLossSpec, optimizer: &OptimizerConfig) -> Result<Self> {
        loss.validate()?;
        optimizer.validate()?;
        let want = gen.spec().in_channels + gen.spec().out_channels;
        if disc.spec().in_channels != want {
            return Err(Error::Config(format!(
                "discriminator takes {} channels, generator pair has {want}",
                disc.spec().in_channels
            )));
        }
        Ok(Pix2Pix {
            opt_g: Optimizer::new(optimizer.clone(), &gen.params),
            opt_d: Optimizer::new(optimizer.clone(), &disc.params),
            gen,
            disc,
            loss,
        })
    }

    /// One discriminator update on real `(x, y)` and fake `(x, G(x))`
    /// pairs. Generator parameters are untouched. Returns the summed BCE.
    pub fn d_step(&mut self, x: &Tensor, y: &Tensor) -> Result<f64> {
        let fake = self.gen.predict(x)?;
        let real_in = Tensor::concat_channels(x, y);
        let fake_in = Tensor::concat_channels(x, &fake);
        let b = x.batch();
        let s = real_in.shape();
        let mut both = real_in.into_vec();
        both.extend_from_slice(fake_in.data());
        let mut g = Graph::new();
        let pd = self.disc.params.bind(&mut g);
        let input = g.input(Tensor::from_vec([2 * b, s[1], s[2], s[3]], both));
        let logits = self.disc.forward(&mut g, &pd, input);
        let ls = g.value(logits).shape();
        let per = ls[1] * ls[2] * ls[3];
        let data = g.value(logits).data();
        let real_logits = Tensor::from_vec([b, ls[1], ls[2], ls[3]], data[..b * per].to_vec());
        let fake_logits = Tensor::from_vec([b, ls[1], ls[2], ls[3]], data[b * per..].to_vec());
        let (lr, gr) = bce_with_logits(&real_logits, 1.0);
        let (lf, gf) = bce_with_logits(&fake_logits, 0.0);
        let mut seed = gr.into_vec();
        seed.extend_from_slice(gf.data());
        g.backward(vec![(logits, Tensor::from_vec(ls, seed))]);
        self.disc.params.accumulate_grads(&g, &pd);
        self.opt_d.step(&mut self.disc.params);
        Ok(lr + lf)
    }

    /// One generator update against the current discriminator, which is
    /// held constant. Returns `(adversarial, reconstruction, total)`.
    pub fn g_step(&mut self, x: &Tensor, y: &Tensor) -> Result<(f64, f64, f64)> {
        self.gen.check_input(x.shape())?;
        let mut g = Graph::new();
        let pg = self.gen.params.bind(&mut g);
        let pd = self.disc.params.bind_constant(&mut g);
        let xv = g.input(x.clone());
        let fake = self.gen.forward(&mut g, &pg, xv);
        let pair = g.concat(xv, fake);
        let logits = self.disc.forward(&mut g, &pd, pair);
        let (adv, g_adv) = bce_with_logits(g.value(logits), 1.0);
        let (rec, mut g_rec) = l1(g.value(fake), y);
        let lambda = self.loss.lambda;
        let mut seeds = vec![(logits, g_adv)];
        if lambda > 0.0 {
            g_rec.scale(lambda as f32);
            seeds.push((fake, g_rec));
        }
        g.backward(seeds);
        self.gen.params.accumulate_grads(&g, &pg);
        self.opt_g.step(&mut self.gen.params);
        Ok((adv, rec, adv + lambda * rec))
    }

    pub fn lr(&self) -> f64 {
        self.opt_g.lr()
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.opt_g.set_lr(lr);
        self.opt_d.set_lr(lr);
    }
}

struct GanTrainer<'a> {
    model: Pix2Pix,
    cfg: &'a TrainConfig,
    config: serde_json::Value,
    fingerprint: String,
    parent: Option<String>,
}

impl Trainer for GanTrainer<'_> {
    fn step(&mut self, batch: &[&Sample], epoch: usize, step: usize, aug_seed: u64) -> Result<LossRecord> {
        let b = assemble_batch(batch, &BandName::RGB, Some(BandName::Nir), false, &self.cfg.augment, aug_seed)?;
        let y = b.y.expect("target requested");
        let d = self.model.d_step(&b.x, &y)?;
        let (adv, rec, total) = self.model.g_step(&b.x, &y)?;
        Ok(LossRecord {
            epoch,
            step,
            d_loss: Some(d),
            g_adv: Some(adv),
            g_l1: Some(rec),
            g_total: total,
        })
    }

    fn lr(&self) -> f64 {
        self.model.lr()
    }

    fn set_lr(&mut self, lr: f64) {
        self.model.set_lr(lr);
    }

    fn monitored(r: &LossRecord) -> f64 {
        r.g_l1.unwrap_or(r.g_total)
    }

    fn snapshot(&self, epoch: usize, losses: &[LossRecord]) -> Checkpoint {
        Checkpoint {
            role: ModelRole::Generator,
            model: self.model.gen.clone(),
            discriminator: Some(self.model.disc.clone()),
            input_bands: BandName::RGB.to_vec(),
            config: self.config.clone(),
            epoch,
            losses: losses.to_vec(),
            manifest_fingerprint: self.fingerprint.clone(),
            parent_fingerprint: self.parent.clone(),
        }
    }
}

fn require_paired(set: &TrainingSet) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    set.require_bands(&BandName::ALL)
}

fn check_generator(gen: &ArchSpec, cfg: &TrainConfig) -> Result<()> {
    gen.validate()?;
    if gen.in_channels != 3 || gen.out_channels != 1 {
        return Err(Error::Config("NIR generator maps 3 RGB channels to 1 NIR channel".into()));
    }
    gen.check_input_dims(cfg.tile_size, cfg.tile_size)
}

pub fn train_pix2pix(
    dataset: &DatasetManifest,
    gen: &ArchSpec,
    disc: &DiscSpec,
    loss: &GanLossSpec,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    let set = TrainingSet::from_manifest(dataset, Some(Split::Train))?;
    train_pix2pix_on(&set, gen, disc, loss, cfg)
}

pub fn train_pix2pix_on(
    set: &TrainingSet,
    gen: &ArchSpec,
    disc: &DiscSpec,
    loss: &GanLossSpec,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    cfg.validate()?;
    check_generator(gen, cfg)?;
    disc.validate()?;
    require_paired(set)?;
    let model = Pix2Pix::new(
        build_generator(gen, derive_seed(&[cfg.seed, 10]))?,
        build_discriminator(disc, derive_seed(&[cfg.seed, 11]))?,
        *loss,
        &cfg.optimizer,
    )?;
    let config = serde_json::json!({ "train": cfg, "arch": gen, "disc": disc, "loss": loss });
    let mut t = GanTrainer {
        model,
        cfg,
        config,
        fingerprint: set.fingerprint.clone(),
        parent: None,
    };
    let losses = run_training(&mut t, cfg, set)?;
    Ok(t.snapshot(cfg.epochs, &losses))
}

struct RegressionTrainer<'a> {
    model: UNet,
    opt: Optimizer,
    cfg: &'a TrainConfig,
    config: serde_json::Value,
    fingerprint: String,
    parent: Option<String>,
}

impl Trainer for RegressionTrainer<'_> {
    fn step(&mut self, batch: &[&Sample], epoch: usize, step: usize, aug_seed: u64) -> Result<LossRecord> {
        let b = assemble_batch(batch, &BandName::RGB, Some(BandName::Nir), false, &self.cfg.augment, aug_seed)?;
        let y = b.y.expect("target requested");
        let mut g = Graph::new();
        let p = self.model.params.bind(&mut g);
        let xv = g.input(b.x);
        let out = self.model.forward(&mut g, &p, xv);
        let (loss, grad) = l1(g.value(out), &y);
        g.backward(vec![(out, grad)]);
        self.model.params.accumulate_grads(&g, &p);
        self.opt.step(&mut self.model.params);
        Ok(LossRecord {
            epoch,
            step,
            d_loss: None,
            g_adv: None,
            g_l1: Some(loss),
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
            role: ModelRole::Regression,
            model: self.model.clone(),
            discriminator: None,
            input_bands: BandName::RGB.to_vec(),
            config: self.config.clone(),
            epoch,
            losses: losses.to_vec(),
            manifest_fingerprint: self.fingerprint.clone(),
            parent_fingerprint: self.parent.clone(),
        }
    }
}

/// Trains the U-Net directly on MAE. `gen` normally has a linear head.
pub fn train_regression(dataset: &DatasetManifest, gen: &ArchSpec, cfg: &TrainConfig) -> Result<Checkpoint> {
    let set = TrainingSet::from_manifest(dataset, Some(Split::Train))?;
    train_regression_on(&set, gen, cfg)
}

pub fn train_regression_on(set: &TrainingSet, gen: &ArchSpec, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    check_generator(gen, cfg)?;
    require_paired(set)?;
    let model = build_generator(gen, derive_seed(&[cfg.seed, 10]))?;
    let mut t = RegressionTrainer {
        opt: Optimizer::new(cfg.optimizer.clone(), &model.params),
        model,
        cfg,
        config: serde_json::json!({ "train": cfg, "arch": gen }),
        fingerprint: set.fingerprint.clone(),
        parent: None,
    };
    let losses = run_training(&mut t, cfg, set)?;
    Ok(t.snapshot(cfg.epochs, &losses))
}

/// Continues training a generator or regression checkpoint on a new
/// (typically small, unlabeled) dataset at `cfg.fine_tune_lr_factor` times
/// the configured learning rate.
pub fn fine_tune(ckpt: &Checkpoint, dataset: &DatasetManifest, arch: &ArchSpec, cfg: &TrainConfig) -> Result<Checkpoint> {
    let set = TrainingSet::from_manifest(dataset, Some(Split::Train))?;
    fine_tune_on(ckpt, &set, arch, cfg)
}

pub fn fine_tune_on(ckpt: &Checkpoint, set: &TrainingSet, arch: &ArchSpec, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate_counts(true)?;
    if ckpt.model.spec() != arch {
        return Err(Error::Config(format!(
            "architecture mismatch: checkpoint has {:?}, requested {:?}",
            ckpt.model.spec(),
            arch
        )));
    }
    check_generator(arch, cfg)?;
    require_paired(set)?;
    let lr = cfg.optimizer.lr() * cfg.fine_tune_lr_factor;
    let optimizer = cfg.optimizer.with_lr(lr);
    let parent = Some(ckpt.fingerprint());
    let config = serde_json::json!({ "train": cfg, "arch": arch, "parent_config": ckpt.config, "lr": lr });
    match (ckpt.role, &ckpt.discriminator) {
        (ModelRole::Generator, Some(disc)) => {
            let loss = ckpt
                .config
                .get("loss")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .unwrap_or_default();
            let mut t = GanTrainer {
                model: Pix2Pix::new(ckpt.model.clone(), disc.clone(), loss, &optimizer)?,
                cfg,
                config,
                fingerprint: set.fingerprint.clone(),
                parent,
            };
            let losses = run_training(&mut t, cfg, set)?;
            Ok(t.snapshot(cfg.epochs, &losses))
        }
        (ModelRole::Regression, _) | (ModelRole::Generator, None) => {
            let mut t = RegressionTrainer {
                opt: Optimizer::new(optimizer, &ckpt.model.params),
                model: ckpt.model.clone(),
                cfg,
                config,
                fingerprint: set.fingerprint.clone(),
                parent,
            };
            let losses = run_training(&mut t, cfg, set)?;
            let mut out = t.snapshot(cfg.epochs, &losses);
            out.role = ckpt.role;
            Ok(out)
        }
        (ModelRole::Segmenter, _) => Err(Error::Config("fine-tuning applies to NIR generators only".into())),
    }
}

fn nir_model(ckpt: &Checkpoint) -> Result<&UNet> {
    match ckpt.role {
        ModelRole::Generator | ModelRole::Regression => Ok(&ckpt.model),
        ModelRole::Segmenter => Err(Error::InvalidArgument("checkpoint is a segmenter, not an NIR model".into())),
    }
}

/// NIR prediction for one tile whose size suits the network.
pub fn predict_nir_tile(model: &UNet, tile: &RasterTile) -> Result<BandArray> {
    let rgb = tile.select(&BandName::RGB)?;
    let out = model.predict(&tile_tensor(&rgb))?;
    let (h, w) = tile.dims();
    let mut v = out.into_vec();
    if model.spec().head_activation == HeadActivation::Linear {
        v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    }
    BandArray::from_clamped(h, w, v)
}

/// Tiles the scene, predicts each tile and blends overlaps by a
/// tent-weighted average ([`Blend::Feather`]), which keeps window borders
/// free of seams.
pub fn generate_nir(ckpt: &Checkpoint, scene: &RasterTile, tile_size: usize, stride: usize) -> Result<BandArray> {
    let parts = window_predictions(ckpt, scene, tile_size, stride)?;
    let (h, w) = scene.dims();
    stitch_tiles(&parts, h, w, Blend::Feather)
}

fn window_predictions(
    ckpt: &Checkpoint,
    scene: &RasterTile,
    tile_size: usize,
    stride: usize,
) -> Result<Vec<(BandArray, (usize, usize))>> {
    let model = nir_model(ckpt)?;
    let rgb = scene.select(&BandName::RGB)?;
    tile_scene(&rgb, tile_size, stride)?
        .into_iter()
        .map(|t| Ok((predict_nir_tile(model, &t)?, t.origin)))
        .collect()
}

/// Discontinuity that blending adds at window borders of
/// [`generate_nir`]. For every neighbour pair straddling a border, the
/// stitched difference is compared with the difference predicted by the
/// single window holding that pair furthest from its edges; the per-line
/// mean of that excess is maximised over border lines. Returned with the
/// median per-line mean neighbour difference of the stitched band over
/// non-border lines. Needs overlapping windows (`stride < tile_size`).
pub fn seam_discontinuity(ckpt: &Checkpoint, scene: &RasterTile, tile_size: usize, stride: usize) -> Result<(f64, f64)> {
    if stride >= tile_size {
        return Err(Error::InvalidArgument(format!(
            "seam discontinuity needs overlapping windows, got stride {stride} for tile {tile_size}"
        )));
    }
    let parts = window_predictions(ckpt, scene, tile_size, stride)?;
    let (h, w) = scene.dims();
    let stitched = stitch_tiles(&parts, h, w, Blend::Feather)?;
    let (_, median) = seam_statistic(&stitched, &window_borders(h, tile_size, stride), &window_borders(w, tile_size, stride));
    // margin of pixel `a..=b` (along one axis) inside a window starting at `o`
    let margin = |o: usize, a: usize, b: usize| -> Option<usize> {
        (o <= a && b < o + tile_size).then(|| (a - o).min(o + tile_size - 1 - b))
    };
    let best = |r: (usize, usize), c: (usize, usize)| {
        let (band, (r0, c0)) = parts
            .iter()
            .filter_map(|p| Some((margin(p.1 .0, r.0, r.1)?.min(margin(p.1 .1, c.0, c.1)?), p)))
            .max_by_key(|(m, _)| *m)
            .map(|(_, p)| p)
            .expect("overlapping windows cover every neighbour pair");
        (band, *r0, *c0)
    };
    let mut worst = 0.0f64;
    for c in window_borders(w, tile_size, stride) {
        let mut sum = 0.0;
        for r in 0..h {
            let (band, r0, c0) = best((r, r), (c - 1, c));
            let reference = band.get(r - r0, c - c0) as f64 - band.get(r - r0, c - 1 - c0) as f64;
            sum += (stitched.get(r, c) as f64 - stitched.get(r, c - 1) as f64 - reference).abs();
        }
        worst = worst.max(sum / h as f64);
    }
    for r in window_borders(h, tile_size, stride) {
        let mut sum = 0.0;
        for c in 0..w {
            let (band, r0, c0) = best((r - 1, r), (c, c));
            let reference = band.get(r - r0, c - c0) as f64 - band.get(r - 1 - r0, c - c0) as f64;
            sum += (stitched.get(r, c) as f64 - stitched.get(r - 1, c) as f64 - reference).abs();
        }
        worst = worst.max(sum / w as f64);
    }
    Ok((worst, median))
}

/// Pooled NIR errors of the model over every sample's NIR band.
pub fn evaluate_nir(ckpt: &Checkpoint, samples: &[Sample]) -> Result<BandErrorReport> {
    let model = nir_model(ckpt)?;
    let mut acc = BandErrorAccumulator::default();
    for s in samples {
        let truth = s.tile.require(BandName::Nir)?;
        let pred = predict_nir_tile(model, &s.tile)?;
        acc.push(truth.values(), pred.values())?;
    }
    acc.report()
}

/// Seam check statistic for a stitched band: the largest mean absolute
/// neighbour difference across any tile border line, and the median of the
/// same per-line statistic over all other lines. Lines are full rows or
/// columns of neighbour pairs; `borders` lists the row/column offsets at
/// which a window starts or ends.
pub fn seam_statistic(band: &BandArray, row_borders: &[usize], col_borders: &[usize]) -> (f64, f64) {
    let (h, w) = band.dims();
    let v = band.values();
    let mut seam: Vec<f64> = Vec::new();
    let mut inner: Vec<f64> = Vec::new();
    // pair (c-1, c) crosses a border at column c
    for c in 1..w {
        let d = (0..h).map(|r| (v[r * w + c] - v[r * w + c - 1]).abs() as f64).sum::<f64>() / h as f64;
        if col_borders.contains(&c) {
            seam.push(d);
        } else {
            inner.push(d);
        }
    }
    for r in 1..h {
        let d = (0..w).map(|c| (v[r * w + c] - v[(r - 1) * w + c]).abs() as f64).sum::<f64>() / w as f64;
        if row_borders.contains(&r) {
            seam.push(d);
        } else {
            inner.push(d);
        }
    }
    inner.sort_by(|a, b| a.total_cmp(b));
    let median = if inner.is_empty() {
        0.0
    } else if inner.len() % 2 == 1 {
        inner[inner.len() / 2]
    } else {
        (inner[inner.len() / 2 - 1] + inner[inner.len() / 2]) / 2.0
    };
    (seam.into_iter().fold(0.0, f64::max), median)
}

/// Window start and end offsets along one axis, for [`seam_statistic`].
pub fn window_borders(extent: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut b: Vec<usize> = crate::raster::window_offsets(extent, size, stride)
        .into_iter()
        .flat_map(|o| [o, o + size])
        .filter(|&o| o > 0 && o < extent)
        .collect();
    b.sort_unstable();
    b.dedup();
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::AugmentPolicy;
    use crate::synth::{synth_tiles, DomainStyle, SceneSpec};

    fn tiny_arch() -> ArchSpec {
        ArchSpec {
            depth: 2,
            base_filters: 4,
            stage_blocks: vec![1, 1],
            ..ArchSpec::gen_desk()
        }
    }

    fn tiny_set(n: usize, size: usize) -> TrainingSet {
        let specs: Vec<SceneSpec> = (0..n as u64).map(|s| SceneSpec::ambiguity(size, s)).collect();
        let samples = synth_tiles(&specs, &DomainStyle::spotlike(), size)
            .unwrap()
            .into_iter()
            .map(|(tile, mask)| Sample { tile, mask: Some(mask) })
            .collect();
        TrainingSet::from_samples(samples)
    }

    fn smoke_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            steps_per_epoch: Some(4),
            batch_size: 2,
            tile_size: 16,
            ..TrainConfig::gan_desk()
        }
    }

    #[test]
    fn pix2pix_smoke_writes_checkpoint_with_finite_losses() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            run_dir: Some(dir.path().to_path_buf()),
            ..smoke_cfg()
        };
        let set = tiny_set(8, 16);
        let ckpt = train_pix2pix_on(&set, &tiny_arch(), &DiscSpec::rf34(4), &GanLossSpec::default(), &cfg).unwrap();
        assert_eq!(ckpt.losses.len(), 8);
        assert!(ckpt.losses.iter().all(LossRecord::is_finite));
        let path = Checkpoint::run_path(dir.path(), "pix2pix", 2);
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ckpt);
        let csv = std::fs::read_to_string(path.join("losses.csv")).unwrap();
        assert!(csv.starts_with("epoch,step,d_loss,g_adv,g_l1,g_total"));
    }

    #[test]
    fn loss_decomposition_and_lambda_zero() {
        let set = tiny_set(4, 16);
        for lambda in [100.0, 0.0] {
            let loss = GanLossSpec { lambda };
            let ckpt = train_pix2pix_on(&set, &tiny_arch(), &DiscSpec::rf34(4), &loss, &smoke_cfg()).unwrap();
            for r in &ckpt.losses {
                let expect = r.g_adv.unwrap() + lambda * r.g_l1.unwrap();
                assert!((r.g_total - expect).abs() <= 1e-6, "{r:?}");
                assert!(r.g_l1.unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn lambda_zero_ignores_reconstruction_gradient() {
        // with lambda 0 the update must not depend on the target NIR values
        let gen = build_generator(&tiny_arch(), 1).unwrap();
        let disc = build_discriminator(&DiscSpec::rf34(4), 2).unwrap();
        let x = Tensor::full([1, 3, 16, 16], 0.4f32);
        let run = |y: f32| {
            let mut m = Pix2Pix::new(gen.clone(), disc.clone(), GanLossSpec { lambda: 0.0 }, &OptimizerConfig::gan_adam(1e-3)).unwrap();
            m.g_step(&x, &Tensor::full([1, 1, 16, 16], y)).unwrap();
            m.gen.params
        };
        assert!(run(0.1).bit_identical(&run(0.9)));
    }

    #[test]
    fn update_isolation() {
        let gen = build_generator(&tiny_arch(), 1).unwrap();
        let disc = build_discriminator(&DiscSpec::rf34(4), 2).unwrap();
        let mut m = Pix2Pix::new(gen, disc, GanLossSpec::default(), &OptimizerConfig::gan_adam(1e-3)).unwrap();
        let x = Tensor::full([2, 3, 16, 16], 0.3f32);
        let y = Tensor::full([2, 1, 16, 16], 0.7f32);
        let (g0, d0) = (m.gen.params.clone(), m.disc.params.clone());
        m.d_step(&x, &y).unwrap();
        assert!(m.gen.params.bit_identical(&g0));
        assert!(!m.disc.params.bit_identical(&d0));
        let d1 = m.disc.params.clone();
        m.g_step(&x, &y).unwrap();
        assert!(m.disc.params.bit_identical(&d1));
        assert!(!m.gen.params.bit_identical(&g0));
    }

    #[test]
    fn training_is_deterministic() {
        let set = tiny_set(4, 16);
        let a = train_pix2pix_on(&set, &tiny_arch(), &DiscSpec::rf34(4), &GanLossSpec::default(), &smoke_cfg()).unwrap();
        let b = train_pix2pix_on(&set, &tiny_arch(), &DiscSpec::rf34(4), &GanLossSpec::default(), &smoke_cfg()).unwrap();
        assert_eq!(a.losses, b.losses);
        assert!(a.model.params.bit_identical(&b.model.params));
    }

    #[test]
    fn dataset_without_nir_is_a_config_error() {
        let mut set = tiny_set(2, 16);
        for s in &mut set.samples {
            s.tile = s.tile.select(&BandName::RGB).unwrap();
        }
        let err = train_pix2pix_on(&set, &tiny_arch(), &DiscSpec::rf34(4), &GanLossSpec::default(), &smoke_cfg()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = train_regression_on(&set, &tiny_arch(), &smoke_cfg()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostic_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            optimizer: OptimizerConfig::gan_adam(1e30),
            run_dir: Some(dir.path().to_path_buf()),
            epochs: 50,
            ..smoke_cfg()
        };
        let set = tiny_set(4, 16);
        let err = train_regression_on(&set, &tiny_arch().with_head(HeadActivation::Linear), &cfg).unwrap_err();
        match err {
            Error::NonFiniteLoss { checkpoint: Some(p), .. } => assert!(p.join("checkpoint.json").exists()),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn constant_set(n: usize, size: usize, value: f32) -> TrainingSet {
        let mut set = tiny_set(n, size);
        for s in &mut set.samples {
            let nir = BandArray::filled(size, size, value).unwrap();
            s.tile = s.tile.clone().with_band(BandName::Nir, nir).unwrap();
        }
        set
    }

    #[test]
    fn regression_learns_constant_target() {
        let set = constant_set(8, 16, 0.6);
        let cfg = TrainConfig {
            epochs: 150,
            steps_per_epoch: Some(4),
            batch_size: 4,
            tile_size: 16,
            augment: AugmentPolicy::none(),
            ..TrainConfig::regression_desk()
        };
        let ckpt = train_regression_on(&set, &tiny_arch().with_head(HeadActivation::Linear), &cfg).unwrap();
        let held_out = constant_set(12, 16, 0.6);
        for s in &held_out.samples[8..] {
            let p = predict_nir_tile(&ckpt.model, &s.tile).unwrap();
            let mean = p.values().iter().map(|&v| v as f64).sum::<f64>() / p.values().len() as f64;
            assert!((mean - 0.6).abs() <= 0.02, "{mean}");
        }
        // non-increasing at schedule boundaries (patience-sized windows)
        let window = |k: usize| -> f64 {
            let e: Vec<f64> = (k * 5 + 1..=k * 5 + 5).map(|ep| epoch_mean(&ckpt.losses, ep, |r| r.g_total).unwrap()).collect();
            e.iter().sum::<f64>() / e.len() as f64
        };
        for k in 1..6 {
            assert!(window(k) <= window(k - 1) + 1e-3, "window {k}");
        }
    }

    #[test]
    fn fine_tune_zero_steps_is_identity_and_records_lineage() {
        let set = tiny_set(4, 16);
        let parent = train_pix2pix_on(&set, &tiny_arch(), &DiscSpec::rf34(4), &GanLossSpec::default(), &smoke_cfg()).unwrap();
        let cfg = TrainConfig { epochs: 0, ..smoke_cfg() };
        let child = fine_tune_on(&parent, &set, &tiny_arch(), &cfg).unwrap();
        assert!(child.model.params.bit_identical(&parent.model.params));
        assert_eq!(child.parent_fingerprint.as_deref(), Some(parent.fingerprint().as_str()));
        let moved = fine_tune_on(&parent, &set, &tiny_arch(), &TrainConfig { epochs: 1, ..smoke_cfg() }).unwrap();
        assert!(!moved.model.params.bit_identical(&parent.model.params));
        assert_eq!(moved.parent_fingerprint, child.parent_fingerprint);

        let other = ArchSpec { base_filters: 8, ..tiny_arch() };
        assert!(matches!(fine_tune_on(&parent, &set, &other, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn generate_nir_shapes_and_errors() {
        let set = tiny_set(2, 16);
        let ckpt = train_regression_on(&set, &tiny_arch(), &TrainConfig { epochs: 1, ..smoke_cfg() }).unwrap();
        let (scene, _) = crate::synth::generate_scene(&SceneSpec::ambiguity(48, 0), &DomainStyle::spotlike()).unwrap();
        let out = generate_nir(&ckpt, &scene, 16, 8).unwrap();
        assert_eq!(out.dims(), (48, 48));
        assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
        // a single window is a single forward pass
        let whole = scene.crop((0, 0), 16, 16, "w".into()).unwrap();
        let one = generate_nir(&ckpt, &whole, 16, 16).unwrap();
        assert_eq!(one, predict_nir_tile(&ckpt.model, &whole).unwrap());
        let no_rgb = scene.select(&[BandName::Nir]).unwrap();
        assert!(matches!(generate_nir(&ckpt, &no_rgb, 16, 8), Err(Error::InvalidArgument(_))));

        let (seam, median) = seam_discontinuity(&ckpt, &scene, 16, 8).unwrap();
        assert!(seam.is_finite() && seam >= 0.0 && median >= 0.0);
        assert!(matches!(seam_discontinuity(&ckpt, &scene, 16, 16), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn seam_statistic_examples() {
        // constant field: no seams, zero median
        let flat = BandArray::filled(8, 8, 0.5).unwrap();
        assert_eq!(seam_statistic(&flat, &[4], &[4]), (0.0, 0.0));
        // a step exactly on a border column is reported as the seam value
        let v: Vec<f32> = (0..64).map(|i| if i % 8 >= 4 { 0.6 } else { 0.5 }).collect();
        let step = BandArray::new(8, 8, v).unwrap();
        let (seam, median) = seam_statistic(&step, &[], &[4]);
        assert!((seam - 0.1).abs() < 1e-6 && median == 0.0);
        assert_eq!(window_borders(64, 32, 16), vec![16, 32, 48]);
    }
}
