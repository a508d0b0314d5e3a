//! Shared training plumbing: run configuration, in-memory datasets, seeded
//! batching, loss logs and checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{augment_pair, AugmentPolicy};
use crate::autograd::ParamStore;
use crate::error::{Error, Result};
use crate::nets::{ArchSpec, DiscSpec, Discriminator, UNet};
use crate::optim::{OptimizerConfig, PlateauSchedule};
use crate::raster::{hex_digest, BandName, DatasetManifest, ForestMask, RasterTile, Split};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub name: String,
    pub optimizer: OptimizerConfig,
    pub schedule: Option<PlateauSchedule>,
    pub epochs: usize,
    /// `None` means one pass over the training set per epoch.
    pub steps_per_epoch: Option<usize>,
    pub batch_size: usize,
    pub tile_size: usize,
    pub seed: u64,
    pub augment: AugmentPolicy,
    /// Write a checkpoint every this many epochs; 0 writes only the last.
    pub checkpoint_every: usize,
    /// Parent of `runs/<name>/`; nothing is written when unset.
    pub run_dir: Option<PathBuf>,
    /// Learning-rate multiplier applied by [`crate::gan::fine_tune`].
    pub fine_tune_lr_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::gan_desk()
    }
}

impl TrainConfig {
    pub fn gan_desk() -> Self {
        TrainConfig {
            name: "pix2pix".into(),
            optimizer: OptimizerConfig::gan_adam(2e-4),
            schedule: None,
            epochs: 10,
            steps_per_epoch: None,
            batch_size: 8,
            tile_size: 64,
            seed: 0,
            augment: AugmentPolicy::default(),
            checkpoint_every: 0,
            run_dir: None,
            fine_tune_lr_factor: 0.1,
        }
    }

    pub fn gan_full() -> Self {
        TrainConfig {
            epochs: 600,
            steps_per_epoch: Some(100),
            batch_size: 30,
            tile_size: 256,
            ..Self::gan_desk()
        }
    }

    pub fn regression_desk() -> Self {
        TrainConfig {
            name: "regression".into(),
            optimizer: OptimizerConfig::rmsprop(1e-3),
            schedule: Some(PlateauSchedule::default()),
            epochs: 20,
            ..Self::gan_desk()
        }
    }

    pub fn regression_full() -> Self {
        TrainConfig {
            steps_per_epoch: Some(100),
            batch_size: 30,
            tile_size: 256,
            ..Self::regression_desk()
        }
    }

    pub fn seg_desk() -> Self {
        TrainConfig {
            name: "segmentation".into(),
            optimizer: OptimizerConfig::Adam {
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-7,
            },
            schedule: Some(PlateauSchedule::default()),
            epochs: 10,
            ..Self::gan_desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "gan-desk" => Ok(Self::gan_desk()),
            "gan-full" => Ok(Self::gan_full()),
            "regression-desk" => Ok(Self::regression_desk()),
            "regression-full" => Ok(Self::regression_full()),
            "seg-desk" => Ok(Self::seg_desk()),
            other => Err(Error::Config(format!("unknown training preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_counts(false)
    }

    /// `allow_empty` admits zero epochs or steps (used when fine-tuning).
    pub(crate) fn validate_counts(&self, allow_empty: bool) -> Result<()> {
        self.optimizer.validate()?;
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        self.augment.validate()?;
        let empty = self.epochs == 0 || self.steps_per_epoch == Some(0);
        if (empty && !allow_empty) || self.batch_size == 0 || self.tile_size == 0 {
            return Err(Error::Config(format!(
                "epochs, steps per epoch, batch size and tile size must be positive (got {}, {:?}, {}, {})",
                self.epochs, self.steps_per_epoch, self.batch_size, self.tile_size
            )));
        }
        if !(self.fine_tune_lr_factor > 0.0) {
            return Err(Error::Config("fine-tune lr factor must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_for(&self, n_samples: usize) -> usize {
        self.steps_per_epoch.unwrap_or_else(|| n_samples.div_ceil(self.batch_size))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanLossSpec {
    /// Weight of the reconstruction term.
    pub lambda: f64,
}

impl Default for GanLossSpec {
    fn default() -> Self {
        GanLossSpec { lambda: 100.0 }
    }
}

impl GanLossSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// One optimisation step. Columns that do not apply to a model are `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub d_loss: Option<f64>,
    pub g_adv: Option<f64>,
    pub g_l1: Option<f64>,
    pub g_total: f64,
}

impl LossRecord {
    pub fn is_finite(&self) -> bool {
        [self.d_loss, self.g_adv, self.g_l1, Some(self.g_total)]
            .iter()
            .flatten()
            .all(|v| v.is_finite())
    }
}

pub const LOSS_COLUMNS: [&str; 6] = ["epoch", "step", "d_loss", "g_adv", "g_l1", "g_total"];

pub fn losses_to_csv(records: &[LossRecord]) -> String {
    let mut s = LOSS_COLUMNS.join(",");
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e}",
            r.epoch,
            r.step,
            opt(r.d_loss),
            opt(r.g_adv),
            opt(r.g_l1),
            r.g_total
        );
    }
    s
}

pub fn losses_from_csv(text: &str, path: &Path) -> Result<Vec<LossRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOSS_COLUMNS.join(",").as_str()) {
        return Err(Error::format(path, "unexpected loss header"));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| Error::format(path, e))
        }
    };
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::format(path, format!("bad loss row `{line}`")));
            }
            Ok(LossRecord {
                epoch: f[0].parse().map_err(|e| Error::format(path, e))?,
                step: f[1].parse().map_err(|e| Error::format(path, e))?,
                d_loss: num(f[2])?,
                g_adv: num(f[3])?,
                g_l1: num(f[4])?,
                g_total: num(f[5])?.ok_or_else(|| Error::format(path, "missing g_total"))?,
            })
        })
        .collect()
}

/// Mean of one column over an epoch.
pub fn epoch_mean(records: &[LossRecord], epoch: usize, column: impl Fn(&LossRecord) -> f64) -> Option<f64> {
    let v: Vec<f64> = records.iter().filter(|r| r.epoch == epoch).map(column).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Generator,
    Regression,
    Segmenter,
}

/// Trained model state plus everything needed to reproduce or resume it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub role: ModelRole,
    pub model: UNet,
    pub discriminator: Option<Discriminator>,
    /// Bands fed to the model, in channel order.
    pub input_bands: Vec<BandName>,
    /// Full run configuration as JSON.
    pub config: serde_json::Value,
    pub epoch: usize,
    pub losses: Vec<LossRecord>,
    pub manifest_fingerprint: String,
    pub parent_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    role: ModelRole,
    arch: ArchSpec,
    disc: Option<DiscSpec>,
    input_bands: Vec<BandName>,
    epoch: usize,
    manifest_fingerprint: String,
    parent_fingerprint: Option<String>,
    fingerprint: String,
}

const PARAM_MAGIC: &[u8; 8] = b"SSPARAM1";

fn encode_params(store: &ParamStore) -> Vec<u8> {
    let mut out = PARAM_MAGIC.to_vec();
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.names().iter().zip(store.values()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Overwrites `store` from bytes written by [`encode_params`]; names and
/// shapes must match exactly.
fn decode_params(bytes: &[u8], store: &mut ParamStore, path: &Path) -> Result<()> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::format(path, "truncated parameter file"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != PARAM_MAGIC {
        return Err(Error::format(path, "not a parameter file"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let count = u32_at(take(4)?);
    if count != store.len() {
        return Err(Error::Config(format!(
            "{}: {count} tensors but the architecture has {}",
            path.display(),
            store.len()
        )));
    }
    for i in 0..count {
        let len = u32_at(take(4)?);
        let name = String::from_utf8(take(len)?.to_vec()).map_err(|e| Error::format(path, e))?;
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        }
        if name != store.names()[i] || shape != store.values()[i].shape() {
            return Err(Error::Config(format!(
                "{}: tensor `{name}` {shape:?} does not match `{}` {:?}",
                path.display(),
                store.names()[i],
                store.values()[i].shape()
            )));
        }
        let n: usize = shape.iter().product();
        let raw = take(4 * n)?;
        let dst = store.values_mut()[i].data_mut();
        for (d, c) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(c.try_into().expect("4 bytes"));
        }
    }
    if pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes in parameter file"));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

impl Checkpoint {
    /// SHA-256 over parameters, configuration, epoch and lineage.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(encode_params(&self.model.params));
        if let Some(d) = &self.discriminator {
            h.update(encode_params(&d.params));
        }
        h.update(self.config.to_string());
        h.update(self.epoch.to_le_bytes());
        h.update(self.manifest_fingerprint.as_bytes());
        h.update(self.parent_fingerprint.as_deref().unwrap_or("").as_bytes());
        hex_digest(&h.finalize())
    }

    /// Writes `model.bin`, optional `discriminator.bin`, `config.snapshot`,
    /// `losses.csv` and `checkpoint.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("model.bin"), &encode_params(&self.model.params))?;
        if let Some(d) = &self.discriminator {
            write_file(&dir.join("discriminator.bin"), &encode_params(&d.params))?;
        }
        let snapshot = serde_json::to_string_pretty(&self.config).expect("json value serializes");
        write_file(&dir.join("config.snapshot"), snapshot.as_bytes())?;
        write_file(&dir.join("losses.csv"), losses_to_csv(&self.losses).as_bytes())?;
        let meta = CheckpointMeta {
            role: self.role,
            arch: self.model.spec().clone(),
            disc: self.discriminator.as_ref().map(|d| d.spec().clone()),
            input_bands: self.input_bands.clone(),
            epoch: self.epoch,
            manifest_fingerprint: self.manifest_fingerprint.clone(),
            parent_fingerprint: self.parent_fingerprint.clone(),
            fingerprint: self.fingerprint(),
        };
        let meta = serde_json::to_string_pretty(&meta).expect("meta serializes");
        write_file(&dir.join("checkpoint.json"), meta.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Checkpoint> {
        let meta_path = dir.join("checkpoint.json");
        let meta: CheckpointMeta =
            serde_json::from_slice(&read_file(&meta_path)?).map_err(|e| Error::format(&meta_path, e))?;
        let mut model = UNet::new(meta.arch, 0)?;
        let p = dir.join("model.bin");
        decode_params(&read_file(&p)?, &mut model.params, &p)?;
        let discriminator = match meta.disc {
            Some(spec) => {
                let mut d = Discriminator::new(spec, 0)?;
                let p = dir.join("discriminator.bin");
                decode_params(&read_file(&p)?, &mut d.params, &p)?;
                Some(d)
            }
            None => None,
        };
        let cp = dir.join("config.snapshot");
        let config = serde_json::from_slice(&read_file(&cp)?).map_err(|e| Error::format(&cp, e))?;
        let lp = dir.join("losses.csv");
        let text = String::from_utf8(read_file(&lp)?).map_err(|e| Error::format(&lp, e))?;
        let ckpt = Checkpoint {
            role: meta.role,
            model,
            discriminator,
            input_bands: meta.input_bands,
            config,
            epoch: meta.epoch,
            losses: losses_from_csv(&text, &lp)?,
            manifest_fingerprint: meta.manifest_fingerprint,
            parent_fingerprint: meta.parent_fingerprint,
        };
        if ckpt.fingerprint() != meta.fingerprint {
            return Err(Error::format(&meta_path, "fingerprint does not match stored parameters"));
        }
        Ok(ckpt)
    }

    /// Directory for this checkpoint under a run root: `runs/<name>/epoch_<k>`.
    pub fn run_path(run_dir: &Path, name: &str, epoch: usize) -> PathBuf {
        run_dir.join("runs").join(name).join(format!("epoch_{epoch}"))
    }
}

/// One training or evaluation example held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub tile: RasterTile,
    pub mask: Option<ForestMask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<Sample>,
    pub fingerprint: String,
}

impl TrainingSet {
    pub fn from_manifest(manifest: &DatasetManifest, split: Option<Split>) -> Result<Self> {
        let samples = manifest
            .load_tiles(split)?
            .into_iter()
            .map(|t| Sample {
                tile: t.tile,
                mask: t.mask,
            })
            .collect();
        Ok(TrainingSet {
            samples,
            fingerprint: manifest.fingerprint(),
        })
    }

    /// Fingerprint is a digest of tile ids, band values and masks.
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        let mut h = Sha256::new();
        for s in &samples {
            h.update(s.tile.tile_id.as_bytes());
            for b in s.tile.bands() {
                for v in b.values() {
                    h.update(v.to_le_bytes());
                }
            }
            if let Some(m) = &s.mask {
                h.update(m.values());
            }
        }
        let fingerprint = hex_digest(&h.finalize());
        TrainingSet { samples, fingerprint }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn require_bands(&self, bands: &[BandName]) -> Result<()> {
        for s in &self.samples {
            for b in bands {
                if s.tile.band(*b).is_none() {
                    return Err(Error::Config(format!("tile {} lacks band {b}", s.tile.tile_id)));
                }
            }
        }
        Ok(())
    }

    pub fn require_masks(&self) -> Result<()> {
        match self.samples.iter().find(|s| s.mask.is_none()) {
            Some(s) => Err(Error::Config(format!("tile {} has no forest mask", s.tile.tile_id))),
            None => Ok(()),
        }
    }
}

/// Deterministic mixing of several integers into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut x = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        x ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(x << 6).wrapping_add(x >> 2);
        // splitmix64 finaliser
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

/// Epoch-wise shuffled sampling that wraps into a fresh permutation when
/// the current one runs out.
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchSampler { order, cursor: 0, rng }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size && !self.order.is_empty() {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Network inputs and optional targets for one batch.
pub struct Batch {
    pub x: Tensor,
    /// Target band, one channel.
    pub y: Option<Tensor>,
    /// Forest mask as 0/1 floats, one channel.
    pub mask: Option<Tensor>,
}

/// Stacks the selected samples into tensors, augmenting each with a seed
/// derived from `aug_seed` and its slot in the batch.
pub fn assemble_batch(
    samples: &[&Sample],
    inputs: &[BandName],
    target: Option<BandName>,
    with_mask: bool,
    policy: &AugmentPolicy,
    aug_seed: u64,
) -> Result<Batch> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ms = Vec::new();
    for (slot, s) in samples.iter().enumerate() {
        let tile = s.tile.select(inputs)?;
        let tgt = match target {
            Some(b) => Some(s.tile.require(b)?),
            None => None,
        };
        let mask = if with_mask {
            Some(s.mask.as_ref().ok_or_else(|| {
                Error::Config(format!("tile {} has no forest mask", s.tile.tile_id))
            })?)
        } else {
            None
        };
        let aug = augment_pair(&tile, tgt, mask, policy, derive_seed(&[aug_seed, slot as u64]))?;
        xs.push(tile_tensor(&aug.tile));
        if let Some(t) = aug.target {
            let (h, w) = t.dims();
            ys.push(Tensor::from_vec([1, 1, h, w], t.into_values()));
        }
        if let Some(m) = aug.mask {
            let (h, w) = m.dims();
            ms.push(Tensor::from_vec([1, 1, h, w], m.values().iter().map(|&v| v as f32).collect()));
        }
    }
    Ok(Batch {
        x: Tensor::stack(&xs),
        y: (!ys.is_empty()).then(|| Tensor::stack(&ys)),
        mask: (!ms.is_empty()).then(|| Tensor::stack(&ms)),
    })
}

/// (1, C, H, W) tensor of a tile's bands in their stored order.
pub fn tile_tensor(tile: &RasterTile) -> Tensor {
    let (h, w) = tile.dims();
    let mut data = Vec::with_capacity(tile.bands().len() * h * w);
    for b in tile.bands() {
        data.extend_from_slice(b.values());
    }
    Tensor::from_vec([1, tile.bands().len(), h, w], data)
}

/// Applies the plateau schedule at an epoch boundary. Returns the new lr
/// when it changes.
pub(crate) fn schedule_step(schedule: &mut Option<PlateauSchedule>, monitored: f64, lr: f64) -> Option<f64> {
    let s = schedule.as_mut()?;
    let next = s.observe(monitored, lr)?;
    log::info!("plateau: lr {lr:e} -> {next:e}");
    Some(next)
}

pub(crate) fn should_checkpoint(cfg: &TrainConfig, epoch: usize) -> bool {
    cfg.run_dir.is_some() && (epoch == cfg.epochs || (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0))
}
