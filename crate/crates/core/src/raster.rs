//! Multiband reflectance rasters: normalization, tiling, stitching,
//! manifest-backed storage and deterministic train/test splitting.
//!
//! On disk a dataset is a `manifest.json` plus one 16-bit grayscale PNG per
//! band and an optional 8-bit mask PNG (0 / 255) per record. Paths in the
//! manifest are relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default divisor for 16-bit band files.
pub const DEFAULT_DIVISOR: u32 = 65535;

/// A single reflectance band, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BandArray {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl BandArray {
    /// Fails unless the grid is non-empty, sized `height * width` and every
    /// value is finite and in [0, 1].
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!("band must be at least 1x1, got {height}x{width}")));
        }
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "band of {height}x{width} needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::InvalidArgument(format!("band value {bad} outside [0, 1]")));
        }
        Ok(BandArray { height, width, values })
    }

    /// Clamps every value into [0, 1]; NaN maps to 0.
    pub fn from_clamped(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        let values = values
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(height, width, values)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    /// Copies a `height` x `width` window starting at `origin`.
    pub fn crop(&self, origin: (usize, usize), height: usize, width: usize) -> Result<Self> {
        let (r0, c0) = origin;
        if r0 + height > self.height || c0 + width > self.width {
            return Err(Error::InvalidArgument(format!(
                "window {height}x{width} at {origin:?} exceeds band {}x{}",
                self.height, self.width
            )));
        }
        let mut values = Vec::with_capacity(height * width);
        for r in r0..r0 + height {
            values.extend_from_slice(&self.values[r * self.width + c0..r * self.width + c0 + width]);
        }
        Ok(BandArray { height, width, values })
    }

    /// Inverse of [`normalize_band`] up to clamping: `round(v * divisor)`.
    pub fn quantize(&self, divisor: u32) -> Vec<u16> {
        self.values
            .iter()
            .map(|&v| (v as f64 * divisor as f64).round().clamp(0.0, u16::MAX as f64) as u16)
            .collect()
    }
}

/// Scales raw counts into reflectance: `clamp(raw / divisor, 0, 1)`.
///
/// The quotient is computed in `f64` and rounded once to `f32`.
pub fn normalize_band(height: usize, width: usize, raw: &[u32], divisor: f64) -> Result<BandArray> {
    if !(divisor > 0.0 && divisor.is_finite()) {
        return Err(Error::Config(format!("normalization divisor must be positive, got {divisor}")));
    }
    if raw.len() != height * width {
        return Err(Error::Shape(format!(
            "raw grid of {height}x{width} needs {} values, got {}",
            height * width,
            raw.len()
        )));
    }
    let values = raw
        .iter()
        .map(|&v| (v as f64 / divisor).clamp(0.0, 1.0) as f32)
        .collect();
    BandArray::new(height, width, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandName {
    R,
    G,
    B,
    #[serde(rename = "NIR")]
    Nir,
}

impl BandName {
    pub const RGB: [BandName; 3] = [BandName::R, BandName::G, BandName::B];
    pub const ALL: [BandName; 4] = [BandName::R, BandName::G, BandName::B, BandName::Nir];

    pub fn as_str(&self) -> &'static str {
        match self {
            BandName::R => "R",
            BandName::G => "G",
            BandName::B => "B",
            BandName::Nir => "NIR",
        }
    }

    pub fn is_visible(&self) -> bool {
        !matches!(self, BandName::Nir)
    }
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" => Ok(BandName::R),
            "G" => Ok(BandName::G),
            "B" => Ok(BandName::B),
            "NIR" => Ok(BandName::Nir),
            other => Err(Error::InvalidArgument(format!("unknown band `{other}`"))),
        }
    }
}

/// Co-registered bands of one scene or tile.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterTile {
    bands: Vec<BandArray>,
    band_names: Vec<BandName>,
    pub tile_id: String,
    pub domain: String,
    pub origin: (usize, usize),
}

impl RasterTile {
    pub fn new(
        bands: Vec<BandArray>,
        band_names: Vec<BandName>,
        tile_id: impl Into<String>,
        domain: impl Into<String>,
        origin: (usize, usize),
    ) -> Result<Self> {
        if bands.is_empty() || bands.len() != band_names.len() {
            return Err(Error::InvalidArgument(format!(
                "{} bands with {} names",
                bands.len(),
                band_names.len()
            )));
        }
        let dims = bands[0].dims();
        if bands.iter().any(|b| b.dims() != dims) {
            return Err(Error::Shape("all bands of a tile must share the same dimensions".into()));
        }
        for (i, n) in band_names.iter().enumerate() {
            if band_names[..i].contains(n) {
                return Err(Error::InvalidArgument(format!("duplicate band {n}")));
            }
        }
        Ok(RasterTile {
            bands,
            band_names,
            tile_id: tile_id.into(),
            domain: domain.into(),
            origin,
        })
    }

    pub fn height(&self) -> usize {
        self.bands[0].height()
    }

    pub fn width(&self) -> usize {
        self.bands[0].width()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.bands[0].dims()
    }

    pub fn bands(&self) -> &[BandArray] {
        &self.bands
    }

    pub fn band_names(&self) -> &[BandName] {
        &self.band_names
    }

    pub fn band(&self, name: BandName) -> Option<&BandArray> {
        self.band_names.iter().position(|n| *n == name).map(|i| &self.bands[i])
    }

    pub fn require(&self, name: BandName) -> Result<&BandArray> {
        self.band(name)
            .ok_or_else(|| Error::InvalidArgument(format!("tile `{}` has no {name} band", self.tile_id)))
    }

    pub fn has_rgb(&self) -> bool {
        BandName::RGB.iter().all(|b| self.band(*b).is_some())
    }

    /// New tile holding only the named bands, in the given order.
    pub fn select(&self, names: &[BandName]) -> Result<RasterTile> {
        let bands = names.iter().map(|n| self.require(*n).cloned()).collect::<Result<Vec<_>>>()?;
        RasterTile::new(bands, names.to_vec(), self.tile_id.clone(), self.domain.clone(), self.origin)
    }

    /// Replaces (or appends) a band.
    pub fn with_band(mut self, name: BandName, band: BandArray) -> Result<RasterTile> {
        if band.dims() != self.dims() {
            return Err(Error::Shape(format!(
                "band {name} is {:?}, tile is {:?}",
                band.dims(),
                self.dims()
            )));
        }
        match self.band_names.iter().position(|n| *n == name) {
            Some(i) => self.bands[i] = band,
            None => {
                self.bands.push(band);
                self.band_names.push(name);
            }
        }
        Ok(self)
    }

    pub fn crop(&self, origin: (usize, usize), height: usize, width: usize, tile_id: String) -> Result<RasterTile> {
        let bands = self
            .bands
            .iter()
            .map(|b| b.crop(origin, height, width))
            .collect::<Result<Vec<_>>>()?;
        RasterTile::new(
            bands,
            self.band_names.clone(),
            tile_id,
            self.domain.clone(),
            (self.origin.0 + origin.0, self.origin.1 + origin.1),
        )
    }
}

/// Binary forest mask: 1 = forest, 0 = other.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForestMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl ForestMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::Shape(format!(
                "mask of {height}x{width} cannot hold {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| **v > 1) {
            return Err(Error::InvalidArgument(format!("mask value {v} is not binary")));
        }
        Ok(ForestMask { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn forest_pixels(&self) -> usize {
        self.values.iter().filter(|v| **v == 1).count()
    }

    pub fn crop(&self, origin: (usize, usize), height: usize, width: usize) -> Result<ForestMask> {
        let (r0, c0) = origin;
        if r0 + height > self.height || c0 + width > self.width {
            return Err(Error::InvalidArgument(format!(
                "window {height}x{width} at {origin:?} exceeds mask {}x{}",
                self.height, self.width
            )));
        }
        let mut values = Vec::with_capacity(height * width);
        for r in r0..r0 + height {
            values.extend_from_slice(&self.values[r * self.width + c0..r * self.width + c0 + width]);
        }
        Ok(ForestMask { height, width, values })
    }
}

/// Window offsets along one axis: a regular grid with the last window
/// shifted inward so it ends exactly at the boundary.
pub fn window_offsets(extent: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos + size < extent {
        out.push(pos);
        pos += stride;
    }
    let last = extent - size;
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

fn check_tiling(height: usize, width: usize, size: usize, stride: usize) -> Result<()> {
    if size == 0 || stride == 0 {
        return Err(Error::InvalidArgument("tile size and stride must be positive".into()));
    }
    if size > height.min(width) {
        return Err(Error::InvalidArgument(format!(
            "tile size {size} exceeds scene dimensions {height}x{width}"
        )));
    }
    Ok(())
}

/// Origins (row, col) of the tiling of a `height` x `width` scene, row-major.
pub fn tile_origins(height: usize, width: usize, size: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    check_tiling(height, width, size, stride)?;
    let rows = window_offsets(height, size, stride);
    let cols = window_offsets(width, size, stride);
    Ok(rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect())
}

/// Cuts a scene into `size` x `size` tiles. Tile origins are relative to
/// the scene; edge windows are anchored to the boundary, never padded.
pub fn tile_scene(scene: &RasterTile, size: usize, stride: usize) -> Result<Vec<RasterTile>> {
    tile_origins(scene.height(), scene.width(), size, stride)?
        .into_iter()
        .map(|(r, c)| {
            let mut t = scene.crop((r, c), size, size, format!("{}_r{r:04}_c{c:04}", scene.tile_id))?;
            t.origin = (r, c);
            Ok(t)
        })
        .collect()
}

/// Overlap resolution for [`stitch_tiles`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Blend {
    /// Later tiles overwrite earlier ones.
    Overwrite,
    /// Overlapping contributions are averaged.
    AverageOverlap,
    /// Overlapping contributions are averaged with tent weights that fall
    /// from the tile centre towards its edges.
    Feather,
}

/// Tent weight of position `i` in a tile of length `n`: 1 at the edges,
/// largest in the middle.
fn tent(i: usize, n: usize) -> f64 {
    (i + 1).min(n - i) as f64
}

/// Reassembles a `height` x `width` band from tiles placed at their origins.
pub fn stitch_tiles(
    tiles: &[(BandArray, (usize, usize))],
    height: usize,
    width: usize,
    blend: Blend,
) -> Result<BandArray> {
    let mut sum = vec![0.0f64; height * width];
    let mut weight = vec![0.0f64; height * width];
    let mut count = vec![0u32; height * width];
    for (band, (r0, c0)) in tiles {
        if r0 + band.height() > height || c0 + band.width() > width {
            return Err(Error::InvalidArgument(format!(
                "tile {}x{} at ({r0}, {c0}) exceeds scene {height}x{width}",
                band.height(),
                band.width()
            )));
        }
        for r in 0..band.height() {
            for c in 0..band.width() {
                let i = (r0 + r) * width + c0 + c;
                let v = band.get(r, c) as f64;
                match blend {
                    Blend::Overwrite => sum[i] = v,
                    Blend::AverageOverlap => sum[i] += v,
                    Blend::Feather => {
                        let k = tent(r, band.height()) * tent(c, band.width());
                        sum[i] += k * v;
                        weight[i] += k;
                    }
                }
                count[i] += 1;
            }
        }
    }
    let uncovered: Vec<usize> = (0..height * width).filter(|&i| count[i] == 0).collect();
    if !uncovered.is_empty() {
        return Err(Error::Coverage {
            uncovered: uncovered.len(),
            gaps: uncovered.iter().take(16).map(|&i| (i / width, i % width)).collect(),
        });
    }
    let values = (0..height * width)
        .map(|i| match blend {
            Blend::Overwrite => sum[i] as f32,
            Blend::AverageOverlap => (sum[i] / count[i] as f64) as f32,
            Blend::Feather => (sum[i] / weight[i]) as f32,
        })
        .collect();
    BandArray::from_clamped(height, width, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub tile_id: String,
    pub bands: BTreeMap<BandName, String>,
    pub domain: String,
    pub split: Split,
    pub mask: Option<String>,
}

impl ManifestRecord {
    pub fn has_mask(&self) -> bool {
        self.mask.is_some()
    }

    /// Records sharing a territory key cover the same ground in different
    /// domains; they are always assigned to the same split. The key is the
    /// part of `tile_id` before an `@` (the whole id when absent).
    pub fn territory(&self) -> &str {
        self.tile_id.split('@').next().unwrap_or(&self.tile_id)
    }
}

/// Index of a stored dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tile_size: usize,
    pub divisor_per_band: BTreeMap<BandName, u32>,
    pub records: Vec<ManifestRecord>,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

/// A record read back into memory.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedTile {
    pub tile: RasterTile,
    pub mask: Option<ForestMask>,
    pub split: Split,
}

impl DatasetManifest {
    pub fn new(tile_size: usize, root: impl Into<PathBuf>) -> Self {
        DatasetManifest {
            tile_size,
            divisor_per_band: BandName::ALL.iter().map(|b| (*b, DEFAULT_DIVISOR)).collect(),
            records: Vec::new(),
            root: root.into(),
        }
    }

    /// Reads `manifest.json` (or the given file) and checks every path exists.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::format(&file, e))?;
        m.root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::Config("manifest tile_size must be positive".into()));
        }
        if let Some((b, d)) = self.divisor_per_band.iter().find(|(_, d)| **d == 0) {
            return Err(Error::Config(format!("divisor for band {b} must be positive, got {d}")));
        }
        for r in &self.records {
            for p in r.bands.values().chain(r.mask.iter()) {
                let full = self.root.join(p);
                if !full.is_file() {
                    return Err(Error::Config(format!(
                        "record `{}` references missing file {}",
                        r.tile_id,
                        full.display()
                    )));
                }
            }
            if let Some(b) = r.bands.keys().find(|b| !self.divisor_per_band.contains_key(b)) {
                return Err(Error::Config(format!("no divisor declared for band {b}")));
            }
        }
        Ok(())
    }

    /// Writes the manifest as pretty JSON to `root/manifest.json`.
    pub fn save(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let path = self.root.join("manifest.json");
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// SHA-256 over the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        hex_digest(self.to_json().as_bytes())
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    pub fn domains(&self) -> Vec<String> {
        let mut d: Vec<String> = self.records.iter().map(|r| r.domain.clone()).collect();
        d.sort();
        d.dedup();
        d
    }

    pub fn filter(&self, keep: impl Fn(&ManifestRecord) -> bool) -> DatasetManifest {
        DatasetManifest {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn load_record(&self, record: &ManifestRecord) -> Result<LoadedTile> {
        let mut bands = Vec::new();
        let mut names = Vec::new();
        for name in BandName::ALL {
            let Some(rel) = record.bands.get(&name) else { continue };
            let path = self.root.join(rel);
            let (h, w, raw) = read_png16(&path)?;
            let divisor = self.divisor_per_band.get(&name).copied().unwrap_or(DEFAULT_DIVISOR);
            let raw: Vec<u32> = raw.into_iter().map(u32::from).collect();
            bands.push(normalize_band(h, w, &raw, divisor as f64)?);
            names.push(name);
        }
        let tile = RasterTile::new(bands, names, record.tile_id.clone(), record.domain.clone(), (0, 0))?;
        let mask = match &record.mask {
            Some(rel) => {
                let m = read_mask_png(&self.root.join(rel))?;
                if m.dims() != tile.dims() {
                    return Err(Error::Shape(format!("mask of `{}` does not match its bands", record.tile_id)));
                }
                Some(m)
            }
            None => None,
        };
        Ok(LoadedTile {
            tile,
            mask,
            split: record.split,
        })
    }

    /// Loads all records, or only those of one split.
    pub fn load_tiles(&self, split: Option<Split>) -> Result<Vec<LoadedTile>> {
        self.records
            .iter()
            .filter(|r| split.is_none_or(|s| r.split == s))
            .map(|r| self.load_record(r))
            .collect()
    }

    /// Writes a tile's bands (and mask) under `root` and appends a record.
    pub fn write_record(&mut self, tile: &RasterTile, mask: Option<&ForestMask>, split: Split) -> Result<()> {
        let stem = sanitize(&tile.tile_id);
        let mut bands = BTreeMap::new();
        for (name, band) in tile.band_names().iter().zip(tile.bands()) {
            let rel = format!("bands/{stem}_{name}.png");
            let divisor = self.divisor_per_band.get(name).copied().unwrap_or(DEFAULT_DIVISOR);
            write_png16(&self.root.join(&rel), band.height(), band.width(), &band.quantize(divisor))?;
            bands.insert(*name, rel);
        }
        let mask_rel = match mask {
            Some(m) => {
                let rel = format!("masks/{stem}_mask.png");
                write_mask_png(&self.root.join(&rel), m)?;
                Some(rel)
            }
            None => None,
        };
        self.records.push(ManifestRecord {
            tile_id: tile.tile_id.clone(),
            bands,
            domain: tile.domain.clone(),
            split,
            mask: mask_rel,
        });
        Ok(())
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Number of training records for a fraction: `round(fraction * n)`, halves rounding up.
fn rounded_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 0.5).floor().min(n as f64) as usize
}

/// Assigns records to train/test. Territories (see
/// [`ManifestRecord::territory`]) are shuffled with the seed and the first
/// `round(train_fraction * territories)` become train; with one record per
/// territory this is `round(train_fraction * records)`, so a single record
/// always goes to train for fractions >= 0.5.
pub fn split_dataset(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if manifest.records.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty manifest".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut territories: Vec<&str> = manifest.records.iter().map(ManifestRecord::territory).collect();
    territories.sort_unstable();
    territories.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    territories.shuffle(&mut rng);
    let n_train = rounded_count(train_fraction, territories.len());
    let train: std::collections::HashSet<&str> = territories[..n_train].iter().copied().collect();
    let mut out = manifest.clone();
    for r in &mut out.records {
        r.split = if train.contains(r.territory()) { Split::Train } else { Split::Test };
    }
    Ok(out)
}

/// Keeps `round(fraction * n_train)` (at least one) training records chosen
/// by a seeded shuffle; test records are untouched. For a fixed seed the
/// kept set for a smaller fraction is a subset of the set for a larger one.
pub fn subsample_train(manifest: &DatasetManifest, fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let train_idx: Vec<usize> = (0..manifest.records.len())
        .filter(|&i| manifest.records[i].split == Split::Train)
        .collect();
    if train_idx.is_empty() {
        return Err(Error::InvalidArgument("manifest has no training records".into()));
    }
    let keep: std::collections::HashSet<usize> = subsample_indices(train_idx.len(), fraction, seed)?
        .into_iter()
        .map(|i| train_idx[i])
        .collect();
    let mut out = manifest.clone();
    out.records = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(i, r)| r.split == Split::Test || keep.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    Ok(out)
}

/// Sorted indices of the `round(fraction * n)` (at least one) items kept
/// from `0..n` by a seeded shuffle. Smaller fractions keep subsets of what
/// larger fractions keep for the same seed.
pub fn subsample_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let keep_n = rounded_count(fraction, n).max(1).min(n);
    let mut keep = order[..keep_n].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

pub fn write_png16(path: &Path, height: usize, width: usize, values: &[u16]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| Error::format(path, e))?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(|e| Error::format(path, e))?;
    writer.finish().map_err(|e| Error::format(path, e))
}

fn read_png(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

/// Reads a 16-bit single-channel PNG into (height, width, values).
pub fn read_png16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let (info, buf) = read_png(path)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::format(
            path,
            format!("expected 16-bit grayscale, found {:?} {:?}", info.color_type, info.bit_depth),
        ));
    }
    let values = buf.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Ok((info.height as usize, info.width as usize, values))
}

pub fn write_mask_png(path: &Path, mask: &ForestMask) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), mask.width() as u32, mask.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::format(path, e))?;
    let bytes: Vec<u8> = mask.values().iter().map(|&v| v * 255).collect();
    writer.write_image_data(&bytes).map_err(|e| Error::format(path, e))?;
    writer.finish().map_err(|e| Error::format(path, e))
}

/// Reads an 8-bit mask PNG; 0 maps to 0 and 255 to 1, anything else is rejected.
pub fn read_mask_png(path: &Path) -> Result<ForestMask> {
    let (info, buf) = read_png(path)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "mask must be 8-bit grayscale"));
    }
    let values = buf
        .iter()
        .map(|&v| match v {
            0 => Ok(0),
            255 => Ok(1),
            other => Err(Error::format(path, format!("mask value {other} is neither 0 nor 255"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    ForestMask::new(info.height as usize, info.width as usize, values)
}
