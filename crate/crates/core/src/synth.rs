//! Deterministic paired RGB+NIR scene synthesis with forest masks.
//!
//! Forest and field areas come from thresholding a smooth latent field;
//! roofs and roads are axis-aligned rectangles. One shared texture field
//! modulates both the visible bands and NIR, so local texture and shape
//! carry information about NIR that per-pixel colour alone does not. The
//! `ambiguity` preset gives forest and roofs identical mean colour but NIR
//! means 0.5 apart.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{split_dataset, tile_scene, BandArray, BandName, DatasetManifest, ForestMask, RasterTile, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandClass {
    Forest,
    Field,
    Roof,
    Road,
}

impl LandClass {
    pub const ALL: [LandClass; 4] = [LandClass::Forest, LandClass::Field, LandClass::Roof, LandClass::Road];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Option<LandClass> {
        LandClass::ALL.get(i as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAppearance {
    pub rgb_mean: [f64; 3],
    pub nir_mean: f64,
    /// Amplitude of the shared texture field for this class.
    pub texture_scale: f64,
}

/// Per-band response of the visible bands to the texture field (NIR responds with 1).
pub const RGB_TEXTURE_RESPONSE: [f64; 3] = [0.6, 0.8, 0.6];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Forest and roofs share mean colour, differ by 0.5 in NIR.
    Ambiguity,
    /// Every class has its own colour.
    Plain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub size: usize,
    pub seed: u64,
    /// Indexed by [`LandClass::index`].
    pub palette: [ClassAppearance; 4],
    /// Target areal fractions, indexed by [`LandClass::index`].
    pub fractions: [f64; 4],
    /// Sensor noise on NIR; independent of the domain style.
    pub nir_noise_sigma: f64,
    pub preset: Option<Preset>,
}

impl SceneSpec {
    pub fn ambiguity(size: usize, seed: u64) -> Self {
        let shared = [0.2, 0.5, 0.2];
        SceneSpec {
            size,
            seed,
            palette: [
                ClassAppearance {
                    rgb_mean: shared,
                    nir_mean: 0.75,
                    texture_scale: 0.07,
                },
                ClassAppearance {
                    rgb_mean: [0.45, 0.55, 0.3],
                    nir_mean: 0.5,
                    texture_scale: 0.03,
                },
                ClassAppearance {
                    rgb_mean: shared,
                    nir_mean: 0.25,
                    texture_scale: 0.0,
                },
                ClassAppearance {
                    rgb_mean: [0.5, 0.5, 0.5],
                    nir_mean: 0.3,
                    texture_scale: 0.01,
                },
            ],
            fractions: [0.45, 0.3, 0.15, 0.1],
            nir_noise_sigma: 0.01,
            preset: Some(Preset::Ambiguity),
        }
    }

    pub fn plain(size: usize, seed: u64) -> Self {
        let mut s = Self::ambiguity(size, seed);
        s.palette[LandClass::Roof.index()].rgb_mean = [0.6, 0.35, 0.3];
        s.preset = Some(Preset::Plain);
        s
    }

    pub fn from_preset(preset: Preset, size: usize, seed: u64) -> Self {
        match preset {
            Preset::Ambiguity => Self::ambiguity(size, seed),
            Preset::Plain => Self::plain(size, seed),
        }
    }

    pub fn appearance(&self, class: LandClass) -> &ClassAppearance {
        &self.palette[class.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 8 {
            return Err(Error::Config(format!("scene size must be at least 8, got {}", self.size)));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("class fractions must be in [0,1] and sum to 1, got {sum}")));
        }
        let bad = |v: f64| !(0.0..=1.0).contains(&v);
        for c in &self.palette {
            if c.rgb_mean.iter().any(|v| bad(*v)) || bad(c.nir_mean) || c.texture_scale < 0.0 {
                return Err(Error::Config(format!("class appearance out of range: {c:?}")));
            }
        }
        if self.nir_noise_sigma < 0.0 {
            return Err(Error::Config("noise sigma must be non-negative".into()));
        }
        if self.preset == Some(Preset::Ambiguity) {
            let f = self.appearance(LandClass::Forest);
            let r = self.appearance(LandClass::Roof);
            if f.rgb_mean != r.rgb_mean || f.nir_mean - r.nir_mean < 0.4 {
                return Err(Error::Config(
                    "ambiguity preset needs identical forest/roof colour and an NIR gap of at least 0.4".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Sensor/processing look of one imagery source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStyle {
    pub name: String,
    pub rgb_offset: [f64; 3],
    pub rgb_gain: [f64; 3],
    pub noise_sigma: f64,
}

impl DomainStyle {
    pub fn neutral(name: impl Into<String>) -> Self {
        DomainStyle {
            name: name.into(),
            rgb_offset: [0.0; 3],
            rgb_gain: [1.0; 3],
            noise_sigma: 0.01,
        }
    }

    /// Close to the scene palette: unit gain, no offset, light noise.
    pub fn spotlike() -> Self {
        Self::neutral("spotlike")
    }

    /// Brighter, bluer, higher-contrast red and noisier than `spotlike`.
    pub fn planetlike() -> Self {
        DomainStyle {
            name: "planetlike".into(),
            rgb_offset: [0.06, -0.04, 0.1],
            rgb_gain: [1.25, 0.85, 1.15],
            noise_sigma: 0.02,
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "spotlike" => Ok(Self::spotlike()),
            "planetlike" => Ok(Self::planetlike()),
            other => Err(Error::Config(format!("unknown domain style `{other}`"))),
        }
    }

    pub fn same_parameters(&self, other: &DomainStyle) -> bool {
        self.rgb_offset == other.rgb_offset && self.rgb_gain == other.rgb_gain && self.noise_sigma == other.noise_sigma
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 || self.rgb_gain.iter().any(|g| *g < 0.0) {
            return Err(Error::Config(format!("invalid style `{}`", self.name)));
        }
        Ok(())
    }

    pub fn apply(&self, band: usize, value: f64) -> f64 {
        self.rgb_gain[band] * value + self.rgb_offset[band]
    }
}

/// Latent layers behind a generated scene, kept for oracles.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneLayers {
    /// Land class per pixel ([`LandClass::index`]).
    pub classes: Vec<u8>,
    /// Smooth field whose threshold separates forest from field.
    pub latent: Vec<f32>,
    /// Texture shared by all bands, zero-mean within each class.
    pub texture: Vec<f32>,
}

/// Separable box blur with clamped edges, applied `passes` times.
fn smooth(field: &mut [f64], size: usize, radius: usize, passes: usize) {
    let mut tmp = vec![0.0; field.len()];
    let norm = 1.0 / (2 * radius + 1) as f64;
    for _ in 0..passes {
        for r in 0..size {
            for c in 0..size {
                let mut acc = 0.0;
                for d in 0..=2 * radius {
                    let cc = (c + d).saturating_sub(radius).min(size - 1);
                    acc += field[r * size + cc];
                }
                tmp[r * size + c] = acc * norm;
            }
        }
        for r in 0..size {
            for c in 0..size {
                let mut acc = 0.0;
                for d in 0..=2 * radius {
                    let rr = (r + d).saturating_sub(radius).min(size - 1);
                    acc += tmp[rr * size + c];
                }
                field[r * size + c] = acc * norm;
            }
        }
    }
}

fn standardize(field: &mut [f64]) {
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    for v in field.iter_mut() {
        *v = (*v - mean) / sd;
    }
}

fn smooth_field(rng: &mut ChaCha8Rng, size: usize, radius: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut f: Vec<f64> = (0..size * size).map(|_| normal.sample(rng)).collect();
    smooth(&mut f, size, radius, 3);
    standardize(&mut f);
    f
}

/// Renders the scene and its latent layers. A pure function of `(spec, style)`:
/// geometry, texture and NIR noise depend only on `spec.seed`; the style
/// only changes the visible bands.
pub fn generate_scene_layers(spec: &SceneSpec, style: &DomainStyle) -> Result<(RasterTile, ForestMask, SceneLayers)> {
    spec.validate()?;
    style.validate()?;
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let latent = smooth_field(&mut rng, n, (n / 16).max(2));
    let fine = smooth_field(&mut rng, n, 1);
    let mut texture: Vec<f64> = latent.iter().zip(&fine).map(|(l, f)| l + 0.5 * f).collect();
    standardize(&mut texture);

    let mut classes = vec![LandClass::Field as u8; n * n];
    let [f_forest, f_field, f_roof, f_road] = spec.fractions;
    let natural = f_forest + f_field;
    if natural > 0.0 {
        let mut sorted = latent.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let share = f_forest / natural;
        let cut = ((1.0 - share) * (n * n) as f64).round() as usize;
        let threshold = if cut >= n * n { f64::INFINITY } else { sorted[cut] };
        for (c, l) in classes.iter_mut().zip(&latent) {
            if *l >= threshold {
                *c = LandClass::Forest as u8;
            }
        }
    } else {
        classes.fill(LandClass::Road as u8);
    }

    // roads: full-length horizontal or vertical strips
    let total = (n * n) as f64;
    let mut road_px = 0usize;
    let mut guard = 0;
    while (road_px as f64) < f_road * total && guard < 64 {
        guard += 1;
        let width = rng.random_range(2..=3.max(n / 32));
        let pos = rng.random_range(0..n - width);
        let horizontal = rng.random_bool(0.5);
        for a in pos..pos + width {
            for b in 0..n {
                let i = if horizontal { a * n + b } else { b * n + a };
                if classes[i] != LandClass::Road as u8 {
                    classes[i] = LandClass::Road as u8;
                    road_px += 1;
                }
            }
        }
    }
    // roofs: rectangles
    let _ = road_px;
    let mut roof_px = 0usize;
    let mut guard = 0;
    let (lo, hi) = (3.max(n / 24), 4.max(n / 6));
    let settlement_cap = {
        let mut sorted = latent.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted[(n * n) / 3]
    };
    while (roof_px as f64) < f_roof * total && guard < 4096 {
        guard += 1;
        let h = rng.random_range(lo..=hi).min(n);
        let w = rng.random_range(lo..=hi).min(n);
        let r0 = rng.random_range(0..=n - h);
        let c0 = rng.random_range(0..=n - w);
        // settlements sit in the low end of the latent field, away from forest
        if latent[(r0 + h / 2) * n + c0 + w / 2] > settlement_cap && guard < 2048 {
            continue;
        }
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                let i = r * n + c;
                if classes[i] != LandClass::Roof as u8 {
                    classes[i] = LandClass::Roof as u8;
                    roof_px += 1;
                }
            }
        }
    }

    // centre the texture within each class so class means stay at the palette
    let mut sums = [(0.0f64, 0usize); 4];
    for (c, t) in classes.iter().zip(&texture) {
        sums[*c as usize].0 += t;
        sums[*c as usize].1 += 1;
    }
    for (c, t) in classes.iter().zip(texture.iter_mut()) {
        let (s, k) = sums[*c as usize];
        *t -= s / k as f64;
    }

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let nir_noise: Vec<f64> = (0..n * n).map(|_| unit.sample(&mut rng)).collect();
    // visible-band noise comes from a stream keyed by the seed only, so two
    // styles with the same sigma see the same noise pattern
    let mut rgb_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0f_c010_u64);
    let rgb_noise: Vec<f64> = (0..3 * n * n).map(|_| unit.sample(&mut rgb_rng)).collect();

    let mut rgb = vec![vec![0.0f32; n * n]; 3];
    let mut nir = vec![0.0f32; n * n];
    for i in 0..n * n {
        let class = LandClass::from_index(classes[i]).expect("valid class");
        let app = spec.appearance(class);
        let tex = app.texture_scale * texture[i];
        for b in 0..3 {
            let base = app.rgb_mean[b] + RGB_TEXTURE_RESPONSE[b] * tex;
            let v = style.apply(b, base) + style.noise_sigma * rgb_noise[b * n * n + i];
            rgb[b][i] = v.clamp(0.0, 1.0) as f32;
        }
        nir[i] = (app.nir_mean + tex + spec.nir_noise_sigma * nir_noise[i]).clamp(0.0, 1.0) as f32;
    }

    let mut bands = Vec::with_capacity(4);
    for b in rgb {
        bands.push(BandArray::new(n, n, b)?);
    }
    bands.push(BandArray::new(n, n, nir)?);
    let tile = RasterTile::new(
        bands,
        BandName::ALL.to_vec(),
        format!("s{}@{}", spec.seed, style.name),
        style.name.clone(),
        (0, 0),
    )?;
    let mask = ForestMask::new(
        n,
        n,
        classes.iter().map(|&c| (c == LandClass::Forest as u8) as u8).collect(),
    )?;
    let layers = SceneLayers {
        classes,
        latent: latent.iter().map(|&v| v as f32).collect(),
        texture: texture.iter().map(|&v| v as f32).collect(),
    };
    Ok((tile, mask, layers))
}

pub fn generate_scene(spec: &SceneSpec, style: &DomainStyle) -> Result<(RasterTile, ForestMask)> {
    generate_scene_layers(spec, style).map(|(t, m, _)| (t, m))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Exact per-class mean and population standard deviation of every band.
/// `class_map` holds one label per pixel; labels with no pixels are absent
/// from the result.
pub fn class_statistics(scene: &RasterTile, class_map: &[u8]) -> Result<BTreeMap<u8, Vec<(BandName, BandStats)>>> {
    let (h, w) = scene.dims();
    if class_map.len() != h * w {
        return Err(Error::Shape(format!(
            "class map has {} labels for a {h}x{w} scene",
            class_map.len()
        )));
    }
    let mut out = BTreeMap::new();
    let mut labels: Vec<u8> = class_map.to_vec();
    labels.sort_unstable();
    labels.dedup();
    for label in labels {
        let idx: Vec<usize> = (0..h * w).filter(|&i| class_map[i] == label).collect();
        let stats = scene
            .band_names()
            .iter()
            .zip(scene.bands())
            .map(|(name, band)| {
                let n = idx.len() as f64;
                let mean = idx.iter().map(|&i| band.values()[i] as f64).sum::<f64>() / n;
                let var = idx.iter().map(|&i| (band.values()[i] as f64 - mean).powi(2)).sum::<f64>() / n;
                (
                    *name,
                    BandStats {
                        mean,
                        std: var.sqrt(),
                        count: idx.len(),
                    },
                )
            })
            .collect();
        out.insert(label, stats);
    }
    Ok(out)
}

/// Convenience lookup into a [`class_statistics`] result.
pub fn class_band_mean(stats: &BTreeMap<u8, Vec<(BandName, BandStats)>>, label: u8, band: BandName) -> Option<f64> {
    stats.get(&label)?.iter().find(|(b, _)| *b == band).map(|(_, s)| s.mean)
}

/// Renders every spec under every style, tiles each scene, writes band and
/// mask PNGs plus `manifest.json` under `out_dir`, and assigns splits
/// (territories kept together across styles).
pub fn build_synth_dataset(
    specs: &[SceneSpec],
    styles: &[DomainStyle],
    tile_size: usize,
    train_fraction: f64,
    split_seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if specs.is_empty() || styles.is_empty() {
        return Err(Error::InvalidArgument("need at least one scene spec and one style".into()));
    }
    for (i, s) in styles.iter().enumerate() {
        s.validate()?;
        for t in &styles[..i] {
            if t.name == s.name {
                return Err(Error::Config(format!("duplicate style name `{}`", s.name)));
            }
        }
    }
    let mut manifest = DatasetManifest::new(tile_size, out_dir);
    for spec in specs {
        for style in styles {
            let (scene, mask) = generate_scene(spec, style)?;
            for origin in crate::raster::tile_origins(spec.size, spec.size, tile_size, tile_size)? {
                let id = format!("s{:06}_r{:04}_c{:04}@{}", spec.seed, origin.0, origin.1, style.name);
                let tile = scene.crop(origin, tile_size, tile_size, id)?;
                let m = mask.crop(origin, tile_size, tile_size)?;
                manifest.write_record(&tile, Some(&m), Split::Train)?;
            }
        }
    }
    let manifest = if manifest.records.len() > 1 && train_fraction < 1.0 {
        split_dataset(&manifest, train_fraction, split_seed)?
    } else {
        manifest
    };
    manifest.save()?;
    Ok(manifest)
}

/// In-memory counterpart of [`build_synth_dataset`]: returns tiles with their
/// masks, tile ids following the same scheme. No split is assigned.
pub fn synth_tiles(specs: &[SceneSpec], style: &DomainStyle, tile_size: usize) -> Result<Vec<(RasterTile, ForestMask)>> {
    let mut out = Vec::new();
    for spec in specs {
        let (scene, mask) = generate_scene(spec, style)?;
        for t in tile_scene(&scene, tile_size, tile_size)? {
            let m = mask.crop(t.origin, tile_size, tile_size)?;
            let id = format!("s{:06}_r{:04}_c{:04}@{}", spec.seed, t.origin.0, t.origin.1, style.name);
            let mut t = t;
            t.tile_id = id;
            out.push((t, m));
        }
    }
    Ok(out)
}
