//! Paired augmentation: one geometric draw shared by input, target and mask;
//! photometric changes on the visible bands only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BandArray, ForestMask, RasterTile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub rotate_p: f64,
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub scale_p: f64,
    pub scale_range: (f64, f64),
    pub photometric: bool,
    pub brightness_p: f64,
    /// Additive shift drawn from `[-brightness_delta, brightness_delta]`.
    pub brightness_delta: f64,
    pub contrast_p: f64,
    pub contrast_range: (f64, f64),
    pub blur_p: f64,
    /// Inclusive range of motion-blur kernel lengths in pixels.
    pub blur_length: (usize, usize),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            rotate_p: 0.5,
            hflip_p: 0.5,
            vflip_p: 0.5,
            scale_p: 0.5,
            scale_range: (0.8, 1.2),
            photometric: true,
            brightness_p: 0.5,
            brightness_delta: 0.1,
            contrast_p: 0.5,
            contrast_range: (0.8, 1.2),
            blur_p: 0.5,
            blur_length: (3, 5),
        }
    }
}

impl AugmentPolicy {
    /// Every probability zero: the identity policy.
    pub fn none() -> Self {
        AugmentPolicy {
            rotate_p: 0.0,
            hflip_p: 0.0,
            vflip_p: 0.0,
            scale_p: 0.0,
            photometric: false,
            brightness_p: 0.0,
            contrast_p: 0.0,
            blur_p: 0.0,
            ..Default::default()
        }
    }

    pub fn geometric_only() -> Self {
        AugmentPolicy {
            photometric: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.rotate_p,
            self.hflip_p,
            self.vflip_p,
            self.scale_p,
            self.brightness_p,
            self.contrast_p,
            self.blur_p,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("augmentation probabilities must lie in [0,1]".into()));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("invalid scale range {:?}", self.scale_range)));
        }
        let (lo, hi) = self.contrast_range;
        if !(lo >= 0.0 && lo <= hi) {
            return Err(Error::Config(format!("invalid contrast range {:?}", self.contrast_range)));
        }
        if self.brightness_delta < 0.0 || self.blur_length.0 == 0 || self.blur_length.0 > self.blur_length.1 {
            return Err(Error::Config("invalid brightness or blur settings".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlurDirection {
    Horizontal,
    Vertical,
}

/// One concrete set of transform parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    /// Counter-clockwise quarter turns, 0..4.
    pub quarter_turns: u8,
    pub hflip: bool,
    pub vflip: bool,
    pub scale: f64,
    pub brightness: Option<f32>,
    pub contrast: Option<f32>,
    pub blur: Option<(usize, BlurDirection)>,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        AugmentDraw {
            quarter_turns: 0,
            hflip: false,
            vflip: false,
            scale: 1.0,
            brightness: None,
            contrast: None,
            blur: None,
        }
    }

    /// Geometric draws come first so they do not depend on whether
    /// photometric augmentation is enabled.
    pub fn sample(policy: &AugmentPolicy, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = AugmentDraw::identity();
        if rng.random_bool(policy.rotate_p) {
            d.quarter_turns = rng.random_range(1..4);
        }
        d.hflip = rng.random_bool(policy.hflip_p);
        d.vflip = rng.random_bool(policy.vflip_p);
        if rng.random_bool(policy.scale_p) {
            let (lo, hi) = policy.scale_range;
            d.scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        }
        if policy.photometric {
            if rng.random_bool(policy.brightness_p) {
                let m = policy.brightness_delta;
                d.brightness = Some(if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 } as f32);
            }
            if rng.random_bool(policy.contrast_p) {
                let (lo, hi) = policy.contrast_range;
                d.contrast = Some(if lo < hi { rng.random_range(lo..=hi) } else { lo } as f32);
            }
            if rng.random_bool(policy.blur_p) {
                let (lo, hi) = policy.blur_length;
                let len = rng.random_range(lo..=hi);
                let dir = if rng.random_bool(0.5) {
                    BlurDirection::Horizontal
                } else {
                    BlurDirection::Vertical
                };
                d.blur = Some((len, dir));
            }
        }
        d
    }

    pub fn is_geometric_identity(&self) -> bool {
        self.quarter_turns % 4 == 0 && !self.hflip && !self.vflip && self.scale == 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedPair {
    pub tile: RasterTile,
    pub target: Option<BandArray>,
    pub mask: Option<ForestMask>,
}

/// Samples a draw from `policy` with `seed` and applies it.
pub fn augment_pair(
    tile: &RasterTile,
    target: Option<&BandArray>,
    mask: Option<&ForestMask>,
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<AugmentedPair> {
    policy.validate()?;
    apply_draw(tile, target, mask, &AugmentDraw::sample(policy, seed))
}

pub fn apply_draw(
    tile: &RasterTile,
    target: Option<&BandArray>,
    mask: Option<&ForestMask>,
    draw: &AugmentDraw,
) -> Result<AugmentedPair> {
    let dims = tile.dims();
    if target.is_some_and(|t| t.dims() != dims) || mask.is_some_and(|m| m.dims() != dims) {
        return Err(Error::InvalidArgument(format!(
            "augment inputs must share {}x{}",
            dims.0, dims.1
        )));
    }
    if !(draw.scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {}", draw.scale)));
    }
    let geo = |b: &BandArray| -> Result<BandArray> {
        let (h, w, v) = geometric(b.height(), b.width(), b.values(), draw, Sampling::Bilinear);
        BandArray::from_clamped(h, w, v)
    };
    let mut bands = Vec::with_capacity(tile.bands().len());
    for (name, band) in tile.band_names().iter().zip(tile.bands()) {
        let mut b = geo(band)?;
        if name.is_visible() {
            b = photometric(&b, draw)?;
        }
        bands.push(b);
    }
    let (h, w) = bands[0].dims();
    let out_tile = RasterTile::new(
        bands,
        tile.band_names().to_vec(),
        tile.tile_id.clone(),
        tile.domain.clone(),
        tile.origin,
    )?;
    let target = target.map(geo).transpose()?;
    let mask = match mask {
        Some(m) => {
            let vals: Vec<f32> = m.values().iter().map(|&v| v as f32).collect();
            let (_, _, out) = geometric(m.height(), m.width(), &vals, draw, Sampling::Nearest);
            Some(ForestMask::new(h, w, out.iter().map(|&v| v as u8).collect())?)
        }
        None => None,
    };
    Ok(AugmentedPair {
        tile: out_tile,
        target,
        mask,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sampling {
    Bilinear,
    Nearest,
}

/// Reflects an out-of-range coordinate back into `[0, n-1]` (edge pixel not repeated).
fn reflect(x: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let period = 2.0 * (n - 1) as f64;
    let m = x.rem_euclid(period);
    if m > (n - 1) as f64 {
        period - m
    } else {
        m
    }
}

/// Scale about the centre (crop on zoom-in, reflect on zoom-out), then
/// rotate, then flip. Output shape equals input shape up to the transpose
/// from odd quarter turns.
fn geometric(h: usize, w: usize, src: &[f32], draw: &AugmentDraw, sampling: Sampling) -> (usize, usize, Vec<f32>) {
    let mut cur = if draw.scale == 1.0 {
        src.to_vec()
    } else {
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let mut out = vec![0.0f32; h * w];
        for r in 0..h {
            let sy = reflect((r as f64 - cy) / draw.scale + cy, h);
            for c in 0..w {
                let sx = reflect((c as f64 - cx) / draw.scale + cx, w);
                out[r * w + c] = match sampling {
                    Sampling::Nearest => {
                        let (yr, xr) = (sy.round() as usize, sx.round() as usize);
                        src[yr.min(h - 1) * w + xr.min(w - 1)]
                    }
                    Sampling::Bilinear => {
                        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                        let (fy, fx) = ((sy - y0 as f64) as f32, (sx - x0 as f64) as f32);
                        let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                        let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                        top * (1.0 - fy) + bot * fy
                    }
                };
            }
        }
        out
    };
    let (mut ch, mut cw) = (h, w);
    for _ in 0..draw.quarter_turns % 4 {
        // counter-clockwise: out[r][c] = in[c][w-1-r]
        let mut out = vec![0.0f32; ch * cw];
        let (oh, ow) = (cw, ch);
        for r in 0..oh {
            for c in 0..ow {
                out[r * ow + c] = cur[c * cw + (cw - 1 - r)];
            }
        }
        cur = out;
        (ch, cw) = (oh, ow);
    }
    if draw.hflip {
        for row in cur.chunks_mut(cw) {
            row.reverse();
        }
    }
    if draw.vflip {
        let mut out = Vec::with_capacity(cur.len());
        for row in cur.chunks(cw).rev() {
            out.extend_from_slice(row);
        }
        cur = out;
    }
    (ch, cw, cur)
}

/// Brightness, then contrast about the band mean, then a 1-D box blur with
/// clamped edges. Results are clamped to `[0,1]`.
fn photometric(band: &BandArray, draw: &AugmentDraw) -> Result<BandArray> {
    if draw.brightness.is_none() && draw.contrast.is_none() && draw.blur.is_none() {
        return Ok(band.clone());
    }
    let (h, w) = band.dims();
    let mut v = band.values().to_vec();
    if let Some(delta) = draw.brightness {
        v.iter_mut().for_each(|x| *x = (*x + delta).clamp(0.0, 1.0));
    }
    if let Some(factor) = draw.contrast {
        let mean = (v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64) as f32;
        v.iter_mut().for_each(|x| *x = ((*x - mean) * factor + mean).clamp(0.0, 1.0));
    }
    if let Some((len, dir)) = draw.blur {
        if len > 1 {
            let before = len / 2;
            let src = v.clone();
            for r in 0..h {
                for c in 0..w {
                    let mut acc = 0.0f32;
                    for k in 0..len {
                        let off = k as isize - before as isize;
                        let (rr, cc) = match dir {
                            BlurDirection::Horizontal => (r as isize, c as isize + off),
                            BlurDirection::Vertical => (r as isize + off, c as isize),
                        };
                        let rr = rr.clamp(0, h as isize - 1) as usize;
                        let cc = cc.clamp(0, w as isize - 1) as usize;
                        acc += src[rr * w + cc];
                    }
                    v[r * w + c] = acc / len as f32;
                }
            }
        }
    }
    BandArray::from_clamped(h, w, v)
}
