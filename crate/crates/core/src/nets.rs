//! Architecture contracts for the U-Net generator / segmenter and the
//! PatchGAN discriminator, and receptive-field arithmetic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::tensor::{conv_out_dim, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadActivation {
    Linear,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderStyle {
    /// Stages of two-conv residual blocks after each strided downsampling.
    Residual,
    /// One plain conv after each strided downsampling.
    Plain,
}

/// U-Net contract shared by the NIR generator, the regression baseline and
/// the forest segmenter. Skip connections always concatenate encoder
/// features at matching resolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub in_channels: usize,
    #[serde(default = "one")]
    pub out_channels: usize,
    pub depth: usize,
    pub base_filters: usize,
    pub encoder_style: EncoderStyle,
    /// Residual blocks per encoder stage; one entry per downsampling stage.
    #[serde(default)]
    pub stage_blocks: Vec<usize>,
    pub head_activation: HeadActivation,
}

fn one() -> usize {
    1
}

/// ResNet-34 stage layout.
pub const RESNET34_STAGES: [usize; 4] = [3, 4, 6, 3];

impl ArchSpec {
    /// Desk-scale generator: residual encoder, one block per stage.
    pub fn gen_desk() -> Self {
        ArchSpec {
            in_channels: 3,
            out_channels: 1,
            depth: 4,
            base_filters: 16,
            encoder_style: EncoderStyle::Residual,
            stage_blocks: vec![1; 4],
            head_activation: HeadActivation::Sigmoid,
        }
    }

    /// Full-size generator with the ResNet-34 3-4-6-3 stage layout.
    pub fn gen_full() -> Self {
        ArchSpec {
            in_channels: 3,
            out_channels: 1,
            depth: 4,
            base_filters: 32,
            encoder_style: EncoderStyle::Residual,
            stage_blocks: RESNET34_STAGES.to_vec(),
            head_activation: HeadActivation::Sigmoid,
        }
    }

    /// Desk-scale forest segmenter for 3 (RGB) or 4 (RGB+NIR) input bands.
    pub fn seg_desk(in_channels: usize) -> Self {
        ArchSpec {
            in_channels,
            out_channels: 1,
            depth: 3,
            base_filters: 8,
            encoder_style: EncoderStyle::Residual,
            stage_blocks: vec![1; 3],
            head_activation: HeadActivation::Sigmoid,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "gen-desk" => Ok(Self::gen_desk()),
            "gen-full" => Ok(Self::gen_full()),
            "seg-desk" => Ok(Self::seg_desk(3)),
            other => Err(Error::Config(format!("unknown architecture preset `{other}`"))),
        }
    }

    pub fn with_head(mut self, head: HeadActivation) -> Self {
        self.head_activation = head;
        self
    }

    pub fn with_in_channels(mut self, in_channels: usize) -> Self {
        self.in_channels = in_channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.in_channels, 3 | 4) {
            return Err(Error::Config(format!(
                "in_channels must be 3 (RGB) or 4 (RGB+NIR), got {}",
                self.in_channels
            )));
        }
        if self.out_channels != 1 {
            return Err(Error::Config(format!("out_channels must be 1, got {}", self.out_channels)));
        }
        if self.depth == 0 || self.base_filters == 0 {
            return Err(Error::Config("depth and base_filters must be positive".into()));
        }
        if self.encoder_style == EncoderStyle::Residual && self.stage_blocks.len() != self.depth {
            return Err(Error::Config(format!(
                "residual encoder needs one stage_blocks entry per stage ({}), got {}",
                self.depth,
                self.stage_blocks.len()
            )));
        }
        Ok(())
    }

    /// Spatial dims must be divisible by 2^depth.
    pub fn check_input_dims(&self, height: usize, width: usize) -> Result<()> {
        let m = 1usize << self.depth;
        if height == 0 || width == 0 || height % m != 0 || width % m != 0 {
            return Err(Error::Shape(format!(
                "input {height}x{width} is not divisible by 2^depth = {m}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ConvLayer {
    weight: usize,
    bias: usize,
    stride: usize,
    pad: usize,
}

impl ConvLayer {
    fn apply<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], x: Var) -> Var {
        g.conv2d(x, p[self.weight], p[self.bias], self.stride, self.pad)
    }
}

struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He-normal weights scaled by `gain`, zero bias.
    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        gain: f64,
    ) -> ConvLayer {
        let fan_in = (cin * kernel * kernel) as f64;
        let normal = Normal::new(0.0, gain * (2.0 / fan_in).sqrt()).expect("valid std");
        let n = cout * cin * kernel * kernel;
        let w: Vec<f32> = (0..n).map(|_| normal.sample(&mut self.rng) as f32).collect();
        let weight = store.add(format!("{name}.weight"), Tensor::from_vec([cout, cin, kernel, kernel], w));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([1, cout, 1, 1]));
        ConvLayer {
            weight,
            bias,
            stride,
            pad,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Block {
    Plain(ConvLayer),
    Residual(ConvLayer, ConvLayer),
}

#[derive(Clone, Debug, PartialEq)]
struct UNetLayout {
    stem: ConvLayer,
    down: Vec<ConvLayer>,
    stages: Vec<Vec<Block>>,
    /// 1x1 channel reduction applied before each upsampling, deepest first.
    reduce: Vec<ConvLayer>,
    /// 3x3 conv over the concatenated skip features, deepest first.
    fuse: Vec<ConvLayer>,
    head: ConvLayer,
}

/// U-Net model handle: architecture plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct UNet {
    spec: ArchSpec,
    layout: UNetLayout,
    pub params: ParamStore,
}

impl UNet {
    pub fn new(spec: ArchSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = Initializer::new(seed);
        let mut store = ParamStore::new();
        let width = |level: usize| spec.base_filters << level;
        let stem = init.conv(&mut store, "stem", spec.in_channels, width(0), 3, 1, 1, 1.0);
        let mut down = Vec::new();
        let mut stages = Vec::new();
        for level in 1..=spec.depth {
            let (cin, c) = (width(level - 1), width(level));
            down.push(init.conv(&mut store, &format!("down{level}"), cin, c, 3, 2, 1, 1.0));
            let stage = match spec.encoder_style {
                EncoderStyle::Plain => vec![Block::Plain(init.conv(
                    &mut store,
                    &format!("enc{level}"),
                    c,
                    c,
                    3,
                    1,
                    1,
                    1.0,
                ))],
                EncoderStyle::Residual => (0..spec.stage_blocks[level - 1])
                    .map(|b| {
                        let a = init.conv(&mut store, &format!("enc{level}.{b}.a"), c, c, 3, 1, 1, 1.0);
                        // small residual branch at init keeps the unnormalised stack well conditioned
                        let z = init.conv(&mut store, &format!("enc{level}.{b}.b"), c, c, 3, 1, 1, 0.1);
                        Block::Residual(a, z)
                    })
                    .collect(),
            };
            stages.push(stage);
        }
        let mut reduce = Vec::new();
        let mut fuse = Vec::new();
        for level in (1..=spec.depth).rev() {
            let (c, cskip) = (width(level), width(level - 1));
            reduce.push(init.conv(&mut store, &format!("up{level}.reduce"), c, cskip, 1, 1, 0, 1.0));
            fuse.push(init.conv(&mut store, &format!("up{level}.fuse"), 2 * cskip, cskip, 3, 1, 1, 1.0));
        }
        let head = init.conv(&mut store, "head", width(0), spec.out_channels, 1, 1, 0, 0.5);
        Ok(UNet {
            spec,
            layout: UNetLayout {
                stem,
                down,
                stages,
                reduce,
                fuse,
                head,
            },
            params: store,
        })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Output before the head activation.
    pub fn forward_logits<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], x: Var) -> Var {
        let l = &self.layout;
        let mut h = l.stem.apply(g, p, x);
        h = g.relu(h);
        let mut skips = vec![h];
        for (down, stage) in l.down.iter().zip(&l.stages) {
            h = down.apply(g, p, h);
            h = g.relu(h);
            for block in stage {
                h = match block {
                    Block::Plain(c) => {
                        let y = c.apply(g, p, h);
                        g.relu(y)
                    }
                    Block::Residual(a, b) => {
                        let y = a.apply(g, p, h);
                        let y = g.relu(y);
                        let y = b.apply(g, p, y);
                        let y = g.add(h, y);
                        g.relu(y)
                    }
                };
            }
            skips.push(h);
        }
        skips.pop();
        for (reduce, fuse) in l.reduce.iter().zip(&l.fuse) {
            let skip = skips.pop().expect("one skip per decoder level");
            let y = reduce.apply(g, p, h);
            let y = g.upsample2x(y);
            let y = g.concat(y, skip);
            let y = fuse.apply(g, p, y);
            h = g.relu(y);
        }
        l.head.apply(g, p, h)
    }

    /// Output after the head activation.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], x: Var) -> Var {
        let logits = self.forward_logits(g, p, x);
        match self.spec.head_activation {
            HeadActivation::Linear => logits,
            HeadActivation::Sigmoid => g.sigmoid(logits),
        }
    }

    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        if shape[1] != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, got {}",
                self.spec.in_channels, shape[1]
            )));
        }
        self.spec.check_input_dims(shape[2], shape[3])
    }

    /// Inference: (B, C, H, W) -> (B, 1, H, W) after the head activation.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.shape())?;
        let mut g = Graph::new();
        let p = self.params.bind_constant(&mut g);
        let xv = g.input(x.clone());
        let y = self.forward(&mut g, &p, xv);
        Ok(g.take_value(y))
    }

    /// Structural equality of architectures (parameters may differ).
    pub fn same_architecture(&self, other: &UNet) -> bool {
        self.spec == other.spec && self.layout == other.layout
    }
}

/// Builds the NIR generator (or the regression baseline with a linear head).
pub fn build_generator(spec: &ArchSpec, seed: u64) -> Result<UNet> {
    UNet::new(spec.clone(), seed)
}

/// Builds the forest segmenter; the head must be a sigmoid.
pub fn build_segmenter(spec: &ArchSpec, seed: u64) -> Result<UNet> {
    if spec.head_activation != HeadActivation::Sigmoid {
        return Err(Error::Config("segmenter head must be sigmoid".into()));
    }
    UNet::new(spec.clone(), seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscLayer {
    pub kernel: usize,
    pub stride: usize,
    pub filters: usize,
}

/// PatchGAN discriminator contract. Every layer uses zero padding of
/// `padding` pixels; hidden layers use LeakyReLU, the last layer emits raw
/// logits and must have one filter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscSpec {
    #[serde(default = "four")]
    pub in_channels: usize,
    pub layers: Vec<DiscLayer>,
    #[serde(default = "one")]
    pub padding: usize,
}

fn four() -> usize {
    4
}

pub const LEAKY_SLOPE: f64 = 0.2;

impl DiscSpec {
    fn stack(strided: usize, unit: usize, base_filters: usize) -> Self {
        let mut layers = Vec::new();
        for i in 0..strided {
            layers.push(DiscLayer {
                kernel: 4,
                stride: 2,
                filters: base_filters << i,
            });
        }
        for i in 0..unit {
            let last = i + 1 == unit;
            layers.push(DiscLayer {
                kernel: 4,
                stride: 1,
                filters: if last { 1 } else { base_filters << strided },
            });
        }
        DiscSpec {
            in_channels: 4,
            layers,
            padding: 1,
        }
    }

    /// 70x70 PatchGAN: three stride-2 layers then two stride-1 layers.
    pub fn rf70(base_filters: usize) -> Self {
        Self::stack(3, 2, base_filters)
    }

    pub fn rf34(base_filters: usize) -> Self {
        Self::stack(2, 2, base_filters)
    }

    pub fn rf142(base_filters: usize) -> Self {
        Self::stack(4, 2, base_filters)
    }

    /// Named presets with the desk-scale width of 16 base filters.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "disc-rf70" => Ok(Self::rf70(16)),
            "disc-rf34" => Ok(Self::rf34(16)),
            "disc-rf142" => Ok(Self::rf142(16)),
            other => Err(Error::Config(format!("unknown discriminator preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("discriminator needs at least one layer".into()));
        }
        if !self.layers.iter().any(|l| l.stride == 2) {
            return Err(Error::Config("discriminator needs at least one stride-2 layer".into()));
        }
        if self.layers.iter().any(|l| l.kernel == 0 || l.stride == 0 || l.filters == 0) {
            return Err(Error::Config("kernel, stride and filters must be positive".into()));
        }
        if self.layers.last().map(|l| l.filters) != Some(1) {
            return Err(Error::Config("last discriminator layer must emit one logit channel".into()));
        }
        Ok(())
    }

    pub fn kernel_strides(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.kernel, l.stride)).collect()
    }

    pub fn receptive_field(&self) -> Result<usize> {
        receptive_field(&self.kernel_strides())
    }

    /// Spatial size of the logit map for an input of `height` x `width`.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let (mut h, mut w) = (height, width);
        for (i, l) in self.layers.iter().enumerate() {
            match (
                conv_out_dim(h, l.kernel, l.stride, self.padding),
                conv_out_dim(w, l.kernel, l.stride, self.padding),
            ) {
                (Some(nh), Some(nw)) => (h, w) = (nh, nw),
                _ => {
                    return Err(Error::Shape(format!(
                        "discriminator layer {i} cannot be applied to a {h}x{w} feature map"
                    )))
                }
            }
        }
        Ok((h, w))
    }
}

/// Receptive field of a conv stack given as (kernel, stride) pairs,
/// computed backward from a single output pixel.
pub fn receptive_field(layers: &[(usize, usize)]) -> Result<usize> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("receptive_field needs at least one layer".into()));
    }
    if has_coverage_gaps(layers) {
        log::warn!("conv stack {layers:?} has kernel < stride; input pixels are skipped");
    }
    Ok(layers.iter().rev().fold(1, |rf, &(k, s)| (rf - 1) * s + k))
}

/// True when some layer's kernel is smaller than its stride.
pub fn has_coverage_gaps(layers: &[(usize, usize)]) -> bool {
    layers.iter().any(|&(k, s)| k < s)
}

/// PatchGAN model handle.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    spec: DiscSpec,
    layers: Vec<ConvLayer>,
    pub params: ParamStore,
}

impl Discriminator {
    pub fn new(spec: DiscSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = Initializer::new(seed);
        let mut store = ParamStore::new();
        let mut cin = spec.in_channels;
        let mut layers = Vec::new();
        for (i, l) in spec.layers.iter().enumerate() {
            let gain = if i + 1 == spec.layers.len() { 0.5 } else { 1.0 };
            layers.push(init.conv(&mut store, &format!("disc{i}"), cin, l.filters, l.kernel, l.stride, spec.padding, gain));
            cin = l.filters;
        }
        Ok(Discriminator {
            spec,
            layers,
            params: store,
        })
    }

    pub fn spec(&self) -> &DiscSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Patch logits for a concatenated (condition, candidate) input.
    pub fn forward<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var], x: Var) -> Var {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.apply(g, p, h);
            if i + 1 < self.layers.len() {
                h = g.leaky_relu(h, LEAKY_SLOPE);
            }
        }
        h
    }

    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        if shape[1] != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "discriminator expects {} channels, got {}",
                self.spec.in_channels, shape[1]
            )));
        }
        self.spec.output_dims(shape[2], shape[3]).map(|_| ())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.shape())?;
        let mut g = Graph::new();
        let p = self.params.bind_constant(&mut g);
        let xv = g.input(x.clone());
        let y = self.forward(&mut g, &p, xv);
        Ok(g.take_value(y))
    }
}

pub fn build_discriminator(spec: &DiscSpec, seed: u64) -> Result<Discriminator> {
    Discriminator::new(spec.clone(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.5f32, 0.2).unwrap();
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| normal.sample(&mut rng)).collect())
    }

    #[test]
    fn receptive_field_recursion() {
        assert_eq!(receptive_field(&[(4, 1)]).unwrap(), 4);
        let rf70 = [(4, 2), (4, 2), (4, 2), (4, 1), (4, 1)];
        assert_eq!(receptive_field(&rf70).unwrap(), 70);
        let mut rf142 = vec![(4, 2)];
        rf142.extend_from_slice(&rf70);
        assert_eq!(receptive_field(&rf142).unwrap(), 142);
        assert!(receptive_field(&[]).is_err());
        assert!(has_coverage_gaps(&[(1, 2)]));
        assert_eq!(receptive_field(&[(1, 2), (3, 1)]).unwrap(), 5);
    }

    #[test]
    fn presets_have_declared_receptive_fields() {
        assert_eq!(DiscSpec::preset("disc-rf70").unwrap().receptive_field().unwrap(), 70);
        assert_eq!(DiscSpec::preset("disc-rf34").unwrap().receptive_field().unwrap(), 34);
        assert_eq!(DiscSpec::preset("disc-rf142").unwrap().receptive_field().unwrap(), 142);
        assert!(DiscSpec::preset("disc-rf1").is_err());
    }

    #[test]
    fn discriminator_logit_map_matches_traced_shapes() {
        // k=4, pad=1: 256 -s2-> 128 -s2-> 64 -s2-> 32 -s1-> 31 -s1-> 30
        let spec = DiscSpec::rf70(4);
        assert_eq!(spec.output_dims(256, 256).unwrap(), (30, 30));
        let d = Discriminator::new(spec, 1).unwrap();
        let out = d.predict(&random_input([1, 4, 64, 64], 2)).unwrap();
        // 64 -> 32 -> 16 -> 8 -> 7 -> 6
        assert_eq!(out.shape(), [1, 1, 6, 6]);
        assert!(d.predict(&random_input([1, 3, 64, 64], 2)).is_err());
    }

    #[test]
    fn single_strided_layer_discriminator() {
        let spec = DiscSpec {
            in_channels: 4,
            layers: vec![DiscLayer { kernel: 4, stride: 2, filters: 1 }],
            padding: 1,
        };
        assert_eq!(spec.receptive_field().unwrap(), 4);
        assert_eq!(spec.output_dims(16, 16).unwrap(), (8, 8));
        let no_stride = DiscSpec {
            layers: vec![DiscLayer { kernel: 4, stride: 1, filters: 1 }],
            ..spec
        };
        assert!(no_stride.validate().is_err());
    }

    #[test]
    fn discriminator_is_batch_independent() {
        let d = Discriminator::new(DiscSpec::rf34(4), 3).unwrap();
        let batch = random_input([8, 4, 32, 32], 4);
        let all = d.predict(&batch).unwrap();
        let single = Tensor::from_vec([1, 4, 32, 32], batch.sample(5).to_vec());
        let one = d.predict(&single).unwrap();
        assert_eq!(one.data(), all.sample(5));
    }

    #[test]
    fn generator_preserves_shape_and_sigmoid_range() {
        let spec = ArchSpec {
            base_filters: 4,
            ..ArchSpec::gen_desk()
        };
        let g = build_generator(&spec, 0).unwrap();
        let out = g.predict(&random_input([2, 3, 32, 48], 9)).unwrap();
        assert_eq!(out.shape(), [2, 1, 32, 48]);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(g.predict(&random_input([1, 3, 40, 40], 9)).is_err());
        assert!(g.predict(&random_input([1, 4, 32, 32], 9)).is_err());
    }

    #[test]
    fn linear_head_is_unbounded() {
        let spec = ArchSpec {
            base_filters: 4,
            depth: 2,
            stage_blocks: vec![1, 1],
            ..ArchSpec::gen_desk()
        }
        .with_head(HeadActivation::Linear);
        let g = build_generator(&spec, 5).unwrap();
        let x = random_input([1, 3, 16, 16], 1).map(|v| v * 40.0);
        let out = g.predict(&x).unwrap();
        assert!(out.data().iter().any(|&v| !(0.0..=1.0).contains(&v)));
    }

    #[test]
    fn parameter_count_grows_with_filters() {
        let mut prev = 0;
        for base in [2, 4, 8, 16] {
            let spec = ArchSpec {
                base_filters: base,
                ..ArchSpec::gen_desk()
            };
            let n = build_generator(&spec, 0).unwrap().param_count();
            assert!(n > prev);
            prev = n;
        }
    }

    #[test]
    fn segmenter_channel_contract() {
        assert!(build_segmenter(&ArchSpec::seg_desk(3), 0).is_ok());
        assert!(build_segmenter(&ArchSpec::seg_desk(4), 0).is_ok());
        assert!(matches!(build_segmenter(&ArchSpec::seg_desk(5), 0), Err(Error::Config(_))));
        let linear = ArchSpec::seg_desk(3).with_head(HeadActivation::Linear);
        assert!(build_segmenter(&linear, 0).is_err());
        let s = build_segmenter(&ArchSpec::seg_desk(4), 7).unwrap();
        let x = random_input([1, 4, 16, 16], 3);
        let a = s.predict(&x).unwrap();
        let b = s.predict(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(s.predict(&random_input([1, 3, 16, 16], 3)).is_err());
    }
}
