use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use num_traits::Float;

use rand::Rng;

use super::backend::{Backend, Mode, RunningStats};
use super::kernels::ConvSpec;
use super::Tensor;
use crate::error::bail;
use crate::rng::{self, StreamRng};
use crate::Result;

/// Trainable tensor. `decay` marks tensors that enter the weight-norm
/// penalty (convolution weights, not biases or batch-norm affines).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub decay: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor, decay: bool) {
        self.params.push(Param { name: name.into(), value, decay });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        match self.params.iter().find(|p| p.name == name) {
            Some(p) => Ok(&p.value),
            None => bail!(InvalidArgument, "unknown parameter '{name}'"),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.params.iter_mut().find(|p| p.name == name) {
            Some(p) => Ok(&mut p.value),
            None => bail!(InvalidArgument, "unknown parameter '{name}'"),
        }
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> core::slice::IterMut<'_, Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Σ‖W‖² over decayed parameters.
    pub fn weight_norm_sq(&self) -> f64 {
        self.params.iter().filter(|p| p.decay).map(|p| p.value.sum_squares()).sum()
    }

    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    fn fetch<B: Backend>(&self, b: &mut B, name: &str) -> Result<B::Value> {
        Ok(b.param(name, self.get(name)?))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsSet {
    stats: Vec<RunningStats>,
}

impl StatsSet {
    pub fn push(&mut self, s: RunningStats) {
        self.stats.push(s);
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut RunningStats> {
        match self.stats.iter_mut().find(|s| s.name == name) {
            Some(s) => Ok(s),
            None => bail!(InvalidArgument, "unknown running statistics '{name}'"),
        }
    }

    pub fn iter(&self) -> core::slice::Iter<'_, RunningStats> {
        self.stats.iter()
    }

    pub fn iter_mut(&mut self) -> core::slice::IterMut<'_, RunningStats> {
        self.stats.iter_mut()
    }
}

/// Anything with named parameters and a backend-generic forward pass.
pub trait Model {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn forward<B: Backend>(&mut self, b: &mut B, x: B::Value, mode: Mode) -> Result<B::Value>;
}

/// Xavier/Glorot uniform initialization.
pub fn xavier_uniform(shape: [usize; 5], fan_in: usize, fan_out: usize, rng: &mut StreamRng) -> Tensor {
    let limit = Float::sqrt(6.0 / (fan_in + fan_out) as f64);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-limit..limit)).collect()).expect("sized")
}

fn conv_weight(cout: usize, cin: usize, k: usize, groups: usize, rng: &mut StreamRng) -> Tensor {
    let k3 = k * k * k;
    xavier_uniform([cout, cin / groups, k, k, k], cin / groups * k3, cout / groups * k3, rng)
}

/// Largest usable group count: `groups` if it divides both channel counts,
/// else 1.
pub fn effective_groups(c_in: usize, c_out: usize, groups: usize) -> usize {
    if groups > 0 && c_in % groups == 0 && c_out % groups == 0 {
        groups
    } else {
        1
    }
}

/// Residual block: two grouped 3³ convolution / batch-norm / ReLU stages,
/// a 1³ merge convolution with bias, and an identity (or 1³ projection)
/// skip path.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipBlock {
    pub prefix: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
}

impl SkipBlock {
    pub fn new(prefix: impl Into<String>, in_channels: usize, out_channels: usize, groups: usize) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            bail!(InvalidArgument, "SkipBlock channel counts must be positive");
        }
        Ok(Self { prefix: prefix.into(), in_channels, out_channels, groups })
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn stage_groups(&self) -> [usize; 2] {
        [
            effective_groups(self.in_channels, self.out_channels, self.groups),
            effective_groups(self.out_channels, self.out_channels, self.groups),
        ]
    }

    pub fn init(&self, rng: &mut StreamRng, params: &mut ParamSet, stats: &mut StatsSet) {
        let (ci, k) = (self.in_channels, self.out_channels);
        let [g1, g2] = self.stage_groups();
        params.push(self.name("conv1.weight"), conv_weight(k, ci, 3, g1, rng), true);
        params.push(self.name("bn1.gamma"), Tensor::filled([1, k, 1, 1, 1], 1.0), false);
        params.push(self.name("bn1.beta"), Tensor::zeros([1, k, 1, 1, 1]), false);
        stats.push(RunningStats::new(self.name("bn1"), k));
        params.push(self.name("conv2.weight"), conv_weight(k, k, 3, g2, rng), true);
        params.push(self.name("bn2.gamma"), Tensor::filled([1, k, 1, 1, 1], 1.0), false);
        params.push(self.name("bn2.beta"), Tensor::zeros([1, k, 1, 1, 1]), false);
        stats.push(RunningStats::new(self.name("bn2"), k));
        params.push(self.name("merge.weight"), conv_weight(k, k, 1, 1, rng), true);
        params.push(self.name("merge.bias"), Tensor::zeros([1, k, 1, 1, 1]), false);
        if ci != k {
            params.push(self.name("proj.weight"), conv_weight(k, ci, 1, 1, rng), true);
        }
    }

    pub fn forward<B: Backend>(
        &self,
        b: &mut B,
        params: &ParamSet,
        stats: &mut StatsSet,
        x: &B::Value,
        mode: Mode,
    ) -> Result<B::Value> {
        let c = b.shape(x)[1];
        if c != self.in_channels {
            bail!(ShapeMismatch, "{} expects {} channels, got {c}", self.prefix, self.in_channels);
        }
        let [g1, g2] = self.stage_groups();
        let mut h = x.clone();
        for (i, g) in [(1, g1), (2, g2)] {
            let w = params.fetch(b, &self.name(&format!("conv{i}.weight")))?;
            h = b.conv3d(&h, &w, None, ConvSpec::same(3, g))?;
            let gamma = params.fetch(b, &self.name(&format!("bn{i}.gamma")))?;
            let beta = params.fetch(b, &self.name(&format!("bn{i}.beta")))?;
            h = b.batch_norm(&h, &gamma, &beta, stats.get_mut(&self.name(&format!("bn{i}")))?, mode)?;
            h = b.relu(&h);
        }
        let mw = params.fetch(b, &self.name("merge.weight"))?;
        let mb = params.fetch(b, &self.name("merge.bias"))?;
        let merged = b.conv3d(&h, &mw, Some(&mb), ConvSpec::same(1, 1))?;
        let skip = if self.in_channels == self.out_channels {
            x.clone()
        } else {
            let pw = params.fetch(b, &self.name("proj.weight"))?;
            b.conv3d(x, &pw, None, ConvSpec::same(1, 1))?
        };
        b.add(&merged, &skip)
    }
}

/// A single [`SkipBlock`] with its own parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipBlockModel {
    pub block: SkipBlock,
    pub params: ParamSet,
    pub stats: StatsSet,
}

impl SkipBlockModel {
    pub fn new(in_channels: usize, out_channels: usize, groups: usize, seed: u64) -> Result<Self> {
        let block = SkipBlock::new("block", in_channels, out_channels, groups)?;
        let mut params = ParamSet::new();
        let mut stats = StatsSet::default();
        block.init(&mut rng::seeded(seed), &mut params, &mut stats);
        Ok(Self { block, params, stats })
    }
}

impl Model for SkipBlockModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward<B: Backend>(&mut self, b: &mut B, x: B::Value, mode: Mode) -> Result<B::Value> {
        self.block.forward(b, &self.params, &mut self.stats, &x, mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TsnetConfig {
    /// Channel widths per resolution level, finest first.
    pub widths: [usize; 4],
    pub in_channels: usize,
    pub groups: usize,
    /// ReLU on the regression head. The default head is linear.
    pub relu_head: bool,
}

impl Default for TsnetConfig {
    fn default() -> Self {
        Self { widths: [16, 32, 64, 128], in_channels: 1, groups: 4, relu_head: false }
    }
}

impl TsnetConfig {
    pub fn toy() -> Self {
        Self { widths: [4, 8, 16, 32], ..Self::default() }
    }
}

/// Encoder-decoder distance regressor built from [`SkipBlock`]s: three
/// 2³ max-pool downsamplings, transposed-convolution upsampling with
/// skip concatenation, and a 1³ single-channel head.
#[derive(Debug, Clone, PartialEq)]
pub struct Tsnet {
    pub config: TsnetConfig,
    pub params: ParamSet,
    pub stats: StatsSet,
    encoder: Vec<SkipBlock>,
    decoder: Vec<SkipBlock>,
}

impl Tsnet {
    pub fn new(config: TsnetConfig, seed: u64) -> Result<Self> {
        if config.widths.contains(&0) || config.in_channels == 0 {
            bail!(InvalidArgument, "TSNet widths and input channels must be positive");
        }
        let w = config.widths;
        let mut rng = rng::seeded(seed);
        let mut params = ParamSet::new();
        let mut stats = StatsSet::default();
        let mut encoder = Vec::new();
        let mut c = config.in_channels;
        for (i, &wi) in w.iter().enumerate() {
            let blk = SkipBlock::new(format!("enc{i}"), c, wi, config.groups)?;
            blk.init(&mut rng, &mut params, &mut stats);
            encoder.push(blk);
            c = wi;
        }
        let mut decoder = Vec::new();
        for i in (0..3).rev() {
            let (cin, cout) = (w[i + 1], w[i]);
            params.push(
                format!("up{i}.weight"),
                xavier_uniform([cin, cout, 2, 2, 2], cout * 8, cin * 8, &mut rng),
                true,
            );
            params.push(format!("up{i}.bias"), Tensor::zeros([1, cout, 1, 1, 1]), false);
            let blk = SkipBlock::new(format!("dec{i}"), 2 * cout, cout, config.groups)?;
            blk.init(&mut rng, &mut params, &mut stats);
            decoder.push(blk);
        }
        params.push("head.weight", xavier_uniform([1, w[0], 1, 1, 1], w[0], 1, &mut rng), true);
        params.push("head.bias", Tensor::zeros([1, 1, 1, 1, 1]), false);
        Ok(Self { config, params, stats, encoder, decoder })
    }

    /// Rebuilds a network around existing parameters and statistics (e.g.
    /// from a checkpoint), checking that every tensor has the right shape.
    pub fn from_parts(config: TsnetConfig, params: ParamSet, stats: StatsSet) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        for p in net.params.iter_mut() {
            let src = params.get(&p.name)?;
            if src.shape() != p.value.shape() {
                bail!(
                    ShapeMismatch,
                    "parameter '{}' has shape {:?}, expected {:?}",
                    p.name,
                    src.shape(),
                    p.value.shape()
                );
            }
            p.value = src.clone();
        }
        if params.len() != net.params.len() {
            bail!(InvalidArgument, "{} parameters supplied, network has {}", params.len(), net.params.len());
        }
        let supplied: Vec<&RunningStats> = stats.iter().collect();
        for s in net.stats.iter_mut() {
            let Some(src) = supplied.iter().find(|t| t.name == s.name) else {
                bail!(InvalidArgument, "missing running statistics '{}'", s.name);
            };
            if src.mean.len() != s.mean.len() || src.var.len() != s.var.len() {
                bail!(ShapeMismatch, "running statistics '{}' have the wrong length", s.name);
            }
            *s = (*src).clone();
        }
        Ok(net)
    }
}

impl Model for Tsnet {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward<B: Backend>(&mut self, b: &mut B, x: B::Value, mode: Mode) -> Result<B::Value> {
        let s = b.shape(&x);
        if s[1] != self.config.in_channels {
            bail!(ShapeMismatch, "TSNet expects {} input channels, got {}", self.config.in_channels, s[1]);
        }
        if s[2..].iter().any(|&d| d == 0 || d % 8 != 0) {
            bail!(ShapeMismatch, "TSNet spatial dims must be positive multiples of 8, got {:?}", &s[2..]);
        }
        let Self { params, stats, encoder, decoder, config } = self;
        let mut skips = Vec::with_capacity(3);
        let mut h = x;
        for (i, blk) in encoder.iter().enumerate() {
            if i > 0 {
                h = b.max_pool2(&h)?;
            }
            h = blk.forward(b, params, stats, &h, mode)?;
            if i < 3 {
                skips.push(h.clone());
            }
        }
        for (blk, i) in decoder.iter().zip((0..3).rev()) {
            let w = params.fetch(b, &format!("up{i}.weight"))?;
            let bias = params.fetch(b, &format!("up{i}.bias"))?;
            let up = b.conv_transpose2(&h, &w, Some(&bias))?;
            let skip = skips.pop().expect("one skip per level");
            let cat = b.concat(&skip, &up)?;
            drop(skip);
            h = blk.forward(b, params, stats, &cat, mode)?;
        }
        let w = params.fetch(b, "head.weight")?;
        let bias = params.fetch(b, "head.bias")?;
        let out = b.conv3d(&h, &w, Some(&bias), ConvSpec::same(1, 1))?;
        Ok(if config.relu_head { b.relu(&out) } else { out })
    }
}

/// Runs a forward pass on the [`super::Eager`] backend.
pub fn predict<M: Model>(model: &mut M, input: &Tensor, mode: Mode) -> Result<Tensor> {
    let mut e = super::Eager::new();
    let x = e.input(input.clone());
    let y = model.forward(&mut e, x, mode)?;
    Ok(alloc::rc::Rc::try_unwrap(y).unwrap_or_else(|rc| (*rc).clone()))
}
