//! Execution backends. Network code is written once against [`Backend`];
//! [`Tape`] records every operation for reverse-mode differentiation and
//! [`Eager`] evaluates immediately, dropping intermediates as soon as they
//! fall out of scope.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use num_traits::Float;

use super::kernels::{self, BnCache, ConvSpec, BN_EPS};
use super::Tensor;
use crate::error::bail;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics.
    Eval,
}

/// Batch-norm running statistics of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self { name: name.into(), mean: alloc::vec![0.0; channels], var: alloc::vec![1.0; channels] }
    }
}

pub trait Backend {
    type Value: Clone;

    fn input(&mut self, t: Tensor) -> Self::Value;
    /// Registers a named parameter.
    fn param(&mut self, name: &str, t: &Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn conv3d(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: Option<&Self::Value>,
        spec: ConvSpec,
    ) -> Result<Self::Value>;
    fn conv_transpose2(&mut self, x: &Self::Value, w: &Self::Value, b: Option<&Self::Value>) -> Result<Self::Value>;
    fn max_pool2(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn batch_norm(
        &mut self,
        x: &Self::Value,
        gamma: &Self::Value,
        beta: &Self::Value,
        stats: &mut RunningStats,
        mode: Mode,
    ) -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn concat(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;

    fn shape(&self, v: &Self::Value) -> [usize; 5] {
        self.value(v).shape()
    }
}

fn bn_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &mut RunningStats,
    mode: Mode,
) -> Result<(Tensor, Option<BnCache>)> {
    match mode {
        Mode::Train => {
            let (y, cache) = kernels::batch_norm_train(x, gamma, beta)?;
            if stats.mean.len() != cache.mean.len() {
                bail!(ShapeMismatch, "running statistics '{}' have {} channels", stats.name, stats.mean.len());
            }
            kernels::update_running(&mut stats.mean, &mut stats.var, &cache);
            Ok((y, Some(cache)))
        }
        Mode::Eval => Ok((kernels::batch_norm_eval(x, gamma, beta, &stats.mean, &stats.var)?, None)),
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    ConvT { x: Var, w: Var, b: Option<Var> },
    Pool { x: Var, argmax: Vec<usize> },
    BnTrain { x: Var, gamma: Var, beta: Var, cache: BnCache },
    BnEval { x: Var, gamma: Var, beta: Var, mean: Vec<f64>, inv: Vec<f64> },
    Relu { x: Var },
    Add { a: Var, b: Var },
    Concat { a: Var, b: Var, ca: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Reverse-mode recording backend.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

/// Gradients of one backward pass, indexed by tape node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: BTreeMap<String, Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a named parameter. `None` if the parameter did not
    /// influence the output.
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).and_then(|&v| self.get(v))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    /// Back-propagates `seed` (the gradient of some scalar with respect to
    /// `output`) through the tape.
    pub fn backward(&self, output: Var, seed: &Tensor) -> Result<Gradients> {
        if self.val(output).shape() != seed.shape() {
            bail!(ShapeMismatch, "seed gradient {:?} for output {:?}", seed.shape(), self.val(output).shape());
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed.clone());
        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        for i in (0..=output.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(gy);
                    continue;
                }
                Op::Conv { x, w, b, spec } => {
                    let (gx, gw, gb) = kernels::conv3d_backward(self.val(*x), self.val(*w), b.is_some(), &gy, *spec)?;
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *w, gw);
                    if let (Some(b), Some(gb)) = (b, gb) {
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::ConvT { x, w, b } => {
                    let (gx, gw, gb) = kernels::conv_transpose2_backward(self.val(*x), self.val(*w), b.is_some(), &gy)?;
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *w, gw);
                    if let (Some(b), Some(gb)) = (b, gb) {
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::Pool { x, argmax } => {
                    let gx = kernels::max_pool2_backward(self.val(*x).shape(), argmax, &gy);
                    acc(&mut grads, *x, gx);
                }
                Op::BnTrain { x, gamma, beta, cache } => {
                    let (gx, gg, gb) = kernels::batch_norm_train_backward(self.val(*x), self.val(*gamma), cache, &gy);
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gamma, gg);
                    acc(&mut grads, *beta, gb);
                }
                Op::BnEval { x, gamma, beta, mean, inv } => {
                    let xv = self.val(*x);
                    let gv = self.val(*gamma);
                    let [n, c, ..] = xv.shape();
                    let mut gx = Tensor::zeros(xv.shape());
                    let mut gg = Tensor::zeros([1, c, 1, 1, 1]);
                    let mut gb = Tensor::zeros([1, c, 1, 1, 1]);
                    for ch in 0..c {
                        let k = gv.data()[ch] * inv[ch];
                        for s in 0..n {
                            let g = gy.slice(s, ch);
                            let xs = xv.slice(s, ch);
                            gg.data_mut()[ch] +=
                                g.iter().zip(xs).map(|(g, x)| g * (x - mean[ch]) * inv[ch]).sum::<f64>();
                            gb.data_mut()[ch] += g.iter().sum::<f64>();
                            gx.slice_mut(s, ch).iter_mut().zip(g).for_each(|(o, g)| *o = k * g);
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gamma, gg);
                    acc(&mut grads, *beta, gb);
                }
                Op::Relu { x } => {
                    let gx = kernels::relu_backward(self.val(*x), &gy);
                    acc(&mut grads, *x, gx);
                }
                Op::Add { a, b } => {
                    acc(&mut grads, *a, gy.clone());
                    acc(&mut grads, *b, gy);
                }
                Op::Concat { a, b, ca } => {
                    let (ga, gb) = kernels::concat_backward(*ca, &gy);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
            }
        }
        Ok(Gradients { grads, params: self.params.clone() })
    }
}

impl Backend for Tape {
    type Value = Var;

    fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    fn param(&mut self, name: &str, t: &Tensor) -> Var {
        let v = self.push(t.clone(), Op::Leaf);
        self.params.insert(name.to_string(), v);
        v
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.val(*v)
    }

    fn conv3d(&mut self, x: &Var, w: &Var, b: Option<&Var>, spec: ConvSpec) -> Result<Var> {
        let y = kernels::conv3d(self.val(*x), self.val(*w), b.map(|b| self.val(*b)), spec)?;
        Ok(self.push(y, Op::Conv { x: *x, w: *w, b: b.copied(), spec }))
    }

    fn conv_transpose2(&mut self, x: &Var, w: &Var, b: Option<&Var>) -> Result<Var> {
        let y = kernels::conv_transpose2(self.val(*x), self.val(*w), b.map(|b| self.val(*b)))?;
        Ok(self.push(y, Op::ConvT { x: *x, w: *w, b: b.copied() }))
    }

    fn max_pool2(&mut self, x: &Var) -> Result<Var> {
        let (y, argmax) = kernels::max_pool2(self.val(*x))?;
        Ok(self.push(y, Op::Pool { x: *x, argmax }))
    }

    fn batch_norm(&mut self, x: &Var, gamma: &Var, beta: &Var, stats: &mut RunningStats, mode: Mode) -> Result<Var> {
        let (y, cache) = bn_forward(self.val(*x), self.val(*gamma), self.val(*beta), stats, mode)?;
        let op = match cache {
            Some(cache) => Op::BnTrain { x: *x, gamma: *gamma, beta: *beta, cache },
            None => Op::BnEval {
                x: *x,
                gamma: *gamma,
                beta: *beta,
                mean: stats.mean.clone(),
                inv: stats.var.iter().map(|v| 1.0 / Float::sqrt(v + BN_EPS)).collect(),
            },
        };
        Ok(self.push(y, op))
    }

    fn relu(&mut self, x: &Var) -> Var {
        let y = kernels::relu(self.val(*x));
        self.push(y, Op::Relu { x: *x })
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = kernels::add(self.val(*a), self.val(*b))?;
        Ok(self.push(y, Op::Add { a: *a, b: *b }))
    }

    fn concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = kernels::concat(self.val(*a), self.val(*b))?;
        let ca = self.val(*a).shape()[1];
        Ok(self.push(y, Op::Concat { a: *a, b: *b, ca }))
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Immediate-mode backend. Keeps a hash of every ReLU sign pattern and
/// max-pool argmax it evaluates, so two evaluations that follow the same
/// piecewise-linear branch have equal [`Eager::signature`]s.
#[derive(Debug)]
pub struct Eager {
    signature: u64,
}

impl Default for Eager {
    fn default() -> Self {
        Self { signature: FNV_OFFSET }
    }
}

impl Eager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn signature(&self) -> u64 {
        self.signature
    }

    fn mix(&mut self, word: u64) {
        for byte in word.to_le_bytes() {
            self.signature ^= byte as u64;
            self.signature = self.signature.wrapping_mul(FNV_PRIME);
        }
    }
}

impl Backend for Eager {
    type Value = Rc<Tensor>;

    fn input(&mut self, t: Tensor) -> Rc<Tensor> {
        Rc::new(t)
    }

    fn param(&mut self, _name: &str, t: &Tensor) -> Rc<Tensor> {
        Rc::new(t.clone())
    }

    fn value<'a>(&'a self, v: &'a Rc<Tensor>) -> &'a Tensor {
        v
    }

    fn conv3d(&mut self, x: &Rc<Tensor>, w: &Rc<Tensor>, b: Option<&Rc<Tensor>>, spec: ConvSpec) -> Result<Rc<Tensor>> {
        Ok(Rc::new(kernels::conv3d(x, w, b.map(|b| &**b), spec)?))
    }

    fn conv_transpose2(&mut self, x: &Rc<Tensor>, w: &Rc<Tensor>, b: Option<&Rc<Tensor>>) -> Result<Rc<Tensor>> {
        Ok(Rc::new(kernels::conv_transpose2(x, w, b.map(|b| &**b))?))
    }

    fn max_pool2(&mut self, x: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        let (y, argmax) = kernels::max_pool2(x)?;
        for a in argmax {
            self.mix(a as u64);
        }
        Ok(Rc::new(y))
    }

    fn batch_norm(
        &mut self,
        x: &Rc<Tensor>,
        gamma: &Rc<Tensor>,
        beta: &Rc<Tensor>,
        stats: &mut RunningStats,
        mode: Mode,
    ) -> Result<Rc<Tensor>> {
        Ok(Rc::new(bn_forward(x, gamma, beta, stats, mode)?.0))
    }

    fn relu(&mut self, x: &Rc<Tensor>) -> Rc<Tensor> {
        for chunk in x.data().chunks(64) {
            let word = chunk.iter().enumerate().fold(0u64, |w, (i, &v)| w | (((v > 0.0) as u64) << i));
            self.mix(word);
        }
        Rc::new(kernels::relu(x))
    }

    fn add(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        Ok(Rc::new(kernels::add(a, b)?))
    }

    fn concat(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        Ok(Rc::new(kernels::concat(a, b)?))
    }
}
