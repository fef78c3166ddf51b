//! Central-difference gradient checks.
//!
//! The scalar under test is `L = Σ y ⊙ R` for a fixed random projection
//! `R`, so every output element contributes. Analytic gradients come from
//! the [`Tape`]; numerical ones from two [`Eager`] evaluations at `θ ± h`.
//! A sample whose ReLU/argmax signature differs between `θ - h`, `θ` and
//! `θ + h` straddles a kink and is replaced by another index.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::backend::{Backend, Eager, Mode, RunningStats, Tape};
use super::kernels::{self, ConvSpec};
use super::layers::{Model, ParamSet, StatsSet};
use super::Tensor;
use crate::error::bail;
use crate::rng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub samples_per_tensor: usize,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, tolerance: 1e-4, floor: 1e-3, samples_per_tensor: 50, seed: 0, mode: Mode::Train }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub kink_skips: usize,
    pub max_rel_err: f64,
    /// `(index, analytic, numeric)` of the worst sample.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn kink_skips(&self) -> usize {
        self.tensors.iter().map(|t| t.kink_skips).sum()
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err() <= tolerance && self.checked() > 0
    }
}

fn projected<M: Model>(model: &mut M, input: &Tensor, proj: &Tensor, mode: Mode) -> Result<(f64, u64)> {
    let mut e = Eager::new();
    let x = e.input(input.clone());
    let y = model.forward(&mut e, x, mode)?;
    if y.shape() != proj.shape() {
        bail!(ShapeMismatch, "output shape changed during gradient check");
    }
    let l = y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum();
    Ok((l, e.signature()))
}

/// Checks the tape gradient of every parameter tensor of `model` against
/// central differences. The model is cloned; running statistics of the
/// caller's copy are untouched.
pub fn gradcheck<M: Model + Clone>(model: &M, input: &Tensor, cfg: GradcheckConfig) -> Result<GradcheckReport> {
    if !(cfg.step > 0.0) || cfg.samples_per_tensor == 0 {
        bail!(InvalidArgument, "gradient check needs a positive step and sample count");
    }
    let mut m = model.clone();
    let mut rng = rng::seeded(cfg.seed);

    let mut tape = Tape::new();
    let x = tape.input(input.clone());
    let y = m.forward(&mut tape, x, cfg.mode)?;
    let shape = tape.value(&y).shape();
    let n: usize = shape.iter().product();
    let proj = Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let grads = tape.backward(y, &proj)?;
    drop(tape);

    let (_, base_sig) = projected(&mut m, input, &proj, cfg.mode)?;
    let names: Vec<String> = m.params().iter().map(|p| p.name.clone()).collect();
    let mut report = GradcheckReport { tensors: Vec::new() };
    for name in names {
        let len = m.params().get(&name)?.len();
        let analytic = match grads.param(&name) {
            Some(g) => g.clone(),
            None => Tensor::zeros(m.params().get(&name)?.shape()),
        };
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        let mut check = TensorCheck { name: name.clone(), checked: 0, kink_skips: 0, max_rel_err: 0.0, worst: None };
        for idx in order {
            if check.checked == cfg.samples_per_tensor {
                break;
            }
            let orig = m.params().get(&name)?.data()[idx];
            m.params_mut().get_mut(&name)?.data_mut()[idx] = orig + cfg.step;
            let plus = projected(&mut m, input, &proj, cfg.mode);
            m.params_mut().get_mut(&name)?.data_mut()[idx] = orig - cfg.step;
            let minus = projected(&mut m, input, &proj, cfg.mode);
            m.params_mut().get_mut(&name)?.data_mut()[idx] = orig;
            let ((lp, sp), (lm, sm)) = (plus?, minus?);
            if sp != base_sig || sm != base_sig {
                check.kink_skips += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let err = relative_error(analytic.data()[idx], numeric, cfg.floor);
            if check.worst.is_none() || err > check.max_rel_err {
                check.max_rel_err = err;
                check.worst = Some((idx, analytic.data()[idx], numeric));
            }
            check.checked += 1;
        }
        report.tensors.push(check);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Conv3d,
    Conv3dStrided,
    ConvTranspose2,
    MaxPool2,
    BatchNormTrain,
    BatchNormEval,
    Relu,
    Add,
    Concat,
}

impl OpKind {
    pub const ALL: [OpKind; 9] = [
        OpKind::Conv3d,
        OpKind::Conv3dStrided,
        OpKind::ConvTranspose2,
        OpKind::MaxPool2,
        OpKind::BatchNormTrain,
        OpKind::BatchNormEval,
        OpKind::Relu,
        OpKind::Add,
        OpKind::Concat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Conv3d => "conv3d",
            OpKind::Conv3dStrided => "conv3d_strided",
            OpKind::ConvTranspose2 => "conv_transpose2",
            OpKind::MaxPool2 => "max_pool2",
            OpKind::BatchNormTrain => "batch_norm_train",
            OpKind::BatchNormEval => "batch_norm_eval",
            OpKind::Relu => "relu",
            OpKind::Add => "add",
            OpKind::Concat => "concat",
        }
    }
}

/// One operation with all of its operands exposed as parameters.
#[derive(Debug, Clone)]
pub struct OpModel {
    pub kind: OpKind,
    params: ParamSet,
    stats: StatsSet,
}

impl OpModel {
    pub fn new(kind: OpKind, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut rand = |shape: [usize; 5]| {
            let n: usize = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized")
        };
        let mut p = ParamSet::new();
        let mut stats = StatsSet::default();
        match kind {
            OpKind::Conv3d => {
                p.push("x", rand([1, 4, 4, 3, 5]), false);
                p.push("w", rand([4, 2, 3, 3, 3]), false);
                p.push("b", rand([1, 4, 1, 1, 1]), false);
            }
            OpKind::Conv3dStrided => {
                p.push("x", rand([2, 3, 5, 4, 6]), false);
                p.push("w", rand([2, 3, 3, 3, 3]), false);
            }
            OpKind::ConvTranspose2 => {
                p.push("x", rand([1, 3, 2, 3, 2]), false);
                p.push("w", rand([3, 2, 2, 2, 2]), false);
                p.push("b", rand([1, 2, 1, 1, 1]), false);
            }
            OpKind::MaxPool2 => p.push("x", rand([1, 2, 4, 4, 6]), false),
            OpKind::BatchNormTrain | OpKind::BatchNormEval => {
                p.push("x", rand([2, 3, 3, 2, 4]), false);
                p.push("gamma", rand([1, 3, 1, 1, 1]), false);
                p.push("beta", rand([1, 3, 1, 1, 1]), false);
                let mut s = RunningStats::new("bn", 3);
                let m = rand([1, 3, 1, 1, 1]);
                let v = rand([1, 3, 1, 1, 1]);
                s.mean = m.data().to_vec();
                s.var = v.data().iter().map(|a| 0.5 + a.abs()).collect();
                stats.push(s);
            }
            OpKind::Relu => p.push("x", rand([1, 2, 3, 3, 3]), false),
            OpKind::Add | OpKind::Concat => {
                p.push("a", rand([1, 2, 3, 2, 3]), false);
                let cb = if kind == OpKind::Add { 2 } else { 3 };
                p.push("b", rand([1, cb, 3, 2, 3]), false);
            }
        }
        Self { kind, params: p, stats }
    }
}

impl Model for OpModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward<B: Backend>(&mut self, b: &mut B, _x: B::Value, _mode: Mode) -> Result<B::Value> {
        let get = |b: &mut B, n: &str| -> Result<B::Value> { Ok(b.param(n, self.params.get(n)?)) };
        match self.kind {
            OpKind::Conv3d => {
                let (x, w, bias) = (get(b, "x")?, get(b, "w")?, get(b, "b")?);
                b.conv3d(&x, &w, Some(&bias), ConvSpec::same(3, 2))
            }
            OpKind::Conv3dStrided => {
                let (x, w) = (get(b, "x")?, get(b, "w")?);
                b.conv3d(&x, &w, None, ConvSpec { stride: 2, padding: 1, groups: 1 })
            }
            OpKind::ConvTranspose2 => {
                let (x, w, bias) = (get(b, "x")?, get(b, "w")?, get(b, "b")?);
                b.conv_transpose2(&x, &w, Some(&bias))
            }
            OpKind::MaxPool2 => {
                let x = get(b, "x")?;
                b.max_pool2(&x)
            }
            OpKind::BatchNormTrain | OpKind::BatchNormEval => {
                let (x, g, bt) = (get(b, "x")?, get(b, "gamma")?, get(b, "beta")?);
                let mode = if self.kind == OpKind::BatchNormTrain { Mode::Train } else { Mode::Eval };
                b.batch_norm(&x, &g, &bt, self.stats.get_mut("bn")?, mode)
            }
            OpKind::Relu => {
                let x = get(b, "x")?;
                Ok(b.relu(&x))
            }
            OpKind::Add => {
                let (p, q) = (get(b, "a")?, get(b, "b")?);
                b.add(&p, &q)
            }
            OpKind::Concat => {
                let (p, q) = (get(b, "a")?, get(b, "b")?);
                b.concat(&p, &q)
            }
        }
    }
}

/// Result of checking one operation or loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

fn check_scalar(
    name: &str,
    x: &Tensor,
    analytic: &Tensor,
    f: impl Fn(&Tensor) -> Result<f64>,
    cfg: GradcheckConfig,
) -> Result<OpCheck> {
    let mut t = x.clone();
    let mut worst: f64 = 0.0;
    let n = x.len().min(cfg.samples_per_tensor);
    for i in 0..n {
        let orig = t.data()[i];
        t.data_mut()[i] = orig + cfg.step;
        let lp = f(&t)?;
        t.data_mut()[i] = orig - cfg.step;
        let lm = f(&t)?;
        t.data_mut()[i] = orig;
        worst = worst.max(relative_error(analytic.data()[i], (lp - lm) / (2.0 * cfg.step), cfg.floor));
    }
    Ok(OpCheck { name: name.to_string(), checked: n, max_rel_err: worst })
}

/// Gradient checks for every engine operation plus the MSE and weight-norm
/// loss terms.
pub fn check_ops(cfg: GradcheckConfig) -> Result<Vec<OpCheck>> {
    let mut out = Vec::new();
    let dummy = Tensor::zeros([1, 1, 1, 1, 1]);
    for (i, kind) in OpKind::ALL.into_iter().enumerate() {
        let m = OpModel::new(kind, cfg.seed.wrapping_add(i as u64));
        let r = gradcheck(&m, &dummy, cfg)?;
        out.push(OpCheck { name: kind.as_str().to_string(), checked: r.checked(), max_rel_err: r.max_rel_err() });
    }
    let a = OpModel::new(OpKind::Add, cfg.seed.wrapping_add(100));
    let (pred, target) = (a.params.get("a")?.clone(), a.params.get("b")?.clone());
    let (_, g) = kernels::mse(&pred, &target)?;
    out.push(check_scalar("mse", &pred, &g, |p| Ok(kernels::mse(p, &target)?.0), cfg)?);
    let mut g2 = pred.clone();
    g2.data_mut().iter_mut().for_each(|v| *v *= 2.0);
    out.push(check_scalar("weight_norm_sq", &pred, &g2, |p| Ok(p.sum_squares()), cfg)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::SkipBlockModel;

    #[test]
    fn every_op_passes() {
        let cfg = GradcheckConfig::default();
        for c in check_ops(cfg).unwrap() {
            assert!(c.checked > 0, "{}", c.name);
            assert!(c.max_rel_err <= cfg.tolerance, "{}: {}", c.name, c.max_rel_err);
        }
    }

    #[test]
    fn skip_block_passes() {
        let m = SkipBlockModel::new(4, 8, 4, 3).unwrap();
        let mut r = rng::seeded(1);
        let x = Tensor::from_vec([1, 4, 4, 4, 4], (0..256).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let rep = gradcheck(&m, &x, GradcheckConfig::default()).unwrap();
        assert!(rep.passed(1e-4), "{:?}", rep);
    }

    #[test]
    fn broken_gradient_is_detected() {
        // a relative error this large must be reported, not hidden by the floor
        assert!(relative_error(1.0, 1.001, 1e-6) > 1e-4);
        assert_eq!(relative_error(0.0, 0.0, 1e-6), 0.0);
    }
}
