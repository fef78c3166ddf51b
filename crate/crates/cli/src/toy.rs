//! The desk-scale network experiments: gradient checks on the toy TSNet
//! and a short fit to one phantom tooth's distance map.

use dentvox_core::augment::{standardize_crop_nearest, standardize_crop_to};
use dentvox_core::detector::{dilate, Box3};
use dentvox_core::distance::regression_target;
use dentvox_core::neural::gradcheck::{check_ops, gradcheck, GradcheckReport, OpCheck};
use dentvox_core::neural::{objective, train_step, LossTerms, Tensor, Tsnet, TsnetConfig};
use dentvox_core::phantom::{generate, PhantomSpec};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

/// Image crop and distance-regression target for one phantom tooth.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyProblem {
    pub input: Tensor,
    pub target: Tensor,
}

pub fn toy_problem(cfg: &PipelineConfig, dims: [usize; 3], seed: u64) -> Result<ToyProblem> {
    let t = &cfg.training;
    let spec = PhantomSpec { dims: t.phantom_dims, spacing_mm: t.phantom_spacing_mm, seed, ..PhantomSpec::default() };
    let truth = generate(&spec)?;
    let b = truth
        .boxes
        .iter()
        .find(|b| b.tooth_id == Some(t.tooth))
        .ok_or_else(|| CliError::Validation(format!("phantom has no tooth {}", t.tooth)))?;
    let g = truth.labels.geometry();
    let grown = dilate(b, cfg.detection.margin_mm, &Box3::new(g.extent_min(), g.extent_max())?)?;
    let image = standardize_crop_to(&truth.volume, &grown, dims)?;
    let labels = standardize_crop_nearest(&truth.labels, &grown, dims)?;
    let target = regression_target(&labels.map(|l| l == t.tooth as u16), cfg.distance.d_max_vox)?;
    Ok(ToyProblem { input: Tensor::from_volume(&image), target: Tensor::from_volume(&target) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainCurve {
    /// Loss before each step.
    pub steps: Vec<LossTerms>,
    /// Loss after the last step.
    pub last: LossTerms,
}

impl TrainCurve {
    pub fn ratio(&self) -> f64 {
        self.last.loss / self.steps.first().map_or(self.last.loss, |s| s.loss)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("step,loss,mse,weight_norm_sq\n");
        for (i, s) in self.steps.iter().chain(std::iter::once(&self.last)).enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", s.loss, s.mse, s.weight_norm_sq));
        }
        out
    }
}

/// Plain gradient descent on the toy tooth problem.
pub fn train_toy(cfg: &PipelineConfig, seed: u64) -> Result<(Tsnet, TrainCurve)> {
    let t = &cfg.training;
    let p = toy_problem(cfg, t.crop_dims, seed)?;
    let mut net = Tsnet::new(TsnetConfig { widths: t.widths, ..cfg.network.tsnet() }, seed)?;
    let mut steps = Vec::with_capacity(t.steps);
    for _ in 0..t.steps {
        steps.push(train_step(&mut net, &p.input, &p.target, t.lr, t.weight_decay)?);
    }
    let last = objective(&net, &p.input, &p.target, t.weight_decay)?;
    if !last.loss.is_finite() {
        return Err(CliError::Numerical(format!("final loss is {}", last.loss)));
    }
    Ok((net, TrainCurve { steps, last }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSummary {
    pub ops: Vec<OpCheck>,
    pub tsnet: GradcheckReport,
    pub tolerance: f64,
}

impl GradcheckSummary {
    pub fn max_rel_err(&self) -> f64 {
        self.ops.iter().map(|o| o.max_rel_err).fold(self.tsnet.max_rel_err(), f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tolerance
    }
}

/// Finite-difference checks of every op and of the toy TSNet on a phantom
/// tooth crop.
pub fn gradcheck_suite(cfg: &PipelineConfig, seed: u64) -> Result<GradcheckSummary> {
    let gc = cfg.gradcheck.config(seed);
    let ops = check_ops(gc)?;
    let input = toy_problem(cfg, cfg.gradcheck.input_dims, seed)?.input;
    let net = Tsnet::new(TsnetConfig { widths: cfg.gradcheck.widths, ..cfg.network.tsnet() }, seed)?;
    let tsnet = gradcheck(&net, &input, gc)?;
    Ok(GradcheckSummary { ops, tsnet, tolerance: cfg.gradcheck.tolerance })
}
