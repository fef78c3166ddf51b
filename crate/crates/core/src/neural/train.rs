use super::backend::{Backend, Mode, Tape};
use super::kernels;
use super::layers::{predict, Model};
use super::Tensor;
use crate::error::bail;
use crate::Result;

/// Weight-norm coefficient α of the distance-regression objective.
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.1;

/// Terms of `MSE(pred, target) + α·Σ‖W‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    pub mse: f64,
    pub weight_norm_sq: f64,
}

impl LossTerms {
    fn new(mse: f64, weight_norm_sq: f64, alpha: f64) -> Self {
        Self { loss: mse + alpha * weight_norm_sq, mse, weight_norm_sq }
    }
}

/// Evaluates the objective without changing parameters (batch statistics,
/// as during training).
pub fn objective<M: Model + Clone>(model: &M, input: &Tensor, target: &Tensor, alpha: f64) -> Result<LossTerms> {
    let mut m = model.clone();
    let pred = predict(&mut m, input, Mode::Train)?;
    let (mse, _) = kernels::mse(&pred, target)?;
    Ok(LossTerms::new(mse, model.params().weight_norm_sq(), alpha))
}

/// One plain gradient-descent step on `MSE + α·Σ‖W‖²`. Returns the loss
/// before the update. A non-finite loss or gradient aborts without
/// touching the parameters.
pub fn train_step<M: Model>(model: &mut M, input: &Tensor, target: &Tensor, lr: f64, alpha: f64) -> Result<LossTerms> {
    if !(lr >= 0.0) || !lr.is_finite() || !(alpha >= 0.0) || !alpha.is_finite() {
        bail!(InvalidArgument, "learning rate and weight decay must be finite and non-negative");
    }
    let mut tape = Tape::new();
    let x = tape.input(input.clone());
    let y = model.forward(&mut tape, x, Mode::Train)?;
    let (mse, seed) = kernels::mse(tape.value(&y), target)?;
    let terms = LossTerms::new(mse, model.params().weight_norm_sq(), alpha);
    if !terms.loss.is_finite() {
        bail!(NonFinite, "training loss is {}", terms.loss);
    }
    let grads = tape.backward(y, &seed)?;
    drop(tape);
    let mut updates = alloc::vec::Vec::with_capacity(model.params().len());
    for p in model.params().iter() {
        let mut g = grads.param(&p.name).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape()));
        if p.decay {
            g.data_mut().iter_mut().zip(p.value.data()).for_each(|(g, w)| *g += 2.0 * alpha * w);
        }
        if g.data().iter().any(|v| !v.is_finite()) {
            bail!(NonFinite, "gradient of '{}' is not finite", p.name);
        }
        updates.push(g);
    }
    for (p, g) in model.params_mut().iter_mut().zip(updates) {
        p.value.data_mut().iter_mut().zip(g.data()).for_each(|(w, g)| *w -= lr * g);
    }
    Ok(terms)
}
