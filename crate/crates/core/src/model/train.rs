use log::debug;

use crate::error::{Error, Result};

use super::{Example, Model, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Weight of the category loss relative to the label loss.
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 200, lr: 0.5, lambda: 1.0 }
    }
}

/// Full-batch gradient descent on `model`. Returns the loss measured at the
/// start of each epoch, before that epoch's update.
pub fn train_model(model: &mut Model, data: &[Example], cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::Argument("epochs must be at least 1".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Argument(format!("learning rate {} must be finite and non-negative", cfg.lr)));
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grads) = model.loss_and_grads(data, cfg.lambda)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        debug!("epoch {epoch}: loss {loss:.6}");
        history.push(loss);
        if cfg.lr == 0.0 {
            continue;
        }
        let g = grads.tensors();
        for ((name, param), (gname, grad)) in model.trainable_tensors_mut().into_iter().zip(g) {
            debug_assert_eq!(name, gname);
            param.axpy(-cfg.lr, grad)?;
        }
    }
    Ok(history)
}

/// Initializes a model from `model_cfg` (seeded) and trains it.
pub fn train(data: &[Example], model_cfg: ModelConfig, cfg: &TrainConfig) -> Result<(Model, Vec<f64>)> {
    let mut model = Model::init(model_cfg)?;
    let history = train_model(&mut model, data, cfg)?;
    Ok((model, history))
}
