use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub dampening: f64,
    pub nesterov: bool,
}

impl Default for SgdConfig {
    /// Training recipe used for every network: momentum 0.9, weight decay
    /// 5e-4, no dampening, Nesterov update.
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 0.0005,
            dampening: 0.0,
            nesterov: true,
        }
    }
}

impl SgdConfig {
    pub fn plain() -> Self {
        Self {
            momentum: 0.0,
            weight_decay: 0.0,
            dampening: 0.0,
            nesterov: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.momentum < 0.0 || self.weight_decay < 0.0 || self.dampening < 0.0 {
            return Err(Error::Config(format!("negative SGD hyperparameter in {self:?}")));
        }
        Ok(())
    }
}

/// SGD with momentum buffers, one per parameter.
///
/// ```text
/// g   = grad + weight_decay * param
/// buf = momentum * buf + (1 - dampening) * g      (buf = g on the first step)
/// d   = g + momentum * buf    if nesterov, else buf
/// param -= lr * d
/// ```
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub config: SgdConfig,
    buffers: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            buffers: Vec::new(),
        }
    }

    pub fn buffer(&self, index: usize) -> Option<&[T]> {
        self.buffers.get(index)?.as_deref()
    }

    /// Applies one update to every parameter; each must carry a gradient.
    pub fn step(&mut self, params: &mut [(String, Tensor<T>)], lr: f64) -> Result<()> {
        if let Some((name, _)) = params.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(Error::MissingGradient(name.clone()));
        }
        if self.buffers.len() < params.len() {
            self.buffers.resize(params.len(), None);
        }
        for (i, (_, param)) in params.iter_mut().enumerate() {
            let grad = param.grad.take().expect("checked above");
            self.update(i, param.data_mut(), &grad, None, lr);
            param.grad = Some(grad);
        }
        Ok(())
    }

    /// Updates a single flat parameter buffer, optionally only at the
    /// offsets in `support`; other entries and their momentum stay untouched.
    pub fn update(&mut self, index: usize, param: &mut [T], grad: &[T], support: Option<&[usize]>, lr: f64) {
        assert_eq!(param.len(), grad.len(), "gradient/parameter length mismatch");
        if self.buffers.len() <= index {
            self.buffers.resize(index + 1, None);
        }
        let cfg = self.config;
        let (momentum, wd) = (T::from_f64(cfg.momentum), T::from_f64(cfg.weight_decay));
        let damp = T::from_f64(1.0 - cfg.dampening);
        let lr = T::from_f64(lr);
        let fresh = self.buffers[index].is_none();
        let buf = self.buffers[index].get_or_insert_with(|| vec![T::zero(); param.len()]);
        let mut apply = |j: usize, param: &mut [T]| {
            let g = grad[j] + wd * param[j];
            let direction = if cfg.momentum != 0.0 {
                buf[j] = if fresh { g } else { momentum * buf[j] + damp * g };
                if cfg.nesterov {
                    g + momentum * buf[j]
                } else {
                    buf[j]
                }
            } else {
                g
            };
            param[j] = param[j] - lr * direction;
        };
        match support {
            Some(offsets) => offsets.iter().for_each(|&j| apply(j, param)),
            None => (0..param.len()).for_each(|j| apply(j, param)),
        }
    }
}
