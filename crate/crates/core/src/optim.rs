//! First-order optimizers and the reduce-on-plateau learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Rmsprop {
        lr: f64,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_rho() -> f64 {
    0.9
}
fn default_eps() -> f64 {
    1e-7
}

impl OptimizerConfig {
    /// Adam with the pix2pix momentum setting.
    pub fn gan_adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-7,
        }
    }

    pub fn rmsprop(lr: f64) -> Self {
        OptimizerConfig::Rmsprop {
            lr,
            rho: 0.9,
            eps: 1e-7,
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerConfig::Adam { lr, .. } | OptimizerConfig::Rmsprop { lr, .. } => *lr,
        }
    }

    pub fn with_lr(&self, new_lr: f64) -> Self {
        let mut c = self.clone();
        match &mut c {
            OptimizerConfig::Adam { lr, .. } | OptimizerConfig::Rmsprop { lr, .. } => *lr = new_lr,
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
            OptimizerConfig::Rmsprop { lr, rho, eps } => lr > 0.0 && (0.0..1.0).contains(&rho) && eps > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Optimizer state bound to one [`ParamStore`] layout.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    lr: f64,
    steps: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f32>> = params.values().iter().map(|t| vec![0.0; t.len()]).collect();
        Optimizer {
            lr: config.lr(),
            config,
            steps: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.steps += 1;
        let lr = self.lr as f32;
        match self.config {
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => {
                let (b1, b2, eps) = (beta1 as f32, beta2 as f32, eps as f32);
                let c1 = 1.0 - (beta1.powi(self.steps as i32)) as f32;
                let c2 = 1.0 - (beta2.powi(self.steps as i32)) as f32;
                for i in 0..params.len() {
                    let (value, grad) = params.value_and_grad_mut(i);
                    let m = &mut self.first[i];
                    let v = &mut self.second[i];
                    for (((p, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let mhat = *m / c1;
                        let vhat = *v / c2;
                        *p -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            OptimizerConfig::Rmsprop { rho, eps, .. } => {
                let (rho, eps) = (rho as f32, eps as f32);
                for i in 0..params.len() {
                    let (value, grad) = params.value_and_grad_mut(i);
                    let v = &mut self.second[i];
                    for ((p, &g), v) in value.data_mut().iter_mut().zip(grad.data()).zip(v.iter_mut()) {
                        *v = rho * *v + (1.0 - rho) * g * g;
                        *p -= lr * g / (v.sqrt() + eps);
                    }
                }
            }
        }
        params.zero_grads();
    }
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// improvement of the monitored loss (by more than `min_delta`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    #[serde(default = "default_min_delta")]
    pub min_delta: f64,
    #[serde(default)]
    pub min_lr: f64,
    #[serde(skip)]
    best: Option<f64>,
    #[serde(skip)]
    wait: usize,
}

fn default_min_delta() -> f64 {
    1e-4
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        PlateauSchedule::new(0.1, 5)
    }
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize) -> Self {
        PlateauSchedule {
            factor,
            patience,
            min_delta: default_min_delta(),
            min_lr: 0.0,
            best: None,
            wait: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor <= 1.0) || self.patience == 0 {
            return Err(Error::Config(format!(
                "plateau schedule needs factor in (0,1] and patience >= 1, got {} / {}",
                self.factor, self.patience
            )));
        }
        Ok(())
    }

    /// Feeds one epoch's loss; returns the new learning rate when it changes.
    pub fn observe(&mut self, loss: f64, current_lr: f64) -> Option<f64> {
        match self.best {
            Some(best) if loss >= best - self.min_delta => {
                self.wait += 1;
                if self.wait >= self.patience {
                    self.wait = 0;
                    let next = (current_lr * self.factor).max(self.min_lr);
                    if next < current_lr {
                        return Some(next);
                    }
                }
                None
            }
            _ => {
                self.best = Some(loss);
                self.wait = 0;
                None
            }
        }
    }
}
