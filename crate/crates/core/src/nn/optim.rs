//! SGD with momentum (coupled L2 decay) and AdamW (decoupled decay).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum {
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    },
    AdamW {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl OptimizerKind {
    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        OptimizerKind::AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::SgdMomentum { lr, .. } | OptimizerKind::AdamW { lr, .. } => lr,
        }
    }
}

/// SGD-momentum settings with a single step decay of the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdSchedule {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Multiplier applied from `decay_epoch` on.
    pub decay_factor: f64,
    pub decay_epoch: usize,
}

impl SgdSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.lr * self.decay_factor
        } else {
            self.lr
        }
    }

    pub fn optimizer(&self) -> Result<Optimizer> {
        Optimizer::new(OptimizerKind::SgdMomentum {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Result<Self> {
        if !(kind.lr() > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(Self {
            kind,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn set_lr(&mut self, new_lr: f64) {
        match &mut self.kind {
            OptimizerKind::SgdMomentum { lr, .. } | OptimizerKind::AdamW { lr, .. } => *lr = new_lr,
        }
    }

    /// Apply one update to `params` in place.
    pub fn step(&mut self, mut params: Vec<&mut [f64]>, grads: &Gradients) -> Result<()> {
        if params.len() != grads.tensors.len() || params.iter().zip(&grads.tensors).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::Shape("gradients do not match parameters".into()));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            if matches!(self.kind, OptimizerKind::AdamW { .. }) {
                self.second = self.first.clone();
            }
        } else if self.first.len() != params.len() || self.first.iter().zip(&params).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.steps += 1;

        match self.kind {
            OptimizerKind::SgdMomentum {
                lr,
                momentum,
                weight_decay,
            } => {
                for ((p, g), v) in params.iter_mut().zip(&grads.tensors).zip(&mut self.first) {
                    for ((w, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *vi = momentum * *vi + gi + weight_decay * *w;
                        *w -= lr * *vi;
                    }
                }
            }
            OptimizerKind::AdamW {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                let t = self.steps as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(&grads.tensors)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((w, &gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *w -= lr * weight_decay * *w;
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        self.step(net.params_mut(), grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(v: Vec<f64>) -> Gradients {
        Gradients { tensors: vec![v] }
    }

    #[test]
    fn zero_gradient_no_decay_is_a_no_op() {
        for kind in [
            OptimizerKind::SgdMomentum {
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 0.0,
            },
            OptimizerKind::adamw(0.01, 0.0),
        ] {
            let mut opt = Optimizer::new(kind).unwrap();
            let mut w = vec![0.3, -1.2];
            for _ in 0..3 {
                opt.step(vec![&mut w], &grads(vec![0.0, 0.0])).unwrap();
            }
            assert_eq!(w, vec![0.3, -1.2]);
        }
    }

    #[test]
    fn sgd_hand_arithmetic() {
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum {
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        })
        .unwrap();
        let mut w = vec![0.0];
        opt.step(vec![&mut w], &grads(vec![1.0])).unwrap();
        assert!((w[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
        })
        .unwrap();
        let mut w = vec![0.0];
        opt.step(vec![&mut w], &grads(vec![1.0])).unwrap();
        opt.step(vec![&mut w], &grads(vec![1.0])).unwrap();
        // v1 = 1, v2 = 1.9
        assert!((w[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn adamw_decay_is_decoupled() {
        let (lr, wd) = (0.01, 0.5);
        let mut opt = Optimizer::new(OptimizerKind::adamw(lr, wd)).unwrap();
        let mut w = vec![2.0, -4.0];
        opt.step(vec![&mut w], &grads(vec![0.0, 0.0])).unwrap();
        assert!((w[0] - 2.0 * (1.0 - lr * wd)).abs() < 1e-15);
        assert!((w[1] + 4.0 * (1.0 - lr * wd)).abs() < 1e-15);
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let mut opt = Optimizer::new(OptimizerKind::adamw(0.01, 0.0)).unwrap();
        let mut w = vec![1.0];
        opt.step(vec![&mut w], &grads(vec![3.0])).unwrap();
        assert!((w[0] - (1.0 - 0.01 * 3.0 / (3.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes() {
        let mut opt = Optimizer::new(OptimizerKind::adamw(0.01, 0.0)).unwrap();
        let mut w = vec![1.0, 2.0];
        assert!(opt.step(vec![&mut w], &grads(vec![0.0])).is_err());
        assert!(Optimizer::new(OptimizerKind::adamw(0.0, 0.0)).is_err());
    }
}
