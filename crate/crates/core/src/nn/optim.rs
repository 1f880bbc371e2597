use serde::{Deserialize, Serialize};

use super::NnError;

/// Hyperparameters of the momentum optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Rescales the gradient when its L2 norm exceeds this value.
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(NnError::InvalidOptimizer(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::InvalidOptimizer(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

/// Heavy-ball SGD: `v <- mu * v + g`, `theta <- theta - lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub config: SgdConfig,
    pub steps: u64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(config: SgdConfig, param_count: usize) -> Result<Self, NnError> {
        config.validate()?;
        Ok(Self {
            config,
            steps: 0,
            velocity: vec![0.0; param_count],
        })
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(NnError::ShapeMismatch { expected: self.velocity.len(), got: grads.len() });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite("gradient".into()));
        }
        let scale = match self.config.max_grad_norm {
            Some(max) => {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        let (lr, mu) = (self.config.lr, self.config.momentum);
        for ((p, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = mu * *v + scale * g;
            *p -= lr * *v;
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64) -> SgdConfig {
        SgdConfig { lr, momentum: 0.9, max_grad_norm: None }
    }

    #[test]
    fn null_steps_leave_parameters_unchanged() {
        let start = vec![0.5, -1.5, 2.0];
        let mut p = start.clone();
        let mut opt = Sgd::new(cfg(0.1), 3).unwrap();
        opt.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, start);
        let mut opt = Sgd::new(cfg(0.0), 3).unwrap();
        opt.step(&mut p, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p, start);
        assert_eq!(opt.steps, 1);
    }

    #[test]
    fn step_on_quadratic_decreases_loss() {
        let loss = |p: &[f64]| p.iter().map(|x| 0.5 * x * x).sum::<f64>();
        let mut p = vec![1.0, -2.0, 0.5];
        let before = loss(&p);
        let g = p.clone();
        Sgd::new(cfg(0.1), 3).unwrap().step(&mut p, &g).unwrap();
        assert!(loss(&p) < before);
    }

    #[test]
    fn clipping_and_validation() {
        let mut p = vec![0.0, 0.0];
        let mut opt = Sgd::new(SgdConfig { lr: 1.0, momentum: 0.0, max_grad_norm: Some(1.0) }, 2).unwrap();
        opt.step(&mut p, &[3.0, 4.0]).unwrap();
        assert!((p[0] + 0.6).abs() < 1e-12 && (p[1] + 0.8).abs() < 1e-12);
        assert!(opt.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert!(Sgd::new(SgdConfig { lr: 0.1, momentum: 1.0, max_grad_norm: None }, 1).is_err());
        assert!(Sgd::new(SgdConfig { lr: -0.1, momentum: 0.5, max_grad_norm: None }, 1).is_err());
    }
}
