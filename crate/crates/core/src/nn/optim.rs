use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RMSprop hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rmsprop {
    pub learning_rate: f64,
    pub decay_rho: f64,
    pub epsilon: f64,
}

impl Default for Rmsprop {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay_rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl Rmsprop {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_rho > 0.0 && self.decay_rho < 1.0) {
            return Err(Error::Config(format!(
                "rmsprop decay must lie in (0, 1), got {}",
                self.decay_rho
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config(
                "rmsprop learning rate and epsilon must be positive".into(),
            ));
        }
        Ok(())
    }

    /// One in-place update:
    /// `cache = rho*cache + (1-rho)*g^2`, `param -= lr*g/(sqrt(cache)+eps)`.
    pub fn step(&self, param: &mut [f64], grad: &[f64], cache: &mut [f64]) -> Result<()> {
        if param.len() != grad.len() || cache.len() != grad.len() {
            return Err(Error::shape("rmsprop", param.len(), grad.len()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient coordinate {i}")));
        }
        let rho = self.decay_rho;
        for ((p, &g), c) in param.iter_mut().zip(grad).zip(cache.iter_mut()) {
            *c = rho * *c + (1.0 - rho) * g * g;
            *p -= self.learning_rate * g / (c.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_param_and_decays_cache() {
        let opt = Rmsprop::default();
        let mut p = [1.5, -2.0];
        let mut c = [0.4, 1.0];
        opt.step(&mut p, &[0.0, 0.0], &mut c).unwrap();
        assert_eq!(p, [1.5, -2.0]);
        assert!((c[0] - 0.36).abs() < 1e-15);
        assert!((c[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn first_step_closed_form() {
        let opt = Rmsprop::default();
        let mut p = [0.0];
        let mut c = [0.0];
        opt.step(&mut p, &[2.0], &mut c).unwrap();
        // -0.001 * 2 / sqrt(0.4)
        assert!((p[0] + 0.0031622776601683794).abs() < 1e-9, "{}", p[0]);
        assert!((c[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn opposite_gradients_give_opposite_updates() {
        let opt = Rmsprop::default();
        let (mut p1, mut c1) = ([0.0], [0.0]);
        let (mut p2, mut c2) = ([0.0], [0.0]);
        opt.step(&mut p1, &[0.7], &mut c1).unwrap();
        opt.step(&mut p2, &[-0.7], &mut c2).unwrap();
        assert_eq!(p1[0], -p2[0]);
        assert_eq!(c1, c2);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let opt = Rmsprop::default();
        let mut p = [0.0, 0.0];
        let mut c = [0.0, 0.0];
        assert!(opt.step(&mut p, &[1.0, f64::NAN], &mut c).is_err());
        assert!(opt.step(&mut p, &[f64::INFINITY, 0.0], &mut c).is_err());
    }

    #[test]
    fn decay_out_of_range_is_invalid() {
        let opt = Rmsprop {
            decay_rho: 1.0,
            ..Rmsprop::default()
        };
        assert!(opt.validate().is_err());
    }
}
