//! Baseline hazards `lambda_0(u)`, parametrized on log scale.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest sojourn time fed to hazards that are singular at zero.
const MIN_AGE: f64 = 1e-300;

/// A parametric baseline hazard family.
pub trait HazardFamily: Send + Sync + Debug {
    fn name(&self) -> String;
    fn num_params(&self) -> usize;
    /// Parameters the family was constructed with (log scale).
    fn default_params(&self) -> Vec<f64>;
    fn log_hazard(&self, u: f64, params: &[f64]) -> f64;
    /// Returns `log lambda_0(u)` and accumulates its parameter gradient.
    fn log_hazard_grad(&self, u: f64, params: &[f64], grad: &mut [f64]) -> f64;
}

/// Constant hazard; params `[log rate]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub rate: f64,
}

impl HazardFamily for Exponential {
    fn name(&self) -> String {
        "exponential".into()
    }
    fn num_params(&self) -> usize {
        1
    }
    fn default_params(&self) -> Vec<f64> {
        vec![self.rate.ln()]
    }
    fn log_hazard(&self, _u: f64, params: &[f64]) -> f64 {
        params[0]
    }
    fn log_hazard_grad(&self, _u: f64, params: &[f64], grad: &mut [f64]) -> f64 {
        grad[0] += 1.0;
        params[0]
    }
}

/// `lambda_0(u) = k u^(k-1) / sigma^k`; params `[log k, log sigma]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weibull {
    pub shape: f64,
    pub scale: f64,
}

impl HazardFamily for Weibull {
    fn name(&self) -> String {
        "weibull".into()
    }
    fn num_params(&self) -> usize {
        2
    }
    fn default_params(&self) -> Vec<f64> {
        vec![self.shape.ln(), self.scale.ln()]
    }
    fn log_hazard(&self, u: f64, params: &[f64]) -> f64 {
        let k = params[0].exp();
        params[0] - k * params[1] + (k - 1.0) * u.max(MIN_AGE).ln()
    }
    fn log_hazard_grad(&self, u: f64, params: &[f64], grad: &mut [f64]) -> f64 {
        let k = params[0].exp();
        let lu = u.max(MIN_AGE).ln();
        grad[0] += 1.0 + k * (lu - params[1]);
        grad[1] -= k;
        params[0] - k * params[1] + (k - 1.0) * lu
    }
}

/// Piecewise-constant hazard with fixed cut points; params are the log levels
/// on `(-inf, c_1], (c_1, c_2], ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    cuts: Vec<f64>,
    levels: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(cuts: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != cuts.len() + 1 {
            return Err(Error::Shape(format!(
                "{} cut points need {} levels, got {}",
                cuts.len(),
                cuts.len() + 1,
                levels.len()
            )));
        }
        if cuts.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Validation(
                "cut points must strictly increase".into(),
            ));
        }
        if levels.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::Validation("hazard levels must be positive".into()));
        }
        Ok(PiecewiseConstant { cuts, levels })
    }

    #[inline]
    fn piece(&self, u: f64) -> usize {
        self.cuts.iter().take_while(|&&c| u > c).count()
    }
}

impl HazardFamily for PiecewiseConstant {
    fn name(&self) -> String {
        "piecewise_constant".into()
    }
    fn num_params(&self) -> usize {
        self.levels.len()
    }
    fn default_params(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.ln()).collect()
    }
    fn log_hazard(&self, u: f64, params: &[f64]) -> f64 {
        params[self.piece(u)]
    }
    fn log_hazard_grad(&self, u: f64, params: &[f64], grad: &mut [f64]) -> f64 {
        let j = self.piece(u);
        grad[j] += 1.0;
        params[j]
    }
}

/// Time origin of the baseline hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Hazard evaluated in time since entering the current state.
    #[default]
    Reset,
    /// Hazard evaluated in global time.
    Forward,
}

/// A hazard family bound to a clock, either fixed or trainable.
#[derive(Debug, Clone)]
pub struct BaselineHazard {
    pub family: Arc<dyn HazardFamily>,
    pub clock: Clock,
    pub trainable: bool,
}

impl BaselineHazard {
    pub fn new(family: impl HazardFamily + 'static, clock: Clock) -> Self {
        BaselineHazard {
            family: Arc::new(family),
            clock,
            trainable: false,
        }
    }

    pub fn trainable(mut self) -> Self {
        self.trainable = true;
        self
    }

    /// Hazard argument at global time `t` for a state entered at `entry`.
    #[inline]
    pub fn age(&self, t: f64, entry: f64) -> f64 {
        match self.clock {
            Clock::Reset => t - entry,
            Clock::Forward => t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::check::check_hazard;

    #[test]
    fn weibull_example() {
        let w = Weibull {
            shape: 2.0,
            scale: 1.0,
        };
        let v = w.log_hazard(3.0, &w.default_params());
        assert!((v - 6.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn piecewise_levels() {
        let p = PiecewiseConstant::new(vec![1.0, 2.0], vec![0.5, 1.0, 2.0]).unwrap();
        let d = p.default_params();
        assert_eq!(p.log_hazard(0.5, &d), 0.5f64.ln());
        assert_eq!(p.log_hazard(1.5, &d), 0.0);
        assert_eq!(p.log_hazard(7.0, &d), 2.0f64.ln());
        assert!(PiecewiseConstant::new(vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn clock_modes() {
        let h = BaselineHazard::new(Exponential { rate: 0.1 }, Clock::Reset);
        assert_eq!(h.age(5.0, 2.0), 3.0);
        let h = BaselineHazard::new(Exponential { rate: 0.1 }, Clock::Forward);
        assert_eq!(h.age(5.0, 2.0), 5.0);
    }

    #[test]
    fn gradients_pass_self_check() {
        check_hazard(&Exponential { rate: 0.3 }, 1).unwrap();
        check_hazard(
            &Weibull {
                shape: 1.5,
                scale: 2.0,
            },
            2,
        )
        .unwrap();
        check_hazard(
            &PiecewiseConstant::new(vec![2.0, 5.0], vec![0.1, 0.2, 0.4]).unwrap(),
            3,
        )
        .unwrap();
    }
}
