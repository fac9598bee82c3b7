//! Link functions `g(t, X, psi)` entering transition intensities through
//! `alpha . g`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::families::Regression;
use super::quadrature::{gauss_legendre, GaussLegendre, DEFAULT_NODES};
use crate::error::{Error, Result};

pub trait Link: Send + Sync + Debug {
    fn output_dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], psi: &[f64], out: &mut [f64]);
    /// `d g / d psi`, row-major `output_dim x psi_dim`.
    fn jac_psi(&self, t: f64, x: &[f64], psi: &[f64], jac: &mut [f64]);
}

/// One component of a composite link built from the regression function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LinkPart {
    /// `h(t, psi)`.
    Value,
    /// `dh/dt (t, psi)`.
    Slope,
    /// `int_from^t h(w, psi) dw`.
    Cumulative { from: f64 },
}

/// Concatenation of [`LinkPart`]s of one regression function. An empty part
/// list is the null link (no association).
#[derive(Debug, Clone)]
pub struct CompositeLink {
    regression: Arc<dyn Regression>,
    parts: Vec<LinkPart>,
    rule: Arc<GaussLegendre>,
}

impl CompositeLink {
    pub fn new(regression: Arc<dyn Regression>, parts: Vec<LinkPart>) -> Result<Self> {
        for p in &parts {
            if let LinkPart::Cumulative { from } = p {
                if !from.is_finite() {
                    return Err(Error::Validation(
                        "cumulative link needs a finite lower bound".into(),
                    ));
                }
            }
        }
        Ok(CompositeLink {
            regression,
            parts,
            rule: gauss_legendre(DEFAULT_NODES),
        })
    }

    pub fn null(regression: Arc<dyn Regression>) -> Self {
        CompositeLink {
            regression,
            parts: Vec::new(),
            rule: gauss_legendre(DEFAULT_NODES),
        }
    }

    pub fn parts(&self) -> &[LinkPart] {
        &self.parts
    }
}

impl Link for CompositeLink {
    fn output_dim(&self) -> usize {
        self.parts.len() * self.regression.output_dim()
    }

    fn eval(&self, t: f64, _x: &[f64], psi: &[f64], out: &mut [f64]) {
        let d = self.regression.output_dim();
        for (k, part) in self.parts.iter().enumerate() {
            let o = &mut out[k * d..(k + 1) * d];
            match *part {
                LinkPart::Value => self.regression.eval(t, psi, o),
                LinkPart::Slope => self.regression.time_derivative(t, psi, o),
                LinkPart::Cumulative { from } => {
                    o.iter_mut().for_each(|v| *v = 0.0);
                    let mut buf = vec![0.0; d];
                    for (w_t, w) in self.rule.mapped(from, t) {
                        self.regression.eval(w_t, psi, &mut buf);
                        for r in 0..d {
                            o[r] += w * buf[r];
                        }
                    }
                }
            }
        }
    }

    fn jac_psi(&self, t: f64, _x: &[f64], psi: &[f64], jac: &mut [f64]) {
        let d = self.regression.output_dim();
        let p = self.regression.psi_dim();
        for (k, part) in self.parts.iter().enumerate() {
            let o = &mut jac[k * d * p..(k + 1) * d * p];
            match *part {
                LinkPart::Value => self.regression.jac_psi(t, psi, o),
                LinkPart::Slope => self.regression.time_derivative_jac_psi(t, psi, o),
                LinkPart::Cumulative { from } => {
                    o.iter_mut().for_each(|v| *v = 0.0);
                    let mut buf = vec![0.0; d * p];
                    for (w_t, w) in self.rule.mapped(from, t) {
                        self.regression.jac_psi(w_t, psi, &mut buf);
                        for (a, b) in o.iter_mut().zip(&buf) {
                            *a += w * b;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::check::check_link;
    use crate::design::families::{PiecewiseAffine, Polynomial};

    #[test]
    fn value_and_slope() {
        let reg: Arc<dyn Regression> = Arc::new(PiecewiseAffine::new(vec![6.0]));
        let link = CompositeLink::new(reg, vec![LinkPart::Value, LinkPart::Slope]).unwrap();
        let mut out = [0.0; 2];
        link.eval(8.0, &[], &[1.0, 2.0, -1.0], &mut out);
        assert_eq!(out, [11.0, -1.0]);
        check_link(&link, 3, 0, 1).unwrap();
    }

    #[test]
    fn cumulative_of_identity() {
        // h(t) = t
        let reg: Arc<dyn Regression> = Arc::new(Polynomial { degree: 1 });
        let link =
            CompositeLink::new(reg.clone(), vec![LinkPart::Cumulative { from: 0.0 }]).unwrap();
        let mut out = [0.0];
        link.eval(2.0, &[], &[0.0, 1.0], &mut out);
        assert!((out[0] - 2.0).abs() < 1e-14);
        check_link(&link, 2, 0, 2).unwrap();
        assert!(CompositeLink::new(
            reg,
            vec![LinkPart::Cumulative {
                from: f64::NEG_INFINITY
            }]
        )
        .is_err());
    }

    #[test]
    fn slope_of_constant_is_zero() {
        let reg: Arc<dyn Regression> = Arc::new(Polynomial { degree: 0 });
        let link = CompositeLink::new(reg, vec![LinkPart::Slope]).unwrap();
        let mut out = [1.0];
        link.eval(3.0, &[], &[5.0], &mut out);
        assert_eq!(out[0], 0.0);
    }
}
