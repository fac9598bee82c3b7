//! Individual-effects maps `psi = f(gamma, X, b)` and regression functions
//! `h(t, psi)`, each with analytic derivatives.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

/// `psi = f(gamma, X, b)`.
pub trait IndividualEffects: Send + Sync + Debug {
    fn name(&self) -> String;
    fn gamma_dim(&self) -> usize;
    fn b_dim(&self) -> usize;
    fn psi_dim(&self) -> usize;
    /// Covariate dimension the map requires, if it reads covariates at all.
    fn covariate_dim(&self) -> Option<usize> {
        None
    }
    fn eval(&self, gamma: &[f64], x: &[f64], b: &[f64], psi: &mut [f64]);
    /// `d psi / d gamma`, row-major `psi_dim x gamma_dim`.
    fn jac_gamma(&self, gamma: &[f64], x: &[f64], b: &[f64], jac: &mut [f64]);

    /// Evaluates a batch of random effects (row-major `n x b_dim`).
    fn eval_batch(&self, gamma: &[f64], x: &[f64], bs: &[f64], out: &mut [f64]) {
        let (q, p) = (self.b_dim(), self.psi_dim());
        for (b, psi) in bs
            .chunks_exact(q.max(1))
            .zip(out.chunks_exact_mut(p.max(1)))
        {
            self.eval(gamma, x, b, psi);
        }
    }
}

/// `h(t, psi)` with values in `R^d`.
pub trait Regression: Send + Sync + Debug {
    fn name(&self) -> String;
    fn psi_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, t: f64, psi: &[f64], out: &mut [f64]);
    /// `d h / d psi`, row-major `d x psi_dim`.
    fn jac_psi(&self, t: f64, psi: &[f64], jac: &mut [f64]);
    /// `d h / d t`.
    fn time_derivative(&self, t: f64, psi: &[f64], out: &mut [f64]);
    /// `d^2 h / (dt dpsi)`, row-major `d x psi_dim`.
    fn time_derivative_jac_psi(&self, t: f64, psi: &[f64], jac: &mut [f64]);

    /// Evaluates at several times, output row-major `times.len() x d`.
    fn eval_times(&self, times: &[f64], psi: &[f64], out: &mut [f64]) {
        let d = self.output_dim();
        for (t, o) in times.iter().zip(out.chunks_exact_mut(d)) {
            self.eval(*t, psi, o);
        }
    }
}

// ---------------------------------------------------------------------------
// Individual effects
// ---------------------------------------------------------------------------

/// `psi = gamma + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPlusB {
    pub dim: usize,
}

impl IndividualEffects for GammaPlusB {
    fn name(&self) -> String {
        "gamma_plus_b".into()
    }
    fn gamma_dim(&self) -> usize {
        self.dim
    }
    fn b_dim(&self) -> usize {
        self.dim
    }
    fn psi_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, gamma: &[f64], _x: &[f64], b: &[f64], psi: &mut [f64]) {
        for k in 0..self.dim {
            psi[k] = gamma[k] + b[k];
        }
    }
    fn jac_gamma(&self, _gamma: &[f64], _x: &[f64], _b: &[f64], jac: &mut [f64]) {
        jac.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.dim {
            jac[k * self.dim + k] = 1.0;
        }
    }
}

/// `psi = Gamma X + b`, with `Gamma` stored row-major (`psi_dim x k`) in gamma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaXPlusB {
    pub dim: usize,
    pub covariate_dim: usize,
}

impl IndividualEffects for GammaXPlusB {
    fn name(&self) -> String {
        "gamma_x_plus_b".into()
    }
    fn gamma_dim(&self) -> usize {
        self.dim * self.covariate_dim
    }
    fn b_dim(&self) -> usize {
        self.dim
    }
    fn psi_dim(&self) -> usize {
        self.dim
    }
    fn covariate_dim(&self) -> Option<usize> {
        Some(self.covariate_dim)
    }
    fn eval(&self, gamma: &[f64], x: &[f64], b: &[f64], psi: &mut [f64]) {
        let k = self.covariate_dim;
        for r in 0..self.dim {
            psi[r] = b[r] + (0..k).map(|c| gamma[r * k + c] * x[c]).sum::<f64>();
        }
    }
    fn jac_gamma(&self, _gamma: &[f64], x: &[f64], _b: &[f64], jac: &mut [f64]) {
        let k = self.covariate_dim;
        let g = self.gamma_dim();
        jac.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.dim {
            for c in 0..k {
                jac[r * g + r * k + c] = x[c];
            }
        }
    }
}

/// Componentwise output transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Exp,
    Sigmoid,
}

impl Transform {
    /// `(T(z), T'(z))`.
    #[inline]
    pub fn apply(self, z: f64) -> (f64, f64) {
        match self {
            Transform::Identity => (z, 1.0),
            Transform::Exp => {
                let e = z.exp();
                (e, e)
            }
            Transform::Sigmoid => {
                let s = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                (s, s * (1.0 - s))
            }
        }
    }
}

/// Applies one transform per component of an inner map's output.
#[derive(Debug)]
pub struct Transformed<E> {
    pub inner: E,
    pub transforms: Vec<Transform>,
}

impl<E: IndividualEffects> Transformed<E> {
    pub fn new(inner: E, transforms: Vec<Transform>) -> Self {
        assert_eq!(
            inner.psi_dim(),
            transforms.len(),
            "one transform per psi component"
        );
        Transformed { inner, transforms }
    }
}

impl<E: IndividualEffects> IndividualEffects for Transformed<E> {
    fn name(&self) -> String {
        format!("transformed({})", self.inner.name())
    }
    fn gamma_dim(&self) -> usize {
        self.inner.gamma_dim()
    }
    fn b_dim(&self) -> usize {
        self.inner.b_dim()
    }
    fn psi_dim(&self) -> usize {
        self.inner.psi_dim()
    }
    fn covariate_dim(&self) -> Option<usize> {
        self.inner.covariate_dim()
    }
    fn eval(&self, gamma: &[f64], x: &[f64], b: &[f64], psi: &mut [f64]) {
        self.inner.eval(gamma, x, b, psi);
        for (v, t) in psi.iter_mut().zip(&self.transforms) {
            *v = t.apply(*v).0;
        }
    }
    fn jac_gamma(&self, gamma: &[f64], x: &[f64], b: &[f64], jac: &mut [f64]) {
        let p = self.psi_dim();
        let g = self.gamma_dim();
        let mut z = vec![0.0; p];
        self.inner.eval(gamma, x, b, &mut z);
        self.inner.jac_gamma(gamma, x, b, jac);
        for r in 0..p {
            let d = self.transforms[r].apply(z[r]).1;
            for c in 0..g {
                jac[r * g + c] *= d;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Regression families (scalar biomarker)
// ---------------------------------------------------------------------------

/// `h(t, psi) = sum_k psi_k t^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polynomial {
    pub degree: usize,
}

impl Regression for Polynomial {
    fn name(&self) -> String {
        format!("polynomial({})", self.degree)
    }
    fn psi_dim(&self) -> usize {
        self.degree + 1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, psi: &[f64], out: &mut [f64]) {
        // Horner
        out[0] = psi[..=self.degree]
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * t + c);
    }
    fn jac_psi(&self, t: f64, _psi: &[f64], jac: &mut [f64]) {
        let mut p = 1.0;
        for j in jac.iter_mut().take(self.degree + 1) {
            *j = p;
            p *= t;
        }
    }
    fn time_derivative(&self, t: f64, psi: &[f64], out: &mut [f64]) {
        out[0] = (1..=self.degree)
            .rev()
            .fold(0.0, |acc, k| acc * t + k as f64 * psi[k]);
    }
    fn time_derivative_jac_psi(&self, t: f64, _psi: &[f64], jac: &mut [f64]) {
        jac[0] = 0.0;
        let mut p = 1.0;
        for k in 1..=self.degree {
            jac[k] = k as f64 * p;
            p *= t;
        }
    }
}

/// Continuous piecewise-affine curve with fixed breakpoints `tau_1 < ... < tau_m`:
/// `psi = (intercept, slope_0, ..., slope_m)`,
/// `h(t) = psi_0 + psi_1 t + sum_j 1{t > tau_j} (psi_{j+1} - psi_j)(t - tau_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffine {
    breakpoints: Vec<f64>,
}

impl PiecewiseAffine {
    pub fn new(mut breakpoints: Vec<f64>) -> Self {
        breakpoints.sort_by(f64::total_cmp);
        PiecewiseAffine { breakpoints }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Index of the active slope coefficient in psi.
    #[inline]
    fn active(&self, t: f64) -> usize {
        1 + self.breakpoints.iter().take_while(|&&b| t > b).count()
    }
}

impl Regression for PiecewiseAffine {
    fn name(&self) -> String {
        "piecewise_affine".into()
    }
    fn psi_dim(&self) -> usize {
        self.breakpoints.len() + 2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, psi: &[f64], out: &mut [f64]) {
        let mut v = psi[0] + psi[1] * t;
        for (j, &tau) in self.breakpoints.iter().enumerate() {
            if t > tau {
                v += (psi[j + 2] - psi[j + 1]) * (t - tau);
            }
        }
        out[0] = v;
    }
    fn jac_psi(&self, t: f64, _psi: &[f64], jac: &mut [f64]) {
        jac.iter_mut().for_each(|v| *v = 0.0);
        jac[0] = 1.0;
        jac[1] = t;
        for (j, &tau) in self.breakpoints.iter().enumerate() {
            if t > tau {
                jac[j + 2] += t - tau;
                jac[j + 1] -= t - tau;
            }
        }
    }
    fn time_derivative(&self, t: f64, psi: &[f64], out: &mut [f64]) {
        out[0] = psi[self.active(t)];
    }
    fn time_derivative_jac_psi(&self, t: f64, _psi: &[f64], jac: &mut [f64]) {
        jac.iter_mut().for_each(|v| *v = 0.0);
        jac[self.active(t)] = 1.0;
    }
}

/// `h(t) = psi_0 + psi_1 exp(-psi_2 t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExpDecay;

impl Regression for ExpDecay {
    fn name(&self) -> String {
        "exp_decay".into()
    }
    fn psi_dim(&self) -> usize {
        3
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, psi: &[f64], out: &mut [f64]) {
        out[0] = psi[0] + psi[1] * (-psi[2] * t).exp();
    }
    fn jac_psi(&self, t: f64, psi: &[f64], jac: &mut [f64]) {
        let e = (-psi[2] * t).exp();
        jac[0] = 1.0;
        jac[1] = e;
        jac[2] = -psi[1] * t * e;
    }
    fn time_derivative(&self, t: f64, psi: &[f64], out: &mut [f64]) {
        out[0] = -psi[1] * psi[2] * (-psi[2] * t).exp();
    }
    fn time_derivative_jac_psi(&self, t: f64, psi: &[f64], jac: &mut [f64]) {
        let e = (-psi[2] * t).exp();
        jac[0] = 0.0;
        jac[1] = -psi[2] * e;
        jac[2] = -psi[1] * e + psi[1] * psi[2] * t * e;
    }
}

/// Scaled and shifted hyperbolic tangent, decreasing from 1 at `t -> -inf`:
/// `h(t) = psi_1 tanh((psi_3 - t) / psi_2) + (1 - psi_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScaledTanh;

impl Regression for ScaledTanh {
    fn name(&self) -> String {
        "scaled_tanh".into()
    }
    fn psi_dim(&self) -> usize {
        3
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, t: f64, psi: &[f64], out: &mut [f64]) {
        out[0] = psi[0] * ((psi[2] - t) / psi[1]).tanh() + (1.0 - psi[0]);
    }
    fn jac_psi(&self, t: f64, psi: &[f64], jac: &mut [f64]) {
        let z = (psi[2] - t) / psi[1];
        let th = z.tanh();
        let s = 1.0 - th * th;
        jac[0] = th - 1.0;
        jac[1] = -psi[0] * s * z / psi[1];
        jac[2] = psi[0] * s / psi[1];
    }
    fn time_derivative(&self, t: f64, psi: &[f64], out: &mut [f64]) {
        let th = ((psi[2] - t) / psi[1]).tanh();
        out[0] = -psi[0] * (1.0 - th * th) / psi[1];
    }
    fn time_derivative_jac_psi(&self, t: f64, psi: &[f64], jac: &mut [f64]) {
        let z = (psi[2] - t) / psi[1];
        let th = z.tanh();
        let s = 1.0 - th * th;
        let w2 = psi[1] * psi[1];
        jac[0] = -s / psi[1];
        jac[1] = -psi[0] * s * (2.0 * th * z - 1.0) / w2;
        jac[2] = 2.0 * psi[0] * th * s / w2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::check::{check_effects, check_regression};

    #[test]
    fn effects_examples() {
        let mut psi = [0.0; 3];
        GammaPlusB { dim: 3 }.eval(&[2.5, -1.3, 0.2], &[], &[0.0; 3], &mut psi);
        assert_eq!(psi, [2.5, -1.3, 0.2]);

        let f = Transformed::new(
            GammaPlusB { dim: 3 },
            vec![Transform::Sigmoid, Transform::Exp, Transform::Identity],
        );
        f.eval(&[0.0, 0.0, 1.0], &[], &[0.0; 3], &mut psi);
        assert_eq!(psi, [0.5, 1.0, 1.0]);

        let mut psi2 = [0.0; 2];
        GammaXPlusB {
            dim: 2,
            covariate_dim: 2,
        }
        .eval(&[0.0; 4], &[0.3, -2.0], &[1.0, 2.0], &mut psi2);
        assert_eq!(psi2, [1.0, 2.0]);
    }

    #[test]
    fn piecewise_examples() {
        let h = PiecewiseAffine::new(vec![6.0]);
        let psi = [1.0, 2.0, -1.0];
        let mut out = [0.0];
        h.eval(8.0, &psi, &mut out);
        assert_eq!(out[0], 11.0);
        h.eval(6.0, &psi, &mut out);
        assert_eq!(out[0], 13.0);
        h.time_derivative(8.0, &psi, &mut out);
        assert_eq!(out[0], -1.0);
        h.time_derivative(6.0, &psi, &mut out);
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn tanh_and_polynomial_examples() {
        let mut out = [0.0];
        ScaledTanh.eval(0.0, &[1.0, 1.0, 0.0], &mut out);
        assert_eq!(out[0], 0.0);
        Polynomial { degree: 0 }.time_derivative(3.0, &[4.0], &mut out);
        assert_eq!(out[0], 0.0);
        Polynomial { degree: 2 }.eval(2.0, &[1.0, 2.0, 3.0], &mut out);
        assert_eq!(out[0], 17.0);
    }

    #[test]
    fn built_in_derivatives_pass_self_check() {
        check_regression(&Polynomial { degree: 3 }, 1).unwrap();
        check_regression(&PiecewiseAffine::new(vec![2.0, 6.0]), 2).unwrap();
        check_regression(&ExpDecay, 3).unwrap();
        check_regression(&ScaledTanh, 4).unwrap();
        check_effects(&GammaPlusB { dim: 3 }, 1, 5).unwrap();
        check_effects(
            &GammaXPlusB {
                dim: 2,
                covariate_dim: 3,
            },
            3,
            6,
        )
        .unwrap();
        let t = Transformed::new(
            GammaPlusB { dim: 3 },
            vec![Transform::Sigmoid, Transform::Exp, Transform::Identity],
        );
        check_effects(&t, 0, 7).unwrap();
    }
}
