//! Finite-difference self-checks for family derivatives. Every family must
//! pass these before a design accepts it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::families::{IndividualEffects, Regression};
use super::hazard::HazardFamily;
use super::link::Link;
use crate::error::{Error, Result};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;
const POINTS: usize = 20;

fn compare(what: &str, coord: usize, analytic: f64, fd: f64) -> Result<()> {
    if (analytic - fd).abs() <= TOL * analytic.abs().max(1.0) && analytic.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "{what}: derivative {coord} is {analytic}, finite differences give {fd}"
        )))
    }
}

fn central(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    let h = STEP * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Checks `jac_psi`, `time_derivative` and `time_derivative_jac_psi`.
pub fn check_regression(reg: &dyn Regression, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, d) = (reg.psi_dim(), reg.output_dim());
    let name = reg.name();
    let mut jac = vec![0.0; d * p];
    let mut tjac = vec![0.0; d * p];
    let mut dt = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for _ in 0..POINTS {
        let t = rng.random_range(0.0..10.0);
        let psi = random_vec(&mut rng, p, 0.5, 1.5);
        reg.jac_psi(t, &psi, &mut jac);
        reg.time_derivative(t, &psi, &mut dt);
        reg.time_derivative_jac_psi(t, &psi, &mut tjac);
        for r in 0..d {
            let fd = central(
                |s| {
                    reg.eval(s, &psi, &mut buf);
                    buf[r]
                },
                t,
            );
            compare(&format!("{name} d/dt"), r, dt[r], fd)?;
            for c in 0..p {
                let mut q = psi.clone();
                let fd = central(
                    |v| {
                        q[c] = v;
                        reg.eval(t, &q, &mut buf);
                        buf[r]
                    },
                    psi[c],
                );
                compare(&format!("{name} d/dpsi"), r * p + c, jac[r * p + c], fd)?;
                let mut q = psi.clone();
                let fd = central(
                    |v| {
                        q[c] = v;
                        reg.time_derivative(t, &q, &mut buf);
                        buf[r]
                    },
                    psi[c],
                );
                compare(&format!("{name} d2/dtdpsi"), r * p + c, tjac[r * p + c], fd)?;
            }
        }
    }
    Ok(())
}

/// Checks `jac_gamma` with covariates of the given dimension.
pub fn check_effects(eff: &dyn IndividualEffects, covariate_dim: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, q, p) = (eff.gamma_dim(), eff.b_dim(), eff.psi_dim());
    let k = eff.covariate_dim().unwrap_or(covariate_dim);
    let name = eff.name();
    let mut jac = vec![0.0; p * g];
    let mut buf = vec![0.0; p];
    for _ in 0..POINTS {
        let gamma = random_vec(&mut rng, g, -1.0, 1.0);
        let x = random_vec(&mut rng, k, -1.0, 1.0);
        let b = random_vec(&mut rng, q, -1.0, 1.0);
        eff.jac_gamma(&gamma, &x, &b, &mut jac);
        for r in 0..p {
            for c in 0..g {
                let mut gm = gamma.clone();
                let fd = central(
                    |v| {
                        gm[c] = v;
                        eff.eval(&gm, &x, &b, &mut buf);
                        buf[r]
                    },
                    gamma[c],
                );
                compare(&format!("{name} d/dgamma"), r * g + c, jac[r * g + c], fd)?;
            }
        }
    }
    Ok(())
}

/// Checks a link's `jac_psi`.
pub fn check_link(link: &dyn Link, psi_dim: usize, covariate_dim: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = link.output_dim();
    let mut jac = vec![0.0; a * psi_dim];
    let mut buf = vec![0.0; a];
    for _ in 0..POINTS {
        let t = rng.random_range(0.0..10.0);
        let x = random_vec(&mut rng, covariate_dim, -1.0, 1.0);
        let psi = random_vec(&mut rng, psi_dim, 0.5, 1.5);
        link.jac_psi(t, &x, &psi, &mut jac);
        for r in 0..a {
            for c in 0..psi_dim {
                let mut q = psi.clone();
                let fd = central(
                    |v| {
                        q[c] = v;
                        link.eval(t, &x, &q, &mut buf);
                        buf[r]
                    },
                    psi[c],
                );
                compare("link d/dpsi", r * psi_dim + c, jac[r * psi_dim + c], fd)?;
            }
        }
    }
    Ok(())
}

/// Checks a hazard family's parameter gradient at its default parameters
/// and at random perturbations of them.
pub fn check_hazard(h: &dyn HazardFamily, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = h.num_params();
    let defaults = h.default_params();
    let mut g = vec![0.0; n];
    for _ in 0..POINTS {
        let u = rng.random_range(0.05..10.0);
        let params: Vec<f64> = defaults
            .iter()
            .map(|v| v + rng.random_range(-0.3..0.3))
            .collect();
        g.iter_mut().for_each(|v| *v = 0.0);
        let value = h.log_hazard_grad(u, &params, &mut g);
        if (value - h.log_hazard(u, &params)).abs() > 1e-12 * value.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "{}: value/gradient paths disagree",
                h.name()
            )));
        }
        for c in 0..n {
            let mut q = params.clone();
            let fd = central(
                |v| {
                    q[c] = v;
                    h.log_hazard(u, &q)
                },
                params[c],
            );
            compare(&h.name(), c, g[c], fd)?;
        }
    }
    Ok(())
}
