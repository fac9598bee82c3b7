//! Stochastic gradient ascent on the marginal log-likelihood through the
//! Fisher identity, the moment-based stop rule, and Fisher information.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{validate_cohort, Cohort};
use crate::design::ModelDesign;
use crate::error::{Error, Result};
use crate::likelihood::{grad_complete_loglik, individual_full_gradients};
use crate::params::ModelParams;
use crate::sampler::{ChainState, SamplerConfig};

/// Consecutive non-finite gradients tolerated before aborting.
pub const MAX_NON_FINITE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

/// Multiplier applied to the base learning rate at iteration `n` (from 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Schedule {
    #[default]
    Constant,
    /// `1 / (n + 1)^kappa`, `0.5 < kappa <= 1`.
    Power { kappa: f64 },
    /// `gamma^n`.
    Exponential { gamma: f64 },
}

impl Schedule {
    pub fn factor(&self, n: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Power { kappa } => 1.0 / ((n + 1) as f64).powf(kappa),
            Schedule::Exponential { gamma } => gamma.powi(n as i32),
        }
    }

    /// Whether plain SGD with this schedule satisfies the Robbins–Monro
    /// conditions.
    pub fn robbins_monro(&self) -> bool {
        matches!(*self, Schedule::Power { kappa } if kappa > 0.5 && kappa <= 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// MH sweeps between gradient evaluations.
    pub sweeps_per_iter: usize,
    /// Individuals per stochastic gradient; full cohort when absent.
    pub minibatch: Option<usize>,
    pub max_iterations: usize,
    /// Per-iteration cap on the Euclidean norm of the gradient.
    pub clip: Option<f64>,
    pub schedule: Schedule,
    /// Adapting sweeps run at the initial parameters before the first step.
    pub warmup: usize,
    /// Keep adapting proposal scales while `theta` moves.
    pub adapt_during_fit: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            optimizer: Optimizer::Adam,
            lr: 0.5,
            betas: (0.9, 0.999),
            eps: 1e-8,
            sweeps_per_iter: 4,
            minibatch: None,
            max_iterations: 500,
            clip: None,
            schedule: Schedule::Constant,
            warmup: 100,
            adapt_during_fit: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Validation(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Validation(
                "Adam decay rates must lie in [0, 1)".into(),
            ));
        }
        if self.sweeps_per_iter == 0 {
            return Err(Error::Validation(
                "sweeps_per_iter must be at least 1".into(),
            ));
        }
        if self.minibatch == Some(0) {
            return Err(Error::Validation("minibatch must be at least 1".into()));
        }
        if self.optimizer == Optimizer::Sgd
            && !matches!(self.schedule, Schedule::Constant)
            && !self.schedule.robbins_monro()
        {
            if let Schedule::Power { .. } = self.schedule {
                return Err(Error::Validation(
                    "power schedule for sgd needs 0.5 < kappa <= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Stop rule on exponential moving averages of consecutive parameter
/// differences and their squares. Fires when every coordinate satisfies
/// `|m1_hat| <= atol + rtol * sqrt(m2_hat)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    pub beta1: f64,
    pub beta2: f64,
    pub atol: f64,
    pub rtol: f64,
    #[serde(skip)]
    m1: Vec<f64>,
    #[serde(skip)]
    m2: Vec<f64>,
    #[serde(skip)]
    t: i32,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::new(0.1)
    }
}

impl StopRule {
    pub fn new(rtol: f64) -> Self {
        StopRule {
            beta1: 0.9,
            beta2: 0.9,
            atol: 1e-6,
            rtol,
            m1: Vec::new(),
            m2: Vec::new(),
            t: 0,
        }
    }

    pub fn reset(&mut self) {
        self.m1.clear();
        self.m2.clear();
        self.t = 0;
    }

    /// Feeds `theta - prev` and reports whether the rule fires.
    pub fn check(&mut self, prev: &[f64], theta: &[f64]) -> bool {
        if self.m1.len() != theta.len() {
            self.m1 = vec![0.0; theta.len()];
            self.m2 = vec![0.0; theta.len()];
            self.t = 0;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut fire = true;
        for k in 0..theta.len() {
            let d = theta[k] - prev[k];
            self.m1[k] = self.beta1 * self.m1[k] + (1.0 - self.beta1) * d;
            self.m2[k] = self.beta2 * self.m2[k] + (1.0 - self.beta2) * d * d;
            let (h1, h2) = (self.m1[k] / c1, self.m2[k] / c2);
            if !(h1.abs() <= self.atol + self.rtol * h2.sqrt()) {
                fire = false;
            }
        }
        fire
    }

    /// Bias-corrected moments after the last check.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        (
            self.m1.iter().map(|v| v / c1).collect(),
            self.m2.iter().map(|v| v / c2).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    /// Free parameters after the step.
    pub params: Vec<f64>,
    /// Chain-averaged complete-data log-likelihood at the draws used for the
    /// step, scaled to the full cohort.
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: ModelParams,
    pub iterations: usize,
    pub history: Vec<HistoryEntry>,
    pub stop_reason: StopReason,
    pub acceptance_rate: f64,
    pub skipped_steps: usize,
}

/// What a callback sees after each iteration.
pub struct IterationInfo<'a> {
    pub iteration: usize,
    pub params: &'a ModelParams,
    pub loglik: f64,
    pub chains: &'a ChainState,
}

#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Ascent direction scaled by `lr`.
    fn step(&mut self, g: &[f64], lr: f64, (b1, b2): (f64, f64), eps: f64) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(k, &gk)| {
                self.m[k] = b1 * self.m[k] + (1.0 - b1) * gk;
                self.v[k] = b2 * self.v[k] + (1.0 - b2) * gk * gk;
                lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + eps)
            })
            .collect()
    }
}

fn check_inputs(cohort: &Cohort, design: &ModelDesign, params: &ModelParams) -> Result<()> {
    design.check_params(params, cohort.covariate_dim)?;
    if cohort.biomarker_dim != design.regression().output_dim() {
        return Err(Error::Shape(format!(
            "data has {} biomarkers, regression produces {}",
            cohort.biomarker_dim,
            design.regression().output_dim()
        )));
    }
    if let Some(v) = validate_cohort(cohort, design.graph()).into_iter().next() {
        return Err(Error::Validation(v.to_string()));
    }
    Ok(())
}

/// Fits `theta` by stochastic gradient ascent.
pub fn fit(
    cohort: &Cohort,
    design: &ModelDesign,
    init: &ModelParams,
    config: &FitConfig,
    stop: Option<StopRule>,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<FitReport> {
    fit_with_callback(cohort, design, init, config, stop, sampler, seed, |_| true)
}

/// As [`fit`], calling `callback` after every iteration; returning `false`
/// interrupts the loop.
#[allow(clippy::too_many_arguments)]
pub fn fit_with_callback(
    cohort: &Cohort,
    design: &ModelDesign,
    init: &ModelParams,
    config: &FitConfig,
    mut stop: Option<StopRule>,
    sampler: &SamplerConfig,
    seed: u64,
    mut callback: impl FnMut(&IterationInfo) -> bool,
) -> Result<FitReport> {
    config.validate()?;
    check_inputs(cohort, design, init)?;
    let n = cohort.len();
    let mut params = init.clone();
    let mut theta = params.flatten();
    let mut history = Vec::new();

    if config.max_iterations == 0 || n == 0 {
        return Ok(FitReport {
            params,
            iterations: 0,
            history,
            stop_reason: StopReason::MaxIterations,
            acceptance_rate: 0.0,
            skipped_steps: 0,
        });
    }

    let mut chains = ChainState::new(n, params.q.dim, sampler.clone(), seed);
    chains.refresh(cohort, &params, design)?;
    chains.warmup(cohort, &params, design, config.warmup);
    chains.reset_counters();

    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
    batch_rng.set_stream(u64::MAX);
    let all: Vec<usize> = (0..n).collect();
    let mut adam = Adam::new(theta.len());
    if let Some(s) = stop.as_mut() {
        s.reset();
    }

    let mut lr_mult = 1.0;
    let mut consecutive_bad = 0;
    let mut skipped = 0;
    let mut reason = StopReason::MaxIterations;
    let mut iterations = 0;

    for it in 1..=config.max_iterations {
        iterations = it;
        for _ in 0..config.sweeps_per_iter {
            let r = chains.mh_step(cohort, &params, design);
            if config.adapt_during_fit {
                chains.adapt_step(&r);
            }
        }

        let subset: Vec<usize> = match config.minibatch {
            Some(m) if m < n => {
                let mut s = sample_indices(&mut batch_rng, n, m).into_vec();
                s.sort_unstable();
                s
            }
            _ => all.clone(),
        };
        let scale = n as f64 / subset.len() as f64;

        let mut grad = vec![0.0; theta.len()];
        let mut loglik = 0.0;
        let mut finite = true;
        for c in 0..chains.n_chains() {
            let b = chains.chain_samples(c);
            match grad_complete_loglik(cohort, &b, &params, design, &subset) {
                Ok((t, g)) => {
                    loglik += t.total;
                    for (a, v) in grad.iter_mut().zip(g) {
                        *a += v;
                    }
                }
                Err(Error::NonFinite { .. }) => {
                    finite = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let k = chains.n_chains() as f64;
        grad.iter_mut().for_each(|g| *g *= scale / k);
        loglik *= scale / k;
        if !finite || grad.iter().any(|g| !g.is_finite()) {
            consecutive_bad += 1;
            skipped += 1;
            lr_mult *= 0.5;
            warn!("iteration {it}: non-finite gradient, step skipped");
            if consecutive_bad >= MAX_NON_FINITE {
                return Err(Error::Diverged(consecutive_bad));
            }
            continue;
        }
        consecutive_bad = 0;

        if let Some(c) = config.clip {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > c {
                grad.iter_mut().for_each(|g| *g *= c / norm);
            }
        }

        let lr = config.lr * config.schedule.factor(it - 1) * lr_mult;
        lr_mult = 1.0;
        let step = match config.optimizer {
            Optimizer::Adam => adam.step(&grad, lr, config.betas, config.eps),
            Optimizer::Sgd => grad.iter().map(|g| lr * g).collect(),
        };
        let prev = theta.clone();
        for (t, s) in theta.iter_mut().zip(&step) {
            *t += s;
        }
        params.unflatten(&theta)?;
        if lr != 0.0 {
            chains.refresh(cohort, &params, design)?;
        }

        history.push(HistoryEntry {
            iteration: it,
            params: theta.clone(),
            loglik,
        });
        let go_on = callback(&IterationInfo {
            iteration: it,
            params: &params,
            loglik,
            chains: &chains,
        });
        if let Some(s) = stop.as_mut() {
            if s.check(&prev, &theta) {
                reason = StopReason::Converged;
                break;
            }
        }
        if !go_on {
            reason = StopReason::Interrupted;
            break;
        }
    }

    Ok(FitReport {
        params,
        iterations,
        history,
        stop_reason: reason,
        acceptance_rate: chains.acceptance_rate(),
        skipped_steps: skipped,
    })
}

/// How per-individual scores are combined into an information estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FimMethod {
    /// `sum_i s_i s_i^T` with `s_i` the posterior mean of individual `i`'s
    /// complete-data score (an estimate of its marginal score).
    #[default]
    PosteriorMeanScore,
    /// Average over draws of `sum_i s_i(b_i) s_i(b_i)^T`.
    DrawOuterProduct,
}

#[derive(Debug, Clone)]
pub struct FimEstimate {
    pub matrix: DMatrix<f64>,
    /// Posterior draws per individual (sweeps times chains).
    pub n_samples: usize,
    pub method: FimMethod,
}

/// Estimates the observed Fisher information of the cohort at `params`
/// from `n_sweeps` post-warmup MH sweeps.
pub fn compute_fim(
    cohort: &Cohort,
    design: &ModelDesign,
    params: &ModelParams,
    sampler: &SamplerConfig,
    n_sweeps: usize,
    method: FimMethod,
    seed: u64,
) -> Result<FimEstimate> {
    check_inputs(cohort, design, params)?;
    let n = cohort.len();
    let p = params.layout().free_len();
    let all: Vec<usize> = (0..n).collect();
    let mut chains = ChainState::new(n, params.q.dim, sampler.clone(), seed);
    chains.refresh(cohort, params, design)?;
    chains.warmup(cohort, params, design, sampler.warmup);

    let mut mean_scores = vec![vec![0.0; p]; n];
    let mut outer = DMatrix::<f64>::zeros(p, p);
    let mut draws = 0usize;
    for _ in 0..n_sweeps {
        for _ in 0..sampler.thin.max(1) {
            chains.mh_step(cohort, params, design);
        }
        for c in 0..chains.n_chains() {
            let b = chains.chain_samples(c);
            let (_, grads) = individual_full_gradients(cohort, &b, params, design, &all)?;
            for (i, g) in grads.iter().enumerate() {
                let s = params.layout().tie_gradient(g);
                match method {
                    FimMethod::PosteriorMeanScore => {
                        for (a, v) in mean_scores[i].iter_mut().zip(&s) {
                            *a += v;
                        }
                    }
                    FimMethod::DrawOuterProduct => {
                        let v = nalgebra::DVector::from_vec(s);
                        outer.ger(1.0, &v, &v, 1.0);
                    }
                }
            }
            draws += 1;
        }
    }
    if draws == 0 {
        return Err(Error::Validation("FIM needs at least one sweep".into()));
    }
    let matrix = match method {
        FimMethod::PosteriorMeanScore => {
            let mut m = DMatrix::<f64>::zeros(p, p);
            for s in mean_scores {
                let v = nalgebra::DVector::from_vec(s) / draws as f64;
                m.ger(1.0, &v, &v, 1.0);
            }
            m
        }
        FimMethod::DrawOuterProduct => outer / draws as f64,
    };
    Ok(FimEstimate {
        matrix: symmetrize(&matrix),
        n_samples: draws,
        method,
    })
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `sqrt(diag(I^-1))`. Coordinates touching the numerical null space of a
/// singular matrix get `+inf`.
pub fn stderr(fim: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = fim.nrows();
    if fim.ncols() != p {
        return Err(Error::Shape(format!(
            "FIM is {}x{}",
            fim.nrows(),
            fim.ncols()
        )));
    }
    if fim.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("FIM has non-finite entries".into()));
    }
    let sym = symmetrize(fim);
    if let Some(ch) = sym.clone().cholesky() {
        let inv = ch.inverse();
        return Ok((0..p).map(|k| inv[(k, k)].max(0.0).sqrt()).collect());
    }
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = max * p as f64 * f64::EPSILON * 1e3;
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    warn!(
        "Fisher information is singular or indefinite (eigenvalues in [{min:e}, {max:e}]); \
         standard errors of null-space coordinates are infinite"
    );
    let mut out = vec![0.0; p];
    for (k, o) in out.iter_mut().enumerate() {
        let mut var = 0.0;
        for j in 0..p {
            let lam = eig.eigenvalues[j];
            let u = eig.eigenvectors[(k, j)];
            if lam <= tol {
                if u.abs() > 1e-8 {
                    var = f64::INFINITY;
                    break;
                }
            } else {
                var += u * u / lam;
            }
        }
        *o = var.sqrt();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_rule_examples() {
        let mut r = StopRule::new(0.1);
        assert!(r.check(&[1.0, 2.0], &[1.0, 2.0]));

        let mut r = StopRule::new(0.1);
        let mut x = 0.0;
        for _ in 0..1000 {
            assert!(!r.check(&[x], &[x + 1.0]));
            x += 1.0;
        }
        let (m1, m2) = r.moments();
        assert!((m1[0] - 1.0).abs() < 1e-12 && (m2[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stop_rule_alternating() {
        // oracle: EMA recursion in closed form; fires at t = 2
        let mut r = StopRule::new(0.1);
        assert!(!r.check(&[0.0], &[1.0]));
        assert!(r.check(&[1.0], &[0.0]));
        let (m1, _) = r.moments();
        let expect = (0.9 * 0.1 - 0.1) / (1.0 - 0.81);
        assert!((m1[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn stderr_examples() {
        assert_eq!(stderr(&DMatrix::identity(3, 3)).unwrap(), vec![1.0; 3]);
        let se = stderr(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            4.0, 25.0,
        ])))
        .unwrap();
        assert_eq!(se, vec![0.5, 0.2]);
        let sing = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 4.0]);
        let se = stderr(&sing).unwrap();
        assert!(se[0].is_infinite() && se[1].is_infinite());
        assert!((se[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn schedules() {
        assert!(Schedule::Power { kappa: 0.75 }.robbins_monro());
        assert!(!Schedule::Power { kappa: 0.5 }.robbins_monro());
        assert!(!Schedule::Constant.robbins_monro());
        assert_eq!(Schedule::Exponential { gamma: 0.5 }.factor(2), 0.25);
        let bad = FitConfig {
            optimizer: Optimizer::Sgd,
            schedule: Schedule::Power { kappa: 0.4 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn adam_first_step_is_lr_sign() {
        let mut a = Adam::new(2);
        let s = a.step(&[3.0, -0.01], 0.5, (0.9, 0.999), 1e-8);
        assert!((s[0] - 0.5).abs() < 1e-6 && (s[1] + 0.5).abs() < 1e-4);
    }
}
