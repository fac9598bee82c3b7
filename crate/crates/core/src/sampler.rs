//! Adaptive random-walk Metropolis–Hastings over random effects.
//!
//! Each (chain, individual) pair owns a ChaCha8 stream derived from the master
//! seed, so results do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Cohort;
use crate::design::ModelDesign;
use crate::error::Result;
use crate::likelihood::individual_loglik;
use crate::par;
use crate::params::ModelParams;

/// Sampler hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Adapting sweeps run before draws are used.
    pub warmup: usize,
    pub thin: usize,
    pub init_step: f64,
    pub target_accept: f64,
    /// Robbins–Monro gain `c0 / (t + 1)^kappa`.
    pub adapt_c0: f64,
    pub adapt_kappa: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 10,
            warmup: 500,
            thin: 1,
            init_step: 0.1,
            target_accept: 0.234,
            adapt_c0: 1.0,
            adapt_kappa: 2.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Unit {
    b: Vec<f64>,
    log_density: f64,
    rng: ChaCha8Rng,
    accepted: bool,
}

/// State of `n_chains` parallel chains over every individual of a cohort.
#[derive(Debug, Clone)]
pub struct ChainState {
    n_chains: usize,
    n: usize,
    q: usize,
    /// Chain-major: unit `c * n + i`.
    units: Vec<Unit>,
    step_scale: Vec<f64>,
    acceptance: Vec<f64>,
    adapt_t: usize,
    accepted: u64,
    proposed: u64,
    config: SamplerConfig,
}

fn unit_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k as u64);
    r
}

fn log_post(
    cohort: &Cohort,
    i: usize,
    b: &[f64],
    params: &ModelParams,
    design: &ModelDesign,
) -> f64 {
    match individual_loglik(i, &cohort.individuals[i], b, params, design) {
        Ok(t) if !t.total.is_nan() => t.total,
        _ => f64::NEG_INFINITY,
    }
}

impl ChainState {
    /// Chains started at `b = 0`. Call [`refresh`](Self::refresh) before the
    /// first step.
    pub fn new(n: usize, q: usize, config: SamplerConfig, seed: u64) -> Self {
        assert!(config.n_chains > 0, "at least one chain");
        assert!(config.init_step > 0.0, "positive initial step");
        let units = (0..config.n_chains * n)
            .map(|k| Unit {
                b: vec![0.0; q],
                log_density: f64::NEG_INFINITY,
                rng: unit_rng(seed, k),
                accepted: false,
            })
            .collect();
        ChainState {
            n_chains: config.n_chains,
            n,
            q,
            units,
            step_scale: vec![config.init_step; n],
            acceptance: vec![0.0; n],
            adapt_t: 0,
            accepted: 0,
            proposed: 0,
            config,
        }
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_individuals(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn sample(&self, chain: usize, i: usize) -> &[f64] {
        &self.units[chain * self.n + i].b
    }

    pub fn set_sample(&mut self, chain: usize, i: usize, b: &[f64]) {
        self.units[chain * self.n + i].b.copy_from_slice(b);
    }

    pub fn cached_log_density(&self, chain: usize, i: usize) -> f64 {
        self.units[chain * self.n + i].log_density
    }

    /// Row-major `n x q` random effects of one chain.
    pub fn chain_samples(&self, chain: usize) -> Vec<f64> {
        self.units[chain * self.n..(chain + 1) * self.n]
            .iter()
            .flat_map(|u| u.b.iter().copied())
            .collect()
    }

    /// All current samples, `n_chains x n x q`.
    pub fn samples(&self) -> Vec<f64> {
        self.units
            .iter()
            .flat_map(|u| u.b.iter().copied())
            .collect()
    }

    pub fn step_scale(&self) -> &[f64] {
        &self.step_scale
    }

    /// Running per-individual acceptance estimate.
    pub fn acceptance(&self) -> &[f64] {
        &self.acceptance
    }

    /// Fraction of accepted proposals since the last [`reset_counters`](Self::reset_counters).
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }

    /// Recomputes cached log-densities, e.g. after `theta` changed.
    pub fn refresh(
        &mut self,
        cohort: &Cohort,
        params: &ModelParams,
        design: &ModelDesign,
    ) -> Result<()> {
        debug_assert_eq!(cohort.len(), self.n);
        // surface structural errors (illegal transitions) once, up front
        for (i, rec) in cohort.individuals.iter().enumerate() {
            individual_loglik(i, rec, &vec![0.0; self.q], params, design)?;
        }
        let n = self.n;
        par::for_each_mut(&mut self.units, |k, u| {
            u.log_density = log_post(cohort, k % n, &u.b, params, design);
        });
        Ok(())
    }

    /// One MH proposal per (chain, individual). Returns the per-individual
    /// acceptance fraction across chains.
    pub fn mh_step(
        &mut self,
        cohort: &Cohort,
        params: &ModelParams,
        design: &ModelDesign,
    ) -> Vec<f64> {
        let n = self.n;
        let scales = &self.step_scale;
        par::for_each_mut(&mut self.units, |k, u| {
            let i = k % n;
            let s = scales[i];
            let prop: Vec<f64> =
                u.b.iter()
                    .map(|v| v + s * u.rng.sample::<f64, _>(StandardNormal))
                    .collect();
            let lp = log_post(cohort, i, &prop, params, design);
            let log_u = u.rng.random::<f64>().ln();
            u.accepted = lp.is_finite()
                && (log_u < lp - u.log_density || u.log_density == f64::NEG_INFINITY);
            if u.accepted {
                u.b = prop;
                u.log_density = lp;
            }
        });
        let mut rates = vec![0.0; n];
        for (k, u) in self.units.iter().enumerate() {
            if u.accepted {
                rates[k % n] += 1.0;
                self.accepted += 1;
            }
        }
        self.proposed += self.units.len() as u64;
        let c = self.n_chains as f64;
        for r in &mut rates {
            *r /= c;
        }
        let w = 1.0 / (self.adapt_t.min(99) + 1) as f64;
        for (a, r) in self.acceptance.iter_mut().zip(&rates) {
            *a += w * (r - *a);
        }
        rates
    }

    /// Robbins–Monro update of the log step sizes toward the target rate.
    pub fn adapt_step(&mut self, rates: &[f64]) {
        let eta = self.config.adapt_c0 / ((self.adapt_t + 1) as f64).powf(self.config.adapt_kappa);
        for (s, r) in self.step_scale.iter_mut().zip(rates) {
            *s *= (eta * (r - self.config.target_accept)).exp();
            *s = s.clamp(1e-12, 1e12);
        }
        self.adapt_t += 1;
    }

    /// `n` adapting sweeps.
    pub fn warmup(
        &mut self,
        cohort: &Cohort,
        params: &ModelParams,
        design: &ModelDesign,
        n: usize,
    ) {
        for _ in 0..n {
            let r = self.mh_step(cohort, params, design);
            self.adapt_step(&r);
        }
    }

    /// `n_steps` non-adapting sweeps, keeping every `thin`-th state
    /// (`floor(n_steps / thin)` snapshots of `n_chains x n x q`).
    pub fn run(
        &mut self,
        cohort: &Cohort,
        params: &ModelParams,
        design: &ModelDesign,
        n_steps: usize,
        thin: usize,
    ) -> Vec<Vec<f64>> {
        assert!(thin >= 1, "thin must be at least 1");
        let mut out = Vec::with_capacity(n_steps / thin);
        for step in 1..=n_steps {
            self.mh_step(cohort, params, design);
            if step % thin == 0 {
                out.push(self.samples());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{IndividualRecord, Trajectory};
    use crate::design::{GammaPlusB, Polynomial};
    use crate::graph::TransitionGraph;
    use crate::params::CovMethod;
    use std::sync::Arc;

    fn prior_only(n: usize, q: usize) -> (Cohort, ModelDesign, ModelParams) {
        let g = TransitionGraph::new(1, Vec::<(usize, usize)>::new()).unwrap();
        let d = ModelDesign::new(
            g,
            Arc::new(GammaPlusB { dim: q }),
            Arc::new(Polynomial { degree: q - 1 }),
            [],
        )
        .unwrap();
        let p = d.zero_params(0, CovMethod::Full, CovMethod::Ball).unwrap();
        let rec = IndividualRecord {
            covariates: vec![],
            measurement_times: vec![],
            measurements: vec![],
            trajectory: Trajectory::initial(0.0, 0),
            censoring_time: 1.0,
        };
        (Cohort::new(0, 1, vec![rec; n]), d, p)
    }

    #[test]
    fn adaptation_direction() {
        let mut s = ChainState::new(1, 1, SamplerConfig::default(), 1);
        let mut last = s.step_scale()[0];
        for _ in 0..10 {
            s.adapt_step(&[1.0]);
            assert!(s.step_scale()[0] > last);
            last = s.step_scale()[0];
        }
        for _ in 0..10 {
            s.adapt_step(&[0.0]);
            assert!(s.step_scale()[0] < last);
            last = s.step_scale()[0];
        }
    }

    #[test]
    fn tiny_steps_are_always_accepted() {
        let (c, d, p) = prior_only(5, 2);
        let cfg = SamplerConfig {
            init_step: 1e-10,
            n_chains: 2,
            ..Default::default()
        };
        let mut s = ChainState::new(5, 2, cfg, 3);
        s.refresh(&c, &p, &d).unwrap();
        for _ in 0..20 {
            s.mh_step(&c, &p, &d);
        }
        assert_eq!(s.acceptance_rate(), 1.0);
    }

    #[test]
    fn snapshot_counts() {
        let (c, d, p) = prior_only(3, 1);
        let mut s = ChainState::new(3, 1, SamplerConfig::default(), 4);
        s.refresh(&c, &p, &d).unwrap();
        assert_eq!(s.run(&c, &p, &d, 10, 3).len(), 3);
        assert_eq!(s.run(&c, &p, &d, 7, 1).len(), 7);
    }

    #[test]
    fn cache_matches_recomputation() {
        let (c, d, p) = prior_only(4, 2);
        let mut s = ChainState::new(
            4,
            2,
            SamplerConfig {
                n_chains: 3,
                ..Default::default()
            },
            5,
        );
        s.refresh(&c, &p, &d).unwrap();
        s.warmup(&c, &p, &d, 50);
        for ch in 0..3 {
            for i in 0..4 {
                let fresh = log_post(&c, i, s.sample(ch, i), &p, &d);
                assert!((fresh - s.cached_log_density(ch, i)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_finite_proposals_are_rejected() {
        // a state the chain can never leave toward: C = inf on a live state
        let g = TransitionGraph::new(2, [(0, 1)]).unwrap();
        let reg: Arc<dyn crate::design::Regression> = Arc::new(Polynomial { degree: 0 });
        let d = ModelDesign::new(
            g,
            Arc::new(GammaPlusB { dim: 1 }),
            reg.clone(),
            [(
                crate::graph::Edge::new(0, 1),
                crate::design::EdgeSpec {
                    hazard: crate::design::BaselineHazard::new(
                        crate::design::Exponential { rate: 0.1 },
                        crate::design::Clock::Reset,
                    ),
                    link: Arc::new(crate::design::CompositeLink::null(reg)),
                },
            )],
        )
        .unwrap();
        let p = d.zero_params(0, CovMethod::Diag, CovMethod::Ball).unwrap();
        let rec = IndividualRecord {
            covariates: vec![],
            measurement_times: vec![],
            measurements: vec![],
            trajectory: Trajectory::initial(0.0, 0),
            censoring_time: f64::INFINITY,
        };
        let c = Cohort::new(0, 1, vec![rec]);
        let mut s = ChainState::new(1, 1, SamplerConfig::default(), 6);
        s.refresh(&c, &p, &d).unwrap();
        s.mh_step(&c, &p, &d);
        assert_eq!(s.sample(0, 0), &[0.0]);
    }
}
