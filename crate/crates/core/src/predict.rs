//! Dynamic prediction: posterior draws of random effects given data up to a
//! truncation time, survival-conditioned continuations, and functionals of
//! the completed trajectory.

use std::fmt::Debug;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Cohort, IndividualRecord};
use crate::design::ModelDesign;
use crate::error::{Error, Result};
use crate::graph::TransitionGraph;
use crate::par;
use crate::params::ModelParams;
use crate::sampler::{ChainState, SamplerConfig};
use crate::simulate::{continue_trajectory, SimConfig, DEFAULT_MAX_TRANSITIONS};

/// Default thinning of posterior draws used for prediction.
pub const PREDICT_THIN: usize = 5;

/// A functional of a trajectory that depends only on its prefix up to
/// `min(tau, kappa)`.
pub trait Functional: Send + Sync + Debug {
    /// Index of the pair at which the event of interest occurs, if the prefix
    /// contains it.
    fn tau(&self, pairs: &[(f64, usize)], graph: &TransitionGraph) -> Option<usize>;
    /// Index at which the event becomes impossible, if the prefix contains it.
    fn kappa(&self, pairs: &[(f64, usize)], graph: &TransitionGraph) -> Option<usize>;
    /// Value on a prefix ending at `min(tau, kappa)`.
    fn xi(&self, pairs: &[(f64, usize)], tau: Option<usize>, kappa: Option<usize>) -> f64;
    /// Simulation horizon after which the value is determined.
    fn horizon(&self) -> f64;
    /// Value when a trajectory stopped (absorbed or reached the horizon)
    /// without `tau` or `kappa` firing.
    fn xi_unfired(&self, pairs: &[(f64, usize)]) -> Option<f64>;
}

/// Evaluates `f` on a completed trajectory: `xi` on the prefix up to
/// `min(tau, kappa)`, or the unfired value.
pub fn evaluate(
    f: &dyn Functional,
    pairs: &[(f64, usize)],
    graph: &TransitionGraph,
) -> Option<f64> {
    let tau = f.tau(pairs, graph);
    let kappa = f.kappa(pairs, graph);
    match (tau, kappa) {
        (None, None) => f.xi_unfired(pairs),
        (a, b) => {
            let stop = a.unwrap_or(usize::MAX).min(b.unwrap_or(usize::MAX));
            let prefix = &pairs[..=stop];
            f.xi(
                prefix,
                tau.filter(|&v| v <= stop),
                kappa.filter(|&v| v <= stop),
            )
            .into()
        }
    }
}

/// State occupied at time `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateAtTime {
    pub u: f64,
}

pub fn state_at_time(u: f64) -> StateAtTime {
    StateAtTime { u }
}

impl Functional for StateAtTime {
    /// First pair at or after `u`, or the first absorbing state.
    fn tau(&self, pairs: &[(f64, usize)], graph: &TransitionGraph) -> Option<usize> {
        pairs
            .iter()
            .position(|&(t, s)| t >= self.u || graph.is_absorbing(s))
    }
    fn kappa(&self, _pairs: &[(f64, usize)], _graph: &TransitionGraph) -> Option<usize> {
        None
    }
    fn xi(&self, pairs: &[(f64, usize)], tau: Option<usize>, _kappa: Option<usize>) -> f64 {
        let l = tau.expect("state_at_time only stops at tau");
        let (t, s) = pairs[l];
        if t > self.u && l > 0 {
            pairs[l - 1].1 as f64
        } else {
            s as f64
        }
    }
    fn horizon(&self) -> f64 {
        self.u
    }
    fn xi_unfired(&self, pairs: &[(f64, usize)]) -> Option<f64> {
        pairs.last().map(|&(_, s)| s as f64)
    }
}

/// Entry time into a target set; `+inf` when it becomes unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingTime {
    targets: Vec<usize>,
}

pub fn hitting_time(targets: &[usize], graph: &TransitionGraph) -> Result<HittingTime> {
    if targets.is_empty() {
        return Err(Error::Validation(
            "hitting time needs a non-empty target set".into(),
        ));
    }
    if let Some(&s) = targets.iter().find(|&&s| s >= graph.num_states()) {
        return Err(Error::Validation(format!("target state {s} out of range")));
    }
    let mut targets = targets.to_vec();
    targets.sort_unstable();
    targets.dedup();
    Ok(HittingTime { targets })
}

impl HittingTime {
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }
}

impl Functional for HittingTime {
    fn tau(&self, pairs: &[(f64, usize)], _graph: &TransitionGraph) -> Option<usize> {
        pairs.iter().position(|(_, s)| self.targets.contains(s))
    }
    fn kappa(&self, pairs: &[(f64, usize)], graph: &TransitionGraph) -> Option<usize> {
        pairs
            .iter()
            .position(|&(_, s)| !self.targets.iter().any(|&a| graph.state_reaches(s, a)))
    }
    fn xi(&self, pairs: &[(f64, usize)], tau: Option<usize>, _kappa: Option<usize>) -> f64 {
        match tau {
            Some(l) => pairs[l].0,
            None => f64::INFINITY,
        }
    }
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }
    fn xi_unfired(&self, _pairs: &[(f64, usize)]) -> Option<f64> {
        Some(f64::INFINITY)
    }
}

/// Empirical distribution of a functional over continuation draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    /// One value per usable draw, equally weighted.
    pub values: Vec<f64>,
    /// Draws whose continuation hit the transition guard.
    pub horizon_censored: usize,
    pub n_draws: usize,
    pub truncation: f64,
}

impl PredictionResult {
    /// Probability of each state `0..num_states` among usable draws.
    pub fn state_probabilities(&self, num_states: usize) -> Vec<f64> {
        let mut p = vec![0.0; num_states];
        if self.values.is_empty() {
            return p;
        }
        for &v in &self.values {
            let s = v as usize;
            if s < num_states {
                p[s] += 1.0;
            }
        }
        let n = self.values.len() as f64;
        p.iter_mut().for_each(|c| *c /= n);
        p
    }

    /// Distinct values with their weights, ascending.
    pub fn distribution(&self) -> Vec<(f64, f64)> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len().max(1) as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for x in v {
            match out.last_mut() {
                Some((y, p)) if *y == x || (y.is_infinite() && x.is_infinite()) => *p += 1.0,
                _ => out.push((x, 1.0)),
            }
        }
        out.iter_mut().for_each(|(_, p)| *p /= n);
        out
    }
}

/// Most likely state; ties go to the lower index.
pub fn modal_state(probs: &[f64]) -> usize {
    let mut best = 0;
    for (s, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = s;
        }
    }
    best
}

/// Posterior draws of `b` given the record truncated at `t`, taken from
/// `n_steps` post-warmup sweeps thinned by `thin`; `n_chains` draws per kept
/// sweep.
#[allow(clippy::too_many_arguments)]
pub fn posterior_condition(
    record: &IndividualRecord,
    t: f64,
    design: &ModelDesign,
    params: &ModelParams,
    sampler: &SamplerConfig,
    n_draws: usize,
    thin: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = design.regression().output_dim();
    let truncated = record.truncated(t, d)?;
    let cohort = Cohort::new(record.covariates.len(), d, vec![truncated]);
    let q = params.q.dim;
    let mut chains = ChainState::new(1, q, sampler.clone(), seed);
    chains.refresh(&cohort, params, design)?;
    chains.warmup(&cohort, params, design, sampler.warmup);
    let per = chains.n_chains();
    let sweeps = n_draws.div_ceil(per);
    let mut out = Vec::with_capacity(sweeps * per);
    for snap in chains.run(&cohort, params, design, sweeps * thin.max(1), thin.max(1)) {
        out.extend(snap.chunks(q).map(<[f64]>::to_vec));
    }
    out.truncate(n_draws);
    Ok(out)
}

/// Settings shared by prediction calls.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictConfig {
    pub sampler: SamplerConfig,
    pub n_draws: usize,
    pub thin: usize,
    pub max_transitions: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            sampler: SamplerConfig::default(),
            n_draws: 100,
            thin: PREDICT_THIN,
            max_transitions: DEFAULT_MAX_TRANSITIONS,
        }
    }
}

/// Predicts several functionals for one individual from data up to `t`,
/// sharing posterior draws and continuations.
pub fn predict_functionals(
    record: &IndividualRecord,
    t: f64,
    functionals: &[&dyn Functional],
    design: &ModelDesign,
    params: &ModelParams,
    config: &PredictConfig,
    seed: u64,
) -> Result<Vec<PredictionResult>> {
    let d = design.regression().output_dim();
    let truncated = record.truncated(t, d)?;
    let draws = posterior_condition(
        record,
        t,
        design,
        params,
        &config.sampler,
        config.n_draws,
        config.thin,
        seed,
    )?;
    let horizon = functionals
        .iter()
        .map(|f| f.horizon())
        .fold(f64::NEG_INFINITY, f64::max);
    let sim = SimConfig {
        censoring: horizon.max(t),
        t_surv: t,
        max_transitions: config.max_transitions,
    };
    let x = &record.covariates;
    let mut results: Vec<PredictionResult> = functionals
        .iter()
        .map(|_| PredictionResult {
            values: Vec::with_capacity(draws.len()),
            horizon_censored: 0,
            n_draws: draws.len(),
            truncation: t,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    for b in &draws {
        let psi = design.individual_effects(&params.gamma, x, b);
        match continue_trajectory(
            design,
            params,
            x,
            &psi,
            truncated.trajectory.clone(),
            &sim,
            &mut rng,
        ) {
            Ok(traj) => {
                for (f, r) in functionals.iter().zip(results.iter_mut()) {
                    match evaluate(*f, traj.pairs(), design.graph()) {
                        Some(v) => r.values.push(v),
                        None => r.horizon_censored += 1,
                    }
                }
            }
            Err(Error::TransitionLimit { .. }) => {
                for r in &mut results {
                    r.horizon_censored += 1;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(results)
}

/// Single-functional form of [`predict_functionals`].
pub fn predict_functional(
    record: &IndividualRecord,
    t: f64,
    functional: &dyn Functional,
    design: &ModelDesign,
    params: &ModelParams,
    config: &PredictConfig,
    seed: u64,
) -> Result<PredictionResult> {
    Ok(predict_functionals(record, t, &[functional], design, params, config, seed)?.remove(0))
}

/// Predicted state distributions at each horizon `u` (evaluated at
/// `min(u, C_i)`) for every listed individual, from data up to `t`.
/// Returns, per individual, one probability vector per horizon.
#[allow(clippy::too_many_arguments)]
pub fn predict_states(
    cohort: &Cohort,
    individuals: &[usize],
    t: f64,
    horizons: &[f64],
    design: &ModelDesign,
    params: &ModelParams,
    config: &PredictConfig,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if let Some(&i) = individuals.iter().find(|&&i| i >= cohort.len()) {
        return Err(Error::Validation(format!("unknown individual {i}")));
    }
    let k = design.graph().num_states();
    let out = par::map_range(individuals.len(), |j| -> Result<Vec<Vec<f64>>> {
        let i = individuals[j];
        let rec = &cohort.individuals[i];
        let fs: Vec<StateAtTime> = horizons
            .iter()
            .map(|&u| state_at_time(u.min(rec.censoring_time)))
            .collect();
        let refs: Vec<&dyn Functional> = fs.iter().map(|f| f as &dyn Functional).collect();
        let mut rng_seed = ChaCha8Rng::seed_from_u64(seed);
        rng_seed.set_stream(i as u64);
        let s = rand::Rng::random::<u64>(&mut rng_seed);
        Ok(
            predict_functionals(rec, t, &refs, design, params, config, s)?
                .iter()
                .map(|r| r.state_probabilities(k))
                .collect(),
        )
    });
    out.into_iter().collect()
}

/// Observed state at `min(u, C)`.
pub fn observed_state(record: &IndividualRecord, u: f64) -> usize {
    record.trajectory.state_at(u.min(record.censoring_time))
}

/// Fraction of exact matches between predicted and observed states.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} observations",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Validation("accuracy of an empty set".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_state() -> TransitionGraph {
        TransitionGraph::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
    }

    fn absorbing_fig() -> TransitionGraph {
        // 1 and 3 absorbing; 0 -> 1, 0 -> 2, 2 -> 3
        TransitionGraph::new(4, [(0, 1), (0, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn state_at_time_examples() {
        let g = TransitionGraph::new(2, [(0, 1)]).unwrap();
        let tr = [(0.0, 0), (2.0, 1)];
        assert_eq!(evaluate(&state_at_time(1.0), &tr, &g), Some(0.0));
        assert_eq!(evaluate(&state_at_time(10.0), &tr, &g), Some(1.0));
        assert_eq!(evaluate(&state_at_time(-1.0), &tr, &g), Some(0.0));
        assert_eq!(evaluate(&state_at_time(2.0), &tr, &g), Some(1.0));
        assert_eq!(state_at_time(-1.0).tau(&tr, &g), Some(0));
    }

    #[test]
    fn hitting_time_examples() {
        let g = absorbing_fig();
        let f = hitting_time(&[1], &g).unwrap();
        let tr = [(0.0, 0), (1.0, 2), (3.0, 3)];
        assert_eq!(f.kappa(&tr, &g), Some(1));
        assert_eq!(evaluate(&f, &tr, &g), Some(f64::INFINITY));
        let f = hitting_time(&[0], &g).unwrap();
        assert_eq!(evaluate(&f, &tr, &g), Some(0.0));
        let f = hitting_time(&[0, 1, 2, 3], &g).unwrap();
        assert_eq!(evaluate(&f, &[(0.5, 2)], &g), Some(0.5));
        assert!(hitting_time(&[], &g).is_err());
    }

    #[test]
    fn prefix_measurability() {
        use rand::Rng;
        let g = four_state();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let fs: Vec<Box<dyn Functional>> = vec![
            Box::new(state_at_time(2.0)),
            Box::new(state_at_time(0.5)),
            Box::new(hitting_time(&[2], &g).unwrap()),
            Box::new(hitting_time(&[1, 3], &g).unwrap()),
        ];
        for _ in 0..1000 {
            let mut pairs = vec![(0.0, 0usize)];
            let mut t = 0.0;
            while !g.is_absorbing(pairs.last().unwrap().1) && rng.random::<f64>() < 0.8 {
                let s = pairs.last().unwrap().1;
                let succ = g.successors(s);
                let (next, _) = succ[rng.random_range(0..succ.len())];
                t += rng.random::<f64>() * 2.0;
                pairs.push((t, next));
            }
            for f in &fs {
                let full = evaluate(f.as_ref(), &pairs, &g);
                let stop = match (f.tau(&pairs, &g), f.kappa(&pairs, &g)) {
                    (None, None) => continue,
                    (a, b) => a.unwrap_or(usize::MAX).min(b.unwrap_or(usize::MAX)),
                };
                assert_eq!(full, evaluate(f.as_ref(), &pairs[..=stop], &g));
            }
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1], &[0, 2]).unwrap(), 0.5);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert_eq!(modal_state(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(modal_state(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn distribution_sums_to_one() {
        let r = PredictionResult {
            values: vec![1.0, 0.0, 1.0, f64::INFINITY],
            horizon_censored: 1,
            n_draws: 5,
            truncation: 0.0,
        };
        let d = r.distribution();
        assert_eq!(d.len(), 3);
        assert!((d.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-15);
        let p = r.state_probabilities(2);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }
}
