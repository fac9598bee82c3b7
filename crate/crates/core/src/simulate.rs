//! Exact simulation of semi-Markov trajectories by inversion of cumulative
//! intensities, survival-conditioned continuation, and synthetic cohorts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::{Cohort, IndividualRecord, Trajectory};
use crate::design::ModelDesign;
use crate::error::{Error, Result};
use crate::par;
use crate::params::ModelParams;

pub const DEFAULT_MAX_TRANSITIONS: usize = 10_000;
/// Absolute time tolerance of the bisection.
pub const TIME_TOL: f64 = 1e-9;
const MAX_BRACKET: usize = 200;
const MAX_BISECT: usize = 200;

/// Outcome of inverting a cumulative intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventTime {
    At(f64),
    /// The threshold is not reached before the cap.
    Censored,
}

/// Smallest `t` in `[lower, cap]` with `Lambda(lower, t) = threshold`, where
/// `increment(a, b)` returns `Lambda(a, b)`. Integrals are accumulated over
/// adjacent intervals. An infinite cap is bracketed by doubling.
pub fn invert_cumulative(
    mut increment: impl FnMut(f64, f64) -> f64,
    lower: f64,
    cap: f64,
    threshold: f64,
) -> Result<EventTime> {
    if threshold <= 0.0 {
        return Ok(EventTime::At(lower));
    }
    if cap <= lower {
        return Ok(EventTime::Censored);
    }
    let check = |v: f64| -> Result<f64> {
        if v < -1e-12 || v.is_nan() {
            Err(Error::Numerical(format!(
                "cumulative intensity increment {v} is negative"
            )))
        } else {
            Ok(v)
        }
    };

    // bracket: acc = Lambda(lower, lo) < threshold <= Lambda(lower, hi)
    let (mut lo, mut hi, mut acc);
    if cap.is_finite() {
        let total = check(increment(lower, cap))?;
        if total < threshold {
            return Ok(EventTime::Censored);
        }
        (lo, hi, acc) = (lower, cap, 0.0);
    } else {
        let mut width = lower.abs().max(1.0);
        (lo, acc) = (lower, 0.0);
        let mut found = None;
        for _ in 0..MAX_BRACKET {
            let h = lower + width;
            let inc = check(increment(lo, h))?;
            if acc + inc >= threshold {
                found = Some(h);
                break;
            }
            acc += inc;
            lo = h;
            width *= 2.0;
        }
        match found {
            Some(h) => hi = h,
            None => return Ok(EventTime::Censored),
        }
    }

    for _ in 0..MAX_BISECT {
        if hi - lo <= TIME_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let inc = check(increment(lo, mid))?;
        if acc + inc >= threshold {
            hi = mid;
        } else {
            acc += inc;
            lo = mid;
        }
    }
    Ok(EventTime::At(hi))
}

/// Draws `E ~ Exp(1)` and inverts `Lambda(lower, .)` at `E`.
pub fn sample_event_time<R: Rng + ?Sized>(
    increment: impl FnMut(f64, f64) -> f64,
    lower: f64,
    cap: f64,
    rng: &mut R,
) -> Result<EventTime> {
    let e: f64 = Exp1.sample(rng);
    invert_cumulative(increment, lower, cap, e)
}

/// Per-trajectory simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub censoring: f64,
    /// The first transition is conditioned to occur at or after this time.
    pub t_surv: f64,
    pub max_transitions: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            censoring: f64::INFINITY,
            t_surv: f64::NEG_INFINITY,
            max_transitions: DEFAULT_MAX_TRANSITIONS,
        }
    }
}

/// One competing-risks step from `state` entered at `entry`, event times
/// bounded below by `lower`. Ties go to the lowest successor state.
fn next_transition<R: Rng + ?Sized>(
    design: &ModelDesign,
    ev: &mut crate::design::IntensityEval<'_>,
    state: usize,
    entry: f64,
    lower: f64,
    cap: f64,
    rng: &mut R,
) -> Result<Option<(f64, usize)>> {
    let mut best: Option<(f64, usize)> = None;
    for &(target, e) in design.graph().successors(state) {
        let t = sample_event_time(|a, b| ev.cumulative(e, entry, a, b), lower, cap, rng)?;
        if let EventTime::At(u) = t {
            if best.is_none_or(|(bu, _)| u < bu) {
                best = Some((u, target));
            }
        }
    }
    Ok(best)
}

/// Simulates a trajectory from `initial` up to censoring.
pub fn sample_trajectory<R: Rng + ?Sized>(
    design: &ModelDesign,
    params: &ModelParams,
    x: &[f64],
    psi: &[f64],
    initial: (f64, usize),
    config: &SimConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    continue_trajectory(
        design,
        params,
        x,
        psi,
        Trajectory::initial(initial.0, initial.1),
        config,
        rng,
    )
}

/// Extends `prefix` from its last pair. `t_surv` applies to the first new
/// transition.
pub fn continue_trajectory<R: Rng + ?Sized>(
    design: &ModelDesign,
    params: &ModelParams,
    x: &[f64],
    psi: &[f64],
    prefix: Trajectory,
    config: &SimConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    let graph = design.graph();
    let mut traj = prefix;
    let (mut t, mut s) = traj.last();
    if s >= graph.num_states() {
        return Err(Error::Validation(format!("initial state {s} out of range")));
    }
    let mut ev = design.intensities(params, x, psi);
    let mut first = true;
    let mut count = 0;
    while !graph.is_absorbing(s) && t < config.censoring {
        let lower = if first { t.max(config.t_surv) } else { t };
        first = false;
        match next_transition(design, &mut ev, s, t, lower, config.censoring, rng)? {
            Some((u, k)) => {
                count += 1;
                if count > config.max_transitions {
                    return Err(Error::TransitionLimit {
                        limit: config.max_transitions,
                    });
                }
                traj.push(u, k)?;
                (t, s) = (u, k);
            }
            None => break,
        }
    }
    Ok(traj)
}

/// Two-sample comparison of first-transition laws.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningDiagnostic {
    pub n: usize,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub chi2_statistic: f64,
    pub chi2_p_value: f64,
}

impl ConditioningDiagnostic {
    pub fn passes(&self, alpha: f64) -> bool {
        self.ks_p_value >= alpha && self.chi2_p_value >= alpha
    }
}

/// Asymptotic p-value of the Kolmogorov distribution.
pub fn kolmogorov_p_value(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_p_value((ne + 0.12 + 0.11 / ne) * d))
}

/// One-sample KS statistic and asymptotic p-value against `cdf`.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = x.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x.iter().enumerate().fold(0.0_f64, |d, (i, &v)| {
        let f = cdf(v);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    });
    let s = n.sqrt();
    (d, kolmogorov_p_value((s + 0.12 + 0.11 / s) * d))
}

/// Chi-square test of homogeneity for two count vectors.
pub fn chi2_homogeneity(a: &[u64], b: &[u64]) -> (f64, f64) {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut stat = 0.0;
    let mut cells = 0;
    for (&x, &y) in a.iter().zip(b) {
        let tot = (x + y) as f64;
        if tot == 0.0 {
            continue;
        }
        cells += 1;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if cells < 2 {
        return (0.0, 1.0);
    }
    let dist = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

/// Compares Chasles-conditioned first transitions against rejection
/// sampling of unconditioned ones (keeping `T_1 >= t_surv`), `n` accepted
/// draws each.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_equals_rejection(
    design: &ModelDesign,
    params: &ModelParams,
    x: &[f64],
    psi: &[f64],
    initial: (f64, usize),
    t_surv: f64,
    n: usize,
    seed: u64,
) -> Result<ConditioningDiagnostic> {
    let k = design.graph().num_states();
    let mut ev = design.intensities(params, x, psi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, s0) = initial;
    let draw = |ev: &mut _, rng: &mut ChaCha8Rng, lower: f64| {
        next_transition(design, ev, s0, t0, lower, f64::INFINITY, rng)
    };

    let mut times_c = Vec::with_capacity(n);
    let mut states_c = vec![0u64; k + 1];
    for _ in 0..n {
        match draw(&mut ev, &mut rng, t0.max(t_surv))? {
            Some((u, s)) => {
                times_c.push(u);
                states_c[s] += 1;
            }
            None => states_c[k] += 1,
        }
    }

    let mut times_r = Vec::with_capacity(n);
    let mut states_r = vec![0u64; k + 1];
    let mut kept = 0;
    let max_attempts = n.saturating_mul(10_000).max(1);
    for _ in 0..max_attempts {
        if kept == n {
            break;
        }
        match draw(&mut ev, &mut rng, t0)? {
            Some((u, s)) if u >= t_surv => {
                times_r.push(u);
                states_r[s] += 1;
                kept += 1;
            }
            Some(_) => {}
            None => {
                states_r[k] += 1;
                kept += 1;
            }
        }
    }
    if kept < n {
        return Err(Error::Numerical(
            "rejection sampler accepted too few draws".into(),
        ));
    }
    let (ks, ks_p) = if times_c.is_empty() || times_r.is_empty() {
        (0.0, 1.0)
    } else {
        ks_two_sample(&times_c, &times_r)
    };
    let (chi2, chi2_p) = chi2_homogeneity(&states_c, &states_r);
    Ok(ConditioningDiagnostic {
        n,
        ks_statistic: ks,
        ks_p_value: ks_p,
        chi2_statistic: chi2,
        chi2_p_value: chi2_p,
    })
}

/// Measurement-time grid: `m` points on `[start, end]` with pairwise
/// separation at least `min_sep`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    pub m: usize,
    pub start: f64,
    pub end: f64,
    pub min_sep: f64,
}

impl GridPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.end >= self.start) || !self.min_sep.is_finite() || self.min_sep < 0.0 {
            return Err(Error::Validation(
                "grid needs start <= end and min_sep >= 0".into(),
            ));
        }
        if self.m > 1 && (self.m - 1) as f64 * self.min_sep > self.end - self.start {
            return Err(Error::Validation(format!(
                "cannot place {} points {} apart in [{}, {}]",
                self.m, self.min_sep, self.start, self.end
            )));
        }
        Ok(())
    }

    /// Uniform over separated configurations: sorted uniforms on the
    /// shortened interval, shifted by `j * min_sep`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let slack = self.end - self.start - self.m.saturating_sub(1) as f64 * self.min_sep;
        let mut u: Vec<f64> = (0..self.m).map(|_| rng.random::<f64>() * slack).collect();
        u.sort_by(f64::total_cmp);
        u.iter()
            .enumerate()
            .map(|(j, v)| self.start + v + j as f64 * self.min_sep)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "law")]
pub enum CensoringLaw {
    Uniform { low: f64, high: f64 },
    Fixed { time: f64 },
    Never,
}

impl CensoringLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CensoringLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            CensoringLaw::Fixed { time } => time,
            CensoringLaw::Never => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub n: usize,
    /// Standard normal covariates per individual.
    pub covariate_dim: usize,
    pub grid: GridPolicy,
    pub censoring: CensoringLaw,
    #[serde(default)]
    pub initial_time: f64,
    #[serde(default)]
    pub initial_state: usize,
    #[serde(default = "default_max_transitions")]
    pub max_transitions: usize,
}

fn default_max_transitions() -> usize {
    DEFAULT_MAX_TRANSITIONS
}

impl CohortConfig {
    /// 1000 individuals, one covariate, 20 measurements on `[0, 15]` at
    /// least `0.7 * 15 / 20` apart, censoring uniform on `[10, 15]`.
    pub fn simulation_study() -> Self {
        CohortConfig {
            n: 1000,
            covariate_dim: 1,
            grid: GridPolicy {
                m: 20,
                start: 0.0,
                end: 15.0,
                min_sep: 0.7 * 15.0 / 20.0,
            },
            censoring: CensoringLaw::Uniform {
                low: 10.0,
                high: 15.0,
            },
            initial_time: 0.0,
            initial_state: 0,
            max_transitions: DEFAULT_MAX_TRANSITIONS,
        }
    }
}

/// A synthetic cohort with its latent truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCohort {
    pub cohort: Cohort,
    /// Row-major `n x q`.
    pub b: Vec<f64>,
    /// Row-major `n x psi_dim`.
    pub psi: Vec<f64>,
}

/// Generates a cohort. Individual `i` uses its own stream of `seed`.
pub fn generate_cohort(
    design: &ModelDesign,
    params: &ModelParams,
    config: &CohortConfig,
    seed: u64,
) -> Result<SimulatedCohort> {
    design.check_params(params, config.covariate_dim)?;
    config.grid.validate()?;
    if config.initial_state >= design.graph().num_states() {
        return Err(Error::Validation(format!(
            "initial state {} out of range",
            config.initial_state
        )));
    }
    let d = design.regression().output_dim();
    let rows = par::map_range(
        config.n,
        |i| -> Result<(IndividualRecord, Vec<f64>, Vec<f64>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let c = config.censoring.sample(&mut rng);
            let x: Vec<f64> = (0..config.covariate_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let b = params.q.sample(&mut rng);
            let psi = design.individual_effects(&params.gamma, &x, &b);
            let times = config.grid.sample(&mut rng);
            let mut y = Vec::with_capacity(times.len() * d);
            for &t in &times {
                let h = design.regression_at(t, &psi);
                let eps = params.r.sample(&mut rng);
                if t > c {
                    y.extend(std::iter::repeat_n(f64::NAN, d));
                } else {
                    y.extend(h.iter().zip(&eps).map(|(h, e)| h + e));
                }
            }
            let sim = SimConfig {
                censoring: c,
                t_surv: f64::NEG_INFINITY,
                max_transitions: config.max_transitions,
            };
            let traj = sample_trajectory(
                design,
                params,
                &x,
                &psi,
                (config.initial_time, config.initial_state),
                &sim,
                &mut rng,
            )?;
            Ok((
                IndividualRecord {
                    covariates: x,
                    measurement_times: times,
                    measurements: y,
                    trajectory: traj,
                    censoring_time: c,
                },
                b,
                psi,
            ))
        },
    );
    let mut individuals = Vec::with_capacity(config.n);
    let mut b_all = Vec::new();
    let mut psi_all = Vec::new();
    for r in rows {
        let (rec, b, psi) = r?;
        individuals.push(rec);
        b_all.extend(b);
        psi_all.extend(psi);
    }
    Ok(SimulatedCohort {
        cohort: Cohort::new(config.covariate_dim, d, individuals),
        b: b_all,
        psi: psi_all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_examples() {
        let lin = |a: f64, b: f64| 0.5 * (b - a);
        match invert_cumulative(lin, 0.0, f64::INFINITY, 1.0).unwrap() {
            EventTime::At(t) => assert!((t - 2.0).abs() <= 2e-9),
            EventTime::Censored => panic!(),
        }
        let slow = |a: f64, b: f64| 0.1 * (b - a);
        assert_eq!(
            invert_cumulative(slow, 0.0, 4.0, 1.0).unwrap(),
            EventTime::Censored
        );
        match invert_cumulative(slow, 3.0, 100.0, 1.0).unwrap() {
            EventTime::At(t) => assert!((t - 13.0).abs() <= 2e-9),
            EventTime::Censored => panic!(),
        }
        assert!(invert_cumulative(|a, b| a - b, 0.0, 5.0, 1.0).is_err());
    }

    #[test]
    fn negative_lower_bound_brackets() {
        let lin = |a: f64, b: f64| b - a;
        match invert_cumulative(lin, -50.0, f64::INFINITY, 0.25).unwrap() {
            EventTime::At(t) => assert!((t + 49.75).abs() <= 2e-9),
            EventTime::Censored => panic!(),
        }
    }

    #[test]
    fn zero_hazard_never_fires() {
        assert_eq!(
            invert_cumulative(|_, _| 0.0, 0.0, f64::INFINITY, 0.5).unwrap(),
            EventTime::Censored
        );
    }

    #[test]
    fn grids_respect_separation() {
        let g = GridPolicy {
            m: 20,
            start: 0.0,
            end: 15.0,
            min_sep: 0.525,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = g.sample(&mut rng);
            assert_eq!(t.len(), 20);
            assert!(t.windows(2).all(|w| w[1] - w[0] >= 0.525 - 1e-12));
            assert!(t[0] >= 0.0 && t[19] <= 15.0);
        }
        let bad = GridPolicy { min_sep: 1.0, ..g };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ks_and_chi2_helpers() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let (d, p) = ks_one_sample(&a, |x| x.clamp(0.0, 1.0));
        assert!(d <= 1.0 / 1000.0 + 1e-12 && p > 0.99);
        let (d, _) = ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]);
        assert_eq!(d, 1.0);
        let (s, p) = chi2_homogeneity(&[50, 50], &[50, 50]);
        assert_eq!(s, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        assert!(kolmogorov_p_value(1.628) < 0.011 && kolmogorov_p_value(1.628) > 0.009);
    }
}
