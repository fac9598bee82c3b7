//! Likelihood terms against dense and closed-form oracles.

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use msjm_core::dataset::{Cohort, IndividualRecord, Trajectory};
use msjm_core::design::{
    BaselineHazard, Clock, CompositeLink, EdgeSpec, Exponential, GammaPlusB, LinkPart, ModelDesign,
    Polynomial, Regression, Weibull,
};
use msjm_core::graph::{Edge, TransitionGraph};
use msjm_core::likelihood::{
    complete_loglik, individual_loglik, longitudinal_loglik, prior_loglik, semi_markov_loglik,
};
use msjm_core::params::{CovMethod, ModelParams, PrecisionRepr};
use msjm_core::presets::{piecewise_three_state, piecewise_three_state_truth};
use msjm_core::simulate::{generate_cohort, CohortConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// `log N(x; 0, cov)` through an LU inverse and determinant.
fn dense_normal(x: &[f64], cov: &DMatrix<f64>) -> f64 {
    let k = x.len() as f64;
    let v = DVector::from_column_slice(x);
    let inv = cov.clone().try_inverse().unwrap();
    -0.5 * (k * (2.0 * PI).ln() + cov.determinant().ln() + (v.transpose() * inv * &v)[(0, 0)])
}

fn spd(values: &[f64], q: usize) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(q, q, &values[..q * q]);
    &a * a.transpose() + DMatrix::identity(q, q) * 0.5
}

proptest! {
    #[test]
    fn prior_matches_dense_oracle(
        raw in prop::collection::vec(-1.5f64..1.5, 9),
        b in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let full = spd(&raw, 3);
        let diag = DMatrix::from_diagonal(&full.diagonal());
        let ball = DMatrix::identity(3, 3) * full[(0, 0)];
        for (cov, method) in [(full, CovMethod::Full), (diag, CovMethod::Diag), (ball, CovMethod::Ball)] {
            let q = PrecisionRepr::from_cov(&cov, method).unwrap();
            let got = prior_loglik(&b, &q);
            let want = dense_normal(&b, &cov);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{} vs {}", got, want);
        }
    }

    #[test]
    fn longitudinal_matches_dense_oracle(
        psi in prop::collection::vec(-2.0f64..2.0, 3),
        var in 0.1f64..3.0,
        times in prop::collection::vec(0.0f64..10.0, 0..8),
        noise in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let design = piecewise_three_state();
        let r = PrecisionRepr::from_cov(&DMatrix::from_element(1, 1, var), CovMethod::Ball).unwrap();
        let mut times = times;
        times.sort_by(f64::total_cmp);
        let reg = design.regression();
        let mut y = Vec::new();
        let mut want = 0.0;
        for (j, &t) in times.iter().enumerate() {
            let mut h = [0.0];
            reg.eval(t, &psi, &mut h);
            let yj = h[0] + noise[j];
            y.push(yj);
            want += dense_normal(&[noise[j]], &DMatrix::from_element(1, 1, var));
        }
        // one missing row contributes nothing
        let mut mt = times.clone();
        mt.push(11.0);
        y.push(f64::NAN);
        let rec = IndividualRecord {
            covariates: vec![0.0],
            measurement_times: mt,
            measurements: y,
            trajectory: Trajectory::initial(0.0, 0),
            censoring_time: 15.0,
        };
        let got = longitudinal_loglik(&rec, &psi, &r, &design);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
}

/// Chain 0 -> 1 -> 2 with Weibull(shape 2) baselines and a linear biomarker,
/// so every cumulative hazard has a closed form.
fn weibull_chain(clock: Clock) -> ModelDesign {
    let g = TransitionGraph::new(3, [(0, 1), (1, 2)]).unwrap();
    let reg: Arc<dyn Regression> = Arc::new(Polynomial { degree: 1 });
    let link = Arc::new(CompositeLink::new(reg.clone(), vec![LinkPart::Value]).unwrap());
    let spec = |scale| EdgeSpec {
        hazard: BaselineHazard::new(Weibull { shape: 2.0, scale }, clock),
        link: link.clone(),
    };
    ModelDesign::new(
        g,
        Arc::new(GammaPlusB { dim: 2 }),
        reg,
        [(Edge::new(0, 1), spec(2.0)), (Edge::new(1, 2), spec(3.0))],
    )
    .unwrap()
}

fn chain_params(a01: f64, a12: f64, b01: f64, b12: f64) -> ModelParams {
    ModelParams::new(
        vec![0.0, 0.0],
        PrecisionRepr::identity(CovMethod::Diag, 2),
        PrecisionRepr::identity(CovMethod::Ball, 1),
        vec![(Edge::new(0, 1), vec![a01]), (Edge::new(1, 2), vec![a12])],
        vec![(Edge::new(0, 1), vec![b01]), (Edge::new(1, 2), vec![b12])],
    )
    .unwrap()
}

/// Closed form with `h(t) = p0 + p1 t`, hazard `2 u / s^2 exp(a h(t) + b x)`.
fn chain_oracle(clock: Clock, psi: [f64; 2], x: f64, t1: f64, c: f64, p: [f64; 4]) -> f64 {
    let [a01, a12, b01, b12] = p;
    let h = |t: f64| psi[0] + psi[1] * t;
    // int_lo^hi 2 (t - o) exp(a (p0 + p1 t)) dt, by parts
    let cum = |a: f64, lo: f64, hi: f64, o: f64, s: f64| {
        let k = a * psi[1];
        let base = (a * psi[0]).exp();
        let prim = |t: f64| {
            if k.abs() < 1e-12 {
                (t - o).powi(2)
            } else {
                2.0 * (k.mul_add(t - o, -1.0)) * (k * t).exp() / (k * k)
            }
        };
        base * (prim(hi) - prim(lo)) / (s * s)
    };
    let origin = |entry: f64| match clock {
        Clock::Reset => entry,
        Clock::Forward => 0.0,
    };
    let o1 = origin(t1);
    let log_l01 = (2.0 * t1 / 4.0).ln() + a01 * h(t1) + b01 * x;
    -cum(a01, 0.0, t1, 0.0, 2.0) * (b01 * x).exp() + log_l01
        - cum(a12, t1, c, o1, 3.0) * (b12 * x).exp()
}

#[test]
fn semi_markov_matches_closed_form_both_clocks() {
    for clock in [Clock::Reset, Clock::Forward] {
        let d = weibull_chain(clock);
        for (psi, x, t1, c, p) in [
            ([0.3, 0.1], 0.5, 1.2, 4.0, [0.4, -0.3, 0.2, -0.5]),
            ([-0.2, 0.0], -1.0, 2.5, 2.6, [0.0, 0.0, 0.0, 0.0]),
            ([1.0, -0.4], 2.0, 0.3, 7.5, [-0.7, 0.9, 0.1, 0.3]),
        ] {
            let params = chain_params(p[0], p[1], p[2], p[3]);
            let rec = IndividualRecord {
                covariates: vec![x],
                measurement_times: vec![],
                measurements: vec![],
                trajectory: Trajectory::new(vec![(0.0, 0), (t1, 1)]).unwrap(),
                censoring_time: c,
            };
            let got = semi_markov_loglik(&rec, &psi, &params, &d).unwrap();
            let want = chain_oracle(clock, psi, x, t1, c, p);
            assert_relative_eq!(got, want, max_relative = 1e-10, epsilon = 1e-12);
        }
    }
}

#[test]
fn exponential_censored_sojourn() {
    // no event: log S = -lambda C
    let g = TransitionGraph::new(2, [(0, 1)]).unwrap();
    let reg: Arc<dyn Regression> = Arc::new(Polynomial { degree: 0 });
    let d = ModelDesign::new(
        g,
        Arc::new(GammaPlusB { dim: 1 }),
        reg.clone(),
        [(
            Edge::new(0, 1),
            EdgeSpec {
                hazard: BaselineHazard::new(Exponential { rate: 0.3 }, Clock::Reset),
                link: Arc::new(CompositeLink::null(reg)),
            },
        )],
    )
    .unwrap();
    let params = d.zero_params(1, CovMethod::Full, CovMethod::Ball).unwrap();
    let rec = IndividualRecord {
        covariates: vec![1.0],
        measurement_times: vec![],
        measurements: vec![],
        trajectory: Trajectory::initial(0.0, 0),
        censoring_time: 5.0,
    };
    let v = semi_markov_loglik(&rec, &[0.0], &params, &d).unwrap();
    assert_relative_eq!(v, -1.5, max_relative = 1e-13);
    let inf = IndividualRecord {
        censoring_time: f64::INFINITY,
        ..rec
    };
    assert_eq!(
        semi_markov_loglik(&inf, &[0.0], &params, &d).unwrap(),
        f64::NEG_INFINITY
    );
}

fn simulated() -> (Cohort, ModelDesign, ModelParams, Vec<f64>) {
    let design = piecewise_three_state();
    let truth = piecewise_three_state_truth();
    let mut cfg = CohortConfig::simulation_study();
    cfg.n = 40;
    let sim = generate_cohort(&design, &truth, &cfg, 8).unwrap();
    (sim.cohort, design, truth, sim.b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn additive_over_partitions(assign in prop::collection::vec(0usize..4, 40)) {
        let (cohort, design, params, b) = simulated();
        let all: Vec<usize> = (0..cohort.len()).collect();
        let whole = complete_loglik(&cohort, &b, &params, &design, &all).unwrap();
        let mut sum = 0.0;
        for part in 0..4 {
            let idx: Vec<usize> = (0..40).filter(|&i| assign[i] == part).collect();
            sum += complete_loglik(&cohort, &b, &params, &design, &idx).unwrap().total;
        }
        prop_assert!((sum - whole.total).abs() <= 1e-9 * whole.total.abs());
    }
}

#[test]
fn individual_total_is_sum_of_terms() {
    let (cohort, design, params, b) = simulated();
    for i in 0..cohort.len() {
        let bi = &b[3 * i..3 * i + 3];
        let t = individual_loglik(i, &cohort.individuals[i], bi, &params, &design).unwrap();
        let psi = design.individual_effects(&params.gamma, &cohort.individuals[i].covariates, bi);
        assert_relative_eq!(t.prior, prior_loglik(bi, &params.q), max_relative = 1e-14);
        assert_relative_eq!(
            t.longitudinal,
            longitudinal_loglik(&cohort.individuals[i], &psi, &params.r, &design),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            t.total,
            t.prior + t.longitudinal + t.semi_markov,
            max_relative = 1e-14
        );
    }
}
