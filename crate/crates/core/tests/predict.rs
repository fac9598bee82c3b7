//! Dynamic prediction against analytic continuation laws.

use std::sync::Arc;

use msjm_core::dataset::{IndividualRecord, Trajectory};
use msjm_core::design::{
    BaselineHazard, Clock, CompositeLink, EdgeSpec, Exponential, GammaPlusB, LinkPart, ModelDesign,
    Polynomial, Regression,
};
use msjm_core::graph::{Edge, TransitionGraph};
use msjm_core::params::{CovMethod, ModelParams, PrecisionRepr};
use msjm_core::predict::{
    hitting_time, posterior_condition, predict_functional, predict_functionals, state_at_time,
    PredictConfig,
};
use msjm_core::sampler::SamplerConfig;
use nalgebra::DMatrix;

/// 0 -> 1 with hazard `rate * exp(alpha * psi_0)`, biomarker `y = psi_0`.
fn single_edge(rate: f64, alpha: f64, prior_var: f64) -> (ModelDesign, ModelParams) {
    let g = TransitionGraph::new(2, [(0, 1)]).unwrap();
    let reg: Arc<dyn Regression> = Arc::new(Polynomial { degree: 0 });
    let d = ModelDesign::new(
        g,
        Arc::new(GammaPlusB { dim: 1 }),
        reg.clone(),
        [(
            Edge::new(0, 1),
            EdgeSpec {
                hazard: BaselineHazard::new(Exponential { rate }, Clock::Reset),
                link: Arc::new(CompositeLink::new(reg, vec![LinkPart::Value]).unwrap()),
            },
        )],
    )
    .unwrap();
    let p = ModelParams::new(
        vec![0.0],
        PrecisionRepr::from_cov(&DMatrix::from_element(1, 1, prior_var), CovMethod::Ball).unwrap(),
        PrecisionRepr::from_cov(&DMatrix::from_element(1, 1, 0.5), CovMethod::Ball).unwrap(),
        vec![(Edge::new(0, 1), vec![alpha])],
        vec![(Edge::new(0, 1), vec![])],
    )
    .unwrap();
    (d, p)
}

fn event_free(times: &[f64], y: &[f64], c: f64) -> IndividualRecord {
    IndividualRecord {
        covariates: vec![],
        measurement_times: times.to_vec(),
        measurements: y.to_vec(),
        trajectory: Trajectory::initial(0.0, 0),
        censoring_time: c,
    }
}

fn config(n_draws: usize, n_chains: usize) -> PredictConfig {
    PredictConfig {
        sampler: SamplerConfig {
            n_chains,
            warmup: 300,
            ..SamplerConfig::default()
        },
        n_draws,
        thin: 2,
        ..PredictConfig::default()
    }
}

#[test]
fn continuation_matches_exponential_law() {
    // alpha = 0: hazard free of b, so the continuation law is known exactly
    let rate = 0.3;
    let (d, p) = single_edge(rate, 0.0, 1.0);
    let rec = event_free(&[0.5, 1.5], &[0.2, -0.1], 10.0);
    let (t, u) = (2.0, 4.5);
    let n = 100_000;
    let r = predict_functional(&rec, t, &state_at_time(u), &d, &p, &config(n, 100), 3).unwrap();
    assert_eq!(r.values.len(), n);
    let want = 1.0 - (-rate * (u - t)).exp();
    let got = r.state_probabilities(2)[1];
    let sd = (want * (1.0 - want) / n as f64).sqrt();
    assert!((got - want).abs() < 3.0 * sd, "{got} vs {want}");
}

#[test]
fn truncation_before_data_gives_prior_draws() {
    let (d, p) = single_edge(0.3, 0.8, 2.0);
    let rec = IndividualRecord {
        trajectory: Trajectory::new(vec![(1.0, 0), (3.0, 1)]).unwrap(),
        ..event_free(&[1.5, 2.5], &[1.0, 2.0], 10.0)
    };
    // t equal to the initial time: no measurement and no sojourn observed
    let n_chains = 100;
    let draws = posterior_condition(
        &rec,
        1.0,
        &d,
        &p,
        &SamplerConfig {
            n_chains,
            warmup: 500,
            ..SamplerConfig::default()
        },
        100_000,
        1,
        5,
    )
    .unwrap();
    assert_eq!(draws.len(), 100_000);
    let per_sweep = draws.len() / n_chains;
    // chain c occupies position c of every sweep
    let chain_stat = |f: &dyn Fn(f64) -> f64| -> (f64, f64) {
        let means: Vec<f64> = (0..n_chains)
            .map(|c| {
                (0..per_sweep)
                    .map(|s| f(draws[s * n_chains + c][0]))
                    .sum::<f64>()
                    / per_sweep as f64
            })
            .collect();
        let m = means.iter().sum::<f64>() / n_chains as f64;
        let v = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n_chains - 1) as f64;
        (m, (v / n_chains as f64).sqrt())
    };
    let (m, se) = chain_stat(&|b| b);
    assert!(m.abs() < 3.0 * se, "mean {m} (se {se})");
    let (v, se) = chain_stat(&|b| b * b);
    assert!((v - 2.0).abs() < 3.0 * se, "second moment {v} (se {se})");

    assert!(posterior_condition(&rec, 0.5, &d, &p, &SamplerConfig::default(), 10, 1, 1).is_err());
}

#[test]
fn event_free_sojourn_lowers_hazard_linked_effect() {
    let rec = event_free(&[0.0, 1.0, 2.0], &[0.4, 0.6, 0.5], 8.0);
    let mean = |alpha: f64| {
        let (d, p) = single_edge(0.3, alpha, 1.0);
        let cfg = SamplerConfig {
            n_chains: 50,
            warmup: 500,
            ..SamplerConfig::default()
        };
        let draws = posterior_condition(&rec, 8.0, &d, &p, &cfg, 50_000, 1, 2).unwrap();
        draws.iter().map(|b| b[0]).sum::<f64>() / draws.len() as f64
    };
    let longitudinal_only = mean(0.0);
    // conjugate value: 3 obs with variance 0.5 and a unit prior
    let oracle = (1.5 / 0.5) / (1.0 + 3.0 / 0.5);
    assert!(
        (longitudinal_only - oracle).abs() < 0.02,
        "{longitudinal_only}"
    );
    let joint = mean(1.0);
    assert!(
        joint < longitudinal_only - 0.05,
        "{joint} vs {longitudinal_only}"
    );
}

#[test]
fn trivial_horizons_are_point_masses() {
    let (d, p) = single_edge(0.3, 0.5, 1.0);
    let rec = event_free(&[0.5], &[0.1], 10.0);
    let r = predict_functional(&rec, 3.0, &state_at_time(3.0), &d, &p, &config(200, 4), 1).unwrap();
    assert_eq!(r.state_probabilities(2), vec![1.0, 0.0]);

    let absorbed = IndividualRecord {
        trajectory: Trajectory::new(vec![(0.0, 0), (2.0, 1)]).unwrap(),
        ..rec
    };
    for u in [3.0, 10.0, 100.0] {
        let r = predict_functional(
            &absorbed,
            3.0,
            &state_at_time(u),
            &d,
            &p,
            &config(200, 4),
            1,
        )
        .unwrap();
        assert_eq!(r.state_probabilities(2), vec![0.0, 1.0]);
    }
    let hit = hitting_time(&[1], d.graph()).unwrap();
    let r = predict_functional(&absorbed, 3.0, &hit, &d, &p, &config(50, 2), 1).unwrap();
    assert!(r.values.iter().all(|&v| v == 2.0));
}

#[test]
fn runaway_continuations_are_reported_not_dropped() {
    let g = TransitionGraph::new(2, [(0, 1), (1, 0)]).unwrap();
    let reg: Arc<dyn Regression> = Arc::new(Polynomial { degree: 0 });
    let spec = || EdgeSpec {
        hazard: BaselineHazard::new(Exponential { rate: 50.0 }, Clock::Reset),
        link: Arc::new(CompositeLink::null(reg.clone())),
    };
    let d = ModelDesign::new(
        g,
        Arc::new(GammaPlusB { dim: 1 }),
        reg.clone(),
        [(Edge::new(0, 1), spec()), (Edge::new(1, 0), spec())],
    )
    .unwrap();
    let p = d.zero_params(0, CovMethod::Ball, CovMethod::Ball).unwrap();
    let rec = event_free(&[], &[], f64::INFINITY);
    let cfg = PredictConfig {
        max_transitions: 20,
        ..config(40, 4)
    };
    let fs = [state_at_time(10.0)];
    let refs: Vec<&dyn msjm_core::predict::Functional> = vec![&fs[0]];
    let r = predict_functionals(&rec, 1.0, &refs, &d, &p, &cfg, 1).unwrap();
    assert_eq!(r[0].horizon_censored, 40);
    assert!(r[0].values.is_empty());
}
