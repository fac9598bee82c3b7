//! Simulates the three-state piecewise cohort and fits it from zeros.
//!
//! `cargo run --release -p msjm-core --example simulation_study -- [seed]`

use std::time::Instant;

use msjm_core::graph::build_buckets;
use msjm_core::inference::{fit, FitConfig, StopRule};
use msjm_core::presets::{piecewise_three_state, piecewise_three_state_truth};
use msjm_core::sampler::SamplerConfig;
use msjm_core::simulate::{generate_cohort, CohortConfig};

fn main() -> msjm_core::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42);
    let design = piecewise_three_state();
    let truth = piecewise_three_state_truth();
    let env = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<usize>().ok());
    let mut cohort_config = CohortConfig::simulation_study();
    if let Some(v) = env("N") {
        cohort_config.n = v;
    }
    let sim = generate_cohort(&design, &truth, &cohort_config, seed)?;
    let buckets = build_buckets(
        design.graph(),
        &sim.cohort.trajectories(),
        &sim.cohort.censoring_times(),
    )?;
    for e in design.graph().edges() {
        println!("{e}: {}", buckets.count(*e));
    }

    let mut fit_config = FitConfig::default();
    let mut sampler = SamplerConfig::default();
    if let Some(v) = env("SWEEPS") {
        fit_config.sweeps_per_iter = v;
    }
    if let Some(v) = env("WARMUP") {
        fit_config.warmup = v;
    }
    if let Some(v) = env("ITERS") {
        fit_config.max_iterations = v;
    }
    if let Some(v) = env("CHAINS") {
        sampler.n_chains = v;
    }
    let start = Instant::now();
    let report = fit(
        &sim.cohort,
        &design,
        &truth.zeros_like(),
        &fit_config,
        Some(StopRule::default()),
        &sampler,
        seed,
    )?;
    println!(
        "{:?} after {} iterations in {:.1?}, acceptance {:.3}",
        report.stop_reason,
        report.iterations,
        start.elapsed(),
        report.acceptance_rate
    );
    for h in report.history.iter().step_by(25) {
        let p: Vec<String> = h.params.iter().map(|v| format!("{v:.3}")).collect();
        println!("{:>4} {:>12.2} {}", h.iteration, h.loglik, p.join(" "));
    }
    for ((name, v), t) in report
        .params
        .free_names()
        .iter()
        .zip(report.params.flatten())
        .zip(truth.flatten())
    {
        println!("{name:>12} {v:>10.4} (true {t:.4})");
    }
    Ok(())
}
