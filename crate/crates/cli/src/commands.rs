//! The four commands. Each reads its inputs, runs the library and writes
//! files into an existing output directory.

use std::path::Path;
use std::time::Instant;

use msjm_core::inference::{compute_fim, stderr, StopReason};
use msjm_core::predict::{modal_state, observed_state, predict_states, PredictConfig};
use msjm_core::simulate::generate_cohort;
use serde::Serialize;

use crate::config::RunConfig;
use crate::io::{self, fmt_f64, CsvOut};
use crate::CliError;

pub const PARAMS: &str = "params.json";
pub const HISTORY: &str = "history.csv";
pub const REPORT: &str = "report.json";
pub const FIM: &str = "fim.csv";
pub const STDERR: &str = "stderr.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const ACCURACY: &str = "accuracy.csv";

/// Writes the cohort files and `latent.csv`. Ids are `0..n`.
pub fn simulate(cfg: &RunConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    let sim_cfg = cfg.require_simulation()?;
    let truth = cfg.require_truth()?;
    let design = cfg.build_design()?;
    let params = truth.build(&design, sim_cfg.covariate_dim, "truth")?;
    let sim = generate_cohort(&design, &params, sim_cfg, seed)?;
    let ids: Vec<String> = (0..sim.cohort.len()).map(|i| i.to_string()).collect();
    io::write_cohort(out, &ids, &sim.cohort)?;
    io::write_latent(
        out,
        &ids,
        &sim.b,
        params.q.dim,
        &sim.psi,
        design.regression().psi_dim(),
    )
}

#[derive(Serialize)]
struct FitSummary {
    iterations: usize,
    stop_reason: StopReason,
    acceptance_rate: f64,
    skipped_steps: usize,
    final_loglik: Option<f64>,
    parameters: Vec<String>,
}

/// Writes `params.json`, the long-format `history.csv` and `report.json`.
pub fn fit(cfg: &RunConfig, data: &Path, out: &Path, seed: u64) -> Result<(), CliError> {
    let design = cfg.build_design()?;
    let files = io::read_cohort(data, &design)?;
    let init = cfg.initial_params(&design, files.cohort.covariate_dim)?;
    let start = Instant::now();
    let report = msjm_core::inference::fit(
        &files.cohort,
        &design,
        &init,
        &cfg.fit,
        cfg.stop.clone(),
        &cfg.sampler,
        seed,
    )?;
    eprintln!(
        "fit: {} iterations in {:.1} s ({:?})",
        report.iterations,
        start.elapsed().as_secs_f64(),
        report.stop_reason
    );
    io::write_params(&out.join(PARAMS), &report.params)?;
    let names = init.free_names();
    let mut h = CsvOut::create(
        out.join(HISTORY),
        &["iteration".into(), "quantity".into(), "value".into()],
    )?;
    for e in &report.history {
        let it = e.iteration.to_string();
        h.row(&[it.clone(), "loglik".into(), fmt_f64(e.loglik)])?;
        for (name, v) in names.iter().zip(&e.params) {
            h.row(&[it.clone(), name.clone(), fmt_f64(*v)])?;
        }
    }
    h.finish()?;
    io::write_json(
        &out.join(REPORT),
        &FitSummary {
            iterations: report.iterations,
            stop_reason: report.stop_reason,
            acceptance_rate: report.acceptance_rate,
            skipped_steps: report.skipped_steps,
            final_loglik: report.history.last().map(|e| e.loglik),
            parameters: names,
        },
    )
}

/// Writes the information matrix to `fim.csv` and a parameter table with
/// standard errors to `stderr.csv`. Unidentified coordinates get `inf`.
pub fn fim(
    cfg: &RunConfig,
    data: &Path,
    params_file: &Path,
    out: &Path,
    seed: u64,
) -> Result<(), CliError> {
    let design = cfg.build_design()?;
    let files = io::read_cohort(data, &design)?;
    let params = io::read_params(params_file, &design, files.cohort.covariate_dim)?;
    let est = compute_fim(
        &files.cohort,
        &design,
        &params,
        &cfg.sampler,
        cfg.fim.sweeps,
        cfg.fim.method,
        seed,
    )?;
    let se = stderr(&est.matrix)?;
    let names = params.free_names();
    let mut head = vec!["parameter".to_string()];
    head.extend(names.iter().cloned());
    let mut f = CsvOut::create(out.join(FIM), &head)?;
    for (r, name) in names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend(est.matrix.row(r).iter().map(|&v| fmt_f64(v)));
        f.row(&row)?;
    }
    f.finish()?;
    let mut t = CsvOut::create(
        out.join(STDERR),
        &[
            "parameter".into(),
            "estimate".into(),
            "stderr".into(),
            "identified".into(),
        ],
    )?;
    for ((name, v), s) in names.iter().zip(params.flatten()).zip(&se) {
        t.row(&[
            name.clone(),
            fmt_f64(v),
            fmt_f64(*s),
            s.is_finite().to_string(),
        ])?;
    }
    t.finish()
}

/// Writes one row per (individual, truncation time, horizon) to
/// `predictions.csv` and per (truncation time, horizon) accuracies to
/// `accuracy.csv`. Individuals censored before a truncation time are left
/// out at that time.
pub fn predict(
    cfg: &RunConfig,
    data: &Path,
    params_file: &Path,
    out: &Path,
    seed: u64,
) -> Result<(), CliError> {
    let settings = cfg.require_predict()?;
    if settings.truncation_times.is_empty() {
        return Err(CliError::Validation(
            "at `predict.truncation_times`: empty list".into(),
        ));
    }
    if settings.horizons.is_empty() {
        return Err(CliError::Validation(
            "at `predict.horizons`: empty list".into(),
        ));
    }
    let design = cfg.build_design()?;
    let files = io::read_cohort(data, &design)?;
    let params = io::read_params(params_file, &design, files.cohort.covariate_dim)?;
    let selected: Vec<usize> = match &settings.individuals {
        None => (0..files.cohort.len()).collect(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                files.index_of(id).ok_or_else(|| {
                    CliError::Validation(format!(
                        "at `predict.individuals`: unknown individual id `{id}`"
                    ))
                })
            })
            .collect::<Result<_, _>>()?,
    };
    let pcfg = PredictConfig {
        sampler: settings
            .sampler
            .clone()
            .unwrap_or_else(|| cfg.sampler.clone()),
        n_draws: settings.n_draws,
        thin: settings.thin,
        max_transitions: settings.max_transitions,
    };
    let k = design.graph().num_states();
    let mut head: Vec<String> = ["id", "t", "u"].iter().map(|s| s.to_string()).collect();
    head.extend((0..k).map(|s| format!("p_{s}")));
    head.extend(["modal".to_string(), "observed".to_string()]);
    let mut pred = CsvOut::create(out.join(PREDICTIONS), &head)?;
    let mut acc = CsvOut::create(
        out.join(ACCURACY),
        &["t", "u", "n", "accuracy", "se"].map(String::from),
    )?;
    for (j, &t) in settings.truncation_times.iter().enumerate() {
        let eligible: Vec<usize> = selected
            .iter()
            .copied()
            .filter(|&i| {
                let rec = &files.cohort.individuals[i];
                rec.censoring_time >= t && rec.trajectory.first().0 <= t
            })
            .collect();
        let probs = predict_states(
            &files.cohort,
            &eligible,
            t,
            &settings.horizons,
            &design,
            &params,
            &pcfg,
            seed.wrapping_add(j as u64),
        )?;
        let mut hits = vec![0usize; settings.horizons.len()];
        for (&i, per_u) in eligible.iter().zip(&probs) {
            let rec = &files.cohort.individuals[i];
            for (h, (&u, p)) in settings.horizons.iter().zip(per_u).enumerate() {
                let modal = modal_state(p);
                let seen = observed_state(rec, u);
                hits[h] += usize::from(modal == seen);
                let mut row = vec![files.ids[i].clone(), fmt_f64(t), fmt_f64(u)];
                row.extend(p.iter().map(|&v| fmt_f64(v)));
                row.extend([modal.to_string(), seen.to_string()]);
                pred.row(&row)?;
            }
        }
        let n = eligible.len();
        for (&u, &hit) in settings.horizons.iter().zip(&hits) {
            let (a, se) = if n == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let a = hit as f64 / n as f64;
                (a, (a * (1.0 - a) / n as f64).sqrt())
            };
            acc.row(&[
                fmt_f64(t),
                fmt_f64(u),
                n.to_string(),
                fmt_f64(a),
                fmt_f64(se),
            ])?;
        }
    }
    pred.finish()?;
    acc.finish()
}
