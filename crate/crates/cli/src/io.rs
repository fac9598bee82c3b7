//! CSV cohort files and JSON parameter files.

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use msjm_core::dataset::{validate_cohort, Cohort, IndividualRecord, Trajectory};
use msjm_core::design::ModelDesign;
use msjm_core::graph::TransitionGraph;
use msjm_core::params::ModelParams;

use crate::config::ParamsSpec;
use crate::CliError;

pub const COVARIATES: &str = "covariates.csv";
pub const LONGITUDINAL: &str = "longitudinal.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const CENSORING: &str = "censoring.csv";
pub const LATENT: &str = "latent.csv";

/// Shortest decimal that parses back to the same bits; NaN is the empty
/// cell, infinities are `inf` and `-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:?}")
    }
}

pub struct CsvOut {
    w: csv::Writer<File>,
    path: PathBuf,
}

impl CsvOut {
    pub fn create(path: PathBuf, header: &[String]) -> Result<Self, CliError> {
        let w = csv::Writer::from_path(&path).map_err(|e| runtime(&path, e))?;
        let mut out = CsvOut { w, path };
        out.row(header)?;
        Ok(out)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, cells: &[S]) -> Result<(), CliError> {
        self.w
            .write_record(cells)
            .map_err(|e| runtime(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.w.flush().map_err(|e| runtime(&self.path, e))
    }
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn numbered(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("{prefix}{j}")).collect()
}

fn header(first: &[&str], rest: Vec<String>) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain(rest).collect()
}

/// Writes the four cohort files; `ids[i]` names individual `i`.
pub fn write_cohort(dir: &Path, ids: &[String], cohort: &Cohort) -> Result<(), CliError> {
    let d = cohort.biomarker_dim;
    let mut cov = CsvOut::create(
        dir.join(COVARIATES),
        &header(&["id"], numbered("x", cohort.covariate_dim)),
    )?;
    let mut lon = CsvOut::create(
        dir.join(LONGITUDINAL),
        &header(&["id", "time"], numbered("y", d)),
    )?;
    let mut tra = CsvOut::create(
        dir.join(TRAJECTORIES),
        &header(&["id", "time", "state"], vec![]),
    )?;
    let mut cen = CsvOut::create(dir.join(CENSORING), &header(&["id", "ctime"], vec![]))?;
    for (id, rec) in ids.iter().zip(&cohort.individuals) {
        let mut row = vec![id.clone()];
        row.extend(rec.covariates.iter().map(|&v| fmt_f64(v)));
        cov.row(&row)?;
        for (j, &t) in rec.measurement_times.iter().enumerate() {
            let mut row = vec![id.clone(), fmt_f64(t)];
            row.extend(rec.row(j, d).iter().map(|&v| fmt_f64(v)));
            lon.row(&row)?;
        }
        for &(t, s) in rec.trajectory.pairs() {
            tra.row(&[id.clone(), fmt_f64(t), s.to_string()])?;
        }
        cen.row(&[id.clone(), fmt_f64(rec.censoring_time)])?;
    }
    cov.finish()?;
    lon.finish()?;
    tra.finish()?;
    cen.finish()
}

/// Writes row-major `b` (`q` per individual) and `psi` (`p` per individual).
pub fn write_latent(
    dir: &Path,
    ids: &[String],
    b: &[f64],
    q: usize,
    psi: &[f64],
    p: usize,
) -> Result<(), CliError> {
    let mut cols = numbered("b", q);
    cols.extend(numbered("psi", p));
    let mut out = CsvOut::create(dir.join(LATENT), &header(&["id"], cols))?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(b[i * q..(i + 1) * q].iter().map(|&v| fmt_f64(v)));
        row.extend(psi[i * p..(i + 1) * p].iter().map(|&v| fmt_f64(v)));
        out.row(&row)?;
    }
    out.finish()
}

/// A cohort read from disk with its ids in `censoring.csv` order.
#[derive(Debug, Clone)]
pub struct CohortFiles {
    pub ids: Vec<String>,
    pub cohort: Cohort,
}

impl CohortFiles {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

struct CsvIn {
    rows: Vec<(u64, csv::StringRecord)>,
    headers: csv::StringRecord,
    name: String,
}

impl CsvIn {
    fn open(dir: &Path, name: &str) -> Result<Self, CliError> {
        let path = dir.join(name);
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(&path)
            .map_err(|e| runtime(&path, e))?;
        let headers = r
            .headers()
            .map_err(|e| CliError::Validation(format!("{name}: {e}")))?
            .clone();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(CsvIn {
            rows,
            headers,
            name: name.to_string(),
        })
    }

    fn err(&self, line: u64, msg: impl std::fmt::Display) -> CliError {
        CliError::Validation(format!("{} line {line}: {msg}", self.name))
    }

    fn expect_header(&self, want: &[String]) -> Result<(), CliError> {
        let got: Vec<&str> = self.headers.iter().collect();
        if got != want.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(CliError::Validation(format!(
                "{} line 1: header {:?}, expected {:?}",
                self.name, got, want
            )));
        }
        Ok(())
    }

    fn number(&self, line: u64, cell: &str, allow_empty: bool) -> Result<f64, CliError> {
        if cell.is_empty() {
            return if allow_empty {
                Ok(f64::NAN)
            } else {
                Err(self.err(line, "empty cell"))
            };
        }
        match cell.parse::<f64>() {
            Ok(v) if !v.is_nan() => Ok(v),
            _ => Err(self.err(line, format!("`{cell}` is not a number"))),
        }
    }

    fn id<'a>(
        &self,
        line: u64,
        rec: &'a csv::StringRecord,
        index: &HashMap<String, usize>,
    ) -> Result<(usize, &'a str), CliError> {
        let id = rec.get(0).unwrap_or("");
        index
            .get(id)
            .map(|&i| (i, id))
            .ok_or_else(|| self.err(line, format!("unknown individual id `{id}`")))
    }
}

/// Reads and validates the four cohort files against `design`.
pub fn read_cohort(dir: &Path, design: &ModelDesign) -> Result<CohortFiles, CliError> {
    let graph = design.graph();
    let d = design.regression().output_dim();

    let cen = CsvIn::open(dir, CENSORING)?;
    cen.expect_header(&header(&["id", "ctime"], vec![]))?;
    let mut ids = Vec::with_capacity(cen.rows.len());
    let mut index = HashMap::new();
    let mut ctimes = Vec::with_capacity(cen.rows.len());
    for (line, rec) in &cen.rows {
        let id = rec.get(0).unwrap_or("").to_string();
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(cen.err(*line, format!("duplicate id `{id}`")));
        }
        ctimes.push(cen.number(*line, rec.get(1).unwrap_or(""), false)?);
        ids.push(id);
    }
    let n = ids.len();

    let cov = CsvIn::open(dir, COVARIATES)?;
    let k = cov.headers.len().saturating_sub(1);
    cov.expect_header(&header(&["id"], numbered("x", k)))?;
    let mut covariates: Vec<Option<Vec<f64>>> = vec![None; n];
    for (line, rec) in &cov.rows {
        let (i, id) = cov.id(*line, rec, &index)?;
        if covariates[i].is_some() {
            return Err(cov.err(*line, format!("second row for `{id}`")));
        }
        let x = (1..=k)
            .map(|c| cov.number(*line, rec.get(c).unwrap_or(""), false))
            .collect::<Result<Vec<_>, _>>()?;
        covariates[i] = Some(x);
    }
    if let Some(i) = covariates.iter().position(Option::is_none) {
        return Err(CliError::Validation(format!(
            "{COVARIATES}: no row for `{}`",
            ids[i]
        )));
    }

    let lon = CsvIn::open(dir, LONGITUDINAL)?;
    lon.expect_header(&header(&["id", "time"], numbered("y", d)))?;
    let mut times = vec![Vec::new(); n];
    let mut values = vec![Vec::new(); n];
    for (line, rec) in &lon.rows {
        let (i, _) = lon.id(*line, rec, &index)?;
        times[i].push(lon.number(*line, rec.get(1).unwrap_or(""), false)?);
        let row = (2..2 + d)
            .map(|c| lon.number(*line, rec.get(c).unwrap_or(""), true))
            .collect::<Result<Vec<_>, _>>()?;
        let missing = row.iter().filter(|v| v.is_nan()).count();
        if missing != 0 && missing != d {
            return Err(lon.err(*line, "row is partially missing"));
        }
        values[i].extend(row);
    }

    let tra = CsvIn::open(dir, TRAJECTORIES)?;
    tra.expect_header(&header(&["id", "time", "state"], vec![]))?;
    let mut pairs: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n];
    for (line, rec) in &tra.rows {
        let (i, id) = tra.id(*line, rec, &index)?;
        let t = tra.number(*line, rec.get(1).unwrap_or(""), false)?;
        let s: usize = rec
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|_| tra.err(*line, "state is not a non-negative integer"))?;
        check_pair(graph, pairs[i].last().copied(), t, s)
            .map_err(|m| tra.err(*line, format!("individual `{id}`: {m}")))?;
        pairs[i].push((t, s));
    }

    let mut individuals = Vec::with_capacity(n);
    for i in 0..n {
        let p = std::mem::take(&mut pairs[i]);
        if p.is_empty() {
            return Err(CliError::Validation(format!(
                "{TRAJECTORIES}: no rows for `{}`",
                ids[i]
            )));
        }
        individuals.push(IndividualRecord {
            covariates: covariates[i].take().unwrap_or_default(),
            measurement_times: std::mem::take(&mut times[i]),
            measurements: std::mem::take(&mut values[i]),
            trajectory: Trajectory::new(p)?,
            censoring_time: ctimes[i],
        });
    }
    let cohort = Cohort::new(k, d, individuals);
    let violations = validate_cohort(&cohort, graph);
    if let Some(v) = violations.first() {
        return Err(CliError::Validation(format!(
            "{} problem(s); first: individual `{}`: {}",
            violations.len(),
            ids[v.individual],
            v.to_string()
                .split_once(": ")
                .map_or(String::new(), |(_, m)| m.to_string())
        )));
    }
    Ok(CohortFiles { ids, cohort })
}

fn check_pair(
    graph: &TransitionGraph,
    prev: Option<(f64, usize)>,
    t: f64,
    s: usize,
) -> Result<(), String> {
    if s >= graph.num_states() {
        return Err(format!("state {s} out of range"));
    }
    if !t.is_finite() {
        return Err("transition time must be finite".into());
    }
    if let Some((t0, s0)) = prev {
        if t <= t0 {
            return Err(format!("time {t} does not follow {t0}"));
        }
        if !graph.has_edge(s0, s) {
            return Err(format!(
                "transition {s0} -> {s} is not an edge of the graph"
            ));
        }
    }
    Ok(())
}

pub fn write_params(path: &Path, p: &ModelParams) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(&ParamsSpec::from_params(p)).map_err(|e| runtime(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| runtime(path, e))
}

pub fn read_params(
    path: &Path,
    design: &ModelDesign,
    covariate_dim: usize,
) -> Result<ModelParams, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| runtime(path, e))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let spec: ParamsSpec = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        CliError::Validation(format!(
            "{} at `{}`: {}",
            path.display(),
            e.path(),
            e.inner()
        ))
    })?;
    spec.build(design, covariate_dim, &path.display().to_string())
}

pub fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| runtime(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| runtime(path, e))
}
