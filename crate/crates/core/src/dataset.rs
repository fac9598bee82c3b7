//! Cohort data: covariates, longitudinal measurements, observed trajectories
//! and censoring times.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::TransitionGraph;

/// Observed `(time, state)` pairs with strictly increasing times. The first
/// pair is the observed initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pairs: Vec<(f64, usize)>,
}

impl Trajectory {
    pub fn new(pairs: Vec<(f64, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Validation(
                "a trajectory needs an initial (time, state) pair".into(),
            ));
        }
        if let Some(w) = pairs.windows(2).find(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Validation(format!(
                "trajectory times must strictly increase, got {} then {}",
                w[0].0, w[1].0
            )));
        }
        if pairs.iter().any(|p| !p.0.is_finite()) {
            return Err(Error::Validation("trajectory times must be finite".into()));
        }
        Ok(Trajectory { pairs })
    }

    pub fn initial(time: f64, state: usize) -> Self {
        Trajectory {
            pairs: vec![(time, state)],
        }
    }

    pub fn pairs(&self) -> &[(f64, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> (f64, usize) {
        self.pairs[0]
    }

    pub fn last(&self) -> (f64, usize) {
        self.pairs[self.pairs.len() - 1]
    }

    /// Number of observed transitions.
    pub fn num_transitions(&self) -> usize {
        self.pairs.len() - 1
    }

    /// Appends a pair; the time must exceed the current last time.
    pub fn push(&mut self, time: f64, state: usize) -> Result<()> {
        if !(time > self.last().0) {
            return Err(Error::Validation(format!(
                "appended time {time} does not exceed {}",
                self.last().0
            )));
        }
        self.pairs.push((time, state));
        Ok(())
    }

    /// State occupied at time `t` (right-continuous). Times before the
    /// initial pair report the initial state.
    pub fn state_at(&self, t: f64) -> usize {
        let idx = self.pairs.partition_point(|p| p.0 <= t);
        self.pairs[idx.saturating_sub(1)].1
    }

    /// Prefix of pairs with time `<= t`; `None` if `t` precedes the initial time.
    pub fn truncated(&self, t: f64) -> Option<Trajectory> {
        let idx = self.pairs.partition_point(|p| p.0 <= t);
        (idx > 0).then(|| Trajectory {
            pairs: self.pairs[..idx].to_vec(),
        })
    }
}

/// One individual's observations.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualRecord {
    pub covariates: Vec<f64>,
    pub measurement_times: Vec<f64>,
    /// Row-major `n_i x d` matrix; a missing row has every cell NaN.
    pub measurements: Vec<f64>,
    pub trajectory: Trajectory,
    /// May be `f64::INFINITY`.
    pub censoring_time: f64,
}

impl IndividualRecord {
    pub fn num_measurements(&self) -> usize {
        self.measurement_times.len()
    }

    pub fn row(&self, j: usize, d: usize) -> &[f64] {
        &self.measurements[j * d..(j + 1) * d]
    }

    pub fn is_row_missing(&self, j: usize, d: usize) -> bool {
        self.row(j, d).iter().all(|v| v.is_nan())
    }

    /// The record as it would have been observed up to time `t`: measurements
    /// at times `<= t`, transitions at times `<= t`, censoring at `min(C, t)`.
    pub fn truncated(&self, t: f64, d: usize) -> Result<IndividualRecord> {
        let trajectory = self.trajectory.truncated(t).ok_or_else(|| {
            Error::Validation(format!(
                "truncation time {t} precedes the initial time {}",
                self.trajectory.first().0
            ))
        })?;
        let keep: Vec<usize> = (0..self.num_measurements())
            .filter(|&j| self.measurement_times[j] <= t)
            .collect();
        Ok(IndividualRecord {
            covariates: self.covariates.clone(),
            measurement_times: keep.iter().map(|&j| self.measurement_times[j]).collect(),
            measurements: keep.iter().flat_map(|&j| self.row(j, d).to_vec()).collect(),
            trajectory,
            censoring_time: self.censoring_time.min(t),
        })
    }
}

/// A collection of individuals sharing covariate and biomarker dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub individuals: Vec<IndividualRecord>,
    pub covariate_dim: usize,
    pub biomarker_dim: usize,
}

impl Cohort {
    pub fn new(
        covariate_dim: usize,
        biomarker_dim: usize,
        individuals: Vec<IndividualRecord>,
    ) -> Self {
        Cohort {
            individuals,
            covariate_dim,
            biomarker_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.individuals
            .iter()
            .map(|r| r.trajectory.clone())
            .collect()
    }

    pub fn censoring_times(&self) -> Vec<f64> {
        self.individuals.iter().map(|r| r.censoring_time).collect()
    }

    /// Sub-cohort with the given individuals, in order.
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            individuals: indices
                .iter()
                .map(|&i| self.individuals[i].clone())
                .collect(),
            covariate_dim: self.covariate_dim,
            biomarker_dim: self.biomarker_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    CovariateDimension { expected: usize, found: usize },
    MeasurementShape,
    StateOutOfRange { state: usize },
    NonIncreasingTimes,
    IllegalTransition { from: usize, to: usize },
    TransitionAfterCensoring { time: f64 },
    PartiallyMissingRow { row: usize },
    MeasurementAfterCensoring { row: usize },
    InvalidCensoring,
}

/// A problem found by [`validate_cohort`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub individual: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "individual {}: ", self.individual)?;
        match &self.kind {
            ViolationKind::CovariateDimension { expected, found } => {
                write!(f, "covariate dimension {found}, expected {expected}")
            }
            ViolationKind::MeasurementShape => {
                write!(f, "measurement matrix does not match times x d")
            }
            ViolationKind::StateOutOfRange { state } => write!(f, "state out of range ({state})"),
            ViolationKind::NonIncreasingTimes => {
                write!(f, "trajectory times do not strictly increase")
            }
            ViolationKind::IllegalTransition { from, to } => {
                write!(f, "transition {from}->{to} is not a graph edge")
            }
            ViolationKind::TransitionAfterCensoring { time } => {
                write!(f, "transition after censoring (at {time})")
            }
            ViolationKind::PartiallyMissingRow { row } => {
                write!(f, "measurement row {row} is partially missing")
            }
            ViolationKind::MeasurementAfterCensoring { row } => {
                write!(
                    f,
                    "measurement row {row} lies after censoring but is not missing"
                )
            }
            ViolationKind::InvalidCensoring => write!(f, "censoring time is NaN"),
        }
    }
}

/// Checks a cohort against a graph without modifying it.
pub fn validate_cohort(cohort: &Cohort, graph: &TransitionGraph) -> Vec<Violation> {
    let d = cohort.biomarker_dim;
    let mut out = Vec::new();
    for (i, rec) in cohort.individuals.iter().enumerate() {
        let mut push = |kind| {
            out.push(Violation {
                individual: i,
                kind,
            })
        };
        if rec.covariates.len() != cohort.covariate_dim {
            push(ViolationKind::CovariateDimension {
                expected: cohort.covariate_dim,
                found: rec.covariates.len(),
            });
        }
        if rec.censoring_time.is_nan() {
            push(ViolationKind::InvalidCensoring);
        }
        let pairs = rec.trajectory.pairs();
        for &(_, s) in pairs {
            if s >= graph.num_states() {
                push(ViolationKind::StateOutOfRange { state: s });
            }
        }
        for w in pairs.windows(2) {
            if !(w[0].0 < w[1].0) {
                push(ViolationKind::NonIncreasingTimes);
            }
            let (a, b) = (w[0].1, w[1].1);
            if a < graph.num_states() && b < graph.num_states() && !graph.has_edge(a, b) {
                push(ViolationKind::IllegalTransition { from: a, to: b });
            }
        }
        let (last_t, _) = rec.trajectory.last();
        if last_t > rec.censoring_time {
            push(ViolationKind::TransitionAfterCensoring { time: last_t });
        }
        if rec.measurements.len() != rec.measurement_times.len() * d {
            push(ViolationKind::MeasurementShape);
            continue;
        }
        for j in 0..rec.num_measurements() {
            let row = rec.row(j, d);
            let missing = row.iter().filter(|v| v.is_nan()).count();
            if missing != 0 && missing != d {
                push(ViolationKind::PartiallyMissingRow { row: j });
            } else if missing == 0 && rec.measurement_times[j] > rec.censoring_time {
                push(ViolationKind::MeasurementAfterCensoring { row: j });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(traj: Vec<(f64, usize)>, c: f64) -> IndividualRecord {
        IndividualRecord {
            covariates: vec![0.0],
            measurement_times: vec![1.0, 12.0],
            measurements: vec![1.0, f64::NAN],
            trajectory: Trajectory::new(traj).unwrap(),
            censoring_time: c,
        }
    }

    fn graph3() -> TransitionGraph {
        TransitionGraph::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    #[test]
    fn well_formed_cohort_has_no_violations() {
        let c = Cohort::new(1, 1, vec![record(vec![(0.0, 0), (2.0, 1)], 10.0)]);
        assert!(validate_cohort(&c, &graph3()).is_empty());
    }

    #[test]
    fn flags_out_of_range_state() {
        let c = Cohort::new(1, 1, vec![record(vec![(0.0, 0), (2.0, 5)], 10.0)]);
        let v = validate_cohort(&c, &graph3());
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("state out of range"));
    }

    #[test]
    fn flags_transition_after_censoring() {
        let c = Cohort::new(1, 1, vec![record(vec![(0.0, 0), (2.0, 1)], 1.0)]);
        let v = validate_cohort(&c, &graph3());
        assert!(v
            .iter()
            .any(|v| v.to_string().contains("transition after censoring")));
    }

    #[test]
    fn flags_partial_rows_and_late_measurements() {
        let mut rec = record(vec![(0.0, 0)], 10.0);
        rec.measurements = vec![1.0, 3.0];
        let c = Cohort::new(1, 1, vec![rec.clone()]);
        let v = validate_cohort(&c, &graph3());
        assert_eq!(
            v[0].kind,
            ViolationKind::MeasurementAfterCensoring { row: 1 }
        );

        rec.measurement_times = vec![1.0];
        rec.measurements = vec![1.0, f64::NAN];
        let c = Cohort::new(1, 2, vec![rec]);
        let v = validate_cohort(&c, &graph3());
        assert_eq!(v[0].kind, ViolationKind::PartiallyMissingRow { row: 0 });
        // idempotent
        assert_eq!(v, validate_cohort(&c, &graph3()));
    }

    #[test]
    fn trajectory_queries() {
        let t = Trajectory::new(vec![(0.0, 0), (2.0, 1), (5.0, 2)]).unwrap();
        assert_eq!(t.state_at(-1.0), 0);
        assert_eq!(t.state_at(1.0), 0);
        assert_eq!(t.state_at(2.0), 1);
        assert_eq!(t.state_at(9.0), 2);
        assert_eq!(t.truncated(3.0).unwrap().pairs(), &[(0.0, 0), (2.0, 1)]);
        assert!(t.truncated(-0.5).is_none());
        assert!(Trajectory::new(vec![]).is_err());
        assert!(Trajectory::new(vec![(1.0, 0), (1.0, 1)]).is_err());
        // negative times are allowed
        assert!(Trajectory::new(vec![(-3.0, 0), (-1.0, 1)]).is_ok());
    }

    #[test]
    fn truncation_censors_at_cut() {
        let rec = record(vec![(0.0, 0), (2.0, 1)], 10.0);
        let t = rec.truncated(1.5, 1).unwrap();
        assert_eq!(t.censoring_time, 1.5);
        assert_eq!(t.measurement_times, vec![1.0]);
        assert_eq!(t.trajectory.len(), 1);
        assert!(rec.truncated(-1.0, 1).is_err());
    }
}
