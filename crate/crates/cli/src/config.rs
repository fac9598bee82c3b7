//! TOML run configuration.

use std::path::Path;
use std::sync::Arc;

use msjm_core::design::{
    BaselineHazard, Clock, CompositeLink, EdgeSpec, ExpDecay, Exponential, GammaPlusB, GammaXPlusB,
    IndividualEffects, LinkPart, ModelDesign, PiecewiseAffine, PiecewiseConstant, Polynomial,
    Regression, ScaledTanh, Transform, Transformed, Weibull,
};
use msjm_core::graph::{Edge, TransitionGraph};
use msjm_core::inference::{FimMethod, FitConfig, StopRule};
use msjm_core::params::{CovMethod, ModelParams, PrecisionRepr, Slot};
use msjm_core::sampler::SamplerConfig;
use msjm_core::simulate::CohortConfig;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Used when `--seed` is absent.
    #[serde(default)]
    pub seed: u64,
    pub graph: GraphConfig,
    pub design: DesignConfig,
    /// Generating parameters, required by `simulate`.
    pub truth: Option<ParamsSpec>,
    /// Starting point of `fit`; zeros shaped like `truth` when absent.
    pub init: Option<ParamsSpec>,
    pub simulation: Option<CohortConfig>,
    #[serde(default)]
    pub fit: FitConfig,
    /// Enables the moving-average stop rule.
    pub stop: Option<StopRule>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub fim: FimConfig,
    pub predict: Option<PredictSettings>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub states: usize,
    pub edges: Vec<[usize; 2]>,
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub regression: RegressionConfig,
    pub effects: EffectsConfig,
    pub edges: Vec<EdgeConfig>,
    pub quadrature_nodes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressionConfig {
    Polynomial { degree: usize },
    PiecewiseAffine { breakpoints: Vec<f64> },
    ExpDecay,
    ScaledTanh,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectsConfig {
    pub family: EffectsFamily,
    /// Covariate count for `gamma_x_plus_b`.
    pub covariates: Option<usize>,
    #[serde(default)]
    pub transforms: Vec<Transform>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectsFamily {
    GammaPlusB,
    GammaXPlusB,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub edge: [usize; 2],
    pub hazard: HazardConfig,
    #[serde(default = "reset")]
    pub clock: Clock,
    #[serde(default)]
    pub trainable: bool,
    /// Empty for no association.
    #[serde(default)]
    pub link: Vec<LinkPart>,
}

fn reset() -> Clock {
    Clock::Reset
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum HazardConfig {
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
    PiecewiseConstant { cuts: Vec<f64>, levels: Vec<f64> },
}

/// Parameter values, shared by the config and `params.json`. Absent blocks
/// default to zeros and identity covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    pub q: CovSpec,
    pub r: CovSpec,
    #[serde(default)]
    pub alpha: Vec<EdgeValues>,
    #[serde(default)]
    pub beta: Vec<EdgeValues>,
    #[serde(default)]
    pub extra: Option<Vec<f64>>,
    #[serde(default)]
    pub sharing: Vec<Vec<SlotSpec>>,
}

/// A covariance block: either raw log-Cholesky `values` or a covariance
/// matrix `cov`; identity when neither is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovSpec {
    pub method: CovMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeValues {
    pub edge: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    pub group: SlotGroup,
    pub edge: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotGroup {
    Alpha,
    Beta,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FimConfig {
    pub sweeps: usize,
    pub method: FimMethod,
}

impl Default for FimConfig {
    fn default() -> Self {
        FimConfig {
            sweeps: 100,
            method: FimMethod::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSettings {
    pub truncation_times: Vec<f64>,
    pub horizons: Vec<f64>,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_max_transitions")]
    pub max_transitions: usize,
    /// Ids to predict; every individual when absent.
    pub individuals: Option<Vec<String>>,
    /// Overrides `sampler` for posterior conditioning.
    pub sampler: Option<SamplerConfig>,
}

fn default_draws() -> usize {
    msjm_core::predict::PredictConfig::default().n_draws
}

fn default_thin() -> usize {
    msjm_core::predict::PredictConfig::default().thin
}

fn default_max_transitions() -> usize {
    msjm_core::predict::PredictConfig::default().max_transitions
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim_end().to_string();
            if path == "." || path.is_empty() {
                CliError::Validation(msg)
            } else {
                CliError::Validation(format!("at `{path}`: {msg}"))
            }
        })
    }

    pub fn build_graph(&self) -> Result<TransitionGraph, CliError> {
        let g = TransitionGraph::new(self.graph.states, self.graph.edges.iter().map(edge))?;
        Ok(match &self.graph.labels {
            Some(l) => g.with_labels(l.clone())?,
            None => g,
        })
    }

    pub fn build_design(&self) -> Result<ModelDesign, CliError> {
        let graph = self.build_graph()?;
        let d = &self.design;
        let reg: Arc<dyn Regression> = match &d.regression {
            RegressionConfig::Polynomial { degree } => Arc::new(Polynomial { degree: *degree }),
            RegressionConfig::PiecewiseAffine { breakpoints } => {
                Arc::new(PiecewiseAffine::new(breakpoints.clone()))
            }
            RegressionConfig::ExpDecay => Arc::new(ExpDecay),
            RegressionConfig::ScaledTanh => Arc::new(ScaledTanh),
        };
        let dim = reg.psi_dim();
        let effects: Arc<dyn IndividualEffects> = match (d.effects.family, d.effects.covariates) {
            (EffectsFamily::GammaPlusB, None) => wrap(GammaPlusB { dim }, &d.effects.transforms)?,
            (EffectsFamily::GammaXPlusB, Some(k)) => wrap(
                GammaXPlusB {
                    dim,
                    covariate_dim: k,
                },
                &d.effects.transforms,
            )?,
            (EffectsFamily::GammaPlusB, Some(_)) => {
                return Err(CliError::Validation(
                    "at `design.effects.covariates`: only gamma_x_plus_b takes covariates".into(),
                ))
            }
            (EffectsFamily::GammaXPlusB, None) => {
                return Err(CliError::Validation(
                    "at `design.effects`: gamma_x_plus_b needs `covariates`".into(),
                ))
            }
        };
        let mut specs = Vec::with_capacity(d.edges.len());
        for (i, e) in d.edges.iter().enumerate() {
            let at = |m: String| CliError::Validation(format!("at `design.edges[{i}]`: {m}"));
            let mut hazard = match &e.hazard {
                HazardConfig::Exponential { rate } => {
                    BaselineHazard::new(Exponential { rate: *rate }, e.clock)
                }
                HazardConfig::Weibull { shape, scale } => BaselineHazard::new(
                    Weibull {
                        shape: *shape,
                        scale: *scale,
                    },
                    e.clock,
                ),
                HazardConfig::PiecewiseConstant { cuts, levels } => BaselineHazard::new(
                    PiecewiseConstant::new(cuts.clone(), levels.clone())
                        .map_err(|err| at(err.to_string()))?,
                    e.clock,
                ),
            };
            if e.trainable {
                hazard = hazard.trainable();
            }
            let link = if e.link.is_empty() {
                CompositeLink::null(reg.clone())
            } else {
                CompositeLink::new(reg.clone(), e.link.clone())
                    .map_err(|err| at(err.to_string()))?
            };
            specs.push((
                edge(&e.edge),
                EdgeSpec {
                    hazard,
                    link: Arc::new(link),
                },
            ));
        }
        let design = ModelDesign::new(graph, effects, reg, specs)?;
        Ok(match d.quadrature_nodes {
            Some(n) => design.with_quadrature_nodes(n)?,
            None => design,
        })
    }

    pub fn require_truth(&self) -> Result<&ParamsSpec, CliError> {
        self.truth
            .as_ref()
            .ok_or_else(|| CliError::Validation("at `truth`: missing field `truth`".into()))
    }

    pub fn require_simulation(&self) -> Result<&CohortConfig, CliError> {
        self.simulation.as_ref().ok_or_else(|| {
            CliError::Validation("at `simulation`: missing field `simulation`".into())
        })
    }

    pub fn require_predict(&self) -> Result<&PredictSettings, CliError> {
        self.predict
            .as_ref()
            .ok_or_else(|| CliError::Validation("at `predict`: missing field `predict`".into()))
    }

    /// Initial parameters for `fit`.
    pub fn initial_params(
        &self,
        design: &ModelDesign,
        covariate_dim: usize,
    ) -> Result<ModelParams, CliError> {
        match (&self.init, &self.truth) {
            (Some(init), _) => init.build(design, covariate_dim, "init"),
            (None, Some(truth)) => Ok(truth.build(design, covariate_dim, "truth")?.zeros_like()),
            (None, None) => {
                Ok(design.zero_params(covariate_dim, CovMethod::Full, CovMethod::Ball)?)
            }
        }
    }
}

fn wrap<E: IndividualEffects + 'static>(
    inner: E,
    transforms: &[Transform],
) -> Result<Arc<dyn IndividualEffects>, CliError> {
    if transforms.is_empty() {
        return Ok(Arc::new(inner));
    }
    if transforms.len() != inner.psi_dim() {
        return Err(CliError::Validation(format!(
            "at `design.effects.transforms`: {} transforms for {} individual parameters",
            transforms.len(),
            inner.psi_dim()
        )));
    }
    Ok(Arc::new(Transformed::new(inner, transforms.to_vec())))
}

fn edge(e: &[usize; 2]) -> Edge {
    Edge::new(e[0], e[1])
}

impl CovSpec {
    fn build(&self, dim: usize, at: &str) -> Result<PrecisionRepr, CliError> {
        let err = |m: String| CliError::Validation(format!("at `{at}`: {m}"));
        match (&self.values, &self.cov) {
            (Some(_), Some(_)) => Err(err("give either `values` or `cov`, not both".into())),
            (Some(v), None) => {
                PrecisionRepr::new(self.method, dim, v.clone()).map_err(|e| err(e.to_string()))
            }
            (None, Some(rows)) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(err(format!("`cov` must be {dim}x{dim}")));
                }
                let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
                PrecisionRepr::from_cov(&m, self.method).map_err(|e| err(e.to_string()))
            }
            (None, None) => Ok(PrecisionRepr::identity(self.method, dim)),
        }
    }
}

impl ParamsSpec {
    /// Parameters for `design`; `at` prefixes error paths.
    pub fn build(
        &self,
        design: &ModelDesign,
        covariate_dim: usize,
        at: &str,
    ) -> Result<ModelParams, CliError> {
        let err = |field: &str, m: String| CliError::Validation(format!("at `{at}.{field}`: {m}"));
        let mut p = design.zero_params(covariate_dim, self.q.method, self.r.method)?;
        if let Some(g) = &self.gamma {
            if g.len() != p.gamma.len() {
                return Err(err(
                    "gamma",
                    format!("expected {} values, got {}", p.gamma.len(), g.len()),
                ));
            }
            p.gamma = g.clone();
        }
        p.q = self.q.build(p.q.dim, &format!("{at}.q"))?;
        p.r = self.r.build(p.r.dim, &format!("{at}.r"))?;
        if let Some(x) = &self.extra {
            p = p
                .with_extra(x.clone())
                .map_err(|e| err("extra", e.to_string()))?;
        }
        for (field, list, slot) in [
            ("alpha", &self.alpha, Slot::Alpha as fn(Edge) -> Slot),
            ("beta", &self.beta, Slot::Beta as fn(Edge) -> Slot),
        ] {
            for (k, ev) in list.iter().enumerate() {
                p.set_slot(slot(edge(&ev.edge)), ev.values.clone())
                    .map_err(|e| err(&format!("{field}[{k}]"), e.to_string()))?;
            }
        }
        if !self.sharing.is_empty() {
            let classes = self
                .sharing
                .iter()
                .map(|c| c.iter().map(SlotSpec::slot).collect())
                .collect();
            p = p
                .with_sharing(classes)
                .map_err(|e| err("sharing", e.to_string()))?;
        }
        design
            .check_params(&p, covariate_dim)
            .map_err(|e| CliError::Validation(format!("at `{at}`: {e}")))?;
        Ok(p)
    }

    /// Lossless description of `p`, covariances as raw log-Cholesky values.
    pub fn from_params(p: &ModelParams) -> Self {
        let per_edge = |get: &dyn Fn(usize) -> Vec<f64>| {
            p.edges()
                .iter()
                .enumerate()
                .map(|(i, e)| EdgeValues {
                    edge: [e.from, e.to],
                    values: get(i),
                })
                .collect()
        };
        ParamsSpec {
            gamma: Some(p.gamma.clone()),
            q: CovSpec {
                method: p.q.method,
                values: Some(p.q.values.clone()),
                cov: None,
            },
            r: CovSpec {
                method: p.r.method,
                values: Some(p.r.values.clone()),
                cov: None,
            },
            alpha: per_edge(&|i| p.alpha_at(i).to_vec()),
            beta: per_edge(&|i| p.beta_at(i).to_vec()),
            extra: Some(p.extra.clone()),
            sharing: p
                .sharing()
                .iter()
                .map(|c| c.iter().map(|s| SlotSpec::from_slot(*s)).collect())
                .collect(),
        }
    }
}

impl SlotSpec {
    fn slot(&self) -> Slot {
        match self.group {
            SlotGroup::Alpha => Slot::Alpha(edge(&self.edge)),
            SlotGroup::Beta => Slot::Beta(edge(&self.edge)),
        }
    }

    fn from_slot(s: Slot) -> Self {
        let (group, e) = match s {
            Slot::Alpha(e) => (SlotGroup::Alpha, e),
            Slot::Beta(e) => (SlotGroup::Beta, e),
        };
        SlotSpec {
            group,
            edge: [e.from, e.to],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[graph]
states = 2
edges = [[0, 1]]

[design]
regression = { family = "polynomial", degree = 0 }
effects = { family = "gamma_plus_b" }

[[design.edges]]
edge = [0, 1]
hazard = { family = "exponential", rate = 0.2 }
link = [{ kind = "value" }]
"#;

    #[test]
    fn minimal_config_builds() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let d = c.build_design().unwrap();
        assert_eq!(d.graph().num_edges(), 1);
        let p = c.initial_params(&d, 2).unwrap();
        assert_eq!(p.beta_at(0).len(), 2);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let text = MINIMAL.replace("rate = 0.2", "rate = 0.2, rtae = 1");
        let CliError::Validation(m) = RunConfig::parse(&text).unwrap_err() else {
            panic!()
        };
        assert!(m.contains("design.edges[0].hazard"), "{m}");
        let text = format!("{MINIMAL}\n[fit]\nlearning_rate = 0.1\n");
        let CliError::Validation(m) = RunConfig::parse(&text).unwrap_err() else {
            panic!()
        };
        assert!(m.contains("fit") && m.contains("learning_rate"), "{m}");
    }

    #[test]
    fn params_spec_round_trips() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let d = c.build_design().unwrap();
        let spec = ParamsSpec {
            gamma: Some(vec![0.3]),
            q: CovSpec {
                method: CovMethod::Full,
                values: None,
                cov: Some(vec![vec![2.0]]),
            },
            r: CovSpec {
                method: CovMethod::Ball,
                values: Some(vec![-0.1]),
                cov: None,
            },
            alpha: vec![EdgeValues {
                edge: [0, 1],
                values: vec![0.7],
            }],
            beta: vec![],
            extra: None,
            sharing: vec![],
        };
        let p = spec.build(&d, 1, "truth").unwrap();
        let json = serde_json::to_string(&ParamsSpec::from_params(&p)).unwrap();
        let back: ParamsSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.build(&d, 1, "p").unwrap(), p);
    }
}
