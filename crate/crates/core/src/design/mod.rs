//! Model design: individual-effects map, regression, and per-edge baseline
//! hazard and link; transition intensities and their quadrature integrals.

pub mod check;
pub mod families;
pub mod hazard;
pub mod link;
pub mod quadrature;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use families::{
    ExpDecay, GammaPlusB, GammaXPlusB, IndividualEffects, PiecewiseAffine, Polynomial, Regression,
    ScaledTanh, Transform, Transformed,
};
pub use hazard::{BaselineHazard, Clock, Exponential, HazardFamily, PiecewiseConstant, Weibull};
pub use link::{CompositeLink, Link, LinkPart};
pub use quadrature::{gauss_legendre, GaussLegendre, DEFAULT_NODES};

use crate::error::{Error, Result};
use crate::graph::{Edge, TransitionGraph};
use crate::params::ModelParams;

/// Hazard and link attached to one edge.
#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub hazard: BaselineHazard,
    pub link: Arc<dyn Link>,
}

/// A complete model design bound to a transition graph.
#[derive(Debug, Clone)]
pub struct ModelDesign {
    graph: TransitionGraph,
    effects: Arc<dyn IndividualEffects>,
    regression: Arc<dyn Regression>,
    edges: Vec<EdgeSpec>,
    fixed_hazard_params: Vec<Vec<f64>>,
    extra_offsets: Vec<Option<usize>>,
    extra_len: usize,
    rule: Arc<GaussLegendre>,
}

impl ModelDesign {
    /// Binds families to a graph. Every edge of the graph needs exactly one
    /// spec, and every family must pass its derivative self-check.
    pub fn new(
        graph: TransitionGraph,
        effects: Arc<dyn IndividualEffects>,
        regression: Arc<dyn Regression>,
        edges: impl IntoIterator<Item = (Edge, EdgeSpec)>,
    ) -> Result<Self> {
        let mut by_edge: BTreeMap<Edge, EdgeSpec> = BTreeMap::new();
        for (e, spec) in edges {
            if graph.edge_index(e).is_none() {
                return Err(Error::UnknownEdge { edge: e });
            }
            if by_edge.insert(e, spec).is_some() {
                return Err(Error::Validation(format!("edge {e} specified twice")));
            }
        }
        if let Some(missing) = graph.edges().iter().find(|e| !by_edge.contains_key(e)) {
            return Err(Error::Validation(format!(
                "edge {missing} has no hazard/link specification"
            )));
        }
        if effects.psi_dim() != regression.psi_dim() {
            return Err(Error::Shape(format!(
                "effects map produces {} individual parameters, regression expects {}",
                effects.psi_dim(),
                regression.psi_dim()
            )));
        }

        check::check_effects(
            effects.as_ref(),
            effects.covariate_dim().unwrap_or(0),
            0x5eed,
        )?;
        check::check_regression(regression.as_ref(), 0x5eed)?;

        let mut specs = Vec::with_capacity(by_edge.len());
        let mut fixed = Vec::new();
        let mut offsets = Vec::new();
        let mut extra_len = 0;
        for (_, spec) in by_edge {
            check::check_hazard(spec.hazard.family.as_ref(), 0x5eed)?;
            check::check_link(
                spec.link.as_ref(),
                regression.psi_dim(),
                effects.covariate_dim().unwrap_or(0),
                0x5eed,
            )?;
            fixed.push(spec.hazard.family.default_params());
            if spec.hazard.trainable {
                offsets.push(Some(extra_len));
                extra_len += spec.hazard.family.num_params();
            } else {
                offsets.push(None);
            }
            specs.push(spec);
        }

        Ok(ModelDesign {
            graph,
            effects,
            regression,
            edges: specs,
            fixed_hazard_params: fixed,
            extra_offsets: offsets,
            extra_len,
            rule: gauss_legendre(DEFAULT_NODES),
        })
    }

    /// Uses an `n`-node quadrature rule for cumulative intensities.
    pub fn with_quadrature_nodes(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation(
                "quadrature needs at least one node".into(),
            ));
        }
        self.rule = gauss_legendre(n);
        Ok(self)
    }

    pub fn graph(&self) -> &TransitionGraph {
        &self.graph
    }

    pub fn effects(&self) -> &dyn IndividualEffects {
        self.effects.as_ref()
    }

    pub fn regression(&self) -> &dyn Regression {
        self.regression.as_ref()
    }

    pub fn edge_spec(&self, edge_idx: usize) -> &EdgeSpec {
        &self.edges[edge_idx]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn quadrature(&self) -> &GaussLegendre {
        &self.rule
    }

    pub fn extra_len(&self) -> usize {
        self.extra_len
    }

    pub fn extra_offset(&self, edge_idx: usize) -> Option<usize> {
        self.extra_offsets[edge_idx]
    }

    /// Initial values of trainable hazard parameters, in edge order.
    pub fn default_extra(&self) -> Vec<f64> {
        self.edges
            .iter()
            .zip(&self.fixed_hazard_params)
            .filter(|(s, _)| s.hazard.trainable)
            .flat_map(|(_, p)| p.clone())
            .collect()
    }

    /// Current parameters of an edge's baseline hazard.
    #[inline]
    pub fn hazard_params<'a>(&'a self, edge_idx: usize, extra: &'a [f64]) -> &'a [f64] {
        match self.extra_offsets[edge_idx] {
            Some(off) => &extra[off..off + self.edges[edge_idx].hazard.family.num_params()],
            None => &self.fixed_hazard_params[edge_idx],
        }
    }

    /// Zero/identity parameters shaped for this design, with the given
    /// covariance methods.
    pub fn zero_params(
        &self,
        covariate_dim: usize,
        q_method: crate::params::CovMethod,
        r_method: crate::params::CovMethod,
    ) -> Result<ModelParams> {
        use crate::params::PrecisionRepr;
        ModelParams::new(
            vec![0.0; self.effects.gamma_dim()],
            PrecisionRepr::identity(q_method, self.effects.b_dim()),
            PrecisionRepr::identity(r_method, self.regression.output_dim()),
            self.graph
                .edges()
                .iter()
                .enumerate()
                .map(|(i, e)| (*e, vec![0.0; self.edges[i].link.output_dim()]))
                .collect(),
            self.graph
                .edges()
                .iter()
                .map(|e| (*e, vec![0.0; covariate_dim]))
                .collect(),
        )?
        .with_extra(self.default_extra())
    }

    /// Checks that `params` fits this design and covariate dimension.
    pub fn check_params(&self, params: &ModelParams, covariate_dim: usize) -> Result<()> {
        let shape = |msg: String| Err(Error::Shape(msg));
        if params.gamma.len() != self.effects.gamma_dim() {
            return shape(format!(
                "gamma has length {}, design expects {}",
                params.gamma.len(),
                self.effects.gamma_dim()
            ));
        }
        if params.q.dim != self.effects.b_dim() {
            return shape(format!(
                "Q has dimension {}, design expects {}",
                params.q.dim,
                self.effects.b_dim()
            ));
        }
        if params.r.dim != self.regression.output_dim() {
            return shape(format!(
                "R has dimension {}, design expects {}",
                params.r.dim,
                self.regression.output_dim()
            ));
        }
        if params.edges() != self.graph.edges() {
            return shape("parameter edges differ from the graph's edges".into());
        }
        for (i, e) in self.graph.edges().iter().enumerate() {
            if params.alpha_at(i).len() != self.edges[i].link.output_dim() {
                return shape(format!(
                    "alpha[{e}] has length {}, link output dimension is {}",
                    params.alpha_at(i).len(),
                    self.edges[i].link.output_dim()
                ));
            }
            if params.beta_at(i).len() != covariate_dim {
                return shape(format!(
                    "beta[{e}] has length {}, covariate dimension is {covariate_dim}",
                    params.beta_at(i).len()
                ));
            }
        }
        if params.extra.len() != self.extra_len {
            return shape(format!(
                "extra has length {}, design has {} trainable hazard parameters",
                params.extra.len(),
                self.extra_len
            ));
        }
        if let Some(k) = self.effects.covariate_dim() {
            if k != covariate_dim {
                return shape(format!(
                    "effects map expects {k} covariates, data has {covariate_dim}"
                ));
            }
        }
        Ok(())
    }

    pub fn individual_effects(&self, gamma: &[f64], x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut psi = vec![0.0; self.effects.psi_dim()];
        self.effects.eval(gamma, x, b, &mut psi);
        psi
    }

    pub fn regression_at(&self, t: f64, psi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.regression.output_dim()];
        self.regression.eval(t, psi, &mut out);
        out
    }

    pub fn link_at(&self, edge_idx: usize, t: f64, x: &[f64], psi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.edges[edge_idx].link.output_dim()];
        self.edges[edge_idx].link.eval(t, x, psi, &mut out);
        out
    }

    /// Intensity evaluator for one individual at fixed `(theta, X, psi)`.
    pub fn intensities<'a>(
        &'a self,
        params: &'a ModelParams,
        x: &'a [f64],
        psi: &'a [f64],
    ) -> IntensityEval<'a> {
        let beta_x = (0..self.edges.len())
            .map(|i| params.beta_at(i).iter().zip(x).map(|(b, v)| b * v).sum())
            .collect();
        let max_link = self
            .edges
            .iter()
            .map(|e| e.link.output_dim())
            .max()
            .unwrap_or(0);
        IntensityEval {
            design: self,
            params,
            x,
            psi,
            beta_x,
            buf: vec![0.0; max_link],
        }
    }

    /// `log lambda^{edge}(t | entry)` for one individual.
    pub fn transition_log_intensity(
        &self,
        params: &ModelParams,
        edge_idx: usize,
        t: f64,
        entry: f64,
        x: &[f64],
        psi: &[f64],
    ) -> f64 {
        self.intensities(params, x, psi)
            .log_intensity(edge_idx, t, entry)
    }

    /// `int_from^to lambda^{edge}(w | entry) dw` by Gauss–Legendre quadrature.
    #[allow(clippy::too_many_arguments)]
    pub fn cumulative_intensity(
        &self,
        params: &ModelParams,
        edge_idx: usize,
        entry: f64,
        from: f64,
        to: f64,
        x: &[f64],
        psi: &[f64],
    ) -> Result<f64> {
        if to < from {
            return Err(Error::Validation(format!(
                "cumulative intensity over a reversed interval [{from}, {to}]"
            )));
        }
        Ok(self
            .intensities(params, x, psi)
            .cumulative(edge_idx, entry, from, to))
    }
}

/// Per-individual intensity evaluation with precomputed `beta . X`.
pub struct IntensityEval<'a> {
    design: &'a ModelDesign,
    params: &'a ModelParams,
    x: &'a [f64],
    psi: &'a [f64],
    beta_x: Vec<f64>,
    buf: Vec<f64>,
}

/// Identity of the last link evaluated at the current time point, so edges
/// sharing a link reuse its value.
pub(crate) type LinkKey = Option<*const ()>;

#[inline]
pub(crate) fn link_key(link: &Arc<dyn Link>) -> *const () {
    Arc::as_ptr(link) as *const ()
}

impl IntensityEval<'_> {
    #[inline]
    pub fn log_intensity(&mut self, edge_idx: usize, t: f64, entry: f64) -> f64 {
        self.log_intensity_at(edge_idx, t, entry, &mut None)
    }

    #[inline]
    fn log_intensity_at(
        &mut self,
        edge_idx: usize,
        t: f64,
        entry: f64,
        cached: &mut LinkKey,
    ) -> f64 {
        let spec = &self.design.edges[edge_idx];
        let hp = self.design.hazard_params(edge_idx, &self.params.extra);
        let mut v =
            spec.hazard.family.log_hazard(spec.hazard.age(t, entry), hp) + self.beta_x[edge_idx];
        let alpha = self.params.alpha_at(edge_idx);
        if !alpha.is_empty() {
            let key = link_key(&spec.link);
            let g = &mut self.buf[..alpha.len()];
            if *cached != Some(key) {
                spec.link.eval(t, self.x, self.psi, g);
                *cached = Some(key);
            }
            v += alpha.iter().zip(g.iter()).map(|(a, g)| a * g).sum::<f64>();
        }
        v
    }

    /// Quadrature over `[from, to]`; zero for an empty interval. Infinite
    /// upper bounds give `+inf`.
    pub fn cumulative(&mut self, edge_idx: usize, entry: f64, from: f64, to: f64) -> f64 {
        if to <= from {
            return 0.0;
        }
        if to.is_infinite() {
            return f64::INFINITY;
        }
        let design = self.design;
        let rule = &design.rule;
        rule.mapped(from, to)
            .map(|(t, w)| w * self.log_intensity(edge_idx, t, entry).exp())
            .sum()
    }

    /// Sum of cumulative intensities over the successors of `state`.
    pub fn total_cumulative(&mut self, state: usize, entry: f64, from: f64, to: f64) -> f64 {
        let succ = self.design.graph.successors(state);
        if succ.is_empty() || to <= from {
            return 0.0;
        }
        if to.is_infinite() {
            return f64::INFINITY;
        }
        let design = self.design;
        let rule = &design.rule;
        let mut total = 0.0;
        for (t, w) in rule.mapped(from, to) {
            let mut cached = None;
            for &(_, e) in succ {
                total += w * self.log_intensity_at(e, t, entry, &mut cached).exp();
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{CovMethod, PrecisionRepr};

    fn single_edge(h: BaselineHazard, parts: Vec<LinkPart>) -> (ModelDesign, ModelParams) {
        let g = TransitionGraph::new(2, [(0, 1)]).unwrap();
        let reg: Arc<dyn Regression> = Arc::new(Polynomial { degree: 1 });
        let link = Arc::new(CompositeLink::new(reg.clone(), parts).unwrap());
        let a = link.output_dim();
        let d = ModelDesign::new(
            g,
            Arc::new(GammaPlusB { dim: 2 }),
            reg,
            [(Edge::new(0, 1), EdgeSpec { hazard: h, link })],
        )
        .unwrap();
        let p = ModelParams::new(
            vec![0.0, 1.0],
            PrecisionRepr::identity(CovMethod::Diag, 2),
            PrecisionRepr::identity(CovMethod::Ball, 1),
            vec![(Edge::new(0, 1), vec![0.0; a])],
            vec![(Edge::new(0, 1), vec![])],
        )
        .unwrap()
        .with_extra(d.default_extra())
        .unwrap();
        (d, p)
    }

    #[test]
    fn null_link_log_intensity() {
        let (d, p) = single_edge(
            BaselineHazard::new(Exponential { rate: 0.1 }, Clock::Reset),
            vec![],
        );
        for t in [0.0, 3.0, 10.0] {
            assert!(
                (d.transition_log_intensity(&p, 0, t, 0.0, &[], &[0.0, 1.0]) - 0.1f64.ln()).abs()
                    < 1e-15
            );
        }
        let c = d
            .cumulative_intensity(&p, 0, 2.0, 2.0, 5.0, &[], &[0.0, 1.0])
            .unwrap();
        assert!((c - 0.3).abs() < 1e-14);
        assert_eq!(
            d.cumulative_intensity(&p, 0, 2.0, 4.0, 4.0, &[], &[0.0, 1.0])
                .unwrap(),
            0.0
        );
        assert!(d
            .cumulative_intensity(&p, 0, 0.0, 5.0, 4.0, &[], &[0.0, 1.0])
            .is_err());
    }

    #[test]
    fn link_adds_in_log_space() {
        let (d, mut p) = single_edge(
            BaselineHazard::new(Exponential { rate: 0.1 }, Clock::Reset),
            vec![LinkPart::Value],
        );
        p.set_slot(crate::params::Slot::Alpha(Edge::new(0, 1)), vec![1.0])
            .unwrap();
        // h(t) = psi_0 + psi_1 t = 1 at t = 0 with psi = (1, 0)
        let v = d.transition_log_intensity(&p, 0, 0.0, 0.0, &[], &[1.0, 0.0]);
        assert!((v - (0.1f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn weibull_reset_clock() {
        let (d, p) = single_edge(
            BaselineHazard::new(
                Weibull {
                    shape: 2.0,
                    scale: 1.0,
                },
                Clock::Reset,
            ),
            vec![],
        );
        let v = d.transition_log_intensity(&p, 0, 5.0, 2.0, &[], &[0.0, 0.0]);
        assert!((v - 6.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn linear_intensity_integrates_exactly() {
        // lambda(w) = w via Weibull with shape 2, scale sqrt(2): 2 w / 2 = w
        let (d, p) = single_edge(
            BaselineHazard::new(
                Weibull {
                    shape: 2.0,
                    scale: 2f64.sqrt(),
                },
                Clock::Forward,
            ),
            vec![],
        );
        let c = d
            .cumulative_intensity(&p, 0, 0.0, 0.0, 1.0, &[], &[0.0, 0.0])
            .unwrap();
        assert!((c - 0.5).abs() < 1e-14, "{c}");
    }

    #[test]
    fn chasles_additivity() {
        let (d, mut p) = single_edge(
            BaselineHazard::new(
                Weibull {
                    shape: 1.5,
                    scale: 3.0,
                },
                Clock::Reset,
            ),
            vec![LinkPart::Value, LinkPart::Slope],
        );
        p.set_slot(crate::params::Slot::Alpha(Edge::new(0, 1)), vec![0.3, -0.2])
            .unwrap();
        let psi = [0.5, 0.1];
        let entry = 0.0;
        let f = |a: f64, b: f64| {
            d.cumulative_intensity(&p, 0, entry, a, b, &[], &psi)
                .unwrap()
        };
        let (a, b, c) = (0.5, 1.7, 3.0);
        assert!((f(a, c) - f(a, b) - f(b, c)).abs() <= 1e-8);
    }

    #[test]
    fn rejects_mismatched_design() {
        let g = TransitionGraph::new(2, [(0, 1)]).unwrap();
        let reg: Arc<dyn Regression> = Arc::new(Polynomial { degree: 1 });
        let err = ModelDesign::new(g.clone(), Arc::new(GammaPlusB { dim: 2 }), reg.clone(), [])
            .unwrap_err();
        assert!(err.to_string().contains("0->1"));
        let err = ModelDesign::new(g, Arc::new(GammaPlusB { dim: 3 }), reg, []).unwrap_err();
        assert!(matches!(err, Error::Validation(_) | Error::Shape(_)));
    }

    #[test]
    fn trainable_hazards_read_extra() {
        let (d, mut p) = single_edge(
            BaselineHazard::new(Exponential { rate: 0.1 }, Clock::Reset).trainable(),
            vec![],
        );
        assert_eq!(d.extra_len(), 1);
        assert!((p.extra[0] - 0.1f64.ln()).abs() < 1e-15);
        p.extra[0] = 0.0;
        assert_eq!(
            d.transition_log_intensity(&p, 0, 1.0, 0.0, &[], &[0.0, 0.0]),
            0.0
        );
    }
}
