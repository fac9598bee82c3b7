//! Ready-made designs used by the examples, benches and tests.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::design::{
    BaselineHazard, Clock, CompositeLink, EdgeSpec, Exponential, GammaPlusB, Link, LinkPart,
    ModelDesign, PiecewiseAffine, Regression, ScaledTanh, Transform, Transformed,
};
use crate::error::Result;
use crate::graph::{Edge, TransitionGraph};
use crate::params::{CovMethod, ModelParams, PrecisionRepr, Slot};

/// Breakpoint of the piecewise-affine trajectory.
pub const PIECEWISE_TAU: f64 = 6.0;

/// Three states with edges 0->1, 0->2, 1->2; piecewise-affine biomarker with
/// one breakpoint at 6; link `(h, dh/dt)` on every edge; exponential
/// hazards 0.1, 0.01, 0.2 with clock reset.
pub fn piecewise_three_state() -> ModelDesign {
    let graph = TransitionGraph::new(3, [(0, 1), (0, 2), (1, 2)]).expect("valid graph");
    let reg: Arc<dyn Regression> = Arc::new(PiecewiseAffine::new(vec![PIECEWISE_TAU]));
    let link: Arc<dyn Link> = Arc::new(
        CompositeLink::new(reg.clone(), vec![LinkPart::Value, LinkPart::Slope])
            .expect("finite parts"),
    );
    let spec = |rate| EdgeSpec {
        hazard: BaselineHazard::new(Exponential { rate }, Clock::Reset),
        link: link.clone(),
    };
    ModelDesign::new(
        graph,
        Arc::new(GammaPlusB { dim: 3 }),
        reg,
        [
            (Edge::new(0, 1), spec(0.1)),
            (Edge::new(0, 2), spec(0.01)),
            (Edge::new(1, 2), spec(0.2)),
        ],
    )
    .expect("built-in families pass their self-checks")
}

/// Generating parameters for [`piecewise_three_state`] with one covariate.
pub fn piecewise_three_state_truth() -> ModelParams {
    let q = PrecisionRepr::from_cov(
        &DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.6, 0.2, 0.3])),
        CovMethod::Diag,
    )
    .expect("positive variances");
    let r = PrecisionRepr::from_cov(&DMatrix::from_element(1, 1, 1.7), CovMethod::Ball)
        .expect("positive variance");
    let e = Edge::new;
    ModelParams::new(
        vec![2.5, -1.3, 0.2],
        q,
        r,
        vec![
            (e(0, 1), vec![-0.5, -3.0]),
            (e(0, 2), vec![-1.0, -5.0]),
            (e(1, 2), vec![0.0, -1.2]),
        ],
        vec![
            (e(0, 1), vec![-1.3]),
            (e(0, 2), vec![-0.9]),
            (e(1, 2), vec![-0.7]),
        ],
    )
    .expect("consistent shapes")
}

/// Four ordered states with every forward edge; scaled tanh biomarker used
/// as its own link; `psi = (sigmoid(g1 + b1), exp(g2 + b2), g3 + b3)`;
/// trainable exponential hazards with clock reset.
pub fn tanh_four_state(rate: f64) -> ModelDesign {
    let edges: Vec<(usize, usize)> = vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let graph = TransitionGraph::new(4, edges.clone()).expect("valid graph");
    let reg: Arc<dyn Regression> = Arc::new(ScaledTanh);
    let link: Arc<dyn Link> =
        Arc::new(CompositeLink::new(reg.clone(), vec![LinkPart::Value]).expect("finite parts"));
    let effects = Transformed::new(
        GammaPlusB { dim: 3 },
        vec![Transform::Sigmoid, Transform::Exp, Transform::Identity],
    );
    ModelDesign::new(
        graph,
        Arc::new(effects),
        reg,
        edges.into_iter().map(|e| {
            (
                Edge::from(e),
                EdgeSpec {
                    hazard: BaselineHazard::new(Exponential { rate }, Clock::Reset).trainable(),
                    link: link.clone(),
                },
            )
        }),
    )
    .expect("built-in families pass their self-checks")
}

/// Zero/identity parameters for [`tanh_four_state`] with `k` covariates and
/// one `beta` shared by all edges.
pub fn tanh_four_state_init(design: &ModelDesign, k: usize) -> Result<ModelParams> {
    let p = design.zero_params(k, CovMethod::Full, CovMethod::Ball)?;
    let class = design
        .graph()
        .edges()
        .iter()
        .map(|e| Slot::Beta(*e))
        .collect();
    p.with_sharing(vec![class])
}
