//! Complete-data log-likelihood: random-effects prior, longitudinal
//! Gaussian term and semi-Markov term, with gradients in `theta`.
//!
//! Gradients are accumulated in the untied ("full") layout of
//! [`ParamLayout`](crate::params::ParamLayout) and tied afterwards.

use std::ops::{Add, AddAssign};

use crate::dataset::{Cohort, IndividualRecord};
use crate::design::{link_key, LinkKey, ModelDesign};
use crate::error::{Error, Result};
use crate::par;
use crate::params::{ModelParams, PrecisionRepr};

/// The three complete-data log-likelihood terms and their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogLikTerms {
    pub prior: f64,
    pub longitudinal: f64,
    pub semi_markov: f64,
    pub total: f64,
}

impl LogLikTerms {
    pub fn new(prior: f64, longitudinal: f64, semi_markov: f64) -> Self {
        LogLikTerms {
            prior,
            longitudinal,
            semi_markov,
            total: prior + longitudinal + semi_markov,
        }
    }

    fn check(&self, individual: usize) -> Result<()> {
        for (v, term) in [
            (self.prior, "prior"),
            (self.longitudinal, "longitudinal"),
            (self.semi_markov, "semi-Markov"),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite { individual, term });
            }
        }
        Ok(())
    }
}

impl Add for LogLikTerms {
    type Output = LogLikTerms;
    fn add(self, o: LogLikTerms) -> LogLikTerms {
        LogLikTerms::new(
            self.prior + o.prior,
            self.longitudinal + o.longitudinal,
            self.semi_markov + o.semi_markov,
        )
    }
}

impl AddAssign for LogLikTerms {
    fn add_assign(&mut self, o: LogLikTerms) {
        *self = *self + o;
    }
}

/// `log N(b; 0, Q)`.
pub fn prior_loglik(b: &[f64], q: &PrecisionRepr) -> f64 {
    q.log_density(b)
}

/// Gaussian log-likelihood of the non-missing measurement rows.
pub fn longitudinal_loglik(
    record: &IndividualRecord,
    psi: &[f64],
    r: &PrecisionRepr,
    design: &ModelDesign,
) -> f64 {
    let d = design.regression().output_dim();
    let mut h = vec![0.0; d];
    let mut res = vec![0.0; d];
    let mut total = 0.0;
    for j in 0..record.num_measurements() {
        if record.is_row_missing(j, d) {
            continue;
        }
        design
            .regression()
            .eval(record.measurement_times[j], psi, &mut h);
        for ((r, y), h) in res.iter_mut().zip(record.row(j, d)).zip(&h) {
            *r = y - h;
        }
        total += r.log_density(&res);
    }
    total
}

/// One sojourn of a trajectory: state, entry time, exit time and, if it
/// ended in an observed transition, the edge taken.
struct Sojourn {
    state: usize,
    entry: f64,
    exit: f64,
    edge: Option<usize>,
}

fn sojourns(
    individual: usize,
    record: &IndividualRecord,
    design: &ModelDesign,
) -> Result<Vec<Sojourn>> {
    let graph = design.graph();
    let pairs = record.trajectory.pairs();
    let mut out = Vec::with_capacity(pairs.len());
    for w in pairs.windows(2) {
        let ((t0, s0), (t1, s1)) = (w[0], w[1]);
        let edge = graph
            .edge_index((s0, s1).into())
            .ok_or(Error::IllegalTransition {
                individual,
                from: s0,
                to: s1,
            })?;
        out.push(Sojourn {
            state: s0,
            entry: t0,
            exit: t1,
            edge: Some(edge),
        });
    }
    let (t_last, s_last) = record.trajectory.last();
    if s_last >= graph.num_states() {
        return Err(Error::Validation(format!(
            "individual {individual}: state {s_last} out of range"
        )));
    }
    if !graph.is_absorbing(s_last) {
        out.push(Sojourn {
            state: s_last,
            entry: t_last,
            exit: record.censoring_time,
            edge: None,
        });
    }
    Ok(out)
}

fn semi_markov_value(
    individual: usize,
    record: &IndividualRecord,
    psi: &[f64],
    params: &ModelParams,
    design: &ModelDesign,
) -> Result<f64> {
    let mut ev = design.intensities(params, &record.covariates, psi);
    let mut total = 0.0;
    for s in sojourns(individual, record, design)? {
        if let Some(e) = s.edge {
            total += ev.log_intensity(e, s.exit, s.entry);
        }
        total -= ev.total_cumulative(s.state, s.entry, s.entry, s.exit);
    }
    Ok(total)
}

/// Semi-Markov log-likelihood of the trajectory with censoring. Errors name
/// individual 0; cohort-level functions report the actual index.
pub fn semi_markov_loglik(
    record: &IndividualRecord,
    psi: &[f64],
    params: &ModelParams,
    design: &ModelDesign,
) -> Result<f64> {
    semi_markov_value(0, record, psi, params, design)
}

/// All three terms for one individual at random effects `b`.
pub fn individual_loglik(
    individual: usize,
    record: &IndividualRecord,
    b: &[f64],
    params: &ModelParams,
    design: &ModelDesign,
) -> Result<LogLikTerms> {
    let psi = design.individual_effects(&params.gamma, &record.covariates, b);
    Ok(LogLikTerms::new(
        prior_loglik(b, &params.q),
        longitudinal_loglik(record, &psi, &params.r, design),
        semi_markov_value(individual, record, &psi, params, design)?,
    ))
}

/// Scratch buffers for gradient evaluation.
struct GradWork {
    h: Vec<f64>,
    res: Vec<f64>,
    gres: Vec<f64>,
    jac_h: Vec<f64>,
    g: Vec<f64>,
    jac_g: Vec<f64>,
    haz: Vec<f64>,
}

impl GradWork {
    fn new(design: &ModelDesign) -> Self {
        let p = design.regression().psi_dim();
        let d = design.regression().output_dim();
        let a = (0..design.num_edges())
            .map(|e| design.edge_spec(e).link.output_dim())
            .max()
            .unwrap_or(0);
        let np = (0..design.num_edges())
            .map(|e| design.edge_spec(e).hazard.family.num_params())
            .max()
            .unwrap_or(0);
        GradWork {
            h: vec![0.0; d],
            res: vec![0.0; d],
            gres: vec![0.0; d],
            jac_h: vec![0.0; d * p],
            g: vec![0.0; a],
            jac_g: vec![0.0; a * p],
            haz: vec![0.0; np],
        }
    }
}

struct GradCtx<'a> {
    design: &'a ModelDesign,
    params: &'a ModelParams,
    x: &'a [f64],
    psi: &'a [f64],
    beta_x: Vec<f64>,
}

impl GradCtx<'_> {
    /// Evaluates `v = log lambda_e(t | entry)` and adds `weight(v) * d v`
    /// to the full gradient and the psi gradient. Returns `v`. `cached` names
    /// the link whose value and Jacobian at `t` are already in `ws`.
    #[allow(clippy::too_many_arguments)]
    fn intensity(
        &self,
        ws: &mut GradWork,
        e: usize,
        t: f64,
        entry: f64,
        weight: impl FnOnce(f64) -> f64,
        full: &mut [f64],
        gpsi: &mut [f64],
        cached: &mut LinkKey,
    ) -> f64 {
        let spec = self.design.edge_spec(e);
        let hp = self.design.hazard_params(e, &self.params.extra);
        let np = hp.len();
        ws.haz[..np].iter_mut().for_each(|v| *v = 0.0);
        let mut v =
            spec.hazard
                .family
                .log_hazard_grad(spec.hazard.age(t, entry), hp, &mut ws.haz[..np])
                + self.beta_x[e];
        let alpha = self.params.alpha_at(e);
        let a = alpha.len();
        let p = self.psi.len();
        if a > 0 {
            let key = link_key(&spec.link);
            if *cached != Some(key) {
                spec.link.eval(t, self.x, self.psi, &mut ws.g[..a]);
                spec.link
                    .jac_psi(t, self.x, self.psi, &mut ws.jac_g[..a * p]);
                *cached = Some(key);
            }
            v += alpha
                .iter()
                .zip(&ws.g[..a])
                .map(|(a, g)| a * g)
                .sum::<f64>();
        }
        let c = weight(v);
        if c == 0.0 {
            return v;
        }
        let layout = self.params.layout();
        if let Some(off) = self.design.extra_offset(e) {
            let base = layout.extra().start + off;
            for k in 0..np {
                full[base + k] += c * ws.haz[k];
            }
        }
        for (f, g) in full[layout.alpha(e)].iter_mut().zip(&ws.g[..a]) {
            *f += c * g;
        }
        for (f, x) in full[layout.beta(e)].iter_mut().zip(self.x) {
            *f += c * x;
        }
        if a > 0 {
            for r in 0..a {
                let ca = c * alpha[r];
                for k in 0..p {
                    gpsi[k] += ca * ws.jac_g[r * p + k];
                }
            }
        }
        v
    }
}

/// Terms for one individual, adding their gradient in the untied layout to
/// `full` (length `params.layout().full_len()`).
pub fn individual_loglik_grad(
    individual: usize,
    record: &IndividualRecord,
    b: &[f64],
    params: &ModelParams,
    design: &ModelDesign,
    full: &mut [f64],
) -> Result<LogLikTerms> {
    let layout = params.layout();
    let mut ws = GradWork::new(design);
    let effects = design.effects();
    let reg = design.regression();
    let p = reg.psi_dim();
    let d = reg.output_dim();
    let x = &record.covariates;
    let psi = design.individual_effects(&params.gamma, x, b);
    let mut gpsi = vec![0.0; p];

    let prior = params.q.log_density_grad(b, &mut full[layout.q()], None);

    let mut longitudinal = 0.0;
    let r_range = layout.r();
    for j in 0..record.num_measurements() {
        if record.is_row_missing(j, d) {
            continue;
        }
        let t = record.measurement_times[j];
        reg.eval(t, &psi, &mut ws.h);
        for ((r, y), h) in ws.res.iter_mut().zip(record.row(j, d)).zip(&ws.h) {
            *r = y - h;
        }
        ws.gres.iter_mut().for_each(|v| *v = 0.0);
        longitudinal +=
            params
                .r
                .log_density_grad(&ws.res, &mut full[r_range.clone()], Some(&mut ws.gres));
        // d/dpsi = -gres^T dh/dpsi
        reg.jac_psi(t, &psi, &mut ws.jac_h);
        for r in 0..d {
            for k in 0..p {
                gpsi[k] -= ws.gres[r] * ws.jac_h[r * p + k];
            }
        }
    }

    let ctx = GradCtx {
        design,
        params,
        x,
        psi: &psi,
        beta_x: (0..design.num_edges())
            .map(|i| {
                params
                    .beta_at(i)
                    .iter()
                    .zip(x.iter())
                    .map(|(b, v)| b * v)
                    .sum()
            })
            .collect(),
    };
    let rule = design.quadrature();
    let mut semi_markov = 0.0;
    for s in sojourns(individual, record, design)? {
        if let Some(e) = s.edge {
            semi_markov += ctx.intensity(
                &mut ws,
                e,
                s.exit,
                s.entry,
                |_| 1.0,
                full,
                &mut gpsi,
                &mut None,
            );
        }
        if s.exit <= s.entry {
            continue;
        }
        if s.exit.is_infinite() {
            semi_markov = f64::NEG_INFINITY;
            continue;
        }
        let succ = design.graph().successors(s.state);
        for (t, w) in rule.mapped(s.entry, s.exit) {
            let mut cached = None;
            for &(_, e) in succ {
                let mut lam = 0.0;
                ctx.intensity(
                    &mut ws,
                    e,
                    t,
                    s.entry,
                    |v| {
                        lam = v.exp();
                        -w * lam
                    },
                    full,
                    &mut gpsi,
                    &mut cached,
                );
                semi_markov -= w * lam;
            }
        }
    }

    // chain psi -> gamma
    let g = effects.gamma_dim();
    if g > 0 {
        let mut jac = vec![0.0; p * g];
        effects.jac_gamma(&params.gamma, x, b, &mut jac);
        let gr = layout.gamma();
        for r in 0..p {
            for c in 0..g {
                full[gr.start + c] += gpsi[r] * jac[r * g + c];
            }
        }
    }

    Ok(LogLikTerms::new(prior, longitudinal, semi_markov))
}

/// Random effects of individual `i` from a row-major `n x q` array.
#[inline]
pub fn b_row(b_all: &[f64], q: usize, i: usize) -> &[f64] {
    &b_all[i * q..(i + 1) * q]
}

/// Sum of the terms over `subset`; `b_all` is row-major `n x q`.
pub fn complete_loglik(
    cohort: &Cohort,
    b_all: &[f64],
    params: &ModelParams,
    design: &ModelDesign,
    subset: &[usize],
) -> Result<LogLikTerms> {
    let q = params.q.dim;
    let parts = par::map_range(subset.len(), |k| {
        let i = subset[k];
        let t = individual_loglik(
            i,
            &cohort.individuals[i],
            b_row(b_all, q, i),
            params,
            design,
        )?;
        t.check(i)?;
        Ok(t)
    });
    let mut acc = LogLikTerms::default();
    for t in parts {
        acc += t?;
    }
    Ok(acc)
}

/// Per-individual gradients in the untied layout, one row per subset entry.
pub fn individual_full_gradients(
    cohort: &Cohort,
    b_all: &[f64],
    params: &ModelParams,
    design: &ModelDesign,
    subset: &[usize],
) -> Result<(Vec<LogLikTerms>, Vec<Vec<f64>>)> {
    let q = params.q.dim;
    let n_full = params.layout().full_len();
    let parts = par::map_range(subset.len(), |k| {
        let i = subset[k];
        let mut g = vec![0.0; n_full];
        let t = individual_loglik_grad(
            i,
            &cohort.individuals[i],
            b_row(b_all, q, i),
            params,
            design,
            &mut g,
        )?;
        t.check(i)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                individual: i,
                term: "gradient",
            });
        }
        Ok((t, g))
    });
    let mut terms = Vec::with_capacity(subset.len());
    let mut grads = Vec::with_capacity(subset.len());
    for r in parts {
        let (t, g) = r?;
        terms.push(t);
        grads.push(g);
    }
    Ok((terms, grads))
}

/// Gradient of [`complete_loglik`] with respect to the free parameters,
/// tied slots summed. Quadrature nodes are held fixed.
pub fn grad_complete_loglik(
    cohort: &Cohort,
    b_all: &[f64],
    params: &ModelParams,
    design: &ModelDesign,
    subset: &[usize],
) -> Result<(LogLikTerms, Vec<f64>)> {
    let (terms, grads) = individual_full_gradients(cohort, b_all, params, design, subset)?;
    let mut full = vec![0.0; params.layout().full_len()];
    let mut total = LogLikTerms::default();
    for (t, g) in terms.into_iter().zip(grads) {
        total += t;
        for (a, b) in full.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((total, params.layout().tie_gradient(&full)))
}
