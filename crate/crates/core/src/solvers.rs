//! Proximal splitting solvers with manifold-identification traces.
//!
//! - [`fb_solve`]: forward-backward (optionally inertial) for
//!   `min ½‖y − Φx‖² + λJ(x)`.
//! - [`dr_solve`]: Douglas-Rachford for `min J(x) s.t. Φx = y`.
//! - [`primal_dual_solve`]: Chambolle-Pock for the analysis prior
//!   `min ½‖y − Φx‖² + λ‖D*x‖₁`.
//!
//! Traced iterates are recorded every `trace_every` iterations starting at
//! `x^{(0)}`; entry `i` of a trace refers to iteration `i · trace_every`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::problem::{operator_norm, LinearMap};
use crate::regularizers::{ManifoldTag, ModelDescriptor, Regularizer, TOL_ACTIVE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// `1/‖Φ‖²` for forward-backward, `γ = 1` for Douglas-Rachford and
    /// `σ = τ = 0.99/‖[Φ; D*]‖` for primal-dual.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub step: Step,
    pub accelerate: bool,
    pub max_iter: usize,
    /// Stop when the relative iterate change drops below this.
    pub tol_rel: f64,
    /// Trace every n-th iterate; 0 disables per-iteration tracing.
    pub trace_every: usize,
    pub tol_active: f64,
    pub init: Option<DVector<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            step: Step::Auto,
            accelerate: false,
            max_iter: 100_000,
            tol_rel: 1e-10,
            trace_every: 1,
            tol_active: TOL_ACTIVE,
            init: None,
        }
    }
}

impl SolveOptions {
    pub fn untraced() -> Self {
        Self {
            trace_every: 0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub objectives: Vec<f64>,
    pub tags: Vec<ManifoldTag>,
    pub errors_to_final: Vec<f64>,
    pub trace_every: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_tag: ManifoldTag,
    /// Step size actually used (τ for FB and primal-dual, γ for DR).
    pub step: f64,
    /// Errors below this are dominated by the stopping tolerance and are
    /// ignored by rate fits.
    pub error_floor: f64,
}

impl SolveTrace {
    /// Trace assembled from externally produced tags and errors.
    pub fn from_parts(tags: Vec<ManifoldTag>, errors_to_final: Vec<f64>) -> Self {
        let final_tag = tags.last().cloned().unwrap_or(ManifoldTag::Support(vec![]));
        Self {
            objectives: vec![f64::NAN; tags.len()],
            iterations: tags.len().saturating_sub(1),
            tags,
            errors_to_final,
            trace_every: 1,
            converged: true,
            final_tag,
            step: f64::NAN,
            error_floor: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Errors within this multiple of the stopping tolerance are treated as
/// contaminated by the finite final iterate.
pub const ERROR_FLOOR_FACTOR: f64 = 1e3;

/// Collects traced iterates during a solve.
struct Recorder<'a> {
    every: usize,
    j: &'a Regularizer,
    tol_active: f64,
    objectives: Vec<f64>,
    tags: Vec<ManifoldTag>,
    iterates: Vec<DVector<f64>>,
}

impl<'a> Recorder<'a> {
    fn new(j: &'a Regularizer, opts: &SolveOptions) -> Self {
        Self {
            every: opts.trace_every,
            j,
            tol_active: opts.tol_active,
            objectives: vec![],
            tags: vec![],
            iterates: vec![],
        }
    }

    fn record(&mut self, n: usize, x: &DVector<f64>, objective: impl FnOnce() -> f64) -> Result<()> {
        if self.every > 0 && n.is_multiple_of(self.every) {
            self.objectives.push(objective());
            self.tags.push(self.j.model_tangent(x, self.tol_active)?.tag);
            self.iterates.push(x.clone());
        }
        Ok(())
    }

    fn finish(self, x: &DVector<f64>, iterations: usize, converged: bool, step: f64, tol_rel: f64) -> Result<SolveTrace> {
        let final_tag = self.j.model_tangent(x, self.tol_active)?.tag;
        let errors_to_final = self.iterates.iter().map(|xi| (xi - x).norm()).collect();
        Ok(SolveTrace {
            objectives: self.objectives,
            tags: self.tags,
            errors_to_final,
            trace_every: self.every.max(1),
            iterations,
            converged,
            final_tag,
            step,
            error_floor: ERROR_FLOOR_FACTOR * tol_rel * (1.0 + x.norm()),
        })
    }
}

fn penalized_objective(phi: &LinearMap, y: &DVector<f64>, lambda: f64, j: &Regularizer, x: &DVector<f64>) -> f64 {
    0.5 * (y - phi.apply(x)).norm_squared() + lambda * j.eval(x).unwrap_or(f64::NAN)
}

fn check_problem(phi: &LinearMap, y: &DVector<f64>, j: &Regularizer, opts: &SolveOptions) -> Result<()> {
    check_len("solver (y)", phi.rows(), y.len())?;
    j.check_dim(phi.cols())?;
    if let Some(init) = &opts.init {
        check_len("solver (init)", phi.cols(), init.len())?;
    }
    Ok(())
}

/// Forward-backward splitting for `min ½‖y − Φx‖² + λJ(x)`.
///
/// `x^{(n+1)} = Prox_{τλJ}(x^{(n)} + τΦ*(y − Φx^{(n)}))`, with FISTA
/// extrapolation when `opts.accelerate` is set. Non-convergence within
/// `max_iter` is reported through `trace.converged`.
pub fn fb_solve(
    phi: &LinearMap,
    y: &DVector<f64>,
    lambda: f64,
    j: &Regularizer,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, SolveTrace)> {
    check_problem(phi, y, j, opts)?;
    if !j.prox_supported() {
        return Err(Error::Unsupported {
            op: "fb_solve",
            kind: j.kind_name(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("λ must be > 0, got {lambda}")));
    }
    let lip = operator_norm(phi).powi(2);
    let tau = match opts.step {
        Step::Auto => 1.0 / lip,
        Step::Fixed(t) if t > 0.0 && t * lip < 2.0 => t,
        Step::Fixed(t) => {
            return Err(Error::InvalidArgument(format!(
                "FB step {t} outside (0, 2/‖Φ‖²) = (0, {})",
                2.0 / lip
            )))
        }
    };
    let forward = |x: &DVector<f64>| x + phi.adjoint(&(y - phi.apply(x))) * tau;
    let mut rec = Recorder::new(j, opts);
    let mut x = opts.init.clone().unwrap_or_else(|| DVector::zeros(phi.cols()));
    let mut z = x.clone();
    let mut t = 1.0f64;
    rec.record(0, &x, || penalized_objective(phi, y, lambda, j, &x))?;
    let mut converged = false;
    let mut iterations = 0;
    for n in 1..=opts.max_iter {
        let x_next = j.prox(tau * lambda, &forward(if opts.accelerate { &z } else { &x }))?;
        let change = (&x_next - &x).norm();
        if opts.accelerate {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            z = &x_next + (&x_next - &x) * ((t - 1.0) / t_next);
            t = t_next;
        }
        x = x_next;
        iterations = n;
        rec.record(n, &x, || penalized_objective(phi, y, lambda, j, &x))?;
        let scale = opts.tol_rel * (1.0 + x.norm());
        if change <= scale {
            let done = if opts.accelerate {
                (&x - j.prox(tau * lambda, &forward(&x))?).norm() <= scale
            } else {
                true
            };
            if done {
                converged = true;
                break;
            }
        }
    }
    let trace = rec.finish(&x, iterations, converged, tau, opts.tol_rel)?;
    Ok((x, trace))
}

/// Forward-backward continuation: solves along `λ_s = max(λ, λ_0·10^{-s})`
/// with `λ_0 = ‖Φ*y‖`, warm-starting each stage from the previous one.
///
/// Small-λ problems converge slowly from the origin; the final stage starts
/// near its solution. The returned trace describes the final stage only.
pub fn fb_solve_path(
    phi: &LinearMap,
    y: &DVector<f64>,
    lambda: f64,
    j: &Regularizer,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, SolveTrace)> {
    check_problem(phi, y, j, opts)?;
    let mut stage = phi.adjoint(y).norm().max(lambda);
    let mut x = opts.init.clone();
    while stage > lambda {
        let inner = SolveOptions {
            init: x.take(),
            trace_every: 0,
            ..opts.clone()
        };
        let (xs, _) = fb_solve(phi, y, stage, j, &inner)?;
        x = Some(xs);
        stage = (stage * 0.1).max(lambda);
    }
    let last = SolveOptions { init: x, ..opts.clone() };
    fb_solve(phi, y, lambda, j, &last)
}

/// Douglas-Rachford splitting for `min J(x) s.t. Φx = y`.
///
/// Alternates the affine projection `z ↦ z + Φ^+(y − Φz)` with
/// `Prox_{γJ}`; the returned point is the (exactly feasible) projection.
pub fn dr_solve(
    phi: &LinearMap,
    y: &DVector<f64>,
    j: &Regularizer,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, SolveTrace)> {
    check_problem(phi, y, j, opts)?;
    if !j.prox_supported() {
        return Err(Error::Unsupported {
            op: "dr_solve",
            kind: j.kind_name(),
        });
    }
    let gamma = match opts.step {
        Step::Auto => 1.0,
        Step::Fixed(g) if g > 0.0 => g,
        Step::Fixed(g) => return Err(Error::InvalidArgument(format!("DR step must be > 0, got {g}"))),
    };
    let pinv = linalg::pinv(phi.matrix());
    let y_hat = phi.apply(&(&pinv * y));
    let gap = (&y_hat - y).norm();
    if gap > 1e-10 * (1.0 + y.norm()) {
        return Err(Error::Infeasible(format!("y is not in the range of Φ (residual {gap:e})")));
    }
    let project = |z: &DVector<f64>| z + &pinv * (y - phi.apply(z));
    let objective = |x: &DVector<f64>| j.eval(x).unwrap_or(f64::NAN);
    let mut rec = Recorder::new(j, opts);
    let mut z = opts.init.clone().unwrap_or_else(|| &pinv * y);
    let mut x = project(&z);
    rec.record(0, &x, || objective(&x))?;
    let mut converged = false;
    let mut iterations = 0;
    for n in 1..=opts.max_iter {
        let r = j.prox(gamma, &(&x * 2.0 - &z))?;
        let z_next = &z + r - &x;
        let change = (&z_next - &z).norm();
        z = z_next;
        x = project(&z);
        iterations = n;
        rec.record(n, &x, || objective(&x))?;
        if change <= opts.tol_rel * (1.0 + z.norm()) {
            converged = true;
            break;
        }
    }
    let trace = rec.finish(&x, iterations, converged, gamma, opts.tol_rel)?;
    Ok((x, trace))
}

/// Chambolle-Pock primal-dual splitting for `min ½‖y − Φx‖² + λ‖D*x‖₁`.
///
/// Both terms are dualized through `K = [Φ; D*]`; steps satisfy
/// `στ‖K‖² < 1`. Stops when the relative change of the primal iterate and
/// of the dual pair are both below `tol_rel`.
pub fn primal_dual_solve(
    phi: &LinearMap,
    y: &DVector<f64>,
    lambda: f64,
    j: &Regularizer,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, SolveTrace)> {
    if !(lambda > 0.0) {
        check_problem(phi, y, j, opts)?;
        return Err(Error::InvalidArgument(format!("λ must be > 0, got {lambda}")));
    }
    chambolle_pock(phi, y, Fidelity::Penalized(lambda), j, opts)
}

/// Chambolle-Pock for the noiseless problem `min ‖D*x‖₁ s.t. Φx = y`.
///
/// Same splitting as [`primal_dual_solve`] with the data term replaced by
/// the indicator of `{Φx = y}`; the iterate is feasible only in the limit.
pub fn primal_dual_constrained(
    phi: &LinearMap,
    y: &DVector<f64>,
    j: &Regularizer,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, SolveTrace)> {
    chambolle_pock(phi, y, Fidelity::Constrained, j, opts)
}

/// Douglas-Rachford when `J` has a closed-form prox, primal-dual otherwise.
pub fn solve_noiseless(
    phi: &LinearMap,
    y: &DVector<f64>,
    j: &Regularizer,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, SolveTrace)> {
    if j.prox_supported() {
        dr_solve(phi, y, j, opts)
    } else {
        primal_dual_constrained(phi, y, j, opts)
    }
}

#[derive(Clone, Copy)]
enum Fidelity {
    Penalized(f64),
    Constrained,
}

fn chambolle_pock(
    phi: &LinearMap,
    y: &DVector<f64>,
    fidelity: Fidelity,
    j: &Regularizer,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, SolveTrace)> {
    check_problem(phi, y, j, opts)?;
    let Regularizer::AnalysisL1 { d } = j else {
        return Err(Error::Unsupported {
            op: "primal_dual_solve",
            kind: j.kind_name(),
        });
    };
    let (p, n, q) = (phi.rows(), phi.cols(), d.ncols());
    let mut k = DMatrix::zeros(p + q, n);
    k.rows_mut(0, p).copy_from(phi.matrix());
    k.rows_mut(p, q).copy_from(&d.transpose());
    let knorm = linalg::spectral_norm(&k);
    let (tau, sigma) = match opts.step {
        Step::Auto => (0.99 / knorm, 0.99 / knorm),
        Step::Fixed(t) if t > 0.0 && t * t * knorm * knorm < 1.0 => (t, t),
        Step::Fixed(t) => {
            return Err(Error::InvalidArgument(format!(
                "primal-dual steps σ = τ = {t} violate στ‖[Φ; D*]‖² < 1 (‖K‖ = {knorm})"
            )))
        }
    };
    let weight = match fidelity {
        Fidelity::Penalized(lambda) => lambda,
        Fidelity::Constrained => 1.0,
    };
    let objective = |x: &DVector<f64>| match fidelity {
        Fidelity::Penalized(lambda) => penalized_objective(phi, y, lambda, j, x),
        Fidelity::Constrained => j.eval(x).unwrap_or(f64::NAN),
    };
    let mut rec = Recorder::new(j, opts);
    let mut x = opts.init.clone().unwrap_or_else(|| DVector::zeros(n));
    let mut x_bar = x.clone();
    let mut a = DVector::<f64>::zeros(p);
    let mut b = DVector::<f64>::zeros(q);
    rec.record(0, &x, || objective(&x))?;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        // prox of σF₁* (F₁ = ½‖y − ·‖² or ι_{y}) and of σF₂* for F₂ = weight·‖·‖₁.
        let shifted = &a + (phi.apply(&x_bar) - y) * sigma;
        let a_next = match fidelity {
            Fidelity::Penalized(_) => shifted / (1.0 + sigma),
            Fidelity::Constrained => shifted,
        };
        let b_next = (&b + d.tr_mul(&x_bar) * sigma).map(|v| v.clamp(-weight, weight));
        let x_next = &x - (phi.adjoint(&a_next) + d * &b_next) * tau;
        let dx = (&x_next - &x).norm();
        let dual_change = ((&a_next - &a).norm_squared() + (&b_next - &b).norm_squared()).sqrt();
        let dual_scale = (a_next.norm_squared() + b_next.norm_squared()).sqrt();
        x_bar = &x_next * 2.0 - &x;
        x = x_next;
        a = a_next;
        b = b_next;
        iterations = it;
        rec.record(it, &x, || objective(&x))?;
        if dx <= opts.tol_rel * (1.0 + x.norm()) && dual_change <= opts.tol_rel * (1.0 + dual_scale) {
            converged = true;
            break;
        }
    }
    let trace = rec.finish(&x, iterations, converged, tau, opts.tol_rel)?;
    Ok((x, trace))
}

/// Forward-backward when `J` has a closed-form prox, primal-dual otherwise.
pub fn solve_penalized(
    phi: &LinearMap,
    y: &DVector<f64>,
    lambda: f64,
    j: &Regularizer,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, SolveTrace)> {
    if j.prox_supported() {
        fb_solve(phi, y, lambda, j, opts)
    } else {
        primal_dual_solve(phi, y, lambda, j, opts)
    }
}

/// Iteration from which every traced tag equals the final tag.
pub fn identification_iteration(trace: &SolveTrace) -> Option<usize> {
    if trace.tags.is_empty() {
        return None;
    }
    match trace.tags.iter().rposition(|t| *t != trace.final_tag) {
        None => Some(0),
        Some(last) if last + 1 < trace.tags.len() => Some((last + 1) * trace.trace_every),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// `exp(slope)` of the least-squares fit of `log ‖x^{(n)} − x_final‖`.
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
    /// False for stagnant (rate ≈ 1) or poorly fitted traces.
    pub linear_regime: bool,
}

/// Minimum number of post-identification points for a rate fit.
pub const MIN_RATE_POINTS: usize = 10;

/// Geometric rate of the post-identification errors.
pub fn local_rate_estimate(trace: &SolveTrace) -> Result<RateEstimate> {
    let start = identification_iteration(trace)
        .ok_or_else(|| Error::InsufficientData("the manifold was never identified".into()))?
        / trace.trace_every;
    let (xs, ys): (Vec<f64>, Vec<f64>) = trace
        .errors_to_final
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, &e)| e > trace.error_floor && e > 0.0)
        .map(|(i, &e)| ((i * trace.trace_every) as f64, e.ln()))
        .unzip();
    if xs.len() < MIN_RATE_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} usable points after identification, need {MIN_RATE_POINTS}",
            xs.len()
        )));
    }
    let (slope, _, r_squared) = linalg::linear_fit(&xs, &ys);
    let rate = slope.exp();
    Ok(RateEstimate {
        rate,
        r_squared,
        points: xs.len(),
        linear_regime: rate < 1.0 - 1e-6 && r_squared >= 0.95,
    })
}

/// Contraction factor `max_i |1 − τσ_i²(Φ_T)|` of forward-backward once the
/// model `T` is identified, for regularizers with zero Hessian on `T`.
pub fn predicted_local_rate(phi: &LinearMap, model: &ModelDescriptor, tau: f64) -> f64 {
    let s = linalg::singular_values(&(phi.matrix() * &model.basis));
    s.iter().map(|si| (1.0 - tau * si * si).abs()).fold(0.0, f64::max)
}
