//! Degrees of freedom, Stein's unbiased risk estimate and λ selection.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::problem::{rng, substream_seed, LinearMap};
use crate::regularizers::{Regularizer, TOL_ACTIVE};
use crate::solvers::{solve_penalized, SolveOptions};

/// Relative threshold on the smallest eigenvalue of `Φ_T*Φ_T + λQ_T`.
pub const DOF_EIG_RTOL: f64 = 1e-10;

/// Closed-form degrees of freedom `tr(Φ_T (Φ_T*Φ_T + λQ_T)^{-1} Φ_T*)` at a
/// solution `x_star` of the penalized problem.
///
/// The trace is evaluated in an orthonormal basis of the model tangent. The
/// Hessian `Q_T` vanishes for the polyhedral priors.
pub fn dof_closed_form(phi: &LinearMap, j: &Regularizer, x_star: &DVector<f64>, lambda: f64) -> Result<f64> {
    j.check_dim(phi.cols())?;
    check_len("dof_closed_form (x)", phi.cols(), x_star.len())?;
    let q = match j {
        Regularizer::Nuclear { .. } => {
            return Err(Error::Unsupported {
                op: "dof_closed_form",
                kind: j.kind_name(),
            })
        }
        Regularizer::GroupL1L2 { .. } => Some(j.hessian_on_tangent(x_star)?),
        _ => None,
    };
    let model = j.model_tangent(x_star, TOL_ACTIVE)?;
    if model.dim() == 0 {
        return Ok(0.0);
    }
    let a = phi.matrix() * &model.basis;
    let gram = a.tr_mul(&a);
    let mut m = gram.clone();
    let polyhedral = q.is_none();
    if let Some(q) = q {
        m += q * lambda;
    }
    let eig = m.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    let scale = eig.eigenvalues.amax().max(1.0);
    if !(min_eig > DOF_EIG_RTOL * scale) {
        return Err(Error::SingularJacobian { min_eig });
    }
    // Without curvature the system matrix is the Gram matrix itself.
    if polyhedral {
        return Ok(model.dim() as f64);
    }
    let sol = m
        .cholesky()
        .ok_or(Error::SingularJacobian { min_eig })?
        .solve(&gram);
    Ok(sol.trace())
}

/// `‖y − μ‖² + 2σ²·dof − Pσ²`.
pub fn sure(y: &DVector<f64>, mu: &DVector<f64>, dof: f64, sigma: f64) -> Result<f64> {
    check_len("sure (mu)", y.len(), mu.len())?;
    Ok(compose_sure((y - mu).norm_squared(), dof, sigma, y.len()))
}

fn compose_sure(residual_sq: f64, dof: f64, sigma: f64, p: usize) -> f64 {
    let s2 = sigma * sigma;
    residual_sq + 2.0 * s2 * dof - p as f64 * s2
}

/// Finite-difference step `1e-4·(1 + ‖y‖)/√P`.
pub fn default_fd_epsilon(y: &DVector<f64>) -> f64 {
    1e-4 * (1.0 + y.norm()) / (y.len().max(1) as f64).sqrt()
}

fn probe(p: usize, seed: u64, index: u64) -> DVector<f64> {
    let mut r = rng(substream_seed(seed, index));
    DVector::from_fn(p, |_, _| r.sample(StandardNormal))
}

/// Monte-Carlo divergence of `y ↦ μ(y)`: the mean over Gaussian probes `z`
/// of `⟨z, (μ(y + εz) − μ(y))/ε⟩`, with its standard error.
///
/// Probe `i` draws from the substream `(seed, i)`, so results do not depend
/// on the thread count.
pub fn mc_dof<F>(solver: F, y: &DVector<f64>, epsilon: f64, n_probes: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be > 0, got {epsilon}")));
    }
    if n_probes == 0 {
        return Err(Error::InvalidArgument("n_probes must be ≥ 1".into()));
    }
    let base = solver(y)?;
    check_len("mc_dof (μ(y))", y.len(), base.len())?;
    let samples = (0..n_probes as u64)
        .into_par_iter()
        .map(|i| {
            let z = probe(y.len(), seed, i);
            let shifted = solver(&(y + &z * epsilon))?;
            check_len("mc_dof (μ(y + εz))", y.len(), shifted.len())?;
            Ok(z.dot(&(shifted - &base)) / epsilon)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(linalg::mean_and_se(&samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofSource {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone)]
pub struct RiskPoint {
    pub lambda: f64,
    pub dof: f64,
    pub sure: f64,
    pub residual_sq: f64,
    /// Monte-Carlo estimate and standard error, when computed.
    pub mc_dof: Option<(f64, f64)>,
    pub dof_source: DofSource,
    /// The manifold tag changed under an ε-perturbation of `y`.
    pub near_transition: bool,
    pub x_star: DVector<f64>,
    /// Set when the point could not be evaluated; numeric fields are NaN.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RiskCurve {
    pub points: Vec<RiskPoint>,
    pub best_lambda: f64,
}

impl RiskCurve {
    pub fn best(&self) -> Option<&RiskPoint> {
        self.points.iter().find(|p| p.lambda == self.best_lambda)
    }
}

#[derive(Debug, Clone)]
pub struct RiskOptions {
    pub solve: SolveOptions,
    /// Probes for the Monte-Carlo fallback and for `always_mc`.
    pub mc_probes: usize,
    /// Also compute Monte-Carlo DOF where the closed form is available.
    pub always_mc: bool,
    pub check_transition: bool,
    /// Finite-difference step; defaults to [`default_fd_epsilon`].
    pub epsilon: Option<f64>,
    pub seed: u64,
}

impl Default for RiskOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::untraced(),
            mc_probes: 32,
            always_mc: false,
            check_transition: true,
            epsilon: None,
            seed: 0,
        }
    }
}

/// SURE along a λ grid. Points are returned in increasing λ; `best_lambda`
/// minimizes SURE with ties broken toward the larger λ.
pub fn sure_path(
    phi: &LinearMap,
    y: &DVector<f64>,
    j: &Regularizer,
    sigma: f64,
    lambdas: &[f64],
    opts: &RiskOptions,
) -> Result<RiskCurve> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("λ grid is empty".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidArgument(format!("λ grid entries must be > 0, got {bad}")));
    }
    check_len("sure_path (y)", phi.rows(), y.len())?;
    j.check_dim(phi.cols())?;
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    let points: Vec<RiskPoint> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            risk_point(phi, y, j, sigma, lambda, opts, substream_seed(opts.seed, i as u64)).unwrap_or_else(|e| {
                RiskPoint {
                    lambda,
                    dof: f64::NAN,
                    sure: f64::NAN,
                    residual_sq: f64::NAN,
                    mc_dof: None,
                    dof_source: DofSource::ClosedForm,
                    near_transition: false,
                    x_star: DVector::from_element(phi.cols(), f64::NAN),
                    failure: Some(e.to_string()),
                }
            })
        })
        .collect();
    let mut best = (f64::INFINITY, f64::NAN);
    for p in &points {
        // Increasing λ with `<=` keeps the largest minimizer.
        if p.sure.is_finite() && p.sure <= best.0 {
            best = (p.sure, p.lambda);
        }
    }
    Ok(RiskCurve {
        points,
        best_lambda: best.1,
    })
}

fn risk_point(
    phi: &LinearMap,
    y: &DVector<f64>,
    j: &Regularizer,
    sigma: f64,
    lambda: f64,
    opts: &RiskOptions,
    seed: u64,
) -> Result<RiskPoint> {
    let solve = |data: &DVector<f64>| solve_penalized(phi, data, lambda, j, &opts.solve).map(|(x, _)| x);
    let x_star = solve(y)?;
    let mu_of = |data: &DVector<f64>| solve(data).map(|x| phi.apply(&x));
    let epsilon = opts.epsilon.unwrap_or_else(|| default_fd_epsilon(y));
    let residual_sq = (y - phi.apply(&x_star)).norm_squared();
    let closed = dof_closed_form(phi, j, &x_star, lambda);
    let (dof, source, mut mc) = match closed {
        Ok(d) => (d, DofSource::ClosedForm, None),
        Err(Error::Unsupported { .. }) => {
            let est = mc_dof(mu_of, y, epsilon, opts.mc_probes, seed)?;
            (est.0, DofSource::MonteCarlo, Some(est))
        }
        Err(e) => return Err(e),
    };
    if opts.always_mc && mc.is_none() {
        mc = Some(mc_dof(mu_of, y, epsilon, opts.mc_probes, seed)?);
    }
    let near_transition = if opts.check_transition {
        let z = probe(y.len(), seed, u64::MAX);
        let moved = solve(&(y + z * epsilon))?;
        j.model_tangent(&moved, TOL_ACTIVE)?.tag != j.model_tangent(&x_star, TOL_ACTIVE)?.tag
    } else {
        false
    };
    Ok(RiskPoint {
        lambda,
        dof,
        sure: compose_sure(residual_sq, dof, sigma, y.len()),
        residual_sq,
        mc_dof: mc,
        dof_source: source,
        near_transition,
        x_star,
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{gen_gaussian_map, gen_noise};
    use crate::regularizers::soft_threshold;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn l1_dof_is_support_size() {
        let phi = gen_gaussian_map(10, 20, 1, false).unwrap();
        let mut x = DVector::zeros(20);
        x[3] = 1.0;
        x[7] = -2.0;
        x[11] = 0.5;
        let d = dof_closed_form(&phi, &Regularizer::L1, &x, 0.3).unwrap();
        assert!((d - 3.0).abs() < 1e-10);
        assert_eq!(dof_closed_form(&phi, &Regularizer::L1, &DVector::zeros(20), 0.3).unwrap(), 0.0);
    }

    #[test]
    fn group_dof_by_hand() {
        let j = Regularizer::uniform_groups(2, 2).unwrap();
        let d = dof_closed_form(&LinearMap::identity(2), &j, &v(&[3.0, 4.0]), 5.0).unwrap();
        // Eigenvalues of I + 5·Q are 1 (along x_b) and 2 (orthogonal).
        assert!((d - 1.5).abs() < 1e-12);
        let small = dof_closed_form(&LinearMap::identity(2), &j, &v(&[3.0, 4.0]), 1e-9).unwrap();
        assert!((small - 2.0).abs() < 1e-8);
    }

    #[test]
    fn dof_detects_singular_system() {
        let phi = LinearMap::from_rows(1, 2, &[1.0, 1.0]).unwrap();
        let err = dof_closed_form(&phi, &Regularizer::L1, &v(&[1.0, 1.0]), 0.1).unwrap_err();
        assert!(matches!(err, Error::SingularJacobian { .. }));
        assert!(err.to_string().contains("G"));
        let nuc = Regularizer::nuclear(2).unwrap();
        assert!(dof_closed_form(&LinearMap::identity(4), &nuc, &v(&[1.0, 0.0, 0.0, 1.0]), 0.1).is_err());
    }

    #[test]
    fn sure_trivial_cases() {
        let y = v(&[1.0, -2.0, 0.5]);
        let s = 0.3;
        assert!((sure(&y, &y, 3.0, s).unwrap() - 3.0 * s * s).abs() < 1e-15);
        let zero = DVector::zeros(3);
        assert!((sure(&y, &zero, 0.0, s).unwrap() - (y.norm_squared() - 3.0 * s * s)).abs() < 1e-15);
        let mu = v(&[0.5, -1.0, 0.0]);
        let val = sure(&y, &mu, 1.7, s).unwrap();
        let rhs = 2.0 * s * s * 1.7;
        assert!((val + 3.0 * s * s - (&y - &mu).norm_squared() - rhs).abs() < 1e-14);
        assert!(sure(&y, &DVector::zeros(2), 0.0, s).is_err());
    }

    #[test]
    fn mc_dof_of_linear_map() {
        let a = DMatrix::from_diagonal(&v(&[1.0, 2.0]));
        let lin = |y: &DVector<f64>| Ok(&a * y);
        let y = v(&[0.3, -0.1]);
        let (m1, se1) = mc_dof(lin, &y, 1e-3, 100, 7).unwrap();
        let (m2, se2) = mc_dof(lin, &y, 1e-3, 1600, 7).unwrap();
        assert!((m1 - 3.0).abs() < 4.0 * se1);
        assert!((m2 - 3.0).abs() < 4.0 * se2);
        assert!(se2 < se1 / 2.0);
        let once = mc_dof(lin, &y, 1e-3, 1, 3).unwrap().0;
        assert_eq!(once, mc_dof(lin, &y, 1e-3, 1, 3).unwrap().0);
        assert!(mc_dof(lin, &y, 0.0, 1, 3).is_err());
    }

    #[test]
    fn mc_dof_of_soft_threshold() {
        let y = gen_noise(50, 1.0, 9);
        let lambda = 0.7;
        let st = |y: &DVector<f64>| Ok(y.map(|v| soft_threshold(v, lambda)));
        let expected = y.iter().filter(|v| v.abs() > lambda).count() as f64;
        let (m, se) = mc_dof(st, &y, default_fd_epsilon(&y), 400, 2).unwrap();
        assert!((m - expected).abs() <= 3.0 * se + 1e-9, "{m} ± {se} vs {expected}");
    }

    #[test]
    fn sure_path_limits() {
        let y = v(&[0.4, -1.2, 2.0, 0.1]);
        let id = LinearMap::identity(4);
        let curve = sure_path(&id, &y, &Regularizer::L1, 0.5, &[3.0, 1e-6], &RiskOptions::default()).unwrap();
        assert_eq!(curve.points[0].lambda, 1e-6);
        let big = &curve.points[1];
        assert_eq!(big.dof, 0.0);
        assert!((big.sure - (y.norm_squared() - 4.0 * 0.25)).abs() < 1e-12);
        let small = &curve.points[0];
        assert_eq!(small.dof, 4.0);
        assert!(small.residual_sq < 1e-10);
        for p in &curve.points {
            assert_eq!(p.sure, p.residual_sq + 2.0 * 0.25 * p.dof - 4.0 * 0.25);
        }
        assert!(sure_path(&id, &y, &Regularizer::L1, 0.5, &[], &RiskOptions::default()).is_err());
    }

    #[test]
    fn best_lambda_ties_go_to_larger() {
        let y = v(&[0.1, -0.2]);
        let curve = sure_path(&LinearMap::identity(2), &y, &Regularizer::L1, 0.1, &[5.0, 1.0, 3.0], &RiskOptions::default()).unwrap();
        assert_eq!(curve.best_lambda, 5.0);
        assert_eq!(curve.best().unwrap().lambda, 5.0);
    }

    #[test]
    fn nuclear_falls_back_to_monte_carlo() {
        let y = v(&[3.0, 0.2, 0.1, 1.0]);
        let nuc = Regularizer::nuclear(2).unwrap();
        let curve = sure_path(&LinearMap::identity(4), &y, &nuc, 0.1, &[0.5], &RiskOptions::default()).unwrap();
        let p = &curve.points[0];
        assert!(p.failure.is_none(), "{:?}", p.failure);
        assert_eq!(p.dof_source, DofSource::MonteCarlo);
        assert!(p.mc_dof.is_some());
    }

    #[test]
    fn analysis_dof_uses_primal_dual() {
        let y = v(&[0.0, 0.1, 2.0, 2.1, 1.9]);
        let tv = Regularizer::total_variation(5).unwrap();
        let opts = RiskOptions {
            solve: SolveOptions {
                tol_rel: 1e-12,
                ..SolveOptions::untraced()
            },
            ..RiskOptions::default()
        };
        let curve = sure_path(&LinearMap::identity(5), &y, &tv, 0.1, &[0.2], &opts).unwrap();
        let p = &curve.points[0];
        assert!(p.failure.is_none(), "{:?}", p.failure);
        // Two constant pieces.
        assert!((p.dof - 2.0).abs() < 1e-9, "{}", p.dof);
    }
}
