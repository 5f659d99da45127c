//! Dual certificates and recovery criteria.
//!
//! The linearized pre-certificate `η_F = Φ* Φ_T^{+,*} e_{x0}` only needs a
//! least-squares solve; the minimal-norm certificate `η_0` needs the
//! projection of the origin onto `{p : Φ*p ∈ ∂J(x0)}` and is computed by an
//! accelerated proximal-gradient scheme on the dual of that projection.

use nalgebra::DVector;

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::problem::{operator_norm, LinearMap};
use crate::regularizers::{ModelDescriptor, Position, Regularizer, SubdiffPosition, TOL_ACTIVE, TOL_RI};

/// Smallest singular value of `Φ` restricted to `T` (`+∞` when `T = {0}`).
pub fn restricted_injectivity(phi: &LinearMap, model: &ModelDescriptor) -> f64 {
    linalg::sigma_min(&(phi.matrix() * &model.basis))
}

/// Linearized pre-certificate together with its dual vector `p`.
#[derive(Debug, Clone)]
pub struct PreCertificate {
    /// Minimal-norm solution of `Φ_T* p = e_{x0}`.
    pub p: DVector<f64>,
    pub eta: DVector<f64>,
}

fn precertificate_unchecked(phi: &LinearMap, model: &ModelDescriptor) -> PreCertificate {
    let a = phi.matrix() * &model.basis;
    let e = model.coords(&model.e);
    let p = linalg::pinv(&a.transpose()) * e;
    let eta = phi.adjoint(&p);
    PreCertificate { p, eta }
}

/// `η_F` and `p`, failing when `Φ` is not injective on `T_{x0}`.
pub fn precertificate(phi: &LinearMap, j: &Regularizer, x0: &DVector<f64>) -> Result<PreCertificate> {
    check_len("precertificate", phi.cols(), x0.len())?;
    let model = j.model_tangent(x0, TOL_ACTIVE)?;
    let sigma_min = restricted_injectivity(phi, &model);
    if !(sigma_min > TOL_RI) {
        return Err(Error::NotInjective { sigma_min });
    }
    Ok(precertificate_unchecked(phi, &model))
}

/// `η_F = Φ* Φ_{T}^{+,*} e_{x0}`.
pub fn linearized_precertificate(phi: &LinearMap, j: &Regularizer, x0: &DVector<f64>) -> Result<DVector<f64>> {
    precertificate(phi, j, x0).map(|c| c.eta)
}

#[derive(Debug, Clone)]
pub struct MinimalNormCertificate {
    pub p: DVector<f64>,
    pub eta: DVector<f64>,
    pub iterations: usize,
    /// `max(dist(Φ*p, ∂J(x0)), ‖p_k − p_{k−1}‖)` at termination.
    pub kkt_residual: f64,
}

/// Residual above which the dual feasible set is declared empty.
const INFEASIBLE_RESIDUAL: f64 = 1e-6;

/// `η_0 = Φ* p` with `p = argmin {‖p‖ : Φ* p ∈ ∂J(x0)}`.
///
/// Solves the dual `min_u ½‖Φu‖² + σ_{∂J(x0)}(u)` by FISTA with step
/// `1/‖Φ‖²` and adaptive restart; the primal point is `p = −Φu`.
pub fn minimal_norm_certificate(
    phi: &LinearMap,
    j: &Regularizer,
    x0: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<MinimalNormCertificate> {
    check_len("minimal_norm_certificate", phi.cols(), x0.len())?;
    j.check_dim(x0.len())?;
    if !j.prox_supported() {
        return Err(Error::Unsupported {
            op: "minimal_norm_certificate",
            kind: j.kind_name(),
        });
    }
    let lip = operator_norm(phi).powi(2);
    let tau = 1.0 / lip;
    let n = phi.cols();
    let mut u = DVector::zeros(n);
    let mut z = u.clone();
    let mut t = 1.0f64;
    let mut p = -phi.apply(&u);
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        // Prox of τσ_C via Moreau: v − τ proj_C(v/τ).
        let v = &z - phi.adjoint(&phi.apply(&z)) * tau;
        let proj = j.project_subdifferential(x0, &(&v / tau))?;
        let u_next = &v - proj * tau;
        let p_next = -phi.apply(&u_next);
        let eta = phi.adjoint(&p_next);
        let feas = (&eta - j.project_subdifferential(x0, &eta)?).norm();
        let step = (&p_next - &p).norm();
        residual = feas.max(step);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Restart when the dual objective gradient points against momentum.
        let restart = (&z - &u_next).dot(&(&u_next - &u)) > 0.0;
        if restart {
            z = u_next.clone();
            t = 1.0;
        } else {
            z = &u_next + (&u_next - &u) * ((t - 1.0) / t_next);
            t = t_next;
        }
        u = u_next;
        p = p_next;
        if feas <= tol && step <= tol * (1.0 + p.norm()) {
            return Ok(MinimalNormCertificate {
                eta,
                p,
                iterations: it,
                kkt_residual: residual,
            });
        }
    }
    let eta = phi.adjoint(&p);
    let feas = (&eta - j.project_subdifferential(x0, &eta)?).norm();
    if feas > INFEASIBLE_RESIDUAL {
        return Err(Error::Infeasible(format!(
            "no p with Φ*p ∈ ∂J(x0) found (feasibility residual {feas:e} after {max_iter} iterations)"
        )));
    }
    Ok(MinimalNormCertificate {
        eta,
        p,
        iterations: max_iter,
        kkt_residual: residual,
    })
}

fn support(x0: &DVector<f64>) -> Vec<usize> {
    (0..x0.len()).filter(|&i| x0[i].abs() > TOL_ACTIVE).collect()
}

fn complement(n: usize, idx: &[usize]) -> Vec<usize> {
    let mut on = vec![false; n];
    idx.iter().for_each(|&i| on[i] = true);
    (0..n).filter(|&i| !on[i]).collect()
}

fn injective_columns(phi: &LinearMap, idx: &[usize]) -> Result<nalgebra::DMatrix<f64>> {
    let phi_i = phi.columns(idx);
    let r = linalg::rank(&phi_i);
    if r < idx.len() || idx.len() > phi.rows() {
        return Err(Error::RankDeficient { rank: r, cols: idx.len() });
    }
    Ok(phi_i)
}

/// `IC(x0) = ‖Φ_{I^c}* Φ_I^{+,*} sign(x0_I)‖∞` (ℓ1 only).
pub fn irrepresentable_criterion(phi: &LinearMap, x0: &DVector<f64>) -> Result<f64> {
    check_len("irrepresentable_criterion", phi.cols(), x0.len())?;
    let i = support(x0);
    let phi_i = injective_columns(phi, &i)?;
    let s = DVector::from_iterator(i.len(), i.iter().map(|&k| x0[k].signum()));
    let v = linalg::pinv(&phi_i).transpose() * s;
    Ok(complement(phi.cols(), &i)
        .into_iter()
        .map(|j| phi.matrix().column(j).dot(&v).abs())
        .fold(0.0, f64::max))
}

/// `ERC(I) = max_{j∉I} ‖Φ_I^+ φ_j‖₁`.
pub fn erc(phi: &LinearMap, support: &[usize]) -> Result<f64> {
    validate_indices(phi, support)?;
    let phi_i = injective_columns(phi, support)?;
    let pinv = linalg::pinv(&phi_i);
    Ok(complement(phi.cols(), support)
        .into_iter()
        .map(|j| (&pinv * phi.matrix().column(j)).lp_norm(1))
        .fold(0.0, f64::max))
}

/// Weak ERC: ratio of cumulative correlations, `None` when the denominator
/// `1 − max_{j∈I} Σ_{i∈I, i≠j} |⟨φ_i, φ_j⟩|` is not positive.
///
/// Assumes unit-norm columns.
pub fn werc(phi: &LinearMap, support: &[usize]) -> Result<Option<f64>> {
    validate_indices(phi, support)?;
    let m = phi.matrix();
    let corr = |a: usize, b: usize| m.column(a).dot(&m.column(b)).abs();
    let num = complement(phi.cols(), support)
        .into_iter()
        .map(|j| support.iter().map(|&i| corr(i, j)).sum::<f64>())
        .fold(0.0, f64::max);
    let inner = support
        .iter()
        .map(|&j| support.iter().filter(|&&i| i != j).map(|&i| corr(i, j)).sum::<f64>())
        .fold(0.0, f64::max);
    let den = 1.0 - inner;
    Ok(if den > 0.0 { Some(num / den) } else { None })
}

/// `μ(Φ) = max_{i≠j} |⟨φ_i, φ_j⟩|` over normalized columns.
pub fn mutual_coherence(phi: &LinearMap) -> Result<f64> {
    let normalized = phi.normalized_columns()?;
    let g = normalized.matrix().tr_mul(normalized.matrix());
    let n = g.nrows();
    let mut mu: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            mu = mu.max(g[(i, j)].abs());
        }
    }
    Ok(mu)
}

/// `kμ / (1 − (k−1)μ)` when `(k−1)μ < 1`.
pub fn coherence_bound(k: usize, mu: f64) -> Option<f64> {
    let den = 1.0 - (k as f64 - 1.0) * mu;
    (den > 0.0).then(|| k as f64 * mu / den)
}

/// Welch-type lower bound `√((N−P)/(P(N−1)))` on the coherence of `P × N` frames.
pub fn coherence_lower_bound(p: usize, n: usize) -> f64 {
    if n <= p || n < 2 {
        return 0.0;
    }
    ((n - p) as f64 / (p as f64 * (n - 1) as f64)).sqrt()
}

fn validate_indices(phi: &LinearMap, idx: &[usize]) -> Result<()> {
    if let Some(&bad) = idx.iter().find(|&&i| i >= phi.cols()) {
        return Err(Error::InvalidArgument(format!("index {bad} out of range 0..{}", phi.cols())));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub dim_t: usize,
    pub sigma_min_t: f64,
    pub injective: bool,
    pub eta_f: DVector<f64>,
    pub position: SubdiffPosition,
    pub ic: Option<f64>,
    pub erc: Option<f64>,
    pub werc: Option<f64>,
    pub coherence: f64,
    pub identifiable: bool,
}

/// How much of a [`CertificateReport`] to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportDetail {
    /// Injectivity, `η_F`, its position and (for ℓ1) the IC.
    Basic,
    /// Also ERC, wERC and the mutual coherence.
    Full,
}

/// Restricted injectivity and non-degeneracy of `η_F`, plus the ℓ1 criteria.
///
/// When `Φ` is not injective on `T`, `η_F` is still formed from the
/// least-squares dual vector but the instance is never identifiable.
pub fn certificate_report(phi: &LinearMap, j: &Regularizer, x0: &DVector<f64>) -> Result<CertificateReport> {
    certificate_report_with(phi, j, x0, ReportDetail::Full)
}

/// [`certificate_report`] at a chosen level of detail; skipped fields are
/// `None` (or NaN for the coherence).
pub fn certificate_report_with(
    phi: &LinearMap,
    j: &Regularizer,
    x0: &DVector<f64>,
    detail: ReportDetail,
) -> Result<CertificateReport> {
    check_len("certificate_report", phi.cols(), x0.len())?;
    let model = j.model_tangent(x0, TOL_ACTIVE)?;
    let sigma_min_t = restricted_injectivity(phi, &model);
    let injective = sigma_min_t > TOL_RI;
    let eta_f = precertificate_unchecked(phi, &model).eta;
    let position = j.subdiff_position(x0, &eta_f, TOL_RI)?;
    let full = detail == ReportDetail::Full;
    let (ic, erc_v, werc_v) = if matches!(j, Regularizer::L1) && injective {
        let i = support(x0);
        let (erc_v, werc_v) = if full {
            (erc(phi, &i).ok(), werc(phi, &i).ok().flatten())
        } else {
            (None, None)
        };
        (irrepresentable_criterion(phi, x0).ok(), erc_v, werc_v)
    } else {
        (None, None, None)
    };
    let coherence = if full {
        mutual_coherence(phi).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    Ok(CertificateReport {
        dim_t: model.dim(),
        sigma_min_t,
        injective,
        eta_f,
        position,
        ic,
        erc: erc_v,
        werc: werc_v,
        coherence,
        identifiable: injective && position.value == Position::Interior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{gen_gaussian_map, gen_signal, SignalKind, SignalSpec};
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn worked() -> LinearMap {
        LinearMap::from_rows(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn injectivity_examples() {
        let id = LinearMap::identity(3);
        let m = Regularizer::L1.model_tangent(&v(&[1.0, 0.0, 2.0]), TOL_ACTIVE).unwrap();
        assert!((restricted_injectivity(&id, &m) - 1.0).abs() < 1e-14);

        let row = LinearMap::from_rows(1, 2, &[1.0, 1.0]).unwrap();
        let t1 = Regularizer::L1.model_tangent(&v(&[1.0, 0.0]), TOL_ACTIVE).unwrap();
        assert!((restricted_injectivity(&row, &t1) - 1.0).abs() < 1e-14);
        let t2 = Regularizer::L1.model_tangent(&v(&[1.0, 1.0]), TOL_ACTIVE).unwrap();
        assert_eq!(restricted_injectivity(&row, &t2), 0.0);

        let g = gen_gaussian_map(10, 20, 3, false).unwrap();
        let x = gen_signal(&SignalSpec::new(SignalKind::sparse(15), 1), 20).unwrap();
        let m = Regularizer::L1.model_tangent(&x, TOL_ACTIVE).unwrap();
        assert_eq!(restricted_injectivity(&g, &m), 0.0);
    }

    #[test]
    fn precertificate_worked_instance() {
        let c = precertificate(&worked(), &Regularizer::L1, &v(&[1.0, 0.0, 0.0])).unwrap();
        assert!((c.p - v(&[1.0, 0.0])).amax() < 1e-12);
        assert!((&c.eta - v(&[1.0, 0.0, 1.0])).amax() < 1e-12);
        let pos = Regularizer::L1.subdiff_position(&v(&[1.0, 0.0, 0.0]), &c.eta, TOL_RI).unwrap();
        assert_eq!(pos.value, Position::Boundary);
    }

    #[test]
    fn precertificate_requires_injectivity() {
        let row = LinearMap::from_rows(1, 2, &[1.0, 1.0]).unwrap();
        let err = linearized_precertificate(&row, &Regularizer::L1, &v(&[1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::NotInjective { .. }));
    }

    #[test]
    fn orthogonal_columns_give_unit_margin() {
        let phi = LinearMap::new(DMatrix::from_diagonal(&v(&[2.0, 3.0, 0.5]))).unwrap();
        let x0 = v(&[1.0, 0.0, -1.0]);
        let eta = linearized_precertificate(&phi, &Regularizer::L1, &x0).unwrap();
        assert!((&eta - v(&[1.0, 0.0, -1.0])).amax() < 1e-12);
        let pos = Regularizer::L1.subdiff_position(&x0, &eta, TOL_RI).unwrap();
        assert_eq!(pos.value, Position::Interior);
        assert!((pos.margin - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minimal_norm_identity() {
        let x0 = v(&[2.0, 0.0, -1.0]);
        let c = minimal_norm_certificate(&LinearMap::identity(3), &Regularizer::L1, &x0, 100_000, 1e-9).unwrap();
        assert!((c.eta - v(&[1.0, 0.0, -1.0])).amax() < 1e-8);
    }

    #[test]
    fn minimal_norm_worked_instance_against_grid_oracle() {
        // Feasible p have p₁ = 1, |p₂| ≤ 1, |1 + p₂| ≤ 1; scan p₂ for min ‖p‖.
        let mut best = (f64::INFINITY, 0.0);
        for k in -20_000..=20_000 {
            let p2 = k as f64 * 1e-4;
            if p2.abs() <= 1.0 && (1.0 + p2).abs() <= 1.0 {
                let nrm = (1.0 + p2 * p2).sqrt();
                if nrm < best.0 {
                    best = (nrm, p2);
                }
            }
        }
        let oracle = v(&[1.0, best.1, 1.0 + best.1]);
        let c = minimal_norm_certificate(&worked(), &Regularizer::L1, &v(&[1.0, 0.0, 0.0]), 100_000, 1e-9).unwrap();
        assert!((c.eta - oracle).amax() < 1e-6);
    }

    #[test]
    fn minimal_norm_detects_infeasibility() {
        // x0 = (1, −1) does not minimize ‖x‖₁ subject to x₁ + x₂ = 0.
        let row = LinearMap::from_rows(1, 2, &[1.0, 1.0]).unwrap();
        let err = minimal_norm_certificate(&row, &Regularizer::L1, &v(&[1.0, -1.0]), 20_000, 1e-9).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn criteria_examples() {
        let id = LinearMap::identity(4);
        let x0 = v(&[1.0, 0.0, -2.0, 0.0]);
        assert!(irrepresentable_criterion(&id, &x0).unwrap() < 1e-14);
        assert!(erc(&id, &[0, 2]).unwrap() < 1e-14);
        assert!(werc(&id, &[0, 2]).unwrap().unwrap() < 1e-14);
        assert_eq!(mutual_coherence(&id).unwrap(), 0.0);

        let w = worked();
        assert!((irrepresentable_criterion(&w, &v(&[1.0, 0.0, 0.0])).unwrap() - 1.0).abs() < 1e-12);
        assert!((erc(&w, &[0]).unwrap() - 1.0).abs() < 1e-12);

        let dup = LinearMap::from_rows(2, 2, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((mutual_coherence(&dup).unwrap() - 1.0).abs() < 1e-14);
        assert!(mutual_coherence(&LinearMap::from_rows(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap()).is_err());
        assert!(erc(&dup, &[0, 1]).is_err());
    }

    #[test]
    fn werc_single_index_is_max_correlation() {
        let g = gen_gaussian_map(8, 16, 11, true).unwrap();
        let m = g.matrix();
        let expect = (1..16).map(|j| m.column(0).dot(&m.column(j)).abs()).fold(0.0, f64::max);
        assert!((werc(&g, &[0]).unwrap().unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn coherence_respects_welch_bound() {
        for seed in 0..10 {
            let g = gen_gaussian_map(6, 15, seed, false).unwrap();
            assert!(mutual_coherence(&g).unwrap() >= coherence_lower_bound(6, 15) - 1e-10);
        }
    }

    #[test]
    fn report_examples() {
        let r = certificate_report(&LinearMap::identity(2), &Regularizer::L1, &v(&[1.0, 0.0])).unwrap();
        assert!(r.identifiable);
        assert_eq!(r.ic, Some(0.0));
        let r = certificate_report(&worked(), &Regularizer::L1, &v(&[1.0, 0.0, 0.0])).unwrap();
        assert!(!r.identifiable);
        assert_eq!(r.position.value, Position::Boundary);
        let g = gen_gaussian_map(3, 8, 1, false).unwrap();
        let x = gen_signal(&SignalSpec::new(SignalKind::sparse(5), 2), 8).unwrap();
        let r = certificate_report(&g, &Regularizer::L1, &x).unwrap();
        assert!(!r.identifiable);
        assert_eq!(r.sigma_min_t, 0.0);
    }
}
