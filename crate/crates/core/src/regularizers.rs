//! Partly smooth regularizers: ℓ1, group ℓ1-ℓ2, ℓ∞, nuclear and analysis ℓ1.
//!
//! For each regularizer `J` this module provides its value, proximity
//! operator, the model tangent subspace `T_x = Lin(∂J(x))^⊥` with an
//! orthonormal basis, the generalized sign `e_x = proj_{T_x}(∂J(x))`, a
//! classification of a dual vector against `∂J(x)` (interior / boundary /
//! outside) and the Hessian of `J` restricted to `T_x`.
//!
//! Nuclear-norm vectors are `n0 × n0` matrices flattened column-major.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Entries with magnitude above this are active.
pub const TOL_ACTIVE: f64 = 1e-8;
/// Relative band below `‖x‖∞` still counted as saturated.
pub const SATURATION_BAND: f64 = 1e-8;
/// Singular values above `RANK_RTOL · σ_max` count towards the rank.
pub const RANK_RTOL: f64 = 1e-8;
/// Interior / boundary classification tolerance.
pub const TOL_RI: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    L1,
    /// Sum of Euclidean norms over a partition of `0..n` into blocks.
    GroupL1L2 { blocks: Vec<Vec<usize>>, n: usize },
    Linf,
    /// Nuclear norm of an `n0 × n0` matrix.
    Nuclear { n0: usize },
    /// `‖D* x‖₁` with `D ∈ R^{N×Q}`.
    AnalysisL1 { d: DMatrix<f64> },
}

impl Regularizer {
    /// Group norm over an explicit partition of `0..n`.
    pub fn group(blocks: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidArgument("empty block".into()));
            }
            for &i in b {
                if i >= n || seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "blocks must be disjoint and inside 0..{n} (index {i})"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("index {i} is not covered by any block")));
        }
        Ok(Regularizer::GroupL1L2 { blocks, n })
    }

    /// Contiguous blocks of equal size.
    pub fn uniform_groups(n: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 || !n.is_multiple_of(block_size) {
            return Err(Error::InvalidArgument(format!(
                "block size {block_size} does not divide {n}"
            )));
        }
        let blocks = (0..n / block_size)
            .map(|b| (b * block_size..(b + 1) * block_size).collect())
            .collect();
        Self::group(blocks, n)
    }

    pub fn nuclear(n0: usize) -> Result<Self> {
        if n0 == 0 {
            return Err(Error::InvalidArgument("nuclear norm needs n0 ≥ 1".into()));
        }
        Ok(Regularizer::Nuclear { n0 })
    }

    pub fn analysis(d: DMatrix<f64>) -> Result<Self> {
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("analysis operator has non-finite entries".into()));
        }
        Ok(Regularizer::AnalysisL1 { d })
    }

    /// 1-D total variation: `D* x = (x_{i+1} − x_i)_i`, so `D ∈ R^{N×(N−1)}`.
    pub fn total_variation(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("total variation needs N ≥ 2".into()));
        }
        let mut d = DMatrix::zeros(n, n - 1);
        for i in 0..n - 1 {
            d[(i, i)] = -1.0;
            d[(i + 1, i)] = 1.0;
        }
        Self::analysis(d)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Regularizer::L1 => "l1",
            Regularizer::GroupL1L2 { .. } => "group_l1l2",
            Regularizer::Linf => "linf",
            Regularizer::Nuclear { .. } => "nuclear",
            Regularizer::AnalysisL1 { .. } => "analysis_l1",
        }
    }

    /// Whether the proximity operator has a closed form here.
    pub fn prox_supported(&self) -> bool {
        !matches!(self, Regularizer::AnalysisL1 { .. })
    }

    /// Whether the partial-smoothness manifolds are linear (`M_x = T_x`).
    pub fn has_linear_manifolds(&self) -> bool {
        !matches!(self, Regularizer::Nuclear { .. })
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        match self {
            Regularizer::L1 | Regularizer::Linf => Ok(()),
            Regularizer::GroupL1L2 { n, .. } => check_len("group regularizer", *n, len),
            Regularizer::Nuclear { n0 } => check_len("nuclear regularizer", n0 * n0, len),
            Regularizer::AnalysisL1 { d } => check_len("analysis regularizer", d.nrows(), len),
        }
    }

    /// `J(x)`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(match self {
            Regularizer::L1 => x.iter().map(|v| v.abs()).sum(),
            Regularizer::GroupL1L2 { blocks, .. } => blocks.iter().map(|b| block_norm(x, b)).sum(),
            Regularizer::Linf => x.amax(),
            Regularizer::Nuclear { n0 } => linalg::singular_values(&as_square(x, *n0)).sum(),
            Regularizer::AnalysisL1 { d } => d.tr_mul(x).iter().map(|v| v.abs()).sum(),
        })
    }

    /// `argmin_u ½‖x − u‖² + γ J(u)`.
    pub fn prox(&self, gamma: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("prox step must be > 0, got {gamma}")));
        }
        self.check_dim(x.len())?;
        match self {
            Regularizer::L1 => Ok(x.map(|v| soft_threshold(v, gamma))),
            Regularizer::GroupL1L2 { blocks, .. } => {
                let mut u = x.clone();
                for b in blocks {
                    let nb = block_norm(x, b);
                    let scale = if nb > gamma { 1.0 - gamma / nb } else { 0.0 };
                    for &i in b {
                        u[i] *= scale;
                    }
                }
                Ok(u)
            }
            // Moreau: prox_{γ‖·‖∞}(x) = x − proj_{γB₁}(x).
            Regularizer::Linf => Ok(x - project_l1_ball(x, gamma)),
            Regularizer::Nuclear { n0 } => {
                let svd = SVD::new(as_square(x, *n0), true, true);
                let u = svd.u.as_ref().expect("U");
                let vt = svd.v_t.as_ref().expect("V^T");
                let mut out = DMatrix::zeros(*n0, *n0);
                for (k, &s) in svd.singular_values.iter().enumerate() {
                    let t = s - gamma;
                    if t > 0.0 {
                        out += u.column(k) * vt.row(k) * t;
                    }
                }
                Ok(DVector::from_column_slice(out.as_slice()))
            }
            Regularizer::AnalysisL1 { .. } => Err(Error::Unsupported {
                op: "prox",
                kind: self.kind_name(),
            }),
        }
    }

    /// Model tangent subspace at `x`, its generalized sign and manifold tag.
    pub fn model_tangent(&self, x: &DVector<f64>, tol_active: f64) -> Result<ModelDescriptor> {
        self.check_dim(x.len())?;
        let n = x.len();
        match self {
            Regularizer::L1 => {
                let support: Vec<usize> = (0..n).filter(|&i| x[i].abs() > tol_active).collect();
                let basis = coordinate_basis(n, &support);
                let mut e = DVector::zeros(n);
                for &i in &support {
                    e[i] = x[i].signum();
                }
                Ok(ModelDescriptor::new(basis, e, ManifoldTag::Support(support)))
            }
            Regularizer::GroupL1L2 { blocks, .. } => {
                let active: Vec<usize> = (0..blocks.len())
                    .filter(|&b| block_norm(x, &blocks[b]) > tol_active)
                    .collect();
                let coords: Vec<usize> = active.iter().flat_map(|&b| blocks[b].iter().copied()).collect();
                let basis = coordinate_basis(n, &coords);
                let mut e = DVector::zeros(n);
                for &b in &active {
                    let nb = block_norm(x, &blocks[b]);
                    for &i in &blocks[b] {
                        e[i] = x[i] / nb;
                    }
                }
                Ok(ModelDescriptor::new(basis, e, ManifoldTag::Blocks(active)))
            }
            Regularizer::Linf => {
                let m = x.amax();
                if m <= tol_active {
                    let tag = ManifoldTag::Saturation {
                        indices: vec![],
                        signs: vec![],
                    };
                    return Ok(ModelDescriptor::new(DMatrix::zeros(n, 0), DVector::zeros(n), tag));
                }
                let (sat, signs) = saturation_set(x);
                let free: Vec<usize> = (0..n).filter(|i| !sat.contains(i)).collect();
                let mut basis = DMatrix::zeros(n, free.len() + 1);
                let scale = 1.0 / (sat.len() as f64).sqrt();
                let mut e = DVector::zeros(n);
                for (&i, &s) in sat.iter().zip(&signs) {
                    basis[(i, 0)] = s as f64 * scale;
                    e[i] = s as f64 / sat.len() as f64;
                }
                for (c, &j) in free.iter().enumerate() {
                    basis[(j, c + 1)] = 1.0;
                }
                let tag = ManifoldTag::Saturation { indices: sat, signs };
                Ok(ModelDescriptor::new(basis, e, tag))
            }
            Regularizer::Nuclear { n0 } => {
                let n0 = *n0;
                let f = SpectralFactors::new(x, n0);
                let r = f.rank;
                let dim = r * (2 * n0 - r);
                let mut basis = DMatrix::zeros(n, dim);
                let mut c = 0;
                for a in 0..n0 {
                    for b in 0..n0 {
                        if a < r || b < r {
                            let outer = f.u.column(a) * f.v.column(b).transpose();
                            basis.set_column(c, &DVector::from_column_slice(outer.as_slice()));
                            c += 1;
                        }
                    }
                }
                let ur = f.u.columns(0, r).into_owned();
                let vr = f.v.columns(0, r).into_owned();
                let e = &ur * vr.transpose();
                let mut desc = ModelDescriptor::new(basis, DVector::from_column_slice(e.as_slice()), ManifoldTag::Rank(r));
                desc.factors = Some((f.u, f.v));
                Ok(desc)
            }
            Regularizer::AnalysisL1 { d } => {
                let z = d.tr_mul(x);
                let q = z.len();
                let active: Vec<usize> = (0..q).filter(|&i| z[i].abs() > tol_active).collect();
                let cosupport: Vec<usize> = (0..q).filter(|&i| z[i].abs() <= tol_active).collect();
                let d_cos = d.select_columns(&cosupport);
                let basis = linalg::null_space(&d_cos.transpose());
                let mut raw = DVector::zeros(n);
                for &i in &active {
                    raw += d.column(i) * z[i].signum();
                }
                let e = &basis * basis.tr_mul(&raw);
                Ok(ModelDescriptor::new(basis, e, ManifoldTag::Cosupport(cosupport)))
            }
        }
    }

    /// `e_x = proj_{T_x}(∂J(x))` with the default activity threshold.
    pub fn generalized_sign(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.model_tangent(x, TOL_ACTIVE)?.e)
    }

    /// Classify `eta` against `∂J(x)`.
    pub fn subdiff_position(&self, x: &DVector<f64>, eta: &DVector<f64>, tol_ri: f64) -> Result<SubdiffPosition> {
        self.check_dim(x.len())?;
        check_len("subdiff_position (eta)", x.len(), eta.len())?;
        let model = self.model_tangent(x, TOL_ACTIVE)?;
        let (deviation, margin) = match self {
            Regularizer::L1 => {
                let ManifoldTag::Support(ref support) = model.tag else { unreachable!() };
                let mut on = vec![false; x.len()];
                let mut dev: f64 = 0.0;
                for &i in support {
                    on[i] = true;
                    dev = dev.max((eta[i] - x[i].signum()).abs());
                }
                let off = (0..x.len()).filter(|&i| !on[i]).map(|i| eta[i].abs()).fold(0.0, f64::max);
                (dev, 1.0 - off)
            }
            Regularizer::GroupL1L2 { blocks, .. } => {
                let ManifoldTag::Blocks(ref active) = model.tag else { unreachable!() };
                let mut dev: f64 = 0.0;
                let mut off: f64 = 0.0;
                for (b, idx) in blocks.iter().enumerate() {
                    if active.contains(&b) {
                        let d2: f64 = idx.iter().map(|&i| (eta[i] - model.e[i]).powi(2)).sum();
                        dev = dev.max(d2.sqrt());
                    } else {
                        off = off.max(block_norm(eta, idx));
                    }
                }
                (dev, 1.0 - off)
            }
            Regularizer::Linf => {
                let ManifoldTag::Saturation { ref indices, ref signs } = model.tag else { unreachable!() };
                if indices.is_empty() {
                    (0.0, 1.0 - eta.iter().map(|v| v.abs()).sum::<f64>())
                } else {
                    let mut on = vec![false; x.len()];
                    for &i in indices {
                        on[i] = true;
                    }
                    let leak = (0..x.len()).filter(|&i| !on[i]).map(|i| eta[i].abs()).fold(0.0, f64::max);
                    let mass: f64 = indices.iter().zip(signs).map(|(&i, &s)| s as f64 * eta[i]).sum();
                    let least = indices
                        .iter()
                        .zip(signs)
                        .map(|(&i, &s)| s as f64 * eta[i])
                        .fold(f64::INFINITY, f64::min);
                    (leak.max((mass - 1.0).abs()), least)
                }
            }
            Regularizer::Nuclear { n0 } => {
                let dev = (model.project(eta) - &model.e).norm();
                let (u, v) = model.factors.as_ref().expect("nuclear factors");
                let r = match model.tag {
                    ManifoldTag::Rank(r) => r,
                    _ => unreachable!(),
                };
                let off = if r < *n0 {
                    let uc = u.columns(r, n0 - r);
                    let vc = v.columns(r, n0 - r);
                    let w = uc.transpose() * as_square(eta, *n0) * vc;
                    linalg::spectral_norm(&w.into_owned())
                } else {
                    0.0
                };
                (dev, 1.0 - off)
            }
            Regularizer::AnalysisL1 { d } => {
                let ManifoldTag::Cosupport(ref cos) = model.tag else { unreachable!() };
                let z = d.tr_mul(x);
                let mut rest = eta.clone();
                for i in 0..z.len() {
                    if !cos.contains(&i) {
                        rest -= d.column(i) * z[i].signum();
                    }
                }
                if cos.is_empty() {
                    (rest.norm(), 1.0)
                } else {
                    // Minimal-norm coefficients of the cosupport columns; exact
                    // ‖v‖∞ minimizer whenever D_Λ is injective.
                    let d_cos = d.select_columns(cos);
                    let v = linalg::pinv(&d_cos) * &rest;
                    let resid = (&d_cos * &v - &rest).norm();
                    (resid, 1.0 - v.amax())
                }
            }
        };
        Ok(SubdiffPosition::classify(deviation, margin, tol_ri))
    }

    /// Euclidean projection of `eta` onto `∂J(x)`.
    pub fn project_subdifferential(&self, x: &DVector<f64>, eta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        check_len("project_subdifferential (eta)", x.len(), eta.len())?;
        let model = self.model_tangent(x, TOL_ACTIVE)?;
        match self {
            Regularizer::L1 => {
                let ManifoldTag::Support(ref support) = model.tag else { unreachable!() };
                let mut out = eta.map(|v| v.clamp(-1.0, 1.0));
                for &i in support {
                    out[i] = x[i].signum();
                }
                Ok(out)
            }
            Regularizer::GroupL1L2 { blocks, .. } => {
                let ManifoldTag::Blocks(ref active) = model.tag else { unreachable!() };
                let mut out = eta.clone();
                for (b, idx) in blocks.iter().enumerate() {
                    if active.contains(&b) {
                        for &i in idx {
                            out[i] = model.e[i];
                        }
                    } else {
                        let nb = block_norm(eta, idx);
                        if nb > 1.0 {
                            for &i in idx {
                                out[i] /= nb;
                            }
                        }
                    }
                }
                Ok(out)
            }
            Regularizer::Linf => {
                let ManifoldTag::Saturation { ref indices, ref signs } = model.tag else { unreachable!() };
                if indices.is_empty() {
                    return Ok(project_l1_ball(eta, 1.0));
                }
                let flipped: Vec<f64> = indices.iter().zip(signs).map(|(&i, &s)| s as f64 * eta[i]).collect();
                let p = project_simplex(&flipped);
                let mut out = DVector::zeros(x.len());
                for ((&i, &s), pi) in indices.iter().zip(signs).zip(p) {
                    out[i] = s as f64 * pi;
                }
                Ok(out)
            }
            Regularizer::Nuclear { n0 } => {
                let (u, v) = model.factors.as_ref().expect("nuclear factors");
                let ManifoldTag::Rank(r) = model.tag else { unreachable!() };
                let mut out = as_square(&model.e, *n0);
                if r < *n0 {
                    let uc = u.columns(r, n0 - r).into_owned();
                    let vc = v.columns(r, n0 - r).into_owned();
                    let w = uc.transpose() * as_square(eta, *n0) * &vc;
                    let svd = SVD::new(w, true, true);
                    let wu = svd.u.as_ref().expect("U");
                    let wv = svd.v_t.as_ref().expect("V^T");
                    let mut clipped = DMatrix::zeros(n0 - r, n0 - r);
                    for (k, &s) in svd.singular_values.iter().enumerate() {
                        clipped += wu.column(k) * wv.row(k) * s.min(1.0);
                    }
                    out += uc * clipped * vc.transpose();
                }
                Ok(DVector::from_column_slice(out.as_slice()))
            }
            Regularizer::AnalysisL1 { .. } => Err(Error::Unsupported {
                op: "projection onto the subdifferential",
                kind: self.kind_name(),
            }),
        }
    }

    /// Hessian of `J` restricted to `T_x`, expressed in the descriptor basis.
    pub fn hessian_on_tangent(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let model = self.model_tangent(x, TOL_ACTIVE)?;
        let d = model.dim();
        match self {
            Regularizer::L1 | Regularizer::Linf => Ok(DMatrix::zeros(d, d)),
            Regularizer::GroupL1L2 { blocks, .. } => {
                let ManifoldTag::Blocks(ref active) = model.tag else { unreachable!() };
                let mut q = DMatrix::zeros(d, d);
                let mut off = 0;
                for &b in active {
                    let idx = &blocks[b];
                    let nb = block_norm(x, idx);
                    for (r, &i) in idx.iter().enumerate() {
                        for (c, &j) in idx.iter().enumerate() {
                            let delta = if r == c { 1.0 } else { 0.0 };
                            q[(off + r, off + c)] = (delta - model.e[i] * model.e[j]) / nb;
                        }
                    }
                    off += idx.len();
                }
                Ok(q)
            }
            Regularizer::Nuclear { .. } | Regularizer::AnalysisL1 { .. } => Err(Error::Unsupported {
                op: "hessian_on_tangent",
                kind: self.kind_name(),
            }),
        }
    }
}

/// Label of the low-complexity manifold a point lives on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ManifoldTag {
    Support(Vec<usize>),
    Blocks(Vec<usize>),
    /// Saturated coordinates with their signs; empty at the origin.
    Saturation { indices: Vec<usize>, signs: Vec<i8> },
    Rank(usize),
    /// Indices `i` with `(D* x)_i = 0`.
    Cosupport(Vec<usize>),
}

impl ManifoldTag {
    /// Stable 64-bit FNV-1a digest, used in trace output.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv(0xcbf2_9ce4_8422_2325);
        match self {
            ManifoldTag::Support(v) => {
                h.word(1);
                v.iter().for_each(|&i| h.word(i as u64));
            }
            ManifoldTag::Blocks(v) => {
                h.word(2);
                v.iter().for_each(|&i| h.word(i as u64));
            }
            ManifoldTag::Saturation { indices, signs } => {
                h.word(3);
                for (&i, &s) in indices.iter().zip(signs) {
                    h.word(i as u64);
                    h.word(s as i64 as u64);
                }
            }
            ManifoldTag::Rank(r) => {
                h.word(4);
                h.word(*r as u64);
            }
            ManifoldTag::Cosupport(v) => {
                h.word(5);
                v.iter().for_each(|&i| h.word(i as u64));
            }
        }
        h.0
    }
}

struct Fnv(u64);

impl Fnv {
    fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

/// Orthonormal basis of `T_x`, the generalized sign `e_x` and the manifold tag.
#[derive(Debug, Clone)]
pub struct ModelDescriptor {
    /// `N × d`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub e: DVector<f64>,
    pub tag: ManifoldTag,
    /// Full left/right singular bases for the nuclear norm (first `r` columns
    /// span the row/column spaces).
    pub factors: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl ModelDescriptor {
    fn new(basis: DMatrix<f64>, e: DVector<f64>, tag: ManifoldTag) -> Self {
        Self {
            basis,
            e,
            tag,
            factors: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Coordinates of `v`'s projection in the basis.
    pub fn coords(&self, v: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(v)
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * self.basis.tr_mul(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Interior,
    Boundary,
    Outside,
}

impl Position {
    pub fn as_str(self) -> &'static str {
        match self {
            Position::Interior => "interior",
            Position::Boundary => "boundary",
            Position::Outside => "outside",
        }
    }
}

/// Where a dual vector sits relative to `∂J(x)`; `margin > 0` inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubdiffPosition {
    pub value: Position,
    pub margin: f64,
}

impl SubdiffPosition {
    /// `deviation` measures violation of the equality constraints on `T_x`,
    /// `margin` the slack of the inequality constraints off it.
    fn classify(deviation: f64, margin: f64, tol_ri: f64) -> Self {
        let margin = if deviation > tol_ri { margin.min(-deviation) } else { margin };
        let value = if margin > tol_ri {
            Position::Interior
        } else if margin >= -tol_ri {
            Position::Boundary
        } else {
            Position::Outside
        };
        Self { value, margin }
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn block_norm(x: &DVector<f64>, idx: &[usize]) -> f64 {
    idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt()
}

fn coordinate_basis(n: usize, idx: &[usize]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        b[(i, c)] = 1.0;
    }
    b
}

fn saturation_set(x: &DVector<f64>) -> (Vec<usize>, Vec<i8>) {
    let m = x.amax();
    let thresh = m * (1.0 - SATURATION_BAND);
    let idx: Vec<usize> = (0..x.len()).filter(|&i| x[i].abs() >= thresh).collect();
    let signs = idx.iter().map(|&i| if x[i] > 0.0 { 1 } else { -1 }).collect();
    (idx, signs)
}

pub(crate) fn as_square(x: &DVector<f64>, n0: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n0, n0, x.as_slice())
}

/// Full SVD factors of a square matrix with the numerical rank.
struct SpectralFactors {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    rank: usize,
}

impl SpectralFactors {
    fn new(x: &DVector<f64>, n0: usize) -> Self {
        let svd = SVD::new(as_square(x, n0), true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let rank = if smax <= TOL_ACTIVE {
            0
        } else {
            svd.singular_values.iter().filter(|&&s| s > RANK_RTOL * smax).count()
        };
        Self {
            u: svd.u.expect("U"),
            v: svd.v_t.expect("V^T").transpose(),
            rank,
        }
    }
}

/// Euclidean projection onto `{v : ‖v‖₁ ≤ radius}` (sort-based, exact).
pub fn project_l1_ball(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    let l1: f64 = v.iter().map(|a| a.abs()).sum();
    if l1 <= radius {
        return v.clone();
    }
    let mut mags: Vec<f64> = v.iter().map(|a| a.abs()).collect();
    let theta = simplex_threshold(&mut mags, radius);
    v.map(|a| a.signum() * (a.abs() - theta).max(0.0))
}

/// Projection onto the probability simplex `{p ≥ 0, Σp = 1}`.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    let theta = simplex_threshold(&mut sorted, 1.0);
    v.iter().map(|a| (a - theta).max(0.0)).collect()
}

/// Threshold `θ` with `Σ (u_i − θ)_+ = z`; sorts `u` in place.
fn simplex_threshold(u: &mut [f64], z: f64) -> f64 {
    u.sort_unstable_by(|a, b| b.partial_cmp(a).expect("NaN in projection"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - z) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    theta
}
