//! Forward model `y = Φ x0 + w`, seeded random instances and operator
//! utilities shared by every experiment.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Deterministic generator for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of substream `index` under `master`.
///
/// A SplitMix64 finalizer over `(master, index)`, so trial `i` always sees the
/// same stream regardless of which worker runs it or in which order.
pub fn substream_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dense forward operator `Φ ∈ R^{P×N}`: rows are measurements, columns atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap(DMatrix<f64>);

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "linear map needs at least one row and one column".into(),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("linear map has non-finite entries".into()));
        }
        Ok(Self(matrix))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Build from row-major data, convenient for small literals.
    pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "LinearMap::from_rows",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Number of measurements `P`.
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    /// Signal dimension `N`.
    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }

    pub fn adjoint(&self, r: &DVector<f64>) -> DVector<f64> {
        self.0.tr_mul(r)
    }

    /// `Φ_I`, the columns indexed by `idx`.
    pub fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        self.0.select_columns(idx)
    }

    /// Copy with every column rescaled to unit Euclidean norm.
    pub fn normalized_columns(&self) -> Result<Self> {
        let mut m = self.0.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            let n = col.norm();
            if n == 0.0 {
                return Err(Error::InvalidArgument(format!("column {j} is zero")));
            }
            col /= n;
        }
        Ok(Self(m))
    }
}

/// `Φx + w`.
pub fn apply_forward(phi: &LinearMap, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("apply_forward (x)", phi.cols(), x.len())?;
    check_len("apply_forward (w)", phi.rows(), w.len())?;
    Ok(phi.apply(x) + w)
}

/// Matrix with i.i.d. standard normal entries, optionally column-normalized.
pub fn gen_gaussian_map(p: usize, n: usize, seed: u64, normalize_columns: bool) -> Result<LinearMap> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("gaussian map needs P, N ≥ 1 (got {p}×{n})")));
    }
    let mut r = rng(seed);
    let m = DMatrix::from_fn(p, n, |_, _| r.sample::<f64, _>(StandardNormal));
    let map = LinearMap::new(m)?;
    if normalize_columns {
        map.normalized_columns()
    } else {
        Ok(map)
    }
}

/// Gaussian noise vector with standard deviation `sigma`.
pub fn gen_noise(p: usize, sigma: f64, seed: u64) -> DVector<f64> {
    let mut r = rng(seed);
    DVector::from_fn(p, |_, _| sigma * r.sample::<f64, _>(StandardNormal))
}

/// Largest singular value `‖Φ‖`.
pub fn operator_norm(phi: &LinearMap) -> f64 {
    linalg::spectral_norm(phi.matrix())
}

/// Structured signal families, one per regularizer model.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalKind {
    /// `k` nonzeros with magnitude uniform in `amplitude` and random sign.
    Sparse { k: usize, amplitude: (f64, f64) },
    /// `active` nonzero blocks of `block_size` contiguous entries.
    GroupSparse { block_size: usize, active: usize },
    /// `n0 × n0` matrix (column-major flattened) of rank exactly `r`.
    LowRank { n0: usize, r: usize },
    /// `saturated` entries at `±1`, the rest with magnitude below 1/2.
    FlatSaturated { saturated: usize },
    /// Piecewise-constant vector with exactly `jumps` jumps.
    PiecewiseConstant { jumps: usize },
}

impl SignalKind {
    pub fn sparse(k: usize) -> Self {
        SignalKind::Sparse {
            k,
            amplitude: (1.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub kind: SignalKind,
    pub seed: u64,
}

impl SignalSpec {
    pub fn new(kind: SignalKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

fn random_sign(r: &mut ChaCha8Rng) -> f64 {
    if r.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Draw a signal of length `n` whose model matches `spec` exactly.
pub fn gen_signal(spec: &SignalSpec, n: usize) -> Result<DVector<f64>> {
    let mut r = rng(spec.seed);
    let infeasible = |msg: String| Err(Error::InfeasibleSpec(msg));
    match spec.kind {
        SignalKind::Sparse { k, amplitude: (lo, hi) } => {
            if k > n {
                return infeasible(format!("sparsity {k} exceeds N = {n}"));
            }
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return infeasible(format!("amplitude range [{lo}, {hi}] must exclude zero"));
            }
            let mut x = DVector::zeros(n);
            let mut support = sample(&mut r, n, k).into_vec();
            support.sort_unstable();
            for i in support {
                let mag = if hi > lo { r.random_range(lo..hi) } else { lo };
                x[i] = random_sign(&mut r) * mag;
            }
            Ok(x)
        }
        SignalKind::GroupSparse { block_size, active } => {
            if block_size == 0 || !n.is_multiple_of(block_size) {
                return infeasible(format!("block size {block_size} does not divide N = {n}"));
            }
            let nb = n / block_size;
            if active > nb {
                return infeasible(format!("{active} active blocks but only {nb} blocks"));
            }
            let mut x = DVector::zeros(n);
            let mut blocks = sample(&mut r, nb, active).into_vec();
            blocks.sort_unstable();
            for b in blocks {
                for i in b * block_size..(b + 1) * block_size {
                    x[i] = random_sign(&mut r) * r.random_range(1.0..2.0);
                }
            }
            Ok(x)
        }
        SignalKind::LowRank { n0, r: rank } => {
            if n0 * n0 != n {
                return infeasible(format!("N = {n} is not {n0}²"));
            }
            if rank > n0 {
                return infeasible(format!("rank {rank} exceeds side {n0}"));
            }
            let a = DMatrix::from_fn(n0, rank, |_, _| r.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(n0, rank, |_, _| r.sample::<f64, _>(StandardNormal));
            let m = a * b.transpose();
            Ok(DVector::from_column_slice(m.as_slice()))
        }
        SignalKind::FlatSaturated { saturated } => {
            if saturated == 0 || saturated > n {
                return infeasible(format!("saturation count {saturated} must be in 1..={n}"));
            }
            let mut x = DVector::from_fn(n, |_, _| 0.0);
            for i in 0..n {
                x[i] = random_sign(&mut r) * r.random_range(0.0..0.5);
            }
            for i in sample(&mut r, n, saturated).into_vec() {
                x[i] = random_sign(&mut r);
            }
            Ok(x)
        }
        SignalKind::PiecewiseConstant { jumps } => {
            if n == 0 || jumps > n - 1 {
                return infeasible(format!("{jumps} jumps do not fit in N = {n}"));
            }
            let mut cuts = sample(&mut r, n - 1, jumps).into_vec();
            cuts.sort_unstable();
            let mut x = DVector::zeros(n);
            let mut level = r.random_range(-1.0..1.0);
            let mut next = cuts.iter().peekable();
            for i in 0..n {
                x[i] = level;
                if next.peek() == Some(&&i) {
                    next.next();
                    level += random_sign(&mut r) * r.random_range(1.0..2.0);
                }
            }
            Ok(x)
        }
    }
}

/// One realization of the forward model.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub phi: LinearMap,
    pub x0: DVector<f64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
    pub sigma: f64,
}

impl ProblemInstance {
    pub fn new(phi: LinearMap, x0: DVector<f64>, w: DVector<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise level must be ≥ 0, got {sigma}")));
        }
        let y = apply_forward(&phi, &x0, &w)?;
        Ok(Self { phi, x0, w, y, sigma })
    }

    pub fn noiseless(phi: LinearMap, x0: DVector<f64>) -> Result<Self> {
        let p = phi.rows();
        Self::new(phi, x0, DVector::zeros(p), 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let id = LinearMap::identity(2);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let y = apply_forward(&id, &x, &DVector::zeros(2)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
        let y = apply_forward(&id, &x, &DVector::from_vec(vec![0.5, -0.5])).unwrap();
        assert_eq!(y.as_slice(), &[1.5, 1.5]);
        let phi = LinearMap::from_rows(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let y = apply_forward(&phi, &DVector::from_vec(vec![1.0, 0.0, 0.0]), &DVector::zeros(2)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let id = LinearMap::identity(2);
        let err = apply_forward(&id, &DVector::zeros(3), &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(apply_forward(&id, &DVector::zeros(2), &DVector::zeros(1)).is_err());
    }

    #[test]
    fn map_rejects_empty_and_nan() {
        assert!(LinearMap::new(DMatrix::zeros(0, 3)).is_err());
        assert!(LinearMap::new(DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn gaussian_map_is_deterministic() {
        let a = gen_gaussian_map(3, 5, 7, false).unwrap();
        let b = gen_gaussian_map(3, 5, 7, false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_gaussian_map(3, 5, 8, false).unwrap());
    }

    #[test]
    fn normalized_columns_have_unit_norm() {
        let a = gen_gaussian_map(6, 9, 1, true).unwrap();
        for c in a.matrix().column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_cross_correlations_concentrate() {
        // Most pairwise correlations of a normalized 200×400 map fall below 5/√P.
        let (p, n) = (200, 400);
        let bound = 5.0 / (p as f64).sqrt();
        let mut total = 0usize;
        let mut inside = 0usize;
        for seed in 0..20 {
            let m = gen_gaussian_map(p, n, seed, true).unwrap();
            let g = m.matrix().tr_mul(m.matrix());
            for i in 0..n {
                // A subsample of pairs keeps the test quick.
                for j in (i + 1..n).step_by(7) {
                    total += 1;
                    if g[(i, j)].abs() < bound {
                        inside += 1;
                    }
                }
            }
        }
        assert!(inside as f64 / total as f64 > 0.999, "{inside}/{total}");
    }

    #[test]
    fn operator_norm_examples() {
        let two = LinearMap::new(DMatrix::identity(3, 3) * 2.0).unwrap();
        assert!((operator_norm(&two) - 2.0).abs() < 1e-12);
        let d = LinearMap::from_rows(2, 2, &[3.0, 0.0, 0.0, 4.0]).unwrap();
        assert!((operator_norm(&d) - 4.0).abs() < 1e-12);
        // Φ*Φ = [[1,1],[1,2]] has eigenvalues (3 ± √5)/2.
        let j = LinearMap::from_rows(2, 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        let expect = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert!((operator_norm(&j) - expect).abs() < 1e-10 * expect);
        assert!((expect - 1.618034).abs() < 1e-6);
    }

    #[test]
    fn sparse_signals() {
        let z = gen_signal(&SignalSpec::new(SignalKind::sparse(0), 3), 10).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let x = gen_signal(&SignalSpec::new(SignalKind::sparse(3), 3), 10).unwrap();
        let nz: Vec<f64> = x.iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 3);
        assert!(nz.iter().all(|v| (1.0..=2.0).contains(&v.abs())));
        assert!(gen_signal(&SignalSpec::new(SignalKind::sparse(11), 3), 10).is_err());
        let bad = SignalKind::Sparse { k: 2, amplitude: (0.0, 1.0) };
        assert!(gen_signal(&SignalSpec::new(bad, 0), 10).is_err());
    }

    #[test]
    fn low_rank_signal_has_exact_rank() {
        let x = gen_signal(&SignalSpec::new(SignalKind::LowRank { n0: 4, r: 2 }, 5), 16).unwrap();
        let m = DMatrix::from_column_slice(4, 4, x.as_slice());
        let s = linalg::singular_values(&m);
        assert_eq!(s.iter().filter(|&&v| v > 1e-10).count(), 2);
        assert!(gen_signal(&SignalSpec::new(SignalKind::LowRank { n0: 4, r: 2 }, 5), 15).is_err());
    }

    #[test]
    fn structured_signals_match_their_counts() {
        let g = gen_signal(&SignalSpec::new(SignalKind::GroupSparse { block_size: 3, active: 2 }, 1), 12).unwrap();
        let active = g.as_slice().chunks(3).filter(|b| b.iter().any(|v| *v != 0.0)).count();
        assert_eq!(active, 2);
        let f = gen_signal(&SignalSpec::new(SignalKind::FlatSaturated { saturated: 4 }, 2), 10).unwrap();
        assert_eq!(f.iter().filter(|v| v.abs() == 1.0).count(), 4);
        let pc = gen_signal(&SignalSpec::new(SignalKind::PiecewiseConstant { jumps: 3 }, 3), 20).unwrap();
        let jumps = (1..20).filter(|&i| pc[i] != pc[i - 1]).count();
        assert_eq!(jumps, 3);
        assert!(gen_signal(&SignalSpec::new(SignalKind::PiecewiseConstant { jumps: 20 }, 3), 20).is_err());
    }

    #[test]
    fn substreams_differ() {
        assert_ne!(substream_seed(1, 0), substream_seed(1, 1));
        assert_ne!(substream_seed(1, 0), substream_seed(2, 0));
        assert_eq!(substream_seed(9, 4), substream_seed(9, 4));
    }
}
