//! Dense complex linear algebra utilities: one-sided inverses, Hermitian
//! eigenvalue helpers, PSD diagnostics, and the complex-Hermitian to
//! real-symmetric embedding used to pose complex LMIs over a real PSD cone.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix, the working type for frequency-response samples.
pub type CMat = DMatrix<Complex64>;
/// Dense real matrix.
pub type RMat = DMatrix<f64>;

/// Default relative singular-value threshold certifying full rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum HermitianError {
    #[error("rank-deficient matrix: sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e}")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
}

/// Complex matrix constrained to be exactly Hermitian.
///
/// The constructor symmetrizes its argument as `(M + M*)/2` and records the
/// Frobenius norm of the discarded skew part, so callers working with
/// floating-point FRF arithmetic can assert the asymmetry stayed small.
#[derive(Debug, Clone)]
pub struct HermitianMatrix {
    mat: CMat,
    asymmetry: f64,
}

impl HermitianMatrix {
    pub fn new(m: CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "Hermitian matrix must be square");
        let adj = m.adjoint();
        let skew = (&m - &adj) * Complex64::new(0.5, 0.0);
        let asymmetry = skew.norm();
        let mut mat = (m + adj) * Complex64::new(0.5, 0.0);
        for i in 0..mat.nrows() {
            mat[(i, i)].im = 0.0;
        }
        Self { mat, asymmetry }
    }

    pub fn from_real(m: RMat) -> Self {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(CMat::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Frobenius norm of the skew part removed at construction.
    pub fn asymmetry_residual(&self) -> f64 {
        self.asymmetry
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    /// Real eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let eig = SymmetricEigen::new(self.mat.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals
    }
}

/// Left inverse `(M* M)^{-1} M*` of a full-column-rank matrix.
///
/// Full column rank is certified by `sigma_min > rank_tol * sigma_max`.
pub fn left_inverse(m: &CMat, rank_tol: f64) -> Result<CMat, HermitianError> {
    if m.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(HermitianError::NonFinite);
    }
    let (sigma_min, sigma_max) = extreme_singular_values(m)?;
    if m.nrows() < m.ncols() || sigma_min <= rank_tol * sigma_max {
        return Err(HermitianError::RankDeficient { sigma_min, sigma_max });
    }
    let gram = m.adjoint() * m;
    let chol = Cholesky::new(gram).ok_or(HermitianError::RankDeficient { sigma_min, sigma_max })?;
    Ok(chol.solve(&m.adjoint()))
}

/// Right inverse `M* (M M*)^{-1}` of a full-row-rank matrix.
pub fn right_inverse(m: &CMat, rank_tol: f64) -> Result<CMat, HermitianError> {
    left_inverse(&m.adjoint(), rank_tol).map(|li| li.adjoint())
}

/// Embeds a complex Hermitian matrix into a real symmetric matrix of doubled
/// dimension: `[[Re M, -Im M], [Im M, Re M]]`.
///
/// The embedding is PSD iff the input is PSD; its spectrum is the input's
/// spectrum with every eigenvalue duplicated.
pub fn hermitian_embed(m: &HermitianMatrix) -> RMat {
    let d = m.dim();
    let src = m.matrix();
    let mut out = RMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let v = src[(i, j)];
            out[(i, j)] = v.re;
            out[(i, j + d)] = -v.im;
            out[(i + d, j)] = v.im;
            out[(i + d, j + d)] = v.re;
        }
    }
    out
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue(m: &HermitianMatrix) -> f64 {
    *m.eigenvalues()
        .last()
        .expect("max_eigenvalue of empty matrix")
}

/// PSD defect `max(0, -lambda_min(M))`; zero iff `M` is PSD.
pub fn psd_residual(m: &HermitianMatrix) -> f64 {
    let lambda_min = *m
        .eigenvalues()
        .first()
        .expect("psd_residual of empty matrix");
    (-lambda_min).max(0.0)
}

/// Eigenvalues of a real symmetric matrix in ascending order.
pub fn real_symmetric_eigenvalues(m: &RMat) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Smallest and largest singular values.
pub fn extreme_singular_values(m: &CMat) -> Result<(f64, f64), HermitianError> {
    let svd = m.clone().svd(false, false);
    let min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let max = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(HermitianError::EigenFailure);
    }
    Ok((min, max))
}

/// Largest singular value.
pub fn max_singular_value(m: &CMat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn left_inverse_identity() {
        let id = CMat::identity(3, 3);
        let li = left_inverse(&id, DEFAULT_RANK_TOL).unwrap();
        assert!((li - CMat::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn left_inverse_real_column() {
        // (M*M)^{-1} M* with M = [1; 1] is [0.5, 0.5]
        let m = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let li = left_inverse(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(li.shape(), (1, 2));
        assert!((li[(0, 0)] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((li[(0, 1)] - c(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn left_inverse_complex_column() {
        // M = [1; i]: M*M = 2, M^L = [0.5, -0.5i]
        let m = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 1.0)]);
        let li = left_inverse(&m, DEFAULT_RANK_TOL).unwrap();
        assert!((li[(0, 0)] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((li[(0, 1)] - c(0.0, -0.5)).norm() < 1e-12);
    }

    #[test]
    fn left_inverse_rejects_rank_deficient() {
        let m = CMat::from_column_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(
            left_inverse(&m, DEFAULT_RANK_TOL),
            Err(HermitianError::RankDeficient { .. })
        ));
    }

    #[test]
    fn right_inverse_identity_and_row() {
        let id = CMat::identity(2, 2);
        let ri = right_inverse(&id, DEFAULT_RANK_TOL).unwrap();
        assert!((ri - CMat::identity(2, 2)).norm() < 1e-12);

        let m = CMat::from_row_slice(1, 2, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let ri = right_inverse(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ri.shape(), (2, 1));
        assert!((ri[(0, 0)] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((ri[(1, 0)] - c(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn right_inverse_diagonal() {
        let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(4.0, 0.0)]);
        let ri = right_inverse(&m, DEFAULT_RANK_TOL).unwrap();
        assert!((ri[(0, 0)] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((ri[(1, 1)] - c(0.25, 0.0)).norm() < 1e-12);
        assert!(ri[(0, 1)].norm() < 1e-14 && ri[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn embed_identity_and_zero() {
        let id = HermitianMatrix::identity(2);
        assert!((hermitian_embed(&id) - RMat::identity(4, 4)).norm() < 1e-15);
        let z = HermitianMatrix::new(CMat::zeros(3, 3));
        assert_eq!(hermitian_embed(&z), RMat::zeros(6, 6));
    }

    #[test]
    fn embed_duplicates_spectrum() {
        // [[2, i], [-i, 2]] has eigenvalues {1, 3}; both eigensolver routes must agree.
        let m = HermitianMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)],
        ));
        let src = m.eigenvalues();
        let emb = real_symmetric_eigenvalues(&hermitian_embed(&m));
        assert_eq!(emb.len(), 4);
        let expected = [src[0], src[0], src[1], src[1]];
        for (a, b) in emb.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!((src[0] - 1.0).abs() < 1e-10);
        assert!((src[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn max_eigenvalue_cases() {
        let d = HermitianMatrix::from_real(RMat::from_diagonal(&nalgebra::DVector::from_vec(
            vec![1.0, 2.0, -5.0],
        )));
        assert!((max_eigenvalue(&d) - 2.0).abs() < 1e-12);

        let s = HermitianMatrix::from_real(RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!((max_eigenvalue(&s) - 1.0).abs() < 1e-12);

        let h = HermitianMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)],
        ));
        assert!((max_eigenvalue(&h) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn psd_residual_cases() {
        let id = HermitianMatrix::identity(2);
        assert_eq!(psd_residual(&id), 0.0);

        let d = HermitianMatrix::from_real(RMat::from_diagonal(&nalgebra::DVector::from_vec(
            vec![1.0, -0.5],
        )));
        assert!((psd_residual(&d) - 0.5).abs() < 1e-12);

        let h = HermitianMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)],
        ));
        assert!(psd_residual(&h) < 1e-12);
    }

    #[test]
    fn constructor_symmetrizes_and_records_residual() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 1e-14), c(0.3, 0.1), c(0.3, -0.1 + 1e-13), c(2.0, 0.0)]);
        let h = HermitianMatrix::new(m);
        assert!(h.asymmetry_residual() < 1e-12);
        assert_eq!(h.matrix()[(0, 0)].im, 0.0);
        assert_eq!(h.matrix()[(1, 1)].im, 0.0);
        let diff = (h.matrix() - h.matrix().adjoint()).norm();
        assert_eq!(diff, 0.0);
    }

    fn cmat_strategy(rows: usize, cols: usize) -> impl Strategy<Value = CMat> {
        proptest::collection::vec(-1.0f64..1.0, rows * cols * 2).prop_map(move |v| {
            CMat::from_fn(rows, cols, |i, j| {
                let k = i * cols + j;
                Complex64::new(v[2 * k], v[2 * k + 1])
            })
        })
    }

    fn hermitian_strategy(dim: usize) -> impl Strategy<Value = HermitianMatrix> {
        cmat_strategy(dim, dim).prop_map(|m| HermitianMatrix::new(m))
    }

    proptest! {
        #[test]
        fn prop_left_inverse_properties(m in cmat_strategy(5, 3)) {
            let (smin, smax) = extreme_singular_values(&m).unwrap();
            prop_assume!(smin > 1e-3 * smax.max(1e-12));
            let li = left_inverse(&m, DEFAULT_RANK_TOL).unwrap();
            let res = (&li * &m - CMat::identity(3, 3)).norm();
            prop_assert!(res <= 1e-9, "residual {res}");
            let proj = &m * &li;
            let herm = (&proj - proj.adjoint()).norm();
            prop_assert!(herm <= 1e-9, "projection asymmetry {herm}");
        }

        #[test]
        fn prop_embed_duplicates_eigenvalues(h in hermitian_strategy(4)) {
            let src = h.eigenvalues();
            let emb = real_symmetric_eigenvalues(&hermitian_embed(&h));
            for (i, ev) in src.iter().enumerate() {
                prop_assert!((emb[2 * i] - ev).abs() <= 1e-9);
                prop_assert!((emb[2 * i + 1] - ev).abs() <= 1e-9);
            }
        }

        #[test]
        fn prop_embed_psd_equivalence(m in cmat_strategy(4, 4), shift in -0.5f64..0.5) {
            // V*V is PSD; shifting the diagonal down makes it indefinite.
            let psd = HermitianMatrix::new(m.adjoint() * &m - CMat::identity(4, 4) * Complex64::new(shift.max(0.0) * 0.0, 0.0));
            let shifted = HermitianMatrix::new(psd.matrix() - CMat::identity(4, 4) * Complex64::new(shift, 0.0));
            let emb_min = real_symmetric_eigenvalues(&hermitian_embed(&shifted))[0];
            let residual = psd_residual(&shifted);
            prop_assert!((residual == 0.0) == (emb_min >= -1e-12),
                "residual {residual}, embedded min eig {emb_min}");
        }

        #[test]
        fn prop_square_right_equals_left(m in cmat_strategy(4, 4)) {
            let (smin, smax) = extreme_singular_values(&m).unwrap();
            prop_assume!(smin > 1e-2 * smax.max(1e-12));
            let l = left_inverse(&m, DEFAULT_RANK_TOL).unwrap();
            let r = right_inverse(&m, DEFAULT_RANK_TOL).unwrap();
            prop_assert!((l - r).norm() <= 1e-10 * smax.max(1.0));
        }
    }
}
