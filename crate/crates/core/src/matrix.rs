//! Dense real matrix utilities.
//!
//! General matrices and vectors are plain `nalgebra` dynamic types. Symmetric
//! matrices get their own newtype so that exact symmetry is an invariant of
//! the type rather than something every caller has to re-establish.
//!
//! Matrix norms are spectral (largest singular value) unless a function says
//! otherwise.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{LqError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default eigenvalue slack for PSD ordering checks.
pub const DEFAULT_PSD_TOL: f64 = 1e-10;

/// A real symmetric matrix. `S[(i, j)] == S[(j, i)]` holds bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(Mat);

impl SymMat {
    /// Wraps a square matrix that is symmetric up to `1e-9` relative
    /// asymmetry, mirroring the upper triangle onto the lower one.
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(LqError::dim(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = 1.0 + m.amax();
        let asym = (&m - m.transpose()).amax();
        if !(asym <= 1e-9 * scale) {
            return Err(LqError::dim(format!("matrix is not symmetric (max asymmetry {asym:e})")));
        }
        Ok(Self::mirror_upper(m))
    }

    /// `(m + mᵀ) / 2`. Floating-point addition commutes, so the result is
    /// exactly symmetric.
    pub fn symmetrize(m: &Mat) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        SymMat((m + m.transpose()) * 0.5)
    }

    fn mirror_upper(mut m: Mat) -> Self {
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(i, j)] = m[(j, i)];
            }
        }
        SymMat(m)
    }

    pub fn zeros(n: usize) -> Self {
        SymMat(Mat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMat(Mat::identity(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        SymMat(Mat::identity(n, n) * s)
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMat(Mat::from_diagonal(&Vector::from_column_slice(d)))
    }

    /// Block-diagonal matrix `diag(a, b)`.
    pub fn block_diag(a: &SymMat, b: &SymMat) -> Self {
        let (n, m) = (a.dim(), b.dim());
        let mut out = Mat::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(a.as_mat());
        out.view_mut((n, n), (m, m)).copy_from(b.as_mat());
        SymMat(out)
    }

    /// `a · aᵀ`, exactly symmetric.
    pub fn gram(a: &Mat) -> Self {
        Self::mirror_upper(a * a.transpose())
    }

    /// `mᵀ · self · m`, exactly symmetric.
    pub fn congruence(&self, m: &Mat) -> Self {
        Self::symmetrize(&(m.transpose() * &self.0 * m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMat(&self.0 * s)
    }

    pub fn add(&self, other: &SymMat) -> Self {
        SymMat(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMat) -> Self {
        SymMat(&self.0 - &other.0)
    }

    /// `xᵀ S x`.
    pub fn quad_form(&self, x: &Vector) -> f64 {
        x.dot(&(&self.0 * x))
    }

    /// In-place `S += coeff · x xᵀ`. Each off-diagonal product is computed
    /// once and mirrored.
    pub fn rank_one_update(&mut self, coeff: f64, x: &Vector) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for j in 0..n {
            let cj = coeff * x[j];
            for i in 0..=j {
                let v = self.0[(i, j)] + cj * x[i];
                self.0[(i, j)] = v;
                self.0[(j, i)] = v;
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn eigenvalues(&self) -> Vector {
        SymmetricEigen::new(self.0.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.eigenvalues().min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.eigenvalues().max()
    }

    /// A factor `W` with `W Wᵀ = S` for PSD `S`, via the eigendecomposition
    /// (negative round-off eigenvalues are clamped to zero).
    pub fn psd_factor(&self) -> Mat {
        let eig = SymmetricEigen::new(self.0.clone());
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * Mat::from_diagonal(&sqrt)
    }
}

impl std::ops::Index<(usize, usize)> for SymMat {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> Result<f64> {
    if m.is_empty() {
        return Err(LqError::dim("spectral norm of an empty matrix"));
    }
    Ok(m.clone().singular_values().max())
}

/// Largest eigenvalue modulus of a square (not necessarily symmetric) matrix.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    if m.is_empty() || !m.is_square() {
        return Err(LqError::dim(format!(
            "spectral radius needs a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn min_eigenvalue(s: &SymMat) -> f64 {
    s.min_eigenvalue()
}

/// `a ⪰ b` up to `tol`: true iff `λ_min(a − b) ≥ −tol`.
pub fn psd_order_geq(a: &SymMat, b: &SymMat, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(LqError::dim(format!(
            "PSD ordering of {}x{} against {}x{}",
            a.dim(),
            a.dim(),
            b.dim(),
            b.dim()
        )));
    }
    Ok(a.sub(b).min_eigenvalue() >= -tol)
}

fn cholesky(a: &SymMat, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(a.as_mat().clone()).ok_or_else(|| LqError::not_pd(what, a.min_eigenvalue()))
}

/// Solves `a · X = rhs` for positive definite `a` by Cholesky factorization.
pub fn spd_solve(a: &SymMat, rhs: &Mat) -> Result<Mat> {
    if a.dim() != rhs.nrows() {
        return Err(LqError::dim(format!(
            "spd_solve: {}x{} system with {} right-hand rows",
            a.dim(),
            a.dim(),
            rhs.nrows()
        )));
    }
    Ok(cholesky(a, "system matrix")?.solve(rhs))
}

pub fn spd_solve_vec(a: &SymMat, rhs: &Vector) -> Result<Vector> {
    if a.dim() != rhs.len() {
        return Err(LqError::dim(format!(
            "spd_solve: {}x{} system with length-{} right-hand side",
            a.dim(),
            a.dim(),
            rhs.len()
        )));
    }
    Ok(cholesky(a, "system matrix")?.solve(rhs))
}

/// Explicit inverse of a positive definite matrix.
pub fn spd_inverse(a: &SymMat) -> Result<SymMat> {
    let inv = cholesky(a, "matrix to invert")?.inverse();
    Ok(SymMat::symmetrize(&inv))
}

fn check_gain_dims(r: &SymMat, g: &Mat, pi: &SymMat) -> Result<()> {
    if g.nrows() != pi.dim() || g.ncols() != r.dim() {
        return Err(LqError::dim(format!(
            "woodbury: G is {}x{}, Π is {}x{}, R is {}x{}",
            g.nrows(),
            g.ncols(),
            pi.dim(),
            pi.dim(),
            r.dim(),
            r.dim()
        )));
    }
    Ok(())
}

/// `(R + Gᵀ Π G)⁻¹ Gᵀ Π`, computed without forming an inverse.
pub fn woodbury_gain(r: &SymMat, g: &Mat, pi: &SymMat) -> Result<Mat> {
    check_gain_dims(r, g, pi)?;
    let s = r.add(&pi.congruence(g));
    let rhs = g.transpose() * pi.as_mat();
    spd_solve(&s, &rhs).map_err(|e| relabel(e, "R + GᵀΠG"))
}

/// The equivalent form `R⁻¹ Gᵀ (G R⁻¹ Gᵀ + Π⁻¹)⁻¹`. Needs `Π` invertible.
pub fn woodbury_gain_alt(r: &SymMat, g: &Mat, pi: &SymMat) -> Result<Mat> {
    check_gain_dims(r, g, pi)?;
    let r_inv_gt = spd_solve(r, &g.transpose()).map_err(|e| relabel(e, "R"))?;
    let pi_inv = spd_inverse(pi).map_err(|e| relabel(e, "Π"))?;
    let inner = SymMat::symmetrize(&(g * &r_inv_gt)).add(&pi_inv);
    // X = R⁻¹Gᵀ · inner⁻¹  ⇔  Xᵀ = inner⁻¹ · (R⁻¹Gᵀ)ᵀ
    let xt = spd_solve(&inner, &r_inv_gt.transpose()).map_err(|e| relabel(e, "GR⁻¹Gᵀ + Π⁻¹"))?;
    Ok(xt.transpose())
}

/// Spectral norm of the difference between the two Woodbury forms.
pub fn woodbury_residual(r: &SymMat, g: &Mat, pi: &SymMat) -> Result<f64> {
    let lhs = woodbury_gain(r, g, pi)?;
    let rhs = woodbury_gain_alt(r, g, pi)?;
    Ok(spectral_norm(&(lhs - rhs)).unwrap_or(0.0))
}

/// Spectral radius of `A⁻¹ B` for positive definite `A` and symmetric `B`.
///
/// `A⁻¹B` is similar to the symmetric `C⁻¹ B C⁻ᵀ` (with `A = C Cᵀ`), so its
/// eigenvalues are real and come from a symmetric eigensolve.
pub fn ordering_contraction(a: &SymMat, b: &SymMat) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(LqError::dim("ordering_contraction: A and B differ in size"));
    }
    let chol = cholesky(a, "A")?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(b.as_mat())
        .ok_or_else(|| LqError::not_pd("A", 0.0))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| LqError::not_pd("A", 0.0))?;
    let sym = SymMat::symmetrize(&c);
    Ok(sym.eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max))
}

fn relabel(e: LqError, what: &str) -> LqError {
    match e {
        LqError::NotPositiveDefinite { min_eigenvalue, .. } => LqError::not_pd(what, min_eigenvalue),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sym(rows: &[&[f64]]) -> SymMat {
        let n = rows.len();
        SymMat::new(Mat::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn spectral_norm_examples() {
        assert_abs_diff_eq!(spectral_norm(&Mat::identity(3, 3)).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(spectral_norm(&Mat::zeros(2, 2)).unwrap(), 0.0);
        let d = Mat::from_diagonal(&Vector::from_vec(vec![0.5, -2.0]));
        assert_abs_diff_eq!(spectral_norm(&d).unwrap(), 2.0, epsilon = 1e-12);
        assert!(matches!(spectral_norm(&Mat::zeros(0, 0)), Err(LqError::Dimension(_))));
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert_abs_diff_eq!(min_eigenvalue(&SymMat::identity(2)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(min_eigenvalue(&SymMat::from_diagonal(&[3.0, -1.0])), -1.0, epsilon = 1e-12);
        // eigenvalues of [[a,b],[b,a]] are a ± b
        assert_abs_diff_eq!(min_eigenvalue(&sym(&[&[2.0, 1.0], &[1.0, 2.0]])), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_order_examples() {
        let i = SymMat::identity(2);
        let two = SymMat::scaled_identity(2, 2.0);
        assert!(psd_order_geq(&two, &i, 0.0).unwrap());
        assert!(!psd_order_geq(&i, &two, 0.0).unwrap());
        assert!(psd_order_geq(&i, &i, 0.0).unwrap());
        assert!(psd_order_geq(&i, &SymMat::identity(3), 0.0).is_err());
    }

    #[test]
    fn spd_solve_examples() {
        let rhs = Mat::from_row_slice(2, 3, &[1.0, -2.0, 3.0, 0.5, 7.0, -1.0]);
        assert_eq!(spd_solve(&SymMat::identity(2), &rhs).unwrap(), rhs);

        let x = spd_solve(&SymMat::scaled_identity(2, 2.0), &Mat::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(x, Mat::identity(2, 2) * 0.5, epsilon = 1e-15);

        let x = spd_solve_vec(&SymMat::from_diagonal(&[4.0, 1.0]), &Vector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(x, Vector::from_vec(vec![0.25, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn spd_solve_rejects_indefinite_with_eigenvalue() {
        let a = SymMat::from_diagonal(&[1.0, -3.0]);
        match spd_solve(&a, &Mat::identity(2, 2)) {
            Err(LqError::NotPositiveDefinite { min_eigenvalue, .. }) => {
                assert_abs_diff_eq!(min_eigenvalue, -3.0, epsilon = 1e-12)
            }
            other => panic!("expected definiteness error, got {other:?}"),
        }
    }

    #[test]
    fn woodbury_scalar_cases() {
        let one = SymMat::identity(1);
        let g = Mat::identity(1, 1);
        assert_abs_diff_eq!(woodbury_gain(&one, &g, &one).unwrap()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(woodbury_gain_alt(&one, &g, &one).unwrap()[(0, 0)], 0.5, epsilon = 1e-15);

        let tiny = SymMat::scaled_identity(1, 1e-12);
        assert_abs_diff_eq!(woodbury_gain(&one, &g, &tiny).unwrap()[(0, 0)], 1e-12, epsilon = 1e-20);
        assert_abs_diff_eq!(woodbury_gain_alt(&one, &g, &tiny).unwrap()[(0, 0)], 1e-12, epsilon = 1e-20);
    }

    #[test]
    fn woodbury_rejects_singular_pi_in_alt_form() {
        let one = SymMat::identity(1);
        let g = Mat::identity(1, 1);
        assert!(matches!(
            woodbury_gain_alt(&one, &g, &SymMat::zeros(1)),
            Err(LqError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rank_one_update_keeps_exact_symmetry() {
        let mut s = sym(&[&[1.0, 0.3, 0.1], &[0.3, 2.0, -0.4], &[0.1, -0.4, 5.0]]);
        let x = Vector::from_vec(vec![0.123456789, -3.3333, 7.77e-3]);
        for _ in 0..50 {
            s.rank_one_update(0.0137, &x);
        }
        assert_eq!(s.as_mat(), &s.as_mat().transpose());
    }

    #[test]
    fn new_rejects_asymmetric_and_mirrors_near_symmetric() {
        assert!(SymMat::new(Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
        let s = SymMat::new(Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-14, 1.0])).unwrap();
        assert_eq!(s[(1, 0)], s[(0, 1)]);
    }

    #[test]
    fn ordering_contraction_simple() {
        let a = SymMat::scaled_identity(2, 2.0);
        let b = SymMat::identity(2);
        assert_abs_diff_eq!(ordering_contraction(&a, &b).unwrap(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(ordering_contraction(&b, &a).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn psd_factor_reproduces_matrix() {
        let s = sym(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let w = s.psd_factor();
        assert_abs_diff_eq!(&w * w.transpose(), s.as_mat().clone(), epsilon = 1e-14);
        assert_eq!(SymMat::zeros(2).psd_factor(), Mat::zeros(2, 2));
    }

    #[test]
    fn spectral_radius_of_nilpotent_is_zero() {
        let n = Mat::from_row_slice(2, 2, &[0.0, 5.0, 0.0, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&n).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spectral_norm(&n).unwrap(), 5.0, epsilon = 1e-12);
    }
}
