//! Complex Hermitian matrices viewed as a real inner-product space.
//!
//! Everything downstream (constraints, solvers, heuristics) works on
//! [`HermitianMatrix`] values. The real coordinate map [`svec`] and its inverse
//! [`smat`] identify `dim x dim` Hermitian matrices with `R^(dim^2)` isometrically,
//! so the Frobenius inner product `Re tr(H* G)` becomes the Euclidean one.
//!
//! Coordinate order used by [`svec`]:
//!
//! 1. the `dim` diagonal entries,
//! 2. `sqrt(2) * Re H[i][j]` for `i < j`, row-major,
//! 3. `sqrt(2) * Im H[i][j]` for `i < j`, row-major.

use std::ops::{Add, Mul, Neg, Sub};

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{c64, Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated when importing a matrix that should be Hermitian.
pub const IMPORT_SYMMETRY_TOL: f64 = 1e-12;

/// A square complex matrix that is exactly equal to its conjugate transpose.
#[derive(Clone, Debug)]
pub struct HermitianMatrix {
    mat: Mat<c64>,
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { mat: Mat::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        Self::from_real_diagonal(&vec![scale; dim])
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut mat = Mat::zeros(dim, dim);
        for (i, &d) in diag.iter().enumerate() {
            mat[(i, i)] = c64::new(d, 0.0);
        }
        Self { mat }
    }

    /// Builds a matrix from its upper triangle; the lower triangle is mirrored
    /// and the imaginary part of the diagonal is dropped.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> c64) -> Self {
        let mut mat = Mat::zeros(dim, dim);
        for i in 0..dim {
            mat[(i, i)] = c64::new(f(i, i).re, 0.0);
            for j in i + 1..dim {
                let z = f(i, j);
                mat[(i, j)] = z;
                mat[(j, i)] = z.conj();
            }
        }
        Self { mat }
    }

    /// Imports a general complex matrix. Asymmetry up to
    /// [`IMPORT_SYMMETRY_TOL`]`* |M|_F` is removed by averaging with the
    /// adjoint; anything larger is rejected.
    pub fn try_from_mat(mat: MatRef<'_, c64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::NotSquare { rows: mat.nrows(), cols: mat.ncols() });
        }
        let dim = mat.nrows();
        let mut asym = 0.0;
        let mut norm = 0.0;
        for j in 0..dim {
            for i in 0..dim {
                let z = mat[(i, j)];
                norm += z.norm_sqr();
                asym += (z - mat[(j, i)].conj()).norm_sqr();
            }
        }
        let (asym, norm) = (asym.sqrt(), norm.sqrt());
        let tolerance = IMPORT_SYMMETRY_TOL * norm;
        if asym > tolerance {
            return Err(Error::NotHermitian { asymmetry: asym, tolerance });
        }
        Ok(Self::symmetrized(mat))
    }

    /// `(M + M*) / 2`, which is exactly Hermitian in floating point.
    pub(crate) fn symmetrized(mat: MatRef<'_, c64>) -> Self {
        let dim = mat.nrows();
        Self::from_upper_fn(dim, |i, j| {
            if i == j {
                c64::new(mat[(i, i)].re, 0.0)
            } else {
                (mat[(i, j)] + mat[(j, i)].conj()) * 0.5
            }
        })
    }

    /// Copies the lower triangle onto the upper one.
    fn from_lower_triangle(mut mat: Mat<c64>) -> Self {
        let dim = mat.nrows();
        for j in 0..dim {
            mat[(j, j)].im = 0.0;
            for i in j + 1..dim {
                mat[(j, i)] = mat[(i, j)].conj();
            }
        }
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, c64> {
        self.mat.as_ref()
    }

    pub fn into_mat(self) -> Mat<c64> {
        self.mat
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.mat[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// Frobenius norm (with the square root).
    pub fn frobenius_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Real inner product `Re tr(self* other)`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "inner product of mismatched dimensions");
        let mut acc = 0.0;
        for j in 0..self.dim() {
            for (a, b) in self.mat.col(j).iter().zip(other.mat.col(j).iter()) {
                acc += a.re * b.re + a.im * b.im;
            }
        }
        acc
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self - other).frobenius_norm()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "add_scaled of mismatched dimensions");
        for j in 0..self.dim() {
            for (a, b) in self.mat.col_mut(j).iter_mut().zip(other.mat.col(j).iter()) {
                *a += *b * alpha;
            }
        }
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eigenvalues(self)?.last().copied().unwrap_or(0.0))
    }

    /// `V* self V` for a `dim x r` matrix `V`.
    pub fn compress(&self, basis: MatRef<'_, c64>) -> Self {
        let inner = basis.adjoint() * &self.mat;
        Self::symmetrized((&inner * basis).as_ref())
    }

    /// `V self V*` for a `dim x r` matrix `V` with `r = self.dim()`.
    pub fn lift(&self, basis: MatRef<'_, c64>) -> Self {
        let left = basis * &self.mat;
        Self::symmetrized((&left * basis.adjoint()).as_ref())
    }
}

impl PartialEq for HermitianMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|j| (0..self.dim()).all(|i| self.mat[(i, j)] == other.mat[(i, j)]))
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: Self) -> HermitianMatrix {
        HermitianMatrix { mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: Self) -> HermitianMatrix {
        HermitianMatrix { mat: &self.mat - &rhs.mat }
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        HermitianMatrix { mat: -&self.mat }
    }
}

impl Mul<&HermitianMatrix> for f64 {
    type Output = HermitianMatrix;
    fn mul(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        let mut out = rhs.clone();
        for j in 0..out.dim() {
            for z in out.mat.col_mut(j).iter_mut() {
                *z *= self;
            }
        }
        out
    }
}

/// Index bookkeeping for the [`svec`] coordinate order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SvecLayout {
    dim: usize,
}

impl SvecLayout {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn dim(self) -> usize {
        self.dim
    }

    /// Number of real coordinates, `dim^2`.
    pub fn len(self) -> usize {
        self.dim * self.dim
    }

    pub fn is_empty(self) -> bool {
        self.dim == 0
    }

    fn strict_upper_count(self) -> usize {
        self.dim * (self.dim - 1) / 2
    }

    fn upper_offset(self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.dim);
        i * self.dim - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn diag(self, i: usize) -> usize {
        i
    }

    /// Coordinate of `sqrt(2) Re H[i][j]`, `i < j`.
    pub fn re(self, i: usize, j: usize) -> usize {
        self.dim + self.upper_offset(i, j)
    }

    /// Coordinate of `sqrt(2) Im H[i][j]`, `i < j`.
    pub fn im(self, i: usize, j: usize) -> usize {
        self.dim + self.strict_upper_count() + self.upper_offset(i, j)
    }

    /// Strict upper-triangle positions in row-major order.
    pub fn upper_pairs(self) -> impl Iterator<Item = (usize, usize)> {
        let dim = self.dim;
        (0..dim).flat_map(move |i| (i + 1..dim).map(move |j| (i, j)))
    }

    /// Inverse of the coordinate maps: which matrix entry a coordinate refers to.
    pub fn coordinate(self, idx: usize) -> Coordinate {
        let upper = self.strict_upper_count();
        if idx < self.dim {
            return Coordinate::Diag(idx);
        }
        let (offset, imaginary) = if idx < self.dim + upper {
            (idx - self.dim, false)
        } else {
            (idx - self.dim - upper, true)
        };
        // Walk the rows; rows are short enough that this is never hot.
        let mut i = 0;
        let mut start = 0;
        loop {
            let row_len = self.dim - i - 1;
            if offset < start + row_len {
                let j = i + 1 + offset - start;
                return if imaginary { Coordinate::Im(i, j) } else { Coordinate::Re(i, j) };
            }
            start += row_len;
            i += 1;
        }
    }
}

/// The matrix entry a [`svec`] coordinate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coordinate {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

/// Real isometric coordinates of a Hermitian matrix.
pub fn svec(h: &HermitianMatrix) -> Vec<f64> {
    let layout = SvecLayout::new(h.dim());
    let mut out = vec![0.0; layout.len()];
    svec_into(h, &mut out);
    out
}

pub(crate) fn svec_into(h: &HermitianMatrix, out: &mut [f64]) {
    let dim = h.dim();
    let layout = SvecLayout::new(dim);
    debug_assert_eq!(out.len(), layout.len());
    let upper = layout.strict_upper_count();
    let (diag, rest) = out.split_at_mut(dim);
    let (re, im) = rest.split_at_mut(upper);
    for (i, d) in diag.iter_mut().enumerate() {
        *d = h.mat[(i, i)].re;
    }
    let mut k = 0;
    for i in 0..dim {
        for j in i + 1..dim {
            let z = h.mat[(i, j)];
            re[k] = std::f64::consts::SQRT_2 * z.re;
            im[k] = std::f64::consts::SQRT_2 * z.im;
            k += 1;
        }
    }
}

/// Inverse (and adjoint) of [`svec`]; the dimension is inferred from the length.
pub fn smat(v: &[f64]) -> Result<HermitianMatrix> {
    let dim = (v.len() as f64).sqrt().round() as usize;
    if dim * dim != v.len() {
        return Err(Error::NotPerfectSquare(v.len()));
    }
    Ok(smat_with_dim(v, dim))
}

pub(crate) fn smat_with_dim(v: &[f64], dim: usize) -> HermitianMatrix {
    let layout = SvecLayout::new(dim);
    debug_assert_eq!(v.len(), layout.len());
    let upper = layout.strict_upper_count();
    let mut mat = Mat::zeros(dim, dim);
    for i in 0..dim {
        mat[(i, i)] = c64::new(v[i], 0.0);
    }
    let mut k = 0;
    for i in 0..dim {
        for j in i + 1..dim {
            let z = c64::new(v[dim + k], v[dim + upper + k]) * std::f64::consts::FRAC_1_SQRT_2;
            mat[(i, j)] = z;
            mat[(j, i)] = z.conj();
            k += 1;
        }
    }
    HermitianMatrix { mat }
}

/// Eigenvalues sorted descending, with matching unitary eigenvector columns.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<c64>,
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> HermitianMatrix {
        let vecs = self.eigenvectors.as_ref();
        let (pos, neg): (Vec<usize>, Vec<usize>) =
            (0..self.eigenvalues.len()).partition(|&j| self.eigenvalues[j] >= 0.0);
        let mut out = weighted_outer_sum(vecs, &pos, &self.eigenvalues);
        if !neg.is_empty() {
            out = &out + &weighted_outer_sum_signed(vecs, &neg, &self.eigenvalues, -1.0);
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Columns of the eigenvectors whose eigenvalue exceeds `threshold`.
    pub fn dominant_basis(&self, threshold: f64) -> Mat<c64> {
        let keep: Vec<usize> = (0..self.eigenvalues.len())
            .filter(|&j| self.eigenvalues[j] > threshold)
            .collect();
        Mat::from_fn(self.eigenvectors.nrows(), keep.len(), |i, c| self.eigenvectors[(i, keep[c])])
    }
}

pub fn eigh(h: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let dim = h.dim();
    if dim == 0 {
        return Ok(SpectralDecomposition { eigenvalues: vec![], eigenvectors: Mat::zeros(0, 0) });
    }
    let evd = h
        .mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    // faer sorts ascending.
    let s = evd.S().column_vector();
    let u = evd.U();
    let eigenvalues: Vec<f64> = (0..dim).rev().map(|j| s[j].re).collect();
    let eigenvectors = Mat::from_fn(dim, dim, |i, j| u[(i, dim - 1 - j)]);
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// Eigenvalues only, sorted descending.
pub fn eigenvalues(h: &HermitianMatrix) -> Result<Vec<f64>> {
    if h.dim() == 0 {
        return Ok(vec![]);
    }
    let mut values = h
        .mat
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    values.reverse();
    Ok(values)
}

/// `sum_{j in keep} w_j u_j u_j*` for nonnegative weights, built as `X X*`
/// with only the lower triangle computed.
fn weighted_outer_sum(vectors: MatRef<'_, c64>, keep: &[usize], weights: &[f64]) -> HermitianMatrix {
    weighted_outer_sum_signed(vectors, keep, weights, 1.0)
}

/// `sign * sum_{j in keep} |w_j| u_j u_j*`.
fn weighted_outer_sum_signed(
    vectors: MatRef<'_, c64>,
    keep: &[usize],
    weights: &[f64],
    sign: f64,
) -> HermitianMatrix {
    let dim = vectors.nrows();
    let mut out = Mat::<c64>::zeros(dim, dim);
    if !keep.is_empty() {
        let x = Mat::from_fn(dim, keep.len(), |i, c| {
            vectors[(i, keep[c])] * weights[keep[c]].abs().sqrt()
        });
        triangular::matmul(
            out.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Replace,
            x.as_ref(),
            BlockStructure::Rectangular,
            x.adjoint(),
            BlockStructure::Rectangular,
            c64::new(sign, 0.0),
            Par::Seq,
        );
    }
    HermitianMatrix::from_lower_triangle(out)
}

/// The spectral truncation `sum_{j in keep} lambda_j u_j u_j*`, evaluated either
/// directly or as `H - sum_{j not in keep} lambda_j u_j u_j*`, whichever
/// touches fewer eigenpairs.
fn spectral_truncation(h: &HermitianMatrix, spectrum: &SpectralDecomposition, kept: usize) -> HermitianMatrix {
    let dim = h.dim();
    let vecs = spectrum.eigenvectors.as_ref();
    let vals = &spectrum.eigenvalues;
    if kept == dim {
        return h.clone();
    }
    if kept <= dim - kept {
        let keep: Vec<usize> = (0..kept).collect();
        weighted_outer_sum(vecs, &keep, vals)
    } else {
        let drop: Vec<usize> = (kept..dim).collect();
        // All dropped eigenvalues share one sign when kept == #positive; for the
        // rank-bounded case some dropped values may be positive, so split.
        let (pos, neg): (Vec<usize>, Vec<usize>) = drop.into_iter().partition(|&j| vals[j] > 0.0);
        let mut out = h.clone();
        if !neg.is_empty() {
            // subtracting negative terms adds |lambda| u u*
            let correction = weighted_outer_sum_signed(vecs, &neg, vals, 1.0);
            out = &out + &correction;
        }
        if !pos.is_empty() {
            let correction = weighted_outer_sum_signed(vecs, &pos, vals, 1.0);
            out = &out - &correction;
        }
        out
    }
}

/// Result of a (possibly rank-bounded) projection onto the PSD cone, with the
/// spectrum of the input retained for diagnostics.
#[derive(Clone, Debug)]
pub struct PsdProjection {
    pub matrix: HermitianMatrix,
    /// Eigenvalues of the input, descending.
    pub input_eigenvalues: Vec<f64>,
    /// Number of eigenpairs kept.
    pub kept: usize,
}

/// Nearest PSD matrix, optionally restricted to rank at most `rank_bound`.
pub fn psd_projection(h: &HermitianMatrix, rank_bound: Option<usize>) -> Result<PsdProjection> {
    let dim = h.dim();
    let bound = rank_bound.unwrap_or(dim);
    if bound == 0 || bound > dim {
        return Err(Error::RankOutOfRange { rank: bound, dim });
    }
    let spectrum = eigh(h)?;
    let positive = spectrum.eigenvalues.iter().take_while(|&&l| l > 0.0).count();
    let kept = positive.min(bound);
    let matrix = spectral_truncation(h, &spectrum, kept);
    Ok(PsdProjection { matrix, input_eigenvalues: spectrum.eigenvalues, kept })
}

/// `U diag(max(lambda, 0)) U*`.
pub fn project_psd(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(psd_projection(h, None)?.matrix)
}

/// Keeps the `rank` largest eigenvalues, and among those only the positive ones.
pub fn project_psd_rank(h: &HermitianMatrix, rank: usize) -> Result<HermitianMatrix> {
    Ok(psd_projection(h, Some(rank))?.matrix)
}

/// `2 proj_x - x`.
pub fn reflect_through(x: &HermitianMatrix, proj_x: &HermitianMatrix) -> Result<HermitianMatrix> {
    if x.dim() != proj_x.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: proj_x.dim() });
    }
    let mut out = 2.0 * proj_x;
    out.add_scaled(-1.0, x);
    Ok(out)
}

/// Spacing of doubles at magnitude `t`.
pub fn ulp(t: f64) -> f64 {
    let t = t.abs();
    t.next_up() - t
}

/// Singular values above this are counted by [`numerical_rank`].
pub fn rank_threshold(dim: usize, sigma_max: f64) -> f64 {
    dim as f64 * ulp(sigma_max)
}

/// Rank from a list of eigenvalues of a `dim x dim` Hermitian matrix.
pub fn numerical_rank_of_spectrum(eigenvalues: &[f64]) -> usize {
    let sigma_max = eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if sigma_max == 0.0 {
        return 0;
    }
    let tol = rank_threshold(eigenvalues.len(), sigma_max);
    eigenvalues.iter().filter(|l| l.abs() > tol).count()
}

/// Count of absolute eigenvalues above `dim * ulp(sigma_max)`.
pub fn numerical_rank(h: &HermitianMatrix) -> Result<usize> {
    Ok(numerical_rank_of_spectrum(&eigenvalues(h)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance_io::{random_hermitian, random_psd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(d: &[f64]) -> HermitianMatrix {
        HermitianMatrix::from_real_diagonal(d)
    }

    fn assert_close(a: &HermitianMatrix, b: &HermitianMatrix, tol: f64) {
        let d = a.distance(b);
        assert!(d <= tol, "distance {d:e} > {tol:e}");
    }

    #[test]
    fn svec_of_identity() {
        assert_eq!(svec(&HermitianMatrix::identity(2)), vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn svec_of_imaginary_offdiagonal() {
        let h = HermitianMatrix::from_upper_fn(2, |i, j| if i == j { c64::new(0.0, 0.0) } else { c64::new(0.0, 1.0) });
        let v = svec(&h);
        assert_eq!(&v[..3], &[0.0, 0.0, 0.0]);
        assert!((v[3] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn svec_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(3, &mut rng);
        let direct: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| h.get(i, j).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let v = svec(&h);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - direct).abs() <= 1e-14 * direct.max(1.0));
    }

    #[test]
    fn smat_examples() {
        assert_eq!(smat(&[1.0, 1.0, 0.0, 0.0]).unwrap(), HermitianMatrix::identity(2));
        assert_eq!(smat(&[0.0; 9]).unwrap(), HermitianMatrix::zeros(3));
        assert!(matches!(smat(&[1.0, 2.0, 3.0]), Err(Error::NotPerfectSquare(3))));
    }

    #[test]
    fn smat_svec_round_trip() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let d = rng.random_range(1..6);
            let v: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let back = svec(&smat(&v).unwrap());
            for (a, b) in v.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn layout_coordinates_invert() {
        let layout = SvecLayout::new(5);
        for i in 0..5 {
            assert_eq!(layout.coordinate(layout.diag(i)), Coordinate::Diag(i));
        }
        for (i, j) in layout.upper_pairs() {
            assert_eq!(layout.coordinate(layout.re(i, j)), Coordinate::Re(i, j));
            assert_eq!(layout.coordinate(layout.im(i, j)), Coordinate::Im(i, j));
        }
    }

    #[test]
    fn eigh_of_diagonal() {
        let d = eigh(&diag(&[3.0, -1.0])).unwrap();
        assert_eq!(d.eigenvalues, vec![3.0, -1.0]);
        assert!((d.eigenvectors[(0, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((d.eigenvectors[(1, 1)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigh_of_swap() {
        let x = HermitianMatrix::from_upper_fn(2, |i, j| c64::new(if i == j { 0.0 } else { 1.0 }, 0.0));
        let d = eigh(&x).unwrap();
        assert!((d.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((d.eigenvalues[1] + 1.0).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // (1,1)/sqrt2 up to phase
        let v0 = d.eigenvectors.col(0);
        let overlap = (v0[0] * s + v0[1] * s).norm();
        assert!((overlap - 1.0).abs() < 1e-14);
        let v1 = d.eigenvectors.col(1);
        let overlap = (v1[0] * s - v1[1] * s).norm();
        assert!((overlap - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_reconstructs_and_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [1, 2, 7, 20] {
            let h = random_hermitian(dim, &mut rng);
            let d = eigh(&h).unwrap();
            assert!(d.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            assert_close(&d.reconstruct(), &h, 1e-12 * h.frobenius_norm());
            let gram = d.eigenvectors.adjoint() * &d.eigenvectors;
            let defect = (&gram - Mat::<c64>::identity(dim, dim)).norm_l2();
            assert!(defect <= 1e-12, "unitarity defect {defect:e}");
        }
    }

    #[test]
    fn project_psd_examples() {
        assert_eq!(project_psd(&diag(&[1.0, -1.0])).unwrap(), diag(&[1.0, 0.0]));
        let x = HermitianMatrix::from_upper_fn(2, |i, j| c64::new(if i == j { 0.0 } else { 1.0 }, 0.0));
        let half = HermitianMatrix::from_upper_fn(2, |_, _| c64::new(0.5, 0.0));
        assert_close(&project_psd(&x).unwrap(), &half, 1e-15);
    }

    #[test]
    fn project_psd_fixes_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for dim in [3, 10] {
            let p = random_psd(dim, dim, &mut rng);
            assert_close(&project_psd(&p).unwrap(), &p, 1e-13 * p.frobenius_norm());
            let low = random_psd(dim, 2, &mut rng);
            assert_close(&project_psd(&low).unwrap(), &low, 1e-13 * low.frobenius_norm());
        }
    }

    #[test]
    fn project_psd_rank_examples() {
        assert_close(&project_psd_rank(&diag(&[3.0, 2.0, 1.0]), 2).unwrap(), &diag(&[3.0, 2.0, 0.0]), 1e-15);
        assert_close(&project_psd_rank(&diag(&[1.0, -5.0]), 2).unwrap(), &diag(&[1.0, 0.0]), 1e-15);
        assert!(matches!(project_psd_rank(&diag(&[1.0]), 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(project_psd_rank(&diag(&[1.0]), 2), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn project_psd_rank_degenerate_matches_grid_search() {
        // Brute force over diagonal PSD candidates with at most two nonzeros.
        let h = diag(&[2.0, 1.0, 1.0]);
        let got = project_psd_rank(&h, 2).unwrap();
        let dist = h.distance(&got);
        let grid: Vec<f64> = (0..=60).map(|i| i as f64 * 0.05).collect();
        let mut best = f64::INFINITY;
        for zero in 0..3 {
            for &a in &grid {
                for &b in &grid {
                    let mut d = [0.0; 3];
                    let free: Vec<usize> = (0..3).filter(|&i| i != zero).collect();
                    d[free[0]] = a;
                    d[free[1]] = b;
                    best = best.min(h.distance(&diag(&d)));
                }
            }
        }
        assert!((dist - best).abs() < 1e-12, "{dist} vs {best}");
        assert_eq!(numerical_rank(&got).unwrap(), 2);
    }

    #[test]
    fn full_rank_bound_is_plain_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = random_hermitian(9, &mut rng);
        assert_eq!(project_psd_rank(&h, 9).unwrap(), project_psd(&h).unwrap());
    }

    #[test]
    fn reflection_examples() {
        let x = diag(&[1.0, -1.0]);
        assert_eq!(reflect_through(&x, &x).unwrap(), x);
        assert_eq!(reflect_through(&x, &diag(&[1.0, 0.0])).unwrap(), diag(&[1.0, 1.0]));
        assert!(reflect_through(&x, &diag(&[1.0])).is_err());
    }

    #[test]
    fn numerical_rank_examples() {
        assert_eq!(numerical_rank(&HermitianMatrix::identity(5)).unwrap(), 5);
        assert_eq!(numerical_rank(&HermitianMatrix::zeros(4)).unwrap(), 0);
        assert_eq!(numerical_rank(&diag(&[1.0, 1e-20])).unwrap(), 1);
        assert!((rank_threshold(2, 1.0) - 2.0 * f64::EPSILON).abs() < 1e-30);
    }
}
