//! Quantum channel data model: density matrices, Choi matrices and Kraus sets.
//!
//! A channel `T` from `n x n` to `m x m` matrices is stored through its Choi
//! matrix `P`, the `nm x nm` block matrix whose `(i, j)` block is the `m x m`
//! matrix `T(E_ij)`. Entry `(s, t)` of block `(i, j)` sits at row `i*m + s`,
//! column `j*m + t`.
//!
//! Kraus operators are `m x n` matrices acting as `T(X) = sum_j F_j X F_j*`.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{eigh, rank_threshold, HermitianMatrix};

/// Tolerance on the trace and on negative eigenvalues of a density matrix.
pub const DENSITY_TOL: f64 = 1e-12;

/// PSD tolerance (relative to `|P|_F`) accepted by [`kraus_from_choi`].
pub const KRAUS_PSD_TOL: f64 = 1e-10;

/// A Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(HermitianMatrix);

impl DensityMatrix {
    pub fn new(h: HermitianMatrix) -> Result<Self> {
        let trace = h.trace();
        if (trace - 1.0).abs() > DENSITY_TOL {
            return Err(Error::NotDensity(format!("trace {trace:.17} differs from 1")));
        }
        let min = h.min_eigenvalue()?;
        if min < -DENSITY_TOL * h.frobenius_norm() {
            return Err(Error::NotDensity(format!("minimum eigenvalue {min:.3e} is negative")));
        }
        Ok(Self(h))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.0
    }

    pub fn as_mat(&self) -> MatRef<'_, c64> {
        self.0.as_mat()
    }

    pub fn into_hermitian(self) -> HermitianMatrix {
        self.0
    }
}

/// Choi matrix of a map from `n x n` to `m x m` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    n: usize,
    m: usize,
    p: HermitianMatrix,
}

impl ChoiMatrix {
    pub fn new(n: usize, m: usize, p: HermitianMatrix) -> Result<Self> {
        if p.dim() != n * m {
            return Err(Error::DimensionMismatch { expected: n * m, found: p.dim() });
        }
        Ok(Self { n, m, p })
    }

    /// Choi matrix of the identity channel on `n x n` matrices.
    pub fn identity_channel(n: usize) -> Self {
        let f = Mat::<c64>::identity(n, n);
        choi_from_kraus(&KrausSet::new(vec![f]).expect("identity is a valid Kraus operator"), None)
            .expect("unit weight")
    }

    /// Choi matrix `I_{nm} / m` of the completely depolarizing channel.
    pub fn completely_depolarizing(n: usize, m: usize) -> Self {
        Self { n, m, p: HermitianMatrix::scaled_identity(n * m, 1.0 / m as f64) }
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.p
    }

    pub fn into_matrix(self) -> HermitianMatrix {
        self.p
    }

    /// The `m x m` block `P_ij = T(E_ij)`.
    pub fn block(&self, i: usize, j: usize) -> Mat<c64> {
        let m = self.m;
        let p = self.p.as_mat();
        Mat::from_fn(m, m, |s, t| p[(i * m + s, j * m + t)])
    }
}

/// Kraus operators `F_1, ..., F_r`, each `m x n`.
#[derive(Clone, Debug)]
pub struct KrausSet {
    ops: Vec<Mat<c64>>,
}

impl KrausSet {
    pub fn new(ops: Vec<Mat<c64>>) -> Result<Self> {
        if let Some(first) = ops.first() {
            let shape = (first.nrows(), first.ncols());
            for op in &ops {
                if (op.nrows(), op.ncols()) != shape {
                    return Err(Error::DimensionMismatch {
                        expected: shape.0 * shape.1,
                        found: op.nrows() * op.ncols(),
                    });
                }
            }
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[Mat<c64>] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// `(m, n)` shape shared by all operators.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.ops.first().map(|f| (f.nrows(), f.ncols()))
    }

    /// `|sum_j F_j* F_j - I_n|_F`; zero for a trace-preserving set.
    pub fn completeness_defect(&self) -> f64 {
        let Some((_, n)) = self.shape() else { return 0.0 };
        let mut sum = Mat::<c64>::zeros(n, n);
        for f in &self.ops {
            sum += f.adjoint() * f;
        }
        (&sum - Mat::<c64>::identity(n, n)).norm_l2()
    }

    /// `sum_j F_j X F_j*`.
    pub fn apply(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let m = self.shape().map_or(0, |s| s.0);
        let mut out = Mat::<c64>::zeros(m, m);
        for f in &self.ops {
            out += f * x * f.adjoint();
        }
        out
    }
}

/// `T(X) = sum_ij X_ij P_ij`.
pub fn apply_channel(choi: &ChoiMatrix, x: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let (n, m) = (choi.n, choi.m);
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: x.nrows().max(x.ncols()) });
    }
    let p = choi.p.as_mat();
    let mut out = Mat::<c64>::zeros(m, m);
    for j in 0..n {
        for i in 0..n {
            let w = x[(i, j)];
            if w == c64::new(0.0, 0.0) {
                continue;
            }
            for t in 0..m {
                for s in 0..m {
                    out[(s, t)] += w * p[(i * m + s, j * m + t)];
                }
            }
        }
    }
    Ok(out)
}

/// `sum_i d_i v_i v_i*`, where `v_i` stacks the columns of `F_i` so that block
/// `(p, q)` of `v_i v_i*` equals `F_i E_pq F_i*`. Weights default to 1.
pub fn choi_from_kraus(kraus: &KrausSet, weights: Option<&[f64]>) -> Result<ChoiMatrix> {
    let Some((m, n)) = kraus.shape() else {
        return Err(Error::InvalidSpec("empty Kraus set".into()));
    };
    if let Some(w) = weights {
        if w.len() != kraus.len() {
            return Err(Error::DimensionMismatch { expected: kraus.len(), found: w.len() });
        }
        if let Some((index, &weight)) = w.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
            return Err(Error::InvalidWeight { index, weight });
        }
    }
    let dim = n * m;
    // Columns are sqrt(d_i) vec(F_i); the Choi matrix is V V*.
    let v = Mat::from_fn(dim, kraus.len(), |row, c| {
        let (i, s) = (row / m, row % m);
        let scale = weights.map_or(1.0, |w| w[c].sqrt());
        kraus.ops[c][(s, i)] * scale
    });
    let p = HermitianMatrix::symmetrized((&v * v.adjoint()).as_ref());
    ChoiMatrix::new(n, m, p)
}

/// Kraus operators from the eigendecomposition of a PSD Choi matrix. Eigenpairs
/// below the numerical-rank threshold are discarded, so the set size equals the
/// numerical rank.
pub fn kraus_from_choi(choi: &ChoiMatrix) -> Result<KrausSet> {
    let (n, m) = (choi.n, choi.m);
    let spectrum = eigh(&choi.p)?;
    let min = spectrum.min_eigenvalue();
    if min < -KRAUS_PSD_TOL * choi.p.frobenius_norm() {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let sigma_max = spectrum.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let tol = rank_threshold(n * m, sigma_max);
    let ops = spectrum
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > tol)
        .map(|(c, &l)| {
            let scale = l.sqrt();
            Mat::from_fn(m, n, |s, i| spectrum.eigenvectors[(i * m + s, c)] * scale)
        })
        .collect();
    KrausSet::new(ops)
}

/// Diagnostics from [`validate_tp_choi`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpReport {
    /// `max_{i <= j} |tr(P_ij) - delta_ij|`.
    pub trace_violation: f64,
    pub min_eigenvalue: f64,
    /// `|T(I_n) - I_m|_F`, when requested.
    pub unital_violation: Option<f64>,
}

impl TpReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.trace_violation <= tol
            && self.min_eigenvalue >= -tol
            && self.unital_violation.is_none_or(|u| u <= tol)
    }
}

pub fn validate_tp_choi(choi: &ChoiMatrix, check_unital: bool) -> Result<TpReport> {
    let (n, m) = (choi.n, choi.m);
    let p = choi.p.as_mat();
    let mut trace_violation = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let tr: c64 = (0..m).map(|s| p[(i * m + s, j * m + s)]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            trace_violation = trace_violation.max((tr - c64::new(target, 0.0)).norm());
        }
    }
    let min_eigenvalue = choi.p.min_eigenvalue()?;
    let unital_violation = if check_unital {
        let image = apply_channel(choi, Mat::<c64>::identity(n, n).as_ref())?;
        Some((&image - Mat::<c64>::identity(m, m)).norm_l2())
    } else {
        None
    };
    Ok(TpReport { trace_violation, min_eigenvalue, unital_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::numerical_rank;
    use crate::instance_io::{random_density, random_simplex, random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
        let mut d = 0.0f64;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                d = d.max((a[(i, j)] - b[(i, j)]).norm());
            }
        }
        d
    }

    fn random_complex(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat<c64> {
        use rand::Rng;
        Mat::from_fn(rows, cols, |_, _| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn identity_channel_choi_is_rank_one() {
        let choi = ChoiMatrix::identity_channel(2);
        let expected = [[1.0, 0.0, 0.0, 1.0], [0.0; 4], [0.0; 4], [1.0, 0.0, 0.0, 1.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(choi.matrix().get(i, j), c64::new(v, 0.0));
            }
        }
    }

    #[test]
    fn identity_channel_acts_trivially() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let choi = ChoiMatrix::identity_channel(3);
        let x = random_complex(3, 3, &mut rng);
        let y = apply_channel(&choi, x.as_ref()).unwrap();
        assert!(max_abs_diff(x.as_ref(), y.as_ref()) < 1e-15);
    }

    #[test]
    fn depolarizing_channel_outputs_maximally_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let choi = ChoiMatrix::completely_depolarizing(3, 4);
        let x = random_density(3, &mut rng);
        let y = apply_channel(&choi, x.as_mat()).unwrap();
        let target = Mat::<c64>::identity(4, 4) * faer::Scale(c64::new(0.25, 0.0));
        assert!(max_abs_diff(y.as_ref(), target.as_ref()) < 1e-15);
    }

    #[test]
    fn unitary_choi_conjugates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary(4, &mut rng);
        let choi = choi_from_kraus(&KrausSet::new(vec![u.clone()]).unwrap(), None).unwrap();
        let x = random_complex(4, 4, &mut rng);
        let direct = &u * &x * u.adjoint();
        let via = apply_channel(&choi, x.as_ref()).unwrap();
        assert!(max_abs_diff(direct.as_ref(), via.as_ref()) < 1e-12);
    }

    #[test]
    fn general_kraus_operator_conjugates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_complex(3, 2, &mut rng);
        let choi = choi_from_kraus(&KrausSet::new(vec![f.clone()]).unwrap(), None).unwrap();
        let x = random_complex(2, 2, &mut rng);
        let direct = &f * &x * f.adjoint();
        let via = apply_channel(&choi, x.as_ref()).unwrap();
        assert!(max_abs_diff(direct.as_ref(), via.as_ref()) < 1e-13);
    }

    #[test]
    fn weighted_unitaries_have_full_mixture_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let r = 5;
            let ops: Vec<_> = (0..r).map(|_| random_unitary(3, &mut rng)).collect();
            let d = random_simplex(r, &mut rng);
            let choi = choi_from_kraus(&KrausSet::new(ops).unwrap(), Some(&d)).unwrap();
            assert_eq!(numerical_rank(choi.matrix()).unwrap(), r);
        }
    }

    #[test]
    fn choi_from_kraus_rejects_bad_weights() {
        let k = KrausSet::new(vec![Mat::<c64>::identity(2, 2)]).unwrap();
        assert!(matches!(choi_from_kraus(&k, Some(&[0.0])), Err(Error::InvalidWeight { .. })));
        assert!(matches!(choi_from_kraus(&k, Some(&[1.0, 1.0])), Err(Error::DimensionMismatch { .. })));
        let mixed = KrausSet::new(vec![Mat::<c64>::identity(2, 2), Mat::<c64>::identity(3, 3)]);
        assert!(mixed.is_err());
    }

    #[test]
    fn kraus_from_identity_channel_is_identity_up_to_phase() {
        let k = kraus_from_choi(&ChoiMatrix::identity_channel(3)).unwrap();
        assert_eq!(k.len(), 1);
        let f = &k.ops()[0];
        let phase = f[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-14);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { phase } else { c64::new(0.0, 0.0) };
                assert!((f[(i, j)] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn kraus_from_full_rank_choi() {
        let k = kraus_from_choi(&ChoiMatrix::completely_depolarizing(2, 3)).unwrap();
        assert_eq!(k.len(), 6);
        assert!(k.completeness_defect() < 1e-13);
    }

    #[test]
    fn kraus_round_trip_preserves_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ops: Vec<_> = (0..3).map(|_| random_unitary(3, &mut rng)).collect();
        let d = random_simplex(3, &mut rng);
        let choi = choi_from_kraus(&KrausSet::new(ops).unwrap(), Some(&d)).unwrap();
        let kraus = kraus_from_choi(&choi).unwrap();
        assert_eq!(kraus.len(), 3);
        let back = choi_from_kraus(&kraus, None).unwrap();
        assert!(back.matrix().distance(choi.matrix()) <= 1e-10 * choi.matrix().frobenius_norm());
        for _ in 0..20 {
            let x = random_density(3, &mut rng);
            let a = apply_channel(&choi, x.as_mat()).unwrap();
            let b = kraus.apply(x.as_mat());
            assert!(max_abs_diff(a.as_ref(), b.as_ref()) < 1e-11);
        }
    }

    #[test]
    fn kraus_from_choi_rejects_indefinite() {
        let p = HermitianMatrix::from_real_diagonal(&[1.0, -1.0, 0.5, 0.5]);
        let choi = ChoiMatrix::new(2, 2, p).unwrap();
        assert!(matches!(kraus_from_choi(&choi), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn validation_of_identity_and_zero() {
        let report = validate_tp_choi(&ChoiMatrix::identity_channel(3), true).unwrap();
        assert!(report.trace_violation < 1e-15);
        assert!(report.unital_violation.unwrap() < 1e-15);
        assert!(report.min_eigenvalue > -1e-15);
        let zero = ChoiMatrix::new(2, 2, HermitianMatrix::zeros(4)).unwrap();
        let report = validate_tp_choi(&zero, false).unwrap();
        assert_eq!(report.trace_violation, 1.0);
        assert_eq!(report.unital_violation, None);
    }

    #[test]
    fn block_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ops: Vec<_> = (0..2).map(|_| random_unitary(3, &mut rng)).collect();
        let choi = choi_from_kraus(&KrausSet::new(ops).unwrap(), None).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut e = Mat::<c64>::zeros(3, 3);
                e[(i, j)] = c64::new(1.0, 0.0);
                let image = apply_channel(&choi, e.as_ref()).unwrap();
                assert_eq!(image, choi.block(i, j));
            }
        }
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[0.5, 0.4])).is_err());
        assert!(DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[1.5, -0.5])).is_err());
        assert!(DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[0.5, 0.5])).is_ok());
    }
}
