//! The affine constraints of the channel feasibility problem.
//!
//! A Choi matrix `P` is feasible when
//!
//! * `sum_ij (A_l)_ij P_ij = B_l` for every prescribed pair `(A_l, B_l)`,
//! * `tr(P_ij) = delta_ij` (trace preservation),
//! * optionally `sum_i P_ii = I_m` (unital channel),
//! * `P` is positive semidefinite (handled by the solvers, not here).
//!
//! Every complex matrix equation is split into real scalar rows following the
//! [`svec`](crate::hermitian::svec) order of its Hermitian right-hand side, so
//! the residual vector of one equation is exactly `svec(B_l - T(A_l))` and the
//! Euclidean residual norm equals the Frobenius norm of the constraint
//! violation. Rows act on `svec(P)` and are stored sparsely.
//!
//! The Moore-Penrose inverse is cached at assembly. Rows fall into groups that
//! share no columns; each group gets its own thin SVD `L_g = U S W^T`, and
//! `L^+ y = L^T (U S^-2 U^T) y` is applied group by group.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::svd::{self, ComputeSvdVectors};
use std::sync::OnceLock;

use faer::{c64, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::channel::DensityMatrix;
use crate::error::{Error, Result};
use crate::hermitian::{smat_with_dim, svec_into, Coordinate, HermitianMatrix, SvecLayout};

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RANK_TOL: f64 = 1e-12;

/// `|L L^+ b - b| / |b|` above which the affine set is declared empty.
pub const CONSISTENCY_TOL: f64 = 1e-8;

/// Orthonormality defect `|V*V - I|_F` accepted by [`facial_restrict`].
pub const ORTHONORMAL_TOL: f64 = 1e-12;

/// Data of a channel-construction problem.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityInstance {
    n: usize,
    m: usize,
    a: Vec<DensityMatrix>,
    b: Vec<DensityMatrix>,
    unital: bool,
}

impl FeasibilityInstance {
    pub fn new(
        n: usize,
        m: usize,
        a: Vec<DensityMatrix>,
        b: Vec<DensityMatrix>,
        unital: bool,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidSpec("dimensions must be positive".into()));
        }
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
        }
        for x in &a {
            if x.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: x.dim() });
            }
        }
        for y in &b {
            if y.dim() != m {
                return Err(Error::DimensionMismatch { expected: m, found: y.dim() });
            }
        }
        if unital && n != m {
            return Err(Error::InvalidSpec("a unital channel needs equal input and output dimensions".into()));
        }
        Ok(Self { n, m, a, b, unital })
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    /// Side length `nm` of the Choi matrix.
    pub fn choi_dim(&self) -> usize {
        self.n * self.m
    }

    /// Number of prescribed state pairs (the unital pair is not counted).
    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn inputs(&self) -> &[DensityMatrix] {
        &self.a
    }

    pub fn outputs(&self) -> &[DensityMatrix] {
        &self.b
    }

    pub fn unital(&self) -> bool {
        self.unital
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

/// Which scalar equation a row encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowLabel {
    /// Entry `(s, t)` of `T(A_l) = B_l`.
    Channel { pair: usize, s: usize, t: usize, part: Part },
    /// `tr(P_ij) = delta_ij`.
    Trace { i: usize, j: usize, part: Part },
    /// Entry `(s, t)` of `T(I_n) = I_m`.
    Unital { s: usize, t: usize, part: Part },
}

/// Sparse rows in compressed-row form.
#[derive(Clone, Debug, Default)]
struct SparseRows {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl SparseRows {
    fn nrows(&self) -> usize {
        self.ptr.len().saturating_sub(1)
    }

    fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let range = self.ptr[r]..self.ptr[r + 1];
        (&self.idx[range.clone()], &self.val[range])
    }

    fn push_row(&mut self, entries: &[(u32, f64)]) {
        if self.ptr.is_empty() {
            self.ptr.push(0);
        }
        for &(i, v) in entries {
            self.idx.push(i);
            self.val.push(v);
        }
        self.ptr.push(self.idx.len());
    }
}

#[derive(Clone, Debug)]
enum RowStore {
    Sparse(SparseRows),
    Dense(Mat<f64>),
}

impl RowStore {
    fn nrows(&self) -> usize {
        match self {
            RowStore::Sparse(s) => s.nrows(),
            RowStore::Dense(d) => d.nrows(),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            RowStore::Sparse(s) => (0..s.nrows())
                .map(|r| {
                    let (idx, val) = s.row(r);
                    idx.iter().zip(val).map(|(&i, &v)| v * x[i as usize]).sum()
                })
                .collect(),
            RowStore::Dense(d) => {
                let xv = faer::ColRef::from_slice(x);
                let y = d * xv;
                y.iter().copied().collect()
            }
        }
    }

    fn apply_transpose(&self, y: &[f64], ncols: usize) -> Vec<f64> {
        match self {
            RowStore::Sparse(s) => {
                let mut out = vec![0.0; ncols];
                for (r, &yr) in y.iter().enumerate() {
                    if yr == 0.0 {
                        continue;
                    }
                    let (idx, val) = s.row(r);
                    for (&i, &v) in idx.iter().zip(val) {
                        out[i as usize] += v * yr;
                    }
                }
                out
            }
            RowStore::Dense(d) => {
                let yv = faer::ColRef::from_slice(y);
                let x = d.transpose() * yv;
                x.iter().copied().collect()
            }
        }
    }

    /// Nonzero `(column, value)` pairs of one row.
    fn row_entries(&self, r: usize) -> Vec<(usize, f64)> {
        match self {
            RowStore::Sparse(s) => {
                let (idx, val) = s.row(r);
                idx.iter().zip(val).map(|(&i, &v)| (i as usize, v)).collect()
            }
            RowStore::Dense(d) => {
                (0..d.ncols()).filter(|&c| d[(r, c)] != 0.0).map(|c| (c, d[(r, c)])).collect()
            }
        }
    }
}

/// Accumulates a real functional `Re sum_ab c_ab P_ab` of a Hermitian `P`
/// as a sparse row over `svec(P)`.
struct RowAccumulator {
    layout: SvecLayout,
    entries: Vec<(u32, f64)>,
}

impl RowAccumulator {
    fn new(dim: usize) -> Self {
        Self { layout: SvecLayout::new(dim), entries: Vec::new() }
    }

    fn add(&mut self, a: usize, b: usize, c: c64) {
        use std::cmp::Ordering;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match a.cmp(&b) {
            Ordering::Equal => self.push(self.layout.diag(a), c.re),
            // P_ab = (re + i im) / sqrt2
            Ordering::Less => {
                self.push(self.layout.re(a, b), c.re * h);
                self.push(self.layout.im(a, b), -c.im * h);
            }
            // P_ab = conj(P_ba) = (re - i im) / sqrt2
            Ordering::Greater => {
                self.push(self.layout.re(b, a), c.re * h);
                self.push(self.layout.im(b, a), c.im * h);
            }
        }
    }

    fn push(&mut self, idx: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((idx as u32, v));
        }
    }

    fn finish(mut self) -> Vec<(u32, f64)> {
        self.entries.sort_unstable_by_key(|e| e.0);
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(self.entries.len());
        for (i, v) in self.entries {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        out.retain(|e| e.1 != 0.0);
        out
    }
}

/// Constraint rows, right-hand side and labels, without any factorization.
///
/// This is all that is needed to measure residuals, and is what independent
/// verification uses.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    dim: usize,
    rows: RowStore,
    rhs: Vec<f64>,
    labels: Vec<RowLabel>,
}

struct SystemBuilder {
    dim: usize,
    rows: SparseRows,
    rhs: Vec<f64>,
    labels: Vec<RowLabel>,
}

impl SystemBuilder {
    fn push(&mut self, acc: RowAccumulator, rhs: f64, label: RowLabel) {
        self.rows.push_row(&acc.finish());
        self.rhs.push(rhs);
        self.labels.push(label);
    }

    /// Rows of `sum_ij x_ij P_ij = y` in svec order of the `m x m` output.
    fn push_channel(
        &mut self,
        x: MatRef<'_, c64>,
        y: MatRef<'_, c64>,
        n: usize,
        m: usize,
        label: impl Fn(usize, usize, Part) -> RowLabel,
    ) {
        let sqrt2 = std::f64::consts::SQRT_2;
        let out = SvecLayout::new(m);
        let entry = |acc: &mut RowAccumulator, s: usize, t: usize, scale: c64| {
            for j in 0..n {
                for i in 0..n {
                    let w = x[(i, j)];
                    if w != c64::new(0.0, 0.0) {
                        acc.add(i * m + s, j * m + t, w * scale);
                    }
                }
            }
        };
        for s in 0..m {
            let mut acc = RowAccumulator::new(self.dim);
            entry(&mut acc, s, s, c64::new(1.0, 0.0));
            self.push(acc, y[(s, s)].re, label(s, s, Part::Re));
        }
        for (s, t) in out.upper_pairs() {
            let mut acc = RowAccumulator::new(self.dim);
            entry(&mut acc, s, t, c64::new(sqrt2, 0.0));
            self.push(acc, sqrt2 * y[(s, t)].re, label(s, t, Part::Re));
        }
        for (s, t) in out.upper_pairs() {
            let mut acc = RowAccumulator::new(self.dim);
            entry(&mut acc, s, t, c64::new(0.0, -sqrt2));
            self.push(acc, sqrt2 * y[(s, t)].im, label(s, t, Part::Im));
        }
    }

    fn push_trace(&mut self, n: usize, m: usize) {
        let sqrt2 = std::f64::consts::SQRT_2;
        let block = |acc: &mut RowAccumulator, i: usize, j: usize, c: c64| {
            for s in 0..m {
                acc.add(i * m + s, j * m + s, c);
            }
        };
        for i in 0..n {
            let mut acc = RowAccumulator::new(self.dim);
            block(&mut acc, i, i, c64::new(1.0, 0.0));
            self.push(acc, 1.0, RowLabel::Trace { i, j: i, part: Part::Re });
        }
        let layout = SvecLayout::new(n);
        for (i, j) in layout.upper_pairs() {
            let mut acc = RowAccumulator::new(self.dim);
            block(&mut acc, i, j, c64::new(sqrt2, 0.0));
            self.push(acc, 0.0, RowLabel::Trace { i, j, part: Part::Re });
        }
        for (i, j) in layout.upper_pairs() {
            let mut acc = RowAccumulator::new(self.dim);
            block(&mut acc, i, j, c64::new(0.0, -sqrt2));
            self.push(acc, 0.0, RowLabel::Trace { i, j, part: Part::Im });
        }
    }
}

impl ConstraintSystem {
    /// Rows for all channel pairs, then trace preservation, then (if requested)
    /// the unital pair.
    pub fn assemble(inst: &FeasibilityInstance) -> Self {
        let (n, m) = (inst.n, inst.m);
        let dim = n * m;
        let mut builder = SystemBuilder { dim, rows: SparseRows::default(), rhs: vec![], labels: vec![] };
        builder.rows.ptr.push(0);
        for (pair, (a, b)) in inst.a.iter().zip(&inst.b).enumerate() {
            builder.push_channel(a.as_mat(), b.as_mat(), n, m, |s, t, part| RowLabel::Channel {
                pair,
                s,
                t,
                part,
            });
        }
        builder.push_trace(n, m);
        if inst.unital {
            let id_in = Mat::<c64>::identity(n, n);
            let id_out = Mat::<c64>::identity(m, m);
            builder.push_channel(id_in.as_ref(), id_out.as_ref(), n, m, |s, t, part| RowLabel::Unital {
                s,
                t,
                part,
            });
        }
        Self { dim, rows: RowStore::Sparse(builder.rows), rhs: builder.rhs, labels: builder.labels }
    }

    /// Side length of the Hermitian matrices the rows act on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    /// Number of real unknowns, `dim^2`.
    pub fn ncols(&self) -> usize {
        self.dim * self.dim
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn labels(&self) -> &[RowLabel] {
        &self.labels
    }

    fn check_dim(&self, p: &HermitianMatrix) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: p.dim() });
        }
        Ok(())
    }

    /// `L svec(P)`.
    pub fn apply(&self, p: &HermitianMatrix) -> Result<Vec<f64>> {
        self.check_dim(p)?;
        let mut x = vec![0.0; self.ncols()];
        svec_into(p, &mut x);
        Ok(self.rows.apply(&x))
    }

    /// `L^T y` as a Hermitian matrix, i.e. `sum_r y_r G_r`.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<HermitianMatrix> {
        if y.len() != self.nrows() {
            return Err(Error::DimensionMismatch { expected: self.nrows(), found: y.len() });
        }
        Ok(smat_with_dim(&self.rows.apply_transpose(y, self.ncols()), self.dim))
    }

    /// `b - L svec(P)`.
    pub fn evaluate_residual(&self, p: &HermitianMatrix) -> Result<Vec<f64>> {
        let lp = self.apply(p)?;
        Ok(self.rhs.iter().zip(lp).map(|(b, v)| b - v).collect())
    }

    pub fn residual_norm(&self, p: &HermitianMatrix) -> Result<f64> {
        Ok(norm(&self.evaluate_residual(p)?))
    }

    /// The Hermitian matrix `G_r` with `(L svec P)_r = Re tr(G_r* P)`.
    pub fn row_representer(&self, r: usize) -> HermitianMatrix {
        let mut v = vec![0.0; self.ncols()];
        for (c, x) in self.rows.row_entries(r) {
            v[c] = x;
        }
        smat_with_dim(&v, self.dim)
    }

    /// Dense copy of the row matrix; only sensible for small problems.
    pub fn dense_matrix(&self) -> Mat<f64> {
        let mut out = Mat::zeros(self.nrows(), self.ncols());
        for r in 0..self.nrows() {
            for (c, x) in self.rows.row_entries(r) {
                out[(r, c)] = x;
            }
        }
        out
    }

    /// Column groups: rows in different groups share no column.
    fn row_groups(&self) -> Vec<Vec<usize>> {
        let q = self.nrows();
        match &self.rows {
            RowStore::Dense(_) => vec![(0..q).collect()],
            RowStore::Sparse(s) => {
                let mut parent: Vec<usize> = (0..q).collect();
                fn find(parent: &mut [usize], mut x: usize) -> usize {
                    while parent[x] != x {
                        parent[x] = parent[parent[x]];
                        x = parent[x];
                    }
                    x
                }
                let mut owner = vec![usize::MAX; self.ncols()];
                for r in 0..q {
                    let (idx, _) = s.row(r);
                    for &c in idx {
                        let c = c as usize;
                        if owner[c] == usize::MAX {
                            owner[c] = r;
                        } else {
                            let (a, b) = (find(&mut parent, owner[c]), find(&mut parent, r));
                            if a != b {
                                parent[a.max(b)] = a.min(b);
                            }
                        }
                    }
                }
                let mut groups: Vec<Vec<usize>> = Vec::new();
                let mut slot = vec![usize::MAX; q];
                for r in 0..q {
                    let root = find(&mut parent, r);
                    if slot[root] == usize::MAX {
                        slot[root] = groups.len();
                        groups.push(Vec::new());
                    }
                    groups[slot[root]].push(r);
                }
                groups
            }
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One independent group of rows with its left singular vectors.
#[derive(Clone, Debug)]
struct FactorGroup {
    rows: Vec<usize>,
    /// Left singular vectors for the retained singular values.
    left: Mat<f64>,
    inv_sq_sigma: Vec<f64>,
}

/// Thin-SVD factors of every row group, truncated at [`PINV_RANK_TOL`].
#[derive(Clone, Debug)]
struct PinvFactor {
    groups: Vec<FactorGroup>,
    rank: usize,
}

impl PinvFactor {
    fn new(system: &ConstraintSystem) -> Result<Self> {
        let mut raw: Vec<(Vec<usize>, Mat<f64>, Vec<f64>)> = Vec::new();
        let mut local = vec![u32::MAX; system.ncols()];
        for rows in system.row_groups() {
            let (left, sigma) = match &system.rows {
                RowStore::Dense(d) => left_singular(d.as_ref())?,
                RowStore::Sparse(s) => {
                    let mut cols: Vec<usize> = Vec::new();
                    for &r in &rows {
                        let (idx, _) = s.row(r);
                        for &c in idx {
                            if local[c as usize] == u32::MAX {
                                local[c as usize] = cols.len() as u32;
                                cols.push(c as usize);
                            }
                        }
                    }
                    let mut block = Mat::<f64>::zeros(rows.len(), cols.len());
                    for (br, &r) in rows.iter().enumerate() {
                        let (idx, val) = s.row(r);
                        for (&c, &v) in idx.iter().zip(val) {
                            block[(br, local[c as usize] as usize)] = v;
                        }
                    }
                    for &c in &cols {
                        local[c] = u32::MAX;
                    }
                    left_singular(block.as_ref())?
                }
            };
            raw.push((rows, left, sigma));
        }
        let sigma_max = raw.iter().flat_map(|g| g.2.iter().copied()).fold(0.0f64, f64::max);
        let cutoff = PINV_RANK_TOL * sigma_max;
        let mut rank = 0;
        let groups = raw
            .into_iter()
            .map(|(rows, left, sigma)| {
                let kept: Vec<usize> = (0..sigma.len()).filter(|&j| sigma[j] > cutoff).collect();
                rank += kept.len();
                FactorGroup {
                    left: Mat::from_fn(left.nrows(), kept.len(), |i, j| left[(i, kept[j])]),
                    inv_sq_sigma: kept.iter().map(|&j| 1.0 / (sigma[j] * sigma[j])).collect(),
                    rows,
                }
            })
            .collect();
        Ok(Self { groups, rank })
    }

    /// `(L L^T)^+ y`, computed group by group as `U S^-2 U^T y`.
    fn gram_pinv(&self, y: &[f64]) -> Vec<f64> {
        self.map_groups(y, |g, w| {
            for (x, s) in w.iter_mut().zip(&g.inv_sq_sigma) {
                *x *= s;
            }
        })
    }

    /// `L L^+ y = U U^T y`, the projection onto the range of `L`.
    fn range_projection(&self, y: &[f64]) -> Vec<f64> {
        self.map_groups(y, |_, _| {})
    }

    fn map_groups(&self, y: &[f64], scale: impl Fn(&FactorGroup, &mut [f64])) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        for g in &self.groups {
            if g.left.ncols() == 0 {
                continue;
            }
            let yg = faer::Col::from_fn(g.rows.len(), |i| y[g.rows[i]]);
            let mut w: Vec<f64> = (g.left.transpose() * &yg).iter().copied().collect();
            scale(g, &mut w);
            let z = &g.left * faer::ColRef::from_slice(&w);
            for (i, &r) in g.rows.iter().enumerate() {
                out[r] = z[i];
            }
        }
        out
    }
}

/// Left singular vectors and singular values (descending) of a dense block.
fn left_singular(a: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>)> {
    let (m, n) = a.shape();
    let size = m.min(n);
    if size == 0 {
        return Ok((Mat::zeros(m, 0), vec![]));
    }
    let par = Par::Seq;
    let mut s = faer::diag::Diag::<f64>::zeros(size);
    let mut u = Mat::<f64>::zeros(m, size);
    let scratch = svd::svd_scratch::<f64>(m, n, ComputeSvdVectors::Thin, ComputeSvdVectors::No, par, Default::default());
    let mut buf = MemBuffer::new(scratch);
    svd::svd(a, s.as_mut(), Some(u.as_mut()), None, par, MemStack::new(&mut buf), Default::default())
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let sigma = s.column_vector().iter().copied().collect();
    Ok((u, sigma))
}

/// Closed-form projection onto the channel constraints.
///
/// With `W[(s,t),(i,j)] = (P_ij)_st`, the constraints read `W a_l = vec(B_l)`
/// for the columns `a_l = vec(A_l)` (plus `vec(I)` when unital) and
/// `u^T W = vec(I_n)^T` with `u = vec(I_m)`. Splitting `W` into its parts on
/// `range(A)` and its complement, the nearest feasible point is
/// `(I - Pi_u) W (I - Pi_A) + W_0`, where `W_0` is the minimum-norm solution.
/// Only a thin basis of `range(A)` and `W_0` are cached.
#[derive(Clone, Debug)]
struct ChannelProjector {
    n: usize,
    m: usize,
    unital: bool,
    /// `vec(A_l)` columns, `n^2 x K`.
    inputs: Mat<c64>,
    /// `vec(B_l)` columns, `m^2 x K`.
    outputs: Mat<c64>,
    /// Orthonormal basis of `range(inputs)`.
    basis: Mat<c64>,
    w0: Mat<c64>,
}

impl ChannelProjector {
    fn new(inst: &FeasibilityInstance) -> Result<Self> {
        let (n, m) = (inst.n, inst.m);
        let mut ins: Vec<MatRef<'_, c64>> = inst.a.iter().map(|a| a.as_mat()).collect();
        let mut outs: Vec<MatRef<'_, c64>> = inst.b.iter().map(|b| b.as_mat()).collect();
        let id_in = Mat::<c64>::identity(n, n);
        let id_out = Mat::<c64>::identity(m, m);
        if inst.unital {
            ins.push(id_in.as_ref());
            outs.push(id_out.as_ref());
        }
        let cols = ins.len();
        let inputs = Mat::from_fn(n * n, cols, |r, c| ins[c][(r % n, r / n)]);
        let outputs = Mat::from_fn(m * m, cols, |r, c| outs[c][(r % m, r / m)]);

        // Thin SVD of the inputs: range basis and pseudoinverse.
        let (left, sigma, right) = complex_svd(inputs.as_ref())?;
        let sigma_max = sigma.first().copied().unwrap_or(0.0);
        let kept: Vec<usize> = (0..sigma.len()).filter(|&j| sigma[j] > PINV_RANK_TOL * sigma_max).collect();
        let basis = Mat::from_fn(n * n, kept.len(), |r, c| left[(r, kept[c])]);
        // A^+ = V S^-1 U*, so B A^+ = (B V S^-1) U*.
        let bv = &outputs * Mat::from_fn(cols, kept.len(), |r, c| right[(r, kept[c])] * (1.0 / sigma[kept[c]]));
        let mut w0 = &bv * basis.adjoint();
        // (I - Pi_u) B A^+ + u d^T / m
        let inv_m = 1.0 / m as f64;
        for col in 0..n * n {
            let mean: c64 = (0..m).map(|s| w0[(s + s * m, col)]).sum::<c64>() * inv_m;
            let target = if col % n == col / n { inv_m } else { 0.0 };
            for s in 0..m {
                w0[(s + s * m, col)] += c64::new(target, 0.0) - mean;
            }
        }
        Ok(Self { n, m, unital: inst.unital, inputs, outputs, basis, w0 })
    }

    /// Rank of the real constraint map on Hermitian matrices.
    fn rank(&self) -> usize {
        let rho = self.basis.ncols();
        rho * self.m * self.m + self.n * self.n - rho
    }

    fn to_w(&self, p: &HermitianMatrix) -> Mat<c64> {
        let (n, m) = (self.n, self.m);
        let p = p.as_mat();
        Mat::from_fn(m * m, n * n, |r, c| p[((c % n) * m + r % m, (c / n) * m + r / m)])
    }

    fn from_w(&self, w: &Mat<c64>) -> HermitianMatrix {
        let (n, m) = (self.n, self.m);
        HermitianMatrix::from_upper_fn(n * m, |a, b| w[(a % m + (b % m) * m, a / m + (b / m) * n)])
    }

    fn project(&self, p: &HermitianMatrix) -> HermitianMatrix {
        let m = self.m;
        let mut w = self.to_w(p);
        let coeffs = &w * &self.basis;
        faer::linalg::matmul::matmul(
            w.as_mut(),
            faer::Accum::Add,
            coeffs.as_ref(),
            self.basis.adjoint(),
            c64::new(-1.0, 0.0),
            Par::Seq,
        );
        let inv_m = 1.0 / m as f64;
        for col in 0..w.ncols() {
            let mean: c64 = (0..m).map(|s| w[(s + s * m, col)]).sum::<c64>() * inv_m;
            for s in 0..m {
                w[(s + s * m, col)] -= mean;
            }
        }
        w += &self.w0;
        self.from_w(&w)
    }

    /// `b - L svec(P)` in the row order of [`ConstraintSystem::assemble`].
    fn residual(&self, p: &HermitianMatrix) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let w = self.to_w(p);
        let images = &w * &self.inputs;
        let pairs = self.inputs.ncols();
        let mut out = Vec::with_capacity(pairs * m * m + n * n);
        let diff = |l: usize| {
            HermitianMatrix::from_upper_fn(m, |s, t| self.outputs[(s + t * m, l)] - images[(s + t * m, l)])
        };
        let k = if self.unital { pairs - 1 } else { pairs };
        for l in 0..k {
            push_svec(&diff(l), &mut out);
        }
        let traces = HermitianMatrix::from_upper_fn(n, |i, j| {
            let tr: c64 = (0..m).map(|s| w[(s + s * m, i + j * n)]).sum();
            c64::new(if i == j { 1.0 } else { 0.0 }, 0.0) - tr
        });
        push_svec(&traces, &mut out);
        if k < pairs {
            push_svec(&diff(k), &mut out);
        }
        out
    }
}

fn push_svec(h: &HermitianMatrix, out: &mut Vec<f64>) {
    let start = out.len();
    out.resize(start + h.dim() * h.dim(), 0.0);
    svec_into(h, &mut out[start..]);
}

/// Full thin SVD `A = U S V*` of a complex matrix, singular values descending.
fn complex_svd(a: MatRef<'_, c64>) -> Result<(Mat<c64>, Vec<f64>, Mat<c64>)> {
    let (m, n) = a.shape();
    let size = m.min(n);
    if size == 0 {
        return Ok((Mat::zeros(m, 0), vec![], Mat::zeros(n, 0)));
    }
    let svd = a.thin_svd().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let sigma = (0..size).map(|j| svd.S()[j].re).collect();
    Ok((svd.U().to_owned(), sigma, svd.V().to_owned()))
}

#[derive(Clone, Debug)]
enum Backend {
    /// Instance constraints, projected in closed form; rows are built on demand.
    Channel { inst: FeasibilityInstance, projector: ChannelProjector, system: OnceLock<ConstraintSystem> },
    /// Arbitrary rows, projected through the row pseudoinverse.
    Rows { system: ConstraintSystem },
}

/// Affine constraint map with a cached projection.
///
/// Operators built from an instance by [`assemble_operator`] project in
/// closed form; operators built from explicit rows (including every
/// [`facial_restrict`] result) use the Moore-Penrose inverse of the rows.
/// Immutable after assembly apart from lazily built caches, so one operator
/// can back any number of concurrent solves.
#[derive(Clone, Debug)]
pub struct AffineOperator {
    backend: Backend,
    factor: OnceLock<Result<PinvFactor, String>>,
    dim: usize,
    rhs_norm: f64,
    consistency_gap: f64,
}

/// Builds the constraint operator of an instance.
pub fn assemble_operator(inst: &FeasibilityInstance) -> Result<AffineOperator> {
    let projector = ChannelProjector::new(inst)?;
    let rhs_norm = {
        let mut total = inst.b.iter().map(|b| b.as_hermitian().frobenius_norm().powi(2)).sum::<f64>();
        total += inst.n as f64;
        if inst.unital {
            total += inst.m as f64;
        }
        total.sqrt()
    };
    let min_norm = projector.project(&HermitianMatrix::zeros(inst.choi_dim()));
    let consistency_gap = norm(&projector.residual(&min_norm));
    Ok(AffineOperator {
        dim: inst.choi_dim(),
        backend: Backend::Channel { inst: inst.clone(), projector, system: OnceLock::new() },
        factor: OnceLock::new(),
        rhs_norm,
        consistency_gap,
    })
}

/// Same constraints as [`assemble_operator`], but projecting through the
/// factored rows.
pub fn assemble_operator_from_rows(inst: &FeasibilityInstance) -> Result<AffineOperator> {
    AffineOperator::from_system(ConstraintSystem::assemble(inst))
}

impl AffineOperator {
    pub fn from_system(system: ConstraintSystem) -> Result<Self> {
        let factor = PinvFactor::new(&system)?;
        let projected = factor.range_projection(&system.rhs);
        let gap = norm(&system.rhs.iter().zip(&projected).map(|(b, p)| b - p).collect::<Vec<_>>());
        Ok(Self {
            dim: system.dim,
            rhs_norm: norm(&system.rhs),
            consistency_gap: gap,
            factor: OnceLock::from(Ok(factor)),
            backend: Backend::Rows { system },
        })
    }

    /// The constraint rows (assembled on first use for instance operators).
    pub fn system(&self) -> &ConstraintSystem {
        match &self.backend {
            Backend::Channel { inst, system, .. } => system.get_or_init(|| ConstraintSystem::assemble(inst)),
            Backend::Rows { system } => system,
        }
    }

    fn factor(&self) -> Result<&PinvFactor> {
        self.factor
            .get_or_init(|| PinvFactor::new(self.system()).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Factorization(e.clone()))
    }

    /// Whether projections use the closed form rather than the row pseudoinverse.
    pub fn is_closed_form(&self) -> bool {
        matches!(self.backend, Backend::Channel { .. })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nrows(&self) -> usize {
        match &self.backend {
            Backend::Channel { projector, .. } => {
                projector.inputs.ncols() * projector.m * projector.m + projector.n * projector.n
            }
            Backend::Rows { system } => system.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        self.dim * self.dim
    }

    pub fn rhs(&self) -> &[f64] {
        &self.system().rhs
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs_norm
    }

    pub fn labels(&self) -> &[RowLabel] {
        &self.system().labels
    }

    /// Rank of the real constraint map.
    pub fn rank(&self) -> Result<usize> {
        match &self.backend {
            Backend::Channel { projector, .. } => Ok(projector.rank()),
            Backend::Rows { .. } => Ok(self.factor()?.rank),
        }
    }

    /// `|L L^+ b - b|`: the residual of the minimum-norm solution.
    pub fn consistency_gap(&self) -> f64 {
        self.consistency_gap
    }

    pub fn is_consistent(&self) -> bool {
        self.consistency_gap <= CONSISTENCY_TOL * self.rhs_norm
    }

    fn check_dim(&self, p: &HermitianMatrix) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: p.dim() });
        }
        Ok(())
    }

    /// `b - L svec(P)`.
    pub fn evaluate_residual(&self, p: &HermitianMatrix) -> Result<Vec<f64>> {
        self.check_dim(p)?;
        match &self.backend {
            Backend::Channel { projector, .. } => Ok(projector.residual(p)),
            Backend::Rows { system } => system.evaluate_residual(p),
        }
    }

    pub fn residual_norm(&self, p: &HermitianMatrix) -> Result<f64> {
        Ok(norm(&self.evaluate_residual(p)?))
    }

    /// `L^+ y` as a vector of svec coordinates, always through the rows.
    pub fn pinv_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let system = self.system();
        if y.len() != system.nrows() {
            return Err(Error::DimensionMismatch { expected: system.nrows(), found: y.len() });
        }
        let z = self.factor()?.gram_pinv(y);
        Ok(system.rows.apply_transpose(&z, self.ncols()))
    }

    /// Nearest point of `{P : L svec(P) = b}`.
    pub fn project_affine(&self, p: &HermitianMatrix) -> Result<HermitianMatrix> {
        self.check_dim(p)?;
        if !self.is_consistent() {
            return Err(Error::InconsistentAffine { gap: self.consistency_gap, rhs_norm: self.rhs_norm });
        }
        match &self.backend {
            Backend::Channel { projector, .. } => Ok(projector.project(p)),
            Backend::Rows { system } => {
                let residual = system.evaluate_residual(p)?;
                let step = self.pinv_apply(&residual)?;
                let mut out = p.clone();
                out.add_scaled(1.0, &smat_with_dim(&step, self.dim));
                Ok(out)
            }
        }
    }

    /// Dense `L^+`, built column by column; only sensible for small problems.
    pub fn dense_pinv(&self) -> Result<Mat<f64>> {
        let q = self.system().nrows();
        let mut out = Mat::zeros(self.ncols(), q);
        let mut e = vec![0.0; q];
        for c in 0..q {
            e[c] = 1.0;
            let col = self.pinv_apply(&e)?;
            for (r, v) in col.into_iter().enumerate() {
                out[(r, c)] = v;
            }
            e[c] = 0.0;
        }
        Ok(out)
    }
}

/// Restricts the constraints to the face `{V Q V* : Q Hermitian}`.
///
/// Row `r` becomes `svec(V* G_r V)`, with the right-hand side unchanged, so
/// the restricted operator acts on `r x r` Hermitian matrices `Q` and its
/// residual at `Q` equals the original residual at `V Q V*`.
pub fn facial_restrict(op: &AffineOperator, basis: MatRef<'_, c64>) -> Result<AffineOperator> {
    AffineOperator::from_system(restrict_system(op.system(), basis)?)
}

fn restrict_system(system: &ConstraintSystem, basis: MatRef<'_, c64>) -> Result<ConstraintSystem> {
    if basis.nrows() != system.dim {
        return Err(Error::DimensionMismatch { expected: system.dim, found: basis.nrows() });
    }
    let r = basis.ncols();
    let gram = basis.adjoint() * basis;
    let defect = (&gram - Mat::<c64>::identity(r, r)).norm_l2();
    if defect > ORTHONORMAL_TOL {
        return Err(Error::NonOrthonormal { defect });
    }
    let layout = SvecLayout::new(system.dim);
    let q = system.nrows();
    let mut dense = Mat::<f64>::zeros(q, r * r);
    let mut row_buf = vec![0.0; r * r];
    let mut position = vec![usize::MAX; system.dim];
    for row in 0..q {
        // Gather the support of G_r and its entries.
        let entries = system.rows.row_entries(row);
        let mut support: Vec<usize> = Vec::new();
        let mut touch = |i: usize, support: &mut Vec<usize>| {
            if position[i] == usize::MAX {
                position[i] = support.len();
                support.push(i);
            }
        };
        for &(c, _) in &entries {
            match layout.coordinate(c) {
                Coordinate::Diag(i) => touch(i, &mut support),
                Coordinate::Re(i, j) | Coordinate::Im(i, j) => {
                    touch(i, &mut support);
                    touch(j, &mut support);
                }
            }
        }
        let k = support.len();
        let mut g = Mat::<c64>::zeros(k, k);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for &(c, v) in &entries {
            match layout.coordinate(c) {
                Coordinate::Diag(i) => g[(position[i], position[i])] += c64::new(v, 0.0),
                Coordinate::Re(i, j) => {
                    let (a, b) = (position[i], position[j]);
                    g[(a, b)] += c64::new(v * h, 0.0);
                    g[(b, a)] += c64::new(v * h, 0.0);
                }
                Coordinate::Im(i, j) => {
                    let (a, b) = (position[i], position[j]);
                    g[(a, b)] += c64::new(0.0, v * h);
                    g[(b, a)] += c64::new(0.0, -v * h);
                }
            }
        }
        let vs = Mat::from_fn(k, r, |a, c| basis[(support[a], c)]);
        let compressed = vs.adjoint() * (&g * &vs);
        svec_into(&HermitianMatrix::symmetrized(compressed.as_ref()), &mut row_buf);
        for (c, &x) in row_buf.iter().enumerate() {
            dense[(row, c)] = x;
        }
        for &i in &support {
            position[i] = usize::MAX;
        }
    }
    Ok(ConstraintSystem {
        dim: r,
        rows: RowStore::Dense(dense),
        rhs: system.rhs.clone(),
        labels: system.labels.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::apply_channel;
    use crate::hermitian::{eigh, smat, svec};
    use crate::instance_io::{generate_feasible_instance, random_hermitian, GeneratorSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace_only(n: usize) -> FeasibilityInstance {
        FeasibilityInstance::new(n, n, vec![], vec![], false).unwrap()
    }

    fn generated(n: usize, k: usize, r: usize, seed: u64) -> (FeasibilityInstance, HermitianMatrix) {
        let spec = GeneratorSpec { n, m: n, k, r, unital: true, seed };
        let (inst, p) = generate_feasible_instance(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        (inst, p.into_matrix())
    }

    #[test]
    fn scalar_trace_row() {
        let op = assemble_operator(&trace_only(1)).unwrap();
        assert_eq!(op.nrows(), 1);
        assert_eq!(op.system().dense_matrix()[(0, 0)], 1.0);
        assert_eq!(op.rhs(), &[1.0]);
    }

    #[test]
    fn two_by_two_trace_rows() {
        let op = assemble_operator(&trace_only(2)).unwrap();
        assert_eq!(op.nrows(), 4);
        assert_eq!(op.rhs(), &[1.0, 1.0, 0.0, 0.0]);
        // Check each row against tr(P_ij) computed from the definition.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_hermitian(4, &mut rng);
        let lp = op.system().apply(&p).unwrap();
        let tr = |i: usize, j: usize| p.get(2 * i, 2 * j) + p.get(2 * i + 1, 2 * j + 1);
        let s2 = std::f64::consts::SQRT_2;
        let expect = [tr(0, 0).re, tr(1, 1).re, s2 * tr(0, 1).re, s2 * tr(0, 1).im];
        for (a, b) in lp.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn generator_choi_satisfies_rows() {
        let (inst, p) = generated(3, 2, 2, 9);
        let op = assemble_operator(&inst).unwrap();
        let res = op.residual_norm(&p).unwrap();
        assert!(res <= 1e-12 * norm(op.rhs()), "residual {res:e}");
        assert!(op.is_consistent());
        assert_eq!(op.residual_norm(&HermitianMatrix::zeros(9)).unwrap(), norm(op.rhs()));
    }

    #[test]
    fn rows_are_svec_of_representers() {
        let (inst, _) = generated(3, 2, 3, 4);
        let op = assemble_operator(&inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_hermitian(9, &mut rng);
        let lp = op.system().apply(&p).unwrap();
        for (r, v) in lp.iter().enumerate() {
            let g = op.system().row_representer(r);
            assert!((g.inner(&p) - v).abs() <= 1e-13 * v.abs().max(1.0));
        }
    }

    #[test]
    fn residual_norm_is_frobenius_violation() {
        let (inst, _) = generated(3, 2, 3, 5);
        let op = assemble_operator(&inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_hermitian(9, &mut rng);
        let choi = crate::channel::ChoiMatrix::new(3, 3, p.clone()).unwrap();
        let mut total = 0.0;
        for (a, b) in inst.inputs().iter().zip(inst.outputs()) {
            let image = apply_channel(&choi, a.as_mat()).unwrap();
            total += (&image - b.as_mat()).norm_l2().powi(2);
        }
        for i in 0..3 {
            for j in 0..3 {
                let tr: c64 = (0..3).map(|s| p.get(3 * i + s, 3 * j + s)).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                total += (tr - c64::new(target, 0.0)).norm_sqr();
            }
        }
        let image = apply_channel(&choi, Mat::<c64>::identity(3, 3).as_ref()).unwrap();
        total += (&image - Mat::<c64>::identity(3, 3)).norm_l2().powi(2);
        let res = op.residual_norm(&p).unwrap();
        assert!((res - total.sqrt()).abs() <= 1e-13 * res);
    }

    fn assert_penrose(op: &AffineOperator) {
        let l = op.system().dense_matrix();
        let lp = op.dense_pinv().unwrap();
        let nl = l.norm_l2();
        let np = lp.norm_l2();
        let rel = |x: Mat<f64>, scale: f64| x.norm_l2() / scale;
        assert!(rel(&l * &lp * &l - &l, nl) <= 1e-10);
        assert!(rel(&lp * &l * &lp - &lp, np) <= 1e-10);
        let llp = &l * &lp;
        assert!(rel(&llp - llp.transpose(), llp.norm_l2()) <= 1e-10);
        let lpl = &lp * &l;
        assert!(rel(&lpl - lpl.transpose(), lpl.norm_l2()) <= 1e-10);
    }

    #[test]
    fn penrose_axioms_hold() {
        assert_penrose(&assemble_operator(&trace_only(2)).unwrap());
        let (inst, _) = generated(2, 2, 2, 7);
        assert_penrose(&assemble_operator(&inst).unwrap());
        let (inst, _) = generated(3, 2, 4, 8);
        assert_penrose(&assemble_operator(&inst).unwrap());
    }

    #[test]
    fn unital_rows_are_redundant() {
        // tr T(A) = tr A makes the diagonal sums of every channel block
        // redundant with the trace rows.
        let (inst, _) = generated(3, 2, 3, 10);
        let op = assemble_operator(&inst).unwrap();
        assert!(op.rank().unwrap() < op.nrows());
    }

    #[test]
    fn trace_only_projection_of_zero() {
        let op = assemble_operator(&trace_only(2)).unwrap();
        let p = op.project_affine(&HermitianMatrix::zeros(4)).unwrap();
        let target = HermitianMatrix::scaled_identity(4, 0.5);
        assert!(p.distance(&target) < 1e-15);
    }

    #[test]
    fn projection_fixes_members_and_is_idempotent() {
        let (inst, p_true) = generated(3, 3, 2, 11);
        let op = assemble_operator(&inst).unwrap();
        assert!(op.project_affine(&p_true).unwrap().distance(&p_true) < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_hermitian(9, &mut rng);
        let once = op.project_affine(&x).unwrap();
        let twice = op.project_affine(&once).unwrap();
        assert!(once.distance(&twice) < 1e-12);
        assert!(op.residual_norm(&once).unwrap() <= 1e-11 * (1.0 + norm(op.rhs())));
    }

    #[test]
    fn null_space_perturbation_keeps_residual() {
        let (inst, p_true) = generated(3, 2, 3, 12);
        let op = assemble_operator(&inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = svec(&random_hermitian(9, &mut rng));
        // w - L^+ L w lies in null(L)
        let lw = op.system().rows.apply(&w);
        let back = op.pinv_apply(&lw).unwrap();
        let null: Vec<f64> = w.iter().zip(&back).map(|(a, b)| a - b).collect();
        let perturbed = &p_true + &smat(&null).unwrap();
        assert!(op.residual_norm(&perturbed).unwrap() < 1e-11);
    }

    #[test]
    fn inconsistent_system_is_rejected() {
        // rho -> sigma and rho -> sigma' with sigma != sigma' cannot both hold.
        let rho = DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[0.5, 0.5])).unwrap();
        let s1 = DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[1.0, 0.0])).unwrap();
        let s2 = DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[0.0, 1.0])).unwrap();
        let inst = FeasibilityInstance::new(2, 2, vec![rho.clone(), rho], vec![s1, s2], false).unwrap();
        for op in [assemble_operator(&inst).unwrap(), assemble_operator_from_rows(&inst).unwrap()] {
            assert!(!op.is_consistent());
            assert!(matches!(op.project_affine(&HermitianMatrix::zeros(4)), Err(Error::InconsistentAffine { .. })));
        }
    }

    #[test]
    fn identity_restriction_reproduces_rows() {
        let (inst, _) = generated(2, 2, 2, 13);
        let op = assemble_operator(&inst).unwrap();
        let id = Mat::<c64>::identity(4, 4);
        let restricted = facial_restrict(&op, id.as_ref()).unwrap();
        let a = op.system().dense_matrix();
        let b = restricted.system().dense_matrix();
        assert!((&a - &b).norm_max() <= 1e-14);
    }

    #[test]
    fn restriction_to_generator_face() {
        let (inst, p_true) = generated(3, 2, 3, 14);
        let op = assemble_operator(&inst).unwrap();
        let spectrum = eigh(&p_true).unwrap();
        let basis = spectrum.dominant_basis(1e-10);
        assert_eq!(basis.ncols(), 3);
        let restricted = facial_restrict(&op, basis.as_ref()).unwrap();
        let q = HermitianMatrix::from_real_diagonal(&spectrum.eigenvalues[..3]);
        assert!(restricted.residual_norm(&q).unwrap() < 1e-12);
        // residual identity on a random Q
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_hermitian(3, &mut rng);
        let a = restricted.evaluate_residual(&q).unwrap();
        let b = op.evaluate_residual(&q.lift(basis.as_ref())).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-11);
        }
        // <G, V Q V*> = <V* G V, Q>
        for r in [0, 5, restricted.nrows() - 1] {
            let g = op.system().row_representer(r);
            let lhs = g.inner(&q.lift(basis.as_ref()));
            let rhs = g.compress(basis.as_ref()).inner(&q);
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }

    fn assert_backends_agree(inst: &FeasibilityInstance, seed: u64) {
        let closed = assemble_operator(inst).unwrap();
        let rows = assemble_operator_from_rows(inst).unwrap();
        assert!(closed.is_closed_form() && !rows.is_closed_form());
        assert_eq!(closed.nrows(), rows.nrows());
        assert_eq!(closed.rank().unwrap(), rows.rank().unwrap());
        assert!((closed.consistency_gap() - rows.consistency_gap()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let p = random_hermitian(inst.choi_dim(), &mut rng);
            let a = closed.evaluate_residual(&p).unwrap();
            let b = rows.evaluate_residual(&p).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-13 * (1.0 + y.abs()), "{x} vs {y}");
            }
            let pa = closed.project_affine(&p).unwrap();
            let pb = rows.project_affine(&p).unwrap();
            assert!(pa.distance(&pb) <= 1e-12 * (1.0 + p.frobenius_norm()), "{:e}", pa.distance(&pb));
        }
    }

    #[test]
    fn closed_form_matches_row_pseudoinverse() {
        for (n, k, r, seed) in [(2, 1, 1, 20), (2, 3, 4, 21), (3, 2, 3, 22), (3, 9, 2, 23), (4, 3, 4, 24)] {
            let (inst, _) = generated(n, k, r, seed);
            assert_backends_agree(&inst, seed);
            let plain = FeasibilityInstance::new(n, n, inst.inputs().to_vec(), inst.outputs().to_vec(), false).unwrap();
            assert_backends_agree(&plain, seed + 100);
        }
        assert_backends_agree(&trace_only(3), 30);
        // A replacement channel between different dimensions.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sigma = crate::instance_io::random_density(3, &mut rng);
        let a: Vec<DensityMatrix> = (0..2).map(|_| crate::instance_io::random_density(2, &mut rng)).collect();
        let inst = FeasibilityInstance::new(2, 3, a, vec![sigma.clone(), sigma], false).unwrap();
        assert_backends_agree(&inst, 32);
    }

    #[test]
    fn restriction_rejects_non_orthonormal_basis() {
        let op = assemble_operator(&trace_only(2)).unwrap();
        let v = Mat::<c64>::identity(4, 2) * faer::Scale(c64::new(2.0, 0.0));
        assert!(matches!(facial_restrict(&op, v.as_ref()), Err(Error::NonOrthonormal { .. })));
    }
}
