//! Random feasible instances and file formats.
//!
//! All samplers take the caller's generator; nothing here touches global
//! randomness. [`generate_from_seed`] seeds a [`ChaCha8Rng`] from `spec.seed` so
//! that a [`GeneratorSpec`] alone reproduces an instance bit for bit.

mod files;

pub use files::{
    read_instance, read_solution, write_instance, write_report, write_solution, InstanceFile, ReportRow,
    ReportWriter, SolutionFile, REPORT_HEADER,
};

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, choi_from_kraus, ChoiMatrix, DensityMatrix, KrausSet};
use crate::constraints::FeasibilityInstance;
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;

/// Seed used when none is given, so that default runs are reproducible.
pub const DEFAULT_SEED: u64 = 0;

/// `rows x cols` matrix with i.i.d. standard complex normal entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<c64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Mat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(re * h, im * h)
    })
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the phases of
/// `diag(R)` moved into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<c64> {
    let g = ginibre(n, n, rng);
    let qr = g.qr();
    let q = qr.compute_thin_Q();
    let r = qr.R();
    let phase: Vec<c64> = (0..n)
        .map(|j| {
            let d = r[(j, j)];
            let a = d.norm();
            if a == 0.0 {
                c64::new(1.0, 0.0)
            } else {
                d / a
            }
        })
        .collect();
    Mat::from_fn(n, n, |i, j| q[(i, j)] * phase[j])
}

/// Normalized Wishart density `G G* / tr(G G*)`.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(n, n, rng);
    let w = HermitianMatrix::symmetrized((&g * g.adjoint()).as_ref());
    let t = w.trace();
    DensityMatrix::new((1.0 / t) * &w).expect("normalized Wishart matrix is a density")
}

/// Positive weights summing to one: i.i.d. uniform draws, normalized.
///
/// Not uniform on the simplex; the draws concentrate nearer the barycenter,
/// which is what the reference iteration counts were measured on.
pub fn random_simplex<R: Rng + ?Sized>(r: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let e: Vec<f64> = (0..r).map(|_| rng.random::<f64>()).collect();
        let total: f64 = e.iter().sum();
        let d: Vec<f64> = e.iter().map(|x| x / total).collect();
        if d.iter().all(|&x| x > 0.0) {
            return d;
        }
    }
}

/// `(G + G*) / 2` for a Ginibre `G`.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianMatrix {
    let g = ginibre(dim, dim, rng);
    HermitianMatrix::symmetrized(g.as_ref())
}

/// `G G*` for a `dim x rank` Ginibre `G`; rank `rank` almost surely.
pub fn random_psd<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> HermitianMatrix {
    let g = ginibre(dim, rank, rng);
    HermitianMatrix::symmetrized((&g * g.adjoint()).as_ref())
}

/// Parameters of a random feasible instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Number of unitaries mixed into the generating channel.
    pub r: usize,
    pub unital: bool,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Square spec (`m = n`) with unital constraints and the default seed.
    pub fn square(n: usize, k: usize, r: usize) -> Self {
        Self { n, m: n, k, r, unital: true, seed: DEFAULT_SEED }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be positive".into()));
        }
        if self.m != self.n {
            // Mixed-unitary generating channels need square Kraus operators.
            return Err(Error::InvalidSpec(format!("m = {} must equal n = {}", self.m, self.n)));
        }
        if self.k == 0 {
            return Err(Error::InvalidSpec("k must be at least 1".into()));
        }
        if self.r == 0 || self.r > self.n * self.m {
            return Err(Error::InvalidSpec(format!("r = {} outside 1..={}", self.r, self.n * self.m)));
        }
        Ok(())
    }
}

/// Mixed-unitary channel `P_true` of `r` Haar unitaries with simplex weights,
/// random density inputs and their images.
pub fn generate_feasible_instance<R: Rng + ?Sized>(
    spec: &GeneratorSpec,
    rng: &mut R,
) -> Result<(FeasibilityInstance, ChoiMatrix)> {
    spec.validate()?;
    let n = spec.n;
    let unitaries: Vec<Mat<c64>> = (0..spec.r).map(|_| random_unitary(n, rng)).collect();
    let weights = random_simplex(spec.r, rng);
    let p_true = choi_from_kraus(&KrausSet::new(unitaries)?, Some(&weights))?;
    let mut a = Vec::with_capacity(spec.k);
    let mut b = Vec::with_capacity(spec.k);
    for _ in 0..spec.k {
        let x = random_density(n, rng);
        let y = apply_channel(&p_true, x.as_mat())?;
        b.push(DensityMatrix::new(HermitianMatrix::symmetrized(y.as_ref()))?);
        a.push(x);
    }
    let inst = FeasibilityInstance::new(n, spec.m, a, b, spec.unital)?;
    Ok((inst, p_true))
}

/// [`generate_feasible_instance`] with a generator seeded from `spec.seed`.
pub fn generate_from_seed(spec: &GeneratorSpec) -> Result<(FeasibilityInstance, ChoiMatrix)> {
    generate_feasible_instance(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}
