//! Independent feasibility check of a candidate Choi matrix.
//!
//! Everything is recomputed from the instance data: the constraint rows are
//! re-assembled (without any factorization), the channel action is evaluated
//! block by block, and the spectrum comes from a fresh eigendecomposition.

use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, validate_tp_choi, ChoiMatrix};
use crate::constraints::{ConstraintSystem, FeasibilityInstance};
use crate::error::{Error, Result};
use crate::hermitian::{eigenvalues, numerical_rank_of_spectrum};

/// Feasibility numbers of one Choi matrix against one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Euclidean norm of the stacked constraint residual.
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub frobenius_norm: f64,
    /// `max_{i <= j} |tr(P_ij) - delta_ij|`.
    pub trace_violation: f64,
    /// `max_l |T(A_l) - B_l|_F`.
    pub channel_violation: f64,
    pub unital_violation: Option<f64>,
    pub rank: usize,
}

/// Acceptance thresholds for [`Certificate::passes`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub residual: f64,
    /// Relative to `|P|_F`.
    pub psd: f64,
    pub trace: f64,
    pub channel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { residual: 1e-10, psd: 1e-12, trace: 1e-11, channel: 1e-10 }
    }
}

impl Certificate {
    /// Names of the checks that fail, empty when all pass.
    pub fn failures(&self, tol: &Tolerances) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.residual <= tol.residual) {
            out.push("residual");
        }
        if !(self.min_eigenvalue >= -tol.psd * self.frobenius_norm) {
            out.push("psd");
        }
        if !(self.trace_violation <= tol.trace) {
            out.push("trace");
        }
        if !(self.channel_violation <= tol.channel) {
            out.push("channel");
        }
        if self.unital_violation.is_some_and(|u| !(u <= tol.channel)) {
            out.push("unital");
        }
        out
    }

    pub fn passes(&self, tol: &Tolerances) -> bool {
        self.failures(tol).is_empty()
    }
}

pub fn certify(inst: &FeasibilityInstance, choi: &ChoiMatrix) -> Result<Certificate> {
    if choi.input_dim() != inst.input_dim() || choi.output_dim() != inst.output_dim() {
        return Err(Error::DimensionMismatch { expected: inst.choi_dim(), found: choi.matrix().dim() });
    }
    let residual = ConstraintSystem::assemble(inst).residual_norm(choi.matrix())?;
    let tp = validate_tp_choi(choi, inst.unital())?;
    let mut channel_violation = 0.0f64;
    for (a, b) in inst.inputs().iter().zip(inst.outputs()) {
        let image = apply_channel(choi, a.as_mat())?;
        channel_violation = channel_violation.max((&image - b.as_mat()).norm_l2());
    }
    let spectrum = eigenvalues(choi.matrix())?;
    Ok(Certificate {
        residual,
        min_eigenvalue: tp.min_eigenvalue,
        frobenius_norm: choi.matrix().frobenius_norm(),
        trace_violation: tp.trace_violation,
        channel_violation,
        unital_violation: tp.unital_violation,
        rank: numerical_rank_of_spectrum(&spectrum),
    })
}
