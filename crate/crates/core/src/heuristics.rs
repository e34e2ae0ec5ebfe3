//! Rank-shaping searches built on the solvers: raising the rank through
//! barycenters of feasible points, lowering it through facial reduction, and
//! scanning rank bounds downward.
//!
//! The heuristics set their own rank bounds; any `rank_bound` in the passed
//! config is ignored.

use serde::Serialize;

use crate::constraints::{facial_restrict, AffineOperator};
use crate::error::{Error, Result};
use crate::hermitian::{eigenvalues, eigh, numerical_rank, rank_threshold, HermitianMatrix};
use crate::solvers::{solve, Method, SolveTrace, SolverConfig};

/// Largest exponent tried when pushing the barycenter out of the PSD cone.
pub const MAX_OVERSHOOT_EXPONENT: u32 = 60;

/// Summary of a heuristic run.
#[derive(Clone, Debug, Serialize)]
pub struct RankSearchReport {
    /// Number of solver runs.
    pub rank_steps: usize,
    pub min_iters: usize,
    pub max_iters: usize,
    pub mean_iters: f64,
    pub max_cos: f64,
    pub achieved_rank: usize,
    /// Rank of the current point after each step.
    pub rank_sequence: Vec<usize>,
    /// Residual norm of the current point after each step.
    pub step_residuals: Vec<f64>,
    /// Residual norm of the returned matrix.
    pub residual: f64,
    /// False when some solve hit its iteration limit.
    pub converged: bool,
    #[serde(skip)]
    pub final_p: HermitianMatrix,
}

#[derive(Default)]
struct Steps {
    iterations: Vec<usize>,
    max_cos: f64,
    all_converged: bool,
}

impl Steps {
    fn new() -> Self {
        Self { iterations: Vec::new(), max_cos: 0.0, all_converged: true }
    }

    fn push(&mut self, trace: &SolveTrace) {
        self.iterations.push(trace.iterations);
        self.max_cos = self.max_cos.max(trace.max_cos);
        self.all_converged &= trace.converged;
    }

    fn report(
        self,
        final_p: HermitianMatrix,
        achieved_rank: usize,
        rank_sequence: Vec<usize>,
        step_residuals: Vec<f64>,
        converged: bool,
    ) -> RankSearchReport {
        let count = self.iterations.len().max(1);
        RankSearchReport {
            rank_steps: self.iterations.len(),
            min_iters: self.iterations.iter().copied().min().unwrap_or(0),
            max_iters: self.iterations.iter().copied().max().unwrap_or(0),
            mean_iters: self.iterations.iter().sum::<usize>() as f64 / count as f64,
            max_cos: self.max_cos,
            achieved_rank,
            residual: step_residuals.last().copied().unwrap_or(f64::NAN),
            rank_sequence,
            step_residuals,
            converged,
            final_p,
        }
    }
}

fn unbounded(cfg: &SolverConfig) -> SolverConfig {
    cfg.clone().with_rank_bound(None)
}

/// Raises the rank of a feasible point.
///
/// Starting from a solve at `N I` (`N = nm`), keeps the barycenter `P_c` of
/// all points found, restarts the solver from
/// `P_c + 2^i |d|^2 d` with `d = tr(P_c) P_c - N I` and the smallest `i`
/// that leaves the PSD cone, and stops when `P_c` has full rank or its rank
/// stops increasing.
pub fn max_rank_search(op: &AffineOperator, cfg: &SolverConfig) -> Result<RankSearchReport> {
    let cfg = unbounded(cfg);
    let dim = op.dim();
    let full = dim as f64;
    let mut steps = Steps::new();
    let first = solve(op, &HermitianMatrix::scaled_identity(dim, full), &cfg)?;
    if !first.converged {
        return Err(Error::InfeasibleOrHard(Box::new(first)));
    }
    steps.push(&first);
    let mut sum = first.final_p.clone();
    let mut count = 1usize;
    let mut center = first.final_p;
    let mut rank = first.final_rank;
    let mut ranks = vec![rank];
    let mut residuals = vec![op.residual_norm(&center)?];
    while rank < dim {
        let mut d = center.trace() * &center;
        d.add_scaled(-full, &HermitianMatrix::identity(dim));
        let scale = d.frobenius_norm().powi(2);
        let mut restart = None;
        for i in 0..=MAX_OVERSHOOT_EXPONENT {
            let mut candidate = center.clone();
            candidate.add_scaled(2f64.powi(i as i32) * scale, &d);
            if eigenvalues(&candidate)?.last().is_some_and(|&l| l < 0.0) {
                restart = Some(candidate);
                break;
            }
        }
        let Some(restart) = restart else {
            return Err(Error::DegenerateDirection { max_exponent: MAX_OVERSHOOT_EXPONENT });
        };
        let trace = solve(op, &restart, &cfg)?;
        steps.push(&trace);
        sum.add_scaled(1.0, &trace.final_p);
        count += 1;
        center = (1.0 / count as f64) * &sum;
        let next = numerical_rank(&center)?;
        ranks.push(next);
        residuals.push(op.residual_norm(&center)?);
        if next <= rank {
            rank = rank.max(next);
            break;
        }
        rank = next;
    }
    let converged = steps.all_converged;
    Ok(steps.report(center, rank, ranks, residuals, converged))
}

/// Lowers the rank by facial reduction.
///
/// Every solve uses alternating projections whatever `cfg.method` says: its
/// affine iterates approach the cone from outside, so the limit is singular
/// when a singular solution exists. Douglas-Rachford from the same start lands
/// in the interior. When the projections stall (feasible sets without
/// interior converge sublinearly), Douglas-Rachford takes over from the last
/// iterate, which already sits next to the boundary.
///
/// Solves from `-N I`, then repeatedly restricts the constraints to the face
/// spanned by the current solution's range, re-solves there from `-r I_r`, and
/// lifts the result back, for as long as the rank strictly decreases. A failed
/// restricted solve ends the loop with `converged = false` and the last
/// feasible point.
pub fn facial_reduction_min_rank(op: &AffineOperator, cfg: &SolverConfig) -> Result<RankSearchReport> {
    let cfg = unbounded(cfg);
    let dim = op.dim();
    let mut steps = Steps::new();
    let first = outside_in_solve(op, &HermitianMatrix::scaled_identity(dim, -(dim as f64)), &cfg)?;
    if !first.converged {
        return Err(Error::InfeasibleOrHard(Box::new(first)));
    }
    steps.push(&first);
    let mut rank = first.final_rank;
    let mut ranks = vec![rank];
    let mut residuals = vec![first.final_residual];
    let mut current = first.final_p;
    let mut converged = true;
    loop {
        let spectrum = eigh(&current)?;
        let sigma_max = spectrum.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        let basis = spectrum.dominant_basis(rank_threshold(dim, sigma_max));
        let r = basis.ncols();
        if r == 0 {
            break;
        }
        let restricted = facial_restrict(op, basis.as_ref())?;
        let trace = outside_in_solve(&restricted, &HermitianMatrix::scaled_identity(r, -(r as f64)), &cfg)?;
        steps.push(&trace);
        if !trace.converged {
            converged = false;
            break;
        }
        let lifted = trace.final_p.lift(basis.as_ref());
        let next = numerical_rank(&lifted)?;
        if next >= rank {
            break;
        }
        rank = next;
        ranks.push(rank);
        residuals.push(op.residual_norm(&lifted)?);
        current = lifted;
    }
    Ok(steps.report(current, rank, ranks, residuals, converged))
}

/// Alternating projections, finished by Douglas-Rachford from the last iterate
/// if they hit the iteration limit. Counts, histories and timings add up.
fn outside_in_solve(op: &AffineOperator, start: &HermitianMatrix, cfg: &SolverConfig) -> Result<SolveTrace> {
    let map = solve(op, start, &cfg.clone().with_method(Method::Map))?;
    if map.converged {
        return Ok(map);
    }
    let mut dr = solve(op, &map.final_p, &cfg.clone().with_method(Method::Dr))?;
    dr.iterations += map.iterations;
    dr.residual_history.splice(0..0, map.residual_history);
    dr.cos_history.splice(0..0, map.cos_history);
    dr.max_cos = dr.max_cos.max(map.max_cos);
    dr.psd_projection_seconds += map.psd_projection_seconds;
    dr.affine_projection_seconds += map.affine_projection_seconds;
    Ok(dr)
}

/// Solves with rank bounds `r_start, r_start - 1, ...`, each warm-started
/// from the previous solution, until a bound fails. The achieved rank is the
/// last bound that converged.
pub fn rank_scan(op: &AffineOperator, r_start: usize, cfg: &SolverConfig) -> Result<RankSearchReport> {
    rank_scan_with_start(op, r_start, cfg, true)
}

/// [`rank_scan`], with every solve cold-started from `N I` when `warm` is false.
pub fn rank_scan_with_start(
    op: &AffineOperator,
    r_start: usize,
    cfg: &SolverConfig,
    warm: bool,
) -> Result<RankSearchReport> {
    let dim = op.dim();
    if r_start == 0 || r_start > dim {
        return Err(Error::RankOutOfRange { rank: r_start, dim });
    }
    let cold = HermitianMatrix::scaled_identity(dim, dim as f64);
    let mut steps = Steps::new();
    let mut ranks = Vec::new();
    let mut residuals = Vec::new();
    let mut best: Option<(usize, SolveTrace)> = None;
    for bound in (1..=r_start).rev() {
        let start = match (&best, warm) {
            (Some((_, t)), true) => &t.final_p,
            _ => &cold,
        };
        let trace = solve(op, start, &cfg.clone().with_rank_bound(Some(bound)))?;
        steps.iterations.push(trace.iterations);
        steps.max_cos = steps.max_cos.max(trace.max_cos);
        if !trace.converged {
            if best.is_none() {
                return Err(Error::InfeasibleAtStart { rank: r_start, trace: Box::new(trace) });
            }
            break;
        }
        ranks.push(trace.final_rank);
        residuals.push(trace.final_residual);
        best = Some((bound, trace));
    }
    let (bound, trace) = best.expect("first bound converged");
    // A failed bound is the expected way to end the scan, not a failure.
    Ok(steps.report(trace.final_p, bound, ranks, residuals, true))
}
