//! Alternating projections (MAP) and Douglas-Rachford (DR) for
//! `find P in A ∩ B`, with `A` the affine constraint set and `B` the PSD cone
//! (or, with a rank bound, the PSD matrices of rank at most `rank_bound`).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::ChoiMatrix;
use crate::constraints::AffineOperator;
use crate::error::{Error, Result};
use crate::hermitian::{eigenvalues, numerical_rank_of_spectrum, psd_projection, HermitianMatrix};

/// Norms below this make an angle meaningless; the cosine is then reported as 0.
pub const COS_NORM_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Map,
    #[default]
    Dr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::Dr => "dr",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "map" => Ok(Method::Map),
            "dr" => Ok(Method::Dr),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

/// Which set DR reflects through first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionOrder {
    /// `x+ = (x + R_A(R_B(x))) / 2`; the monitored iterate is `P_B(x)`.
    #[default]
    PsdFirst,
    /// `x+ = (x + R_B(R_A(x))) / 2`; the monitored iterate is `P_B(R_A(x))`.
    AffineFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub toler: f64,
    pub iterlimit: usize,
    pub method: Method,
    pub rank_bound: Option<usize>,
    /// Keep per-iteration residuals and cosines.
    pub record_trace: bool,
    pub reflection_order: ReflectionOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            toler: 1e-14,
            iterlimit: 3500,
            method: Method::Dr,
            rank_bound: None,
            record_trace: true,
            reflection_order: ReflectionOrder::PsdFirst,
        }
    }
}

impl SolverConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_rank_bound(mut self, rank_bound: Option<usize>) -> Self {
        self.rank_bound = rank_bound;
        self
    }

    pub fn with_iterlimit(mut self, iterlimit: usize) -> Self {
        self.iterlimit = iterlimit;
        self
    }

    pub fn with_toler(mut self, toler: f64) -> Self {
        self.toler = toler;
        self
    }

    /// Checks the config for matrices of side `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.toler > 0.0 && self.toler.is_finite()) {
            return Err(Error::InvalidConfig(format!("toler must be positive, got {}", self.toler)));
        }
        if self.iterlimit == 0 {
            return Err(Error::InvalidConfig("iterlimit must be at least 1".into()));
        }
        if let Some(r) = self.rank_bound {
            if r == 0 || r > dim {
                return Err(Error::RankOutOfRange { rank: r, dim });
            }
        }
        Ok(())
    }
}

/// Outcome and diagnostics of one solve.
#[derive(Clone, Debug, Serialize)]
pub struct SolveTrace {
    pub method: Method,
    pub rank_bound: Option<usize>,
    pub iterations: usize,
    /// Stopping measure per iteration: the affine residual of the monitored
    /// PSD iterate, combined for unbounded MAP with the negative part of the
    /// smallest eigenvalue of the affine iterate.
    pub residual_history: Vec<f64>,
    pub cos_history: Vec<f64>,
    /// 0 when no cosine was computed.
    pub max_cos: f64,
    pub psd_projection_seconds: f64,
    pub affine_projection_seconds: f64,
    #[serde(skip)]
    pub final_p: HermitianMatrix,
    pub final_rank: usize,
    /// Affine residual norm of `final_p`.
    pub final_residual: f64,
    pub final_min_eigenvalue: f64,
    pub converged: bool,
}

impl SolveTrace {
    /// The final iterate as the Choi matrix of an `n -> m` channel.
    pub fn choi(&self, n: usize, m: usize) -> Result<ChoiMatrix> {
        ChoiMatrix::new(n, m, self.final_p.clone())
    }
}

/// `<u, v> / (|u| |v|)`, or 0 when either norm is below [`COS_NORM_FLOOR`].
pub fn cos_between(u: &HermitianMatrix, v: &HermitianMatrix) -> f64 {
    let (nu, nv) = (u.frobenius_norm(), v.frobenius_norm());
    if nu < COS_NORM_FLOOR || nv < COS_NORM_FLOOR {
        return 0.0;
    }
    (u.inner(v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// Cosine of the angle between `a_next - b` and `a - b`.
pub fn cos_angle(a_next: &HermitianMatrix, b: &HermitianMatrix, a: &HermitianMatrix) -> f64 {
    cos_between(&(a_next - b), &(a - b))
}

struct Recorder<'a> {
    cfg: &'a SolverConfig,
    iterations: usize,
    residuals: Vec<f64>,
    cosines: Vec<f64>,
    max_cos: Option<f64>,
    psd_seconds: f64,
    affine_seconds: f64,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a SolverConfig) -> Self {
        Self {
            cfg,
            iterations: 0,
            residuals: Vec::new(),
            cosines: Vec::new(),
            max_cos: None,
            psd_seconds: 0.0,
            affine_seconds: 0.0,
        }
    }

    fn psd<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.psd_seconds += start.elapsed().as_secs_f64();
        out
    }

    fn affine<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.affine_seconds += start.elapsed().as_secs_f64();
        out
    }

    fn residual(&mut self, r: f64) {
        self.iterations += 1;
        if self.cfg.record_trace {
            self.residuals.push(r);
        }
    }

    fn cos(&mut self, c: f64) {
        self.max_cos = Some(self.max_cos.map_or(c, |m| m.max(c)));
        if self.cfg.record_trace {
            self.cosines.push(c);
        }
    }

    fn finish(self, final_p: HermitianMatrix, final_residual: f64, converged: bool) -> Result<SolveTrace> {
        let spectrum = eigenvalues(&final_p)?;
        Ok(SolveTrace {
            method: self.cfg.method,
            rank_bound: self.cfg.rank_bound,
            iterations: self.iterations,
            residual_history: self.residuals,
            cos_history: self.cosines,
            max_cos: self.max_cos.unwrap_or(0.0),
            psd_projection_seconds: self.psd_seconds,
            affine_projection_seconds: self.affine_seconds,
            final_rank: numerical_rank_of_spectrum(&spectrum),
            final_min_eigenvalue: spectrum.last().copied().unwrap_or(0.0),
            final_p,
            final_residual,
            converged,
        })
    }
}

fn check_start(op: &AffineOperator, x0: &HermitianMatrix, cfg: &SolverConfig) -> Result<()> {
    cfg.validate(op.dim())?;
    if x0.dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), found: x0.dim() });
    }
    Ok(())
}

/// Runs the method selected in `cfg`.
pub fn solve(op: &AffineOperator, x0: &HermitianMatrix, cfg: &SolverConfig) -> Result<SolveTrace> {
    match cfg.method {
        Method::Map => map_solve(op, x0, cfg),
        Method::Dr => dr_solve(op, x0, cfg),
    }
}

/// [`solve`] with the PSD projection truncated to the `rank_bound` largest
/// eigenvalues, which must be set.
pub fn rank_constrained_solve(op: &AffineOperator, x0: &HermitianMatrix, cfg: &SolverConfig) -> Result<SolveTrace> {
    if cfg.rank_bound.is_none() {
        return Err(Error::InvalidConfig("rank-constrained solve needs a rank bound".into()));
    }
    solve(op, x0, cfg)
}

/// `a_0 = P_A(P0)`, then `b_l = P_B(a_l)`, `a_{l+1} = P_A(b_l)`.
///
/// Stops once `max(|res(b_l)|, max(-lambda_min(a_l), 0)) <= toler` (the
/// eigenvalue term is dropped under a rank bound) and returns `b_l`.
pub fn map_solve(op: &AffineOperator, p0: &HermitianMatrix, cfg: &SolverConfig) -> Result<SolveTrace> {
    check_start(op, p0, cfg)?;
    let mut rec = Recorder::new(cfg);
    let mut a = rec.affine(|| op.project_affine(p0))?;
    loop {
        let proj = rec.psd(|| psd_projection(&a, cfg.rank_bound))?;
        let b = proj.matrix;
        let residual = op.residual_norm(&b)?;
        let measure = match cfg.rank_bound {
            Some(_) => residual,
            None => {
                let lambda_min = proj.input_eigenvalues.last().copied().unwrap_or(0.0);
                residual.max(-lambda_min)
            }
        };
        rec.residual(measure);
        if measure <= cfg.toler {
            return rec.finish(b, residual, true);
        }
        if rec.iterations >= cfg.iterlimit {
            return rec.finish(b, residual, false);
        }
        let a_next = rec.affine(|| op.project_affine(&b))?;
        rec.cos(cos_angle(&a_next, &b, &a));
        a = a_next;
    }
}

/// `x_{l+1} = (x_l + R_A(R_B(x_l))) / 2`, monitoring `p_l = P_B(x_l)`.
///
/// `p_l` is PSD by construction, so convergence only asks for
/// `|res(p_l)| <= toler`. Cosines are taken between successive displacements
/// `p_{l+1} - p_l` and `p_l - p_{l-1}`.
pub fn dr_solve(op: &AffineOperator, x0: &HermitianMatrix, cfg: &SolverConfig) -> Result<SolveTrace> {
    check_start(op, x0, cfg)?;
    let mut rec = Recorder::new(cfg);
    let mut x = x0.clone();
    let mut prev_p: Option<HermitianMatrix> = None;
    let mut prev_step: Option<HermitianMatrix> = None;
    loop {
        let (p, a) = match cfg.reflection_order {
            ReflectionOrder::PsdFirst => (rec.psd(|| psd_projection(&x, cfg.rank_bound))?.matrix, None),
            ReflectionOrder::AffineFirst => {
                let a = rec.affine(|| op.project_affine(&x))?;
                let mut y = 2.0 * &a;
                y.add_scaled(-1.0, &x);
                (rec.psd(|| psd_projection(&y, cfg.rank_bound))?.matrix, Some(a))
            }
        };
        let residual = op.residual_norm(&p)?;
        rec.residual(residual);
        if let Some(pp) = &prev_p {
            let step = &p - pp;
            if let Some(ps) = &prev_step {
                rec.cos(cos_between(&step, ps));
            }
            prev_step = Some(step);
        }
        if residual <= cfg.toler {
            return rec.finish(p, residual, true);
        }
        if rec.iterations >= cfg.iterlimit {
            return rec.finish(p, residual, false);
        }
        match a {
            None => {
                let mut y = 2.0 * &p;
                y.add_scaled(-1.0, &x);
                let q = rec.affine(|| op.project_affine(&y))?;
                x.add_scaled(1.0, &q);
                x.add_scaled(-1.0, &p);
            }
            Some(a) => {
                x.add_scaled(1.0, &p);
                x.add_scaled(-1.0, &a);
            }
        }
        prev_p = Some(p);
    }
}
