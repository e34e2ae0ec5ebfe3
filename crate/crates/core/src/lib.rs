//! Construction of quantum channels (CPTP maps) that send prescribed density
//! matrices to prescribed density matrices.
//!
//! The unknown is the Choi matrix `P` of the channel. Feasibility means `P` is
//! positive semidefinite and satisfies a set of affine equations (channel
//! action, trace preservation, optionally unitality). The [`solvers`] find
//! such a `P` by alternating projections or Douglas-Rachford splitting, and
//! the [`heuristics`] steer the rank of the solution up or down.
//!
//! ```
//! use choifit::{assemble_operator, dr_solve, generate_from_seed, GeneratorSpec, HermitianMatrix, SolverConfig};
//!
//! let (inst, _) = generate_from_seed(&GeneratorSpec::square(3, 2, 3)).unwrap();
//! let op = assemble_operator(&inst).unwrap();
//! let start = HermitianMatrix::scaled_identity(9, 9.0);
//! let trace = dr_solve(&op, &start, &SolverConfig::default()).unwrap();
//! assert!(trace.converged);
//! ```

pub mod channel;
pub mod constraints;
pub mod error;
pub mod heuristics;
pub mod hermitian;
pub mod instance_io;
pub mod solvers;
pub mod verify;

pub use channel::{
    apply_channel, choi_from_kraus, kraus_from_choi, validate_tp_choi, ChoiMatrix, DensityMatrix, KrausSet, TpReport,
};
pub use constraints::{assemble_operator, facial_restrict, AffineOperator, ConstraintSystem, FeasibilityInstance, RowLabel};
pub use error::{Error, Result};
pub use heuristics::{facial_reduction_min_rank, max_rank_search, rank_scan, RankSearchReport};
pub use hermitian::{
    eigh, numerical_rank, project_psd, project_psd_rank, smat, svec, HermitianMatrix, SpectralDecomposition,
};
pub use instance_io::{generate_feasible_instance, generate_from_seed, GeneratorSpec, DEFAULT_SEED};
pub use solvers::{cos_angle, dr_solve, map_solve, rank_constrained_solve, solve, Method, SolveTrace, SolverConfig};
pub use verify::{certify, Certificate, Tolerances};
