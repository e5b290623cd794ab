//! Renormalized GMN of arbitrary small states via the witness SDP.
mod embed;
mod problem;
mod solver;
mod witness;

pub use embed::{embed_complex, embed_entries, hermitian_basis, HermitianEntry};
pub use problem::{assemble_problem, SdpProblem, SparseSym, VariableGroups, SUPPORT_TOL};
pub use solver::{solve_interior_point, SolverOptions, SolverOutput};
pub use witness::{gmn_sdp, gmn_sdp_with, WitnessBlock, WitnessSolution, DEFAULT_TOL, MAX_SDP_QUBITS};
