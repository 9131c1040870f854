//! Diffusions, Hamiltonian families and sampled assumption checks.

mod assumptions;
mod coefficient;
mod diffusion;
mod hamiltonian;

pub use assumptions::{
    check_coercivity, ctilde, estimate_assumptions, estimate_l_with_offset, estimate_ssa4_l,
    grid_points, radial_samples, structure_defect, torus_distance, unit_directions,
    AssumptionEstimates, CoercivityCheck, CoercivityViolation, StructureDefect, StructureExponents,
    DIRECTIONS_2D, L_CAP,
};
pub use coefficient::{
    mat_vec, operator_norm, sym_eigen_range, Coefficient, FourierTerm, MatrixField,
};
pub use diffusion::{DiffusionConfig, DiffusionSpec};
pub use hamiltonian::{CustomHamiltonian, Family, GrowthMeta, HamiltonianSpec};
