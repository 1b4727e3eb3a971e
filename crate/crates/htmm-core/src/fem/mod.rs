pub mod assemble;
pub mod recovery;
pub mod system;

pub use assemble::{
    assemble_elasticity, assemble_scalar, coupling_load, dirichlet_scalar, dirichlet_vector,
    neumann_load, volume_load_scalar, volume_load_vector,
};
pub use recovery::{recover_gradient, recover_hessian};
pub use system::{CsrMatrix, EnvelopeCholesky, ReducedSystem, SparseSystem, SOLVER_TOL};
