//! Finite-element solves of the transformed potential problems on the
//! stationary domain and the Dirichlet-to-Neumann map.

pub mod band;
pub mod bench;
pub mod mesh;
pub mod solve;

pub use mesh::{build_mesh, Mesh};
pub use solve::{
    dn_apply, dn_assemble, solve_mixed, solve_neumann, DnMatrix, MixedSolution, MixedSystem, NeumannSolution,
    Source, WallFlux,
};
