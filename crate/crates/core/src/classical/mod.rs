//! Classical counterparts of the quantum solvers: phase-space densities,
//! Langevin walkers and the Gaussian-closure centroid filter.

pub mod cumulant;
pub mod langevin;
pub mod newton;
pub mod phase_space;

pub use cumulant::{cumulant_step, CumulantOptions, CumulantState};
pub use langevin::{langevin_step, LangevinWalker};
pub use newton::{orbit_bounds, rk4_step, rk4_tangent_step, TangentState};
pub use phase_space::{fokker_planck_step, kushner_step, liouville_step, PhaseSpaceStep};
