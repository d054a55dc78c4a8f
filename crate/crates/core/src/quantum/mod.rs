//! Pure-state and density-matrix evolution on a position grid.

pub mod density;
pub mod sse;
pub mod state;
pub mod wigner;

pub use density::{DensityState, LindbladStep};
pub use sse::{MeasurementRecord, SplitStep, StepInfo};
pub use state::{perturb_initial, Displacer, MomentEvaluator, MomentSet, SpatialState};
pub use wigner::{wigner_grid, wigner_transform};
