//! Grid approximations of invariant sets, fiber-tube volumes, control
//! sensitivity ranks and controlled chains.

mod chain;
mod grid;
mod invariant;
mod volume;

pub use chain::{control_sensitivity, controlled_chain, regularity_rank, ChainStep};
pub use grid::{DistanceIndex, GridMeta, GridSet};
pub use invariant::{controlled_invariant, maximal_invariant};
pub use volume::{fiber_tube_volume, grid_image, FiberEvolution, TubeVolume};
