//! Finite-difference derivatives, datasets and the candidate library.

mod dataset;
mod diff;
mod library;

pub use dataset::{Dataset, RowSource};
pub use diff::{finite_difference_space, finite_difference_time};
pub use library::{build_library, BasisDescriptor, BasisKind, BasisSet, CandidateLibrary, LibraryMode};
