//! Structured sparsity families, density mapping, masks and the structure-aware
//! sparse kernels used by every layer.

mod density;
pub(crate) mod mask;
mod sparse;

pub use density::{map_density, DensityMapping};
pub use mask::{generate_mask, validate_mask, Mask, StructurePattern};
pub use sparse::{spmv, spmv_transposed, SparseLayer};
