//! Measurement operators and sparsifying bases as matrix-free linear maps
//! with exact adjoints.

mod basis;
mod operator;

pub use basis::{BasisKind, SparsifyingBasis};
pub use operator::{fwht, make_measurement_ensemble, MeasurementEnsemble, RowSampledFastOperator};
