//! Truncated tensor algebra, path signatures, elementary differentials and
//! the step-N Euler and log-ODE schemes for differential equations driven by
//! piecewise-linear or group-valued signals.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod error;
pub mod harness;
mod jet;
pub mod schemes;
pub mod signature;
pub mod tensor;
pub mod vector_field;

pub use error::{Error, Result};
pub use harness::{ConvergenceReport, StudyStatus};
pub use schemes::{Driver, LogOdeVariant, Partition, Scheme, SchemeConfig, Trajectory};
pub use signature::{GroupIncrementDriver, PiecewiseLinearPath};
pub use tensor::TruncatedTensor;
pub use vector_field::{Jet, PolynomialMap, VectorFieldSystem};
