//! Jackknife extension of symmetric estimators, U-statistics and their
//! variance theory, with exact rational oracles for finite supports.

pub mod combin;
pub mod error;
pub mod exact;
pub mod exec;
pub mod families;
pub mod hoeffding;
pub mod kernels;
pub mod lstat;
pub mod quadrature;
pub mod scalar;
pub mod seeding;
pub mod ustat;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use families::Family;
pub use kernels::{Kernel, StatFn};
pub use lstat::LWeights;
pub use scalar::Rational;
pub use ustat::{Estimator, Sample};
