//! Cutting-and-stacking constructions of binary stationary processes over
//! dyadic intervals of `[0, 1)`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adversary;
pub mod audit;
pub mod bits;
pub mod column;
pub mod dyadic;
pub mod estimator;
pub mod label;
pub mod process;
pub mod ryabko;
pub mod slowrate;
pub mod stats;

pub use column::{Column, ColumnError, ColumnExpr};
pub use dyadic::{Dyadic, DyadicError, DyadicInterval};
pub use label::{LabelError, LabelString, PatternCounter};
pub use process::{Enclosure, OrbitSample, ProcessError, ProcessHandle, ProcessKind};
