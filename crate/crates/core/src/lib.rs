//! Finite ontic models, overlap functionals and macrorealism bounds for
//! qutrit prepare-transform-measure fragments.

pub mod bounds;
pub mod error;
pub mod fragment;
pub mod lp;
pub mod ontic;
pub mod overlap;
pub mod ptm;
pub mod reproduce;
pub mod search;
pub mod support;

pub use error::{Error, Result};
