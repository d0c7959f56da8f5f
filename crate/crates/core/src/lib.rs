//! Price-impact laboratory: long-memory order flow, permanent / transient /
//! surprise impact models, impact estimators, kernel inversion and
//! round-trip manipulation search.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod impact;
pub mod io;
pub mod manipulation;
pub mod numerics;
pub mod orderflow;
pub mod suite;
pub mod tape;

pub use error::{Error, Result};
pub use tape::{GeneratorTag, SignSeries, TradeTape, VolumeSeries, VolumeSpec};
