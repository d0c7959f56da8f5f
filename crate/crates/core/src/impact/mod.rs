//! Price formation under permanent, transient (propagator) and surprise
//! impact, plus the market-maker quotes dual to the surprise model.

mod kernel;
mod paths;
mod predictor;
mod quotes;

pub use kernel::Kernel;
pub use paths::{
    kyle_path, propagator_path, returns, simulate_prices, surprise_path, ImpactConfig, ImpactModel,
    MIN_BURN_IN,
};
pub use predictor::{kernel_from_predictor, ArPredictor};
pub use quotes::{quote_path, quotes, vol_per_trade_to_per_time, QuotePair};
