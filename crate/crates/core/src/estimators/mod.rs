//! Measurement of impact observables from priced tapes, power-law fits, the
//! response decomposition and its inversion.

mod autocorr;
mod curve;
mod decomposition;
mod levinson;
mod master;
mod response;

pub use autocorr::{
    diffusivity, diffusivity_at, series_autocorrelation, sign_autocorr, sign_variance,
};
pub use curve::{
    fit_power_law, ConditionalResponse, CurveRole, KernelSample, LagCurve, PowerLawFit,
    PowerLawSource, Trend,
};
pub use decomposition::{
    invert_response, predict_response, predict_response_centered, InversionOptions,
    KernelInversion, ResponsePrediction, CONDITION_LIMIT, DEFAULT_J_TAIL,
};
pub use levinson::{innovations, levinson_durbin};
pub use master::{
    fit_barra, master_curve_rescale, BarraFit, MasterCurve, StockCurve, DEFAULT_DELTA,
};
pub use response::{
    conditional_response, log_volume_bins, response, rho, RhoEstimate, WindowScheme,
    MIN_BIN_OCCUPANCY,
};
