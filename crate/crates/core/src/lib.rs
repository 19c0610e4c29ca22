//! Two-factor mean-reverting model for commodity futures.
//!
//! The log spot price is the sum of a short-term factor that reverts to zero
//! and a long-term factor that reverts to its own equilibrium. Log futures
//! prices are affine in the two factors, which gives a linear-Gaussian
//! state-space model:
//!
//! * [`model`]: parameters, the pricing adjustment `A(t)`, and the exact
//!   one-step transition and measurement matrices.
//! * [`kalman`]: filter, fixed-interval smoother and prediction-error likelihood.
//! * [`estimation`]: maximum likelihood with a grid-search multi-start.
//! * [`simulation`]: synthetic panels with known states.
//! * [`data`]: the panel type and its CSV layout.
//! * [`evaluation`]: per-contract RMSE, cross-sections, curve shape.

pub mod data;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod kalman;
pub mod model;
pub mod optim;
pub mod simulation;

pub use data::{load_panel, save_panel, FuturesPanel, PanelFormat, PriceScale, TRADING_DAY};
pub use error::{Error, Result};
pub use estimation::{fit_mle, grid_search, FitConfig, FitResult};
pub use kalman::{log_likelihood, run_filter, run_smoother, FilterOutput, SmootherOutput};
pub use model::{
    build_measurement, build_transition, compute_a, init_state, log_futures_price, InitMode,
    MeasurementModel, ModelParams, StateDistribution, StateVec, TransitionModel,
};
pub use simulation::{simulate, MaturityMode, SimOutput};
