//! Multi-zone electricity market and grid-security toolkit.
//!
//! Participants first optimise their positions against a price forecast
//! ([`ltpo`]); the positions become day-ahead bids ([`bidding`]) that a
//! zonal welfare-maximising auction clears ([`market`]). Cost-minimising
//! economic dispatch and unit commitment ([`baseline`]) and a DC optimal
//! power flow ([`grid`]) serve as reference models. Any of these dispatches
//! can be redispatched to respect branch ratings and then stressed with
//! cascading-failure simulations ([`cascades`]). [`pipeline`] chains the
//! stages and writes the run artifacts.

pub mod baseline;
pub mod bidding;
pub mod cascades;
pub mod dispatch;
pub mod error;
pub mod grid;
pub mod ltpo;
pub mod market;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod solver;
pub mod verify;

pub use baseline::{economic_dispatch, unit_commitment, DispatchOptions};
pub use bidding::{form_bids, BidSet};
pub use cascades::{simulate_cascade, CascadeParams, CascadeResult, Contingency, RiskCurve};
pub use dispatch::{Blocking, CommitmentSchedule, DispatchResult, OperatingPoint};
pub use error::{Error, Result};
pub use grid::{Grid, PtdfMatrix, RedispatchResult};
pub use ltpo::{optimize_positions, PositionSchedule};
pub use market::{clear_market, MarketOptions, MarketResult};
pub use metrics::MetricsReport;
pub use model::{load_system, SystemModel};
pub use pipeline::{compare, run_pipeline, ModelKind, RunConfig};
