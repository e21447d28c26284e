//! Statistical checks of the limit theorems and the auxiliary estimates,
//! each producing a table plus pass/fail flags.

pub mod bridge;
pub mod clt;
pub mod curves;
pub mod drift;
pub mod order;
pub mod tails;

pub use bridge::{variance_bridge, BridgeReport, BridgeRow};
pub use clt::{clt_check, ks_statistic, CltReport};
pub use curves::{concentration_curve, ConcentrationCurve, ConcentrationStatistic};
pub use drift::{drift_condition_check, lyapunov_constants, DriftReport, DriftRow, LyapunovConstants};
pub use order::{strong_order_regression, StrongOrderReport, StrongOrderSettings};
pub use tails::{check_resolution, tail_ratio_table, TailRatioTable, TailRow, TailStatistic};
