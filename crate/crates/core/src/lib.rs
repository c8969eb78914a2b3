//! Non-adaptive noisy 20-questions search for a target moving with
//! piecewise-constant velocity inside the reflecting unit cube.
//!
//! The crate covers the whole pipeline:
//!
//! * [`kinematics`]: reflected motion and the cell quantizer,
//! * [`channels`]: query-dependent BSC / AWGN oracles,
//! * [`infodensity`]: information density, its moments and the capacity of
//!   the query-dependent channel,
//! * [`trajectories`]: enumeration of quantized trajectory sets,
//! * [`querying`]: random query codebooks,
//! * [`search`]: the slot-by-slot query/decode procedure,
//! * [`bounds`]: finite-length and second-order resolution bounds,
//! * [`montecarlo`]: seeded, thread-count independent trial orchestration.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bounds;
pub mod channels;
mod error;
pub mod infodensity;
pub mod kinematics;
pub mod montecarlo;
pub mod numeric;
pub mod querying;
pub mod search;
pub mod trajectories;

pub use error::{Error, Result};
