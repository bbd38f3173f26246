//! Synthetic observing-system simulation: a periodic eddy field standing in
//! for a nature run, satellite-like samplers, and an optimal-interpolation
//! baseline.

pub mod oi;
pub mod sampling;
pub mod truth;

pub use oi::{oi_points, optimal_interp, OiConfig};
pub use sampling::{merge_obs, sample_all, sample_nadir, sample_swath, NadirConfig, SamplingConfig, SwathConfig};
pub use truth::{simulate_truth, RegimeConfig, Vortex};
