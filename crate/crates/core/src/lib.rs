//! Age-of-information scheduling and beamforming for an RIS-assisted
//! downlink with simultaneous wireless information and power transfer.

pub mod aoi;
pub mod baselines;
pub mod channel;
pub mod conic;
pub mod error;
pub mod numerics;
pub mod sca;
pub mod sim;

pub use error::{Error, Result};
