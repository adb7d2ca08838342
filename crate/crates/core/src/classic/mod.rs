//! Classical detection chain: range-Doppler FFT, MTI, MVDR beamforming,
//! OS-CFAR and DBSCAN.

mod cfar;
mod dbscan;
mod mti;
mod mvdr;
mod pipeline;
mod rdi;

pub use cfar::{os_cfar, os_cfar_alpha, os_cfar_pfa, CellLaw, CfarParams};
pub use dbscan::{dbscan, dbscan_points, Detection, DetectionSet};
pub use mti::{mti_filter, MtiState};
pub use mvdr::{mvdr_rai, steering, RangeAngleImage};
pub use pipeline::{detect_targets, Detector, FrameProducts, PipelineParams};
pub use rdi::{range_doppler, RangeDopplerImage, Window};
