use serde::{Deserialize, Serialize};

use super::{dbscan, mvdr_rai, os_cfar, range_doppler, CellLaw, CfarParams, DetectionSet, MtiState, RangeAngleImage, Window};
use crate::config::RadarConfig;
use crate::error::Result;
use crate::sim::Frame;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineParams {
    pub window_ft: Window,
    pub window_st: Window,
    pub mti_alpha: f64,
    pub diagonal_loading: f64,
    pub cfar: CfarParams,
    pub eps_m: f64,
    pub min_pts: usize,
}

impl PipelineParams {
    pub fn full() -> Self {
        Self {
            window_ft: Window::Hann,
            window_st: Window::Hann,
            mti_alpha: 0.9,
            diagonal_loading: 1e-3,
            cfar: CfarParams::calibrated(2, 8, 12, 1e-3, CellLaw::Power),
            eps_m: 0.3,
            min_pts: 2,
        }
    }

    /// Shorter CFAR window for 16-bin range axes.
    pub fn desk() -> Self {
        Self {
            cfar: CfarParams::calibrated(1, 4, 6, 1e-3, CellLaw::Power),
            ..Self::full()
        }
    }

    /// `desk()` when the full CFAR window does not fit the range axis.
    pub fn for_config(cfg: &RadarConfig) -> Self {
        let full = Self::full();
        if full.cfar.validate(cfg.n_range_bins).is_ok() {
            full
        } else {
            Self::desk()
        }
    }
}

/// Per-stream classical detector; owns the MTI background.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: RadarConfig,
    params: PipelineParams,
    mti: MtiState,
    wf: Vec<f64>,
    ws: Vec<f64>,
    angles: Vec<f64>,
}

/// Intermediate images of one processed frame.
#[derive(Debug, Clone)]
pub struct FrameProducts {
    pub rai: RangeAngleImage,
    pub mask: Vec<bool>,
    pub detections: DetectionSet,
}

impl Detector {
    pub fn new(cfg: &RadarConfig, params: &PipelineParams) -> Result<Self> {
        cfg.validate()?;
        params.cfar.validate(cfg.n_range_bins)?;
        Ok(Self {
            cfg: cfg.clone(),
            params: params.clone(),
            mti: MtiState::new(params.mti_alpha),
            wf: params.window_ft.coefficients(cfg.n_samples),
            ws: params.window_st.coefficients(cfg.n_chirps),
            angles: cfg.angle_grid_deg(),
        })
    }

    pub fn reset(&mut self) {
        self.mti.reset();
    }

    pub fn process(&mut self, frame: &Frame) -> Result<FrameProducts> {
        let rdi = range_doppler(frame, &self.cfg, &self.wf, &self.ws)?;
        let rdi = self.mti.filter(&rdi)?;
        let rai = mvdr_rai(&rdi, &self.cfg, &self.angles, self.params.diagonal_loading)?;
        let mask = os_cfar(&rai, &self.params.cfar)?;
        let detections = dbscan(&mask, &rai, self.params.eps_m, self.params.min_pts);
        Ok(FrameProducts { rai, mask, detections })
    }
}

/// Runs the full chain over a time-ordered stream of frames.
pub fn detect_targets(frames: &[Frame], cfg: &RadarConfig, params: &PipelineParams) -> Result<Vec<DetectionSet>> {
    let mut det = Detector::new(cfg, params)?;
    frames
        .iter()
        .map(|f| det.process(f).map(|p| p.detections))
        .collect()
}
