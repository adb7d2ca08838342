use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::config::{derive_params, RadarConfig};
use crate::error::{Error, Result};
use crate::sim::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann if n == 1 => vec![1.0],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

/// Complex range-Doppler spectra, one per receive antenna.
///
/// Layout is `[rx][range][doppler]`; Doppler is centered so zero velocity
/// sits at bin `n_doppler / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerImage {
    pub n_rx: usize,
    pub n_range: usize,
    pub n_doppler: usize,
    pub data: Vec<Complex64>,
    pub range_bin_m: f64,
    pub velocity_bin_mps: f64,
}

impl RangeDopplerImage {
    pub fn zeros_like(other: &Self) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); other.data.len()],
            ..other.clone()
        }
    }

    #[inline]
    pub fn idx(&self, rx: usize, r: usize, d: usize) -> usize {
        (rx * self.n_range + r) * self.n_doppler + d
    }

    #[inline]
    pub fn at(&self, rx: usize, r: usize, d: usize) -> Complex64 {
        self.data[self.idx(rx, r, d)]
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.n_rx == other.n_rx && self.n_range == other.n_range && self.n_doppler == other.n_doppler
    }

    /// Velocity at the center of Doppler bin `d`.
    pub fn velocity_at(&self, d: usize) -> f64 {
        (d as f64 - (self.n_doppler / 2) as f64) * self.velocity_bin_mps
    }

    /// Magnitude of antenna `rx`, `[range][doppler]`.
    pub fn magnitude(&self, rx: usize) -> Vec<f64> {
        let len = self.n_range * self.n_doppler;
        self.data[rx * len..(rx + 1) * len].iter().map(|c| c.norm()).collect()
    }
}

/// Mean-removed, windowed fast-time FFT (positive half) followed by a
/// windowed slow-time FFT per range bin.
pub fn range_doppler(frame: &Frame, cfg: &RadarConfig, window_ft: &[f64], window_st: &[f64]) -> Result<RangeDopplerImage> {
    let d = derive_params(cfg)?;
    frame.check_dims(cfg)?;
    let (ns, nc, nr) = (cfg.n_samples, cfg.n_chirps, cfg.n_range_bins);
    if window_ft.len() != ns || window_st.len() != nc {
        return Err(Error::shape(
            "range_doppler",
            format!(
                "windows are {}/{} long, frame is {ns} samples x {nc} chirps",
                window_ft.len(),
                window_st.len()
            ),
        ));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft_ft = planner.plan_fft_forward(ns);
    let fft_st = planner.plan_fft_forward(nc);

    let mut out = RangeDopplerImage {
        n_rx: cfg.n_rx,
        n_range: nr,
        n_doppler: nc,
        data: vec![Complex64::new(0.0, 0.0); cfg.n_rx * nr * nc],
        range_bin_m: d.range_resolution_m,
        velocity_bin_mps: d.velocity_resolution_mps,
    };
    let mut chirp = vec![Complex64::new(0.0, 0.0); ns];
    let mut slow = vec![Complex64::new(0.0, 0.0); nc];
    // range spectra per chirp: [range][chirp]
    let mut rs = vec![Complex64::new(0.0, 0.0); nr * nc];
    for rx in 0..cfg.n_rx {
        for n in 0..nc {
            let mean = (0..ns).map(|m| frame.get(m, n, rx)).sum::<f64>() / ns as f64;
            for m in 0..ns {
                chirp[m] = Complex64::new((frame.get(m, n, rx) - mean) * window_ft[m], 0.0);
            }
            fft_ft.process(&mut chirp);
            for r in 0..nr {
                rs[r * nc + n] = chirp[r];
            }
        }
        for r in 0..nr {
            for n in 0..nc {
                slow[n] = rs[r * nc + n] * window_st[n];
            }
            fft_st.process(&mut slow);
            for k in 0..nc {
                let centered = (k + nc / 2) % nc;
                let i = out.idx(rx, r, centered);
                out.data[i] = slow[k];
            }
        }
    }
    Ok(out)
}
