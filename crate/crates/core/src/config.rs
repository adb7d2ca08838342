//! Radar configuration and the quantities derived from it.
//!
//! All values are SI internally. Angles are the one exception: they are kept
//! in degrees because they only ever cross the configuration boundary and the
//! angle grid.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed used throughout (m/s).
///
/// The rounded value keeps the canonical 4 GHz sweep at a 3.75 cm range bin.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub chirp_time_s: f64,
    pub n_samples: usize,
    pub n_chirps: usize,
    pub chirp_repetition_s: f64,
    pub n_rx: usize,
    pub antenna_spacing_m: f64,
    pub adc_bits: u32,
    /// Nominal ADC clock. Metadata only: samples are spread uniformly over the chirp.
    pub adc_rate_hz: f64,
    pub n_range_bins: usize,
    pub n_angle_bins: usize,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            f_min_hz: 58.0e9,
            f_max_hz: 62.0e9,
            chirp_time_s: 261.0e-6,
            n_samples: 256,
            n_chirps: 32,
            chirp_repetition_s: 520.0e-6,
            n_rx: 2,
            antenna_spacing_m: 2.5e-3,
            adc_bits: 12,
            adc_rate_hz: 2.0e6,
            n_range_bins: 128,
            n_angle_bins: 32,
            angle_min_deg: -50.0,
            angle_max_deg: 50.0,
        }
    }
}

/// Quantities that follow from a [`RadarConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub bandwidth_hz: f64,
    pub center_freq_hz: f64,
    pub wavelength_m: f64,
    pub range_resolution_m: f64,
    pub max_range_m: f64,
    pub velocity_resolution_mps: f64,
    pub max_unambiguous_velocity_mps: f64,
    /// Effective fast-time sampling rate, `n_samples / chirp_time`.
    pub fast_time_rate_hz: f64,
    /// Slow-time sampling rate, `1 / chirp_repetition`.
    pub slow_time_rate_hz: f64,
}

impl RadarConfig {
    /// Reduced profile used for laptop-scale training runs: 1 GHz sweep,
    /// 32 samples x 8 chirps, 16 x 8 range-angle grid.
    pub fn desk() -> Self {
        Self {
            f_min_hz: 59.5e9,
            f_max_hz: 60.5e9,
            n_samples: 32,
            n_chirps: 8,
            n_range_bins: 16,
            n_angle_bins: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.f_max_hz > self.f_min_hz) {
            return bad("f_max must exceed f_min");
        }
        if !(self.f_min_hz > 0.0) {
            return bad("f_min must be positive");
        }
        if self.n_samples == 0
            || self.n_chirps == 0
            || self.n_rx == 0
            || self.n_range_bins == 0
            || self.n_angle_bins == 0
            || self.adc_bits == 0
        {
            return bad("all counts must be at least 1");
        }
        if !(self.chirp_time_s > 0.0) {
            return bad("chirp time must be positive");
        }
        if !(self.chirp_repetition_s >= self.chirp_time_s) {
            return bad("chirp repetition time must not be shorter than the chirp");
        }
        if !(self.antenna_spacing_m > 0.0) {
            return bad("antenna spacing must be positive");
        }
        if self.n_range_bins > self.n_samples / 2 {
            return bad("n_range_bins cannot exceed half the fast-time samples");
        }
        if !(self.angle_max_deg > self.angle_min_deg)
            || self.angle_min_deg < -90.0
            || self.angle_max_deg > 90.0
        {
            return bad("angle span must be increasing and within [-90, 90] degrees");
        }
        Ok(())
    }

    pub fn derive(&self) -> Result<DerivedParams> {
        derive_params(self)
    }

    /// Azimuth of every angle bin in degrees, endpoints inclusive.
    pub fn angle_grid_deg(&self) -> Vec<f64> {
        let n = self.n_angle_bins;
        if n == 1 {
            return vec![0.5 * (self.angle_min_deg + self.angle_max_deg)];
        }
        let step = (self.angle_max_deg - self.angle_min_deg) / (n - 1) as f64;
        (0..n).map(|i| self.angle_min_deg + i as f64 * step).collect()
    }

    /// Fractional angle-bin coordinate to degrees.
    pub fn angle_at_bin(&self, bin: f64) -> f64 {
        if self.n_angle_bins == 1 {
            return 0.5 * (self.angle_min_deg + self.angle_max_deg);
        }
        let step = (self.angle_max_deg - self.angle_min_deg) / (self.n_angle_bins - 1) as f64;
        self.angle_min_deg + bin * step
    }

    /// Degrees to fractional angle-bin coordinate.
    pub fn bin_at_angle(&self, deg: f64) -> f64 {
        if self.n_angle_bins == 1 {
            return 0.0;
        }
        let step = (self.angle_max_deg - self.angle_min_deg) / (self.n_angle_bins - 1) as f64;
        (deg - self.angle_min_deg) / step
    }

    pub fn frame_len(&self) -> usize {
        self.n_samples * self.n_chirps * self.n_rx
    }

    pub fn grid_len(&self) -> usize {
        self.n_range_bins * self.n_angle_bins
    }

    /// Serialize as `key = value` lines.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::from("# radar configuration (SI units, angles in degrees)\n");
        for (k, v) in self.kv_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn kv_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("f_min", fmt_f64(self.f_min_hz)),
            ("f_max", fmt_f64(self.f_max_hz)),
            ("chirp_time", fmt_f64(self.chirp_time_s)),
            ("n_samples", self.n_samples.to_string()),
            ("n_chirps", self.n_chirps.to_string()),
            ("chirp_repetition", fmt_f64(self.chirp_repetition_s)),
            ("n_rx", self.n_rx.to_string()),
            ("antenna_spacing", fmt_f64(self.antenna_spacing_m)),
            ("adc_bits", self.adc_bits.to_string()),
            ("adc_rate", fmt_f64(self.adc_rate_hz)),
            ("n_range_bins", self.n_range_bins.to_string()),
            ("n_angle_bins", self.n_angle_bins.to_string()),
            ("angle_min_deg", fmt_f64(self.angle_min_deg)),
            ("angle_max_deg", fmt_f64(self.angle_max_deg)),
        ]
    }

    /// Parse `key = value` text. Missing keys keep their values from `base`;
    /// unknown keys are rejected.
    pub fn from_kv_str(text: &str, base: RadarConfig, origin: &Path) -> Result<Self> {
        let mut cfg = base;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |detail: String| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                detail,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let f = || {
                value
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("{key}: {e}")))
            };
            let u = || {
                value
                    .parse::<usize>()
                    .map_err(|e| parse_err(format!("{key}: {e}")))
            };
            match key {
                "f_min" => cfg.f_min_hz = f()?,
                "f_max" => cfg.f_max_hz = f()?,
                "chirp_time" => cfg.chirp_time_s = f()?,
                "n_samples" => cfg.n_samples = u()?,
                "n_chirps" => cfg.n_chirps = u()?,
                "chirp_repetition" => cfg.chirp_repetition_s = f()?,
                "n_rx" => cfg.n_rx = u()?,
                "antenna_spacing" => cfg.antenna_spacing_m = f()?,
                "adc_bits" => cfg.adc_bits = u()? as u32,
                "adc_rate" => cfg.adc_rate_hz = f()?,
                "n_range_bins" => cfg.n_range_bins = u()?,
                "n_angle_bins" => cfg.n_angle_bins = u()?,
                "angle_min_deg" => cfg.angle_min_deg = f()?,
                "angle_max_deg" => cfg.angle_max_deg = f()?,
                other => return Err(parse_err(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: RadarConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text, base, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv_string()).map_err(|e| Error::io(path, e))
    }
}

fn fmt_f64(v: f64) -> String {
    // `{:?}` is the shortest representation that round-trips.
    format!("{v:?}")
}

pub fn derive_params(cfg: &RadarConfig) -> Result<DerivedParams> {
    cfg.validate()?;
    let bandwidth = cfg.f_max_hz - cfg.f_min_hz;
    let center = 0.5 * (cfg.f_min_hz + cfg.f_max_hz);
    let wavelength = SPEED_OF_LIGHT / center;
    let range_res = SPEED_OF_LIGHT / (2.0 * bandwidth);
    Ok(DerivedParams {
        bandwidth_hz: bandwidth,
        center_freq_hz: center,
        wavelength_m: wavelength,
        range_resolution_m: range_res,
        max_range_m: cfg.n_range_bins as f64 * range_res,
        velocity_resolution_mps: wavelength
            / (2.0 * cfg.n_chirps as f64 * cfg.chirp_repetition_s),
        max_unambiguous_velocity_mps: wavelength / (4.0 * cfg.chirp_repetition_s),
        fast_time_rate_hz: cfg.n_samples as f64 / cfg.chirp_time_s,
        slow_time_rate_hz: 1.0 / cfg.chirp_repetition_s,
    })
}
