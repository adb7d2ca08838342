use serde::{Deserialize, Serialize};

use crate::config::RadarConfig;
use crate::error::{Error, Result};

/// How the receive antennas pass through the encoder/decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntennaMode {
    /// One network applied to every antenna, merged by the 1x1 head.
    Shared,
    /// Same topology, separate weights per antenna.
    Untied,
    /// Antennas stacked as input channels of a single network.
    Fused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub encoder_blocks: usize,
    pub initial_channels: usize,
    pub channel_growth: f64,
    pub dropout_rate: f64,
    pub latent_dim: usize,
    /// CFEL fast-time kernels; also the output range bins.
    pub n_range: usize,
    /// CFEL slow-time kernels; also the output angle bins.
    pub n_doppler: usize,
    pub n_rx: usize,
    pub samples: usize,
    pub chirps: usize,
    pub fast_rate_hz: f64,
    pub slow_rate_hz: f64,
    pub antenna_mode: AntennaMode,
}

impl ArchConfig {
    pub fn full() -> Self {
        Self {
            encoder_blocks: 6,
            initial_channels: 16,
            channel_growth: 1.6,
            dropout_rate: 0.4,
            latent_dim: 140,
            n_range: 128,
            n_doppler: 32,
            n_rx: 2,
            samples: 256,
            chirps: 32,
            fast_rate_hz: 256.0 / 261.0e-6,
            slow_rate_hz: 1.0 / 520.0e-6,
            antenna_mode: AntennaMode::Shared,
        }
    }

    /// Two-block network sized for the desk radar profile.
    /// Desk-scale model; the two antennas enter as channels of one branch.
    pub fn desk() -> Self {
        Self::desk_for(&RadarConfig::desk())
    }

    pub fn desk_for(cfg: &RadarConfig) -> Self {
        Self {
            antenna_mode: AntennaMode::Fused,
            ..Self::for_radar(cfg, 2, 16, 32)
        }
    }

    /// Input and output dimensions taken from `cfg`.
    pub fn for_radar(cfg: &RadarConfig, encoder_blocks: usize, initial_channels: usize, latent_dim: usize) -> Self {
        Self {
            encoder_blocks,
            initial_channels,
            latent_dim,
            n_range: cfg.n_range_bins,
            n_doppler: cfg.n_angle_bins,
            n_rx: cfg.n_rx,
            samples: cfg.n_samples,
            chirps: cfg.n_chirps,
            fast_rate_hz: cfg.n_samples as f64 / cfg.chirp_time_s,
            slow_rate_hz: 1.0 / cfg.chirp_repetition_s,
            ..Self::full()
        }
    }

    pub fn decoder_blocks(&self) -> usize {
        self.encoder_blocks.saturating_sub(1)
    }

    /// Channels per encoder block: `c[0] = initial`, `c[i+1] = floor(c[i] * growth)`.
    pub fn channels(&self) -> Vec<usize> {
        let mut c = vec![self.initial_channels];
        for i in 1..self.encoder_blocks {
            c.push((c[i - 1] as f64 * self.channel_growth).floor() as usize);
        }
        c
    }

    /// Spatial size after each encoder block's downsampling; every block but
    /// the last halves both axes.
    pub fn resolutions(&self) -> Vec<(usize, usize)> {
        let mut r = Vec::with_capacity(self.encoder_blocks);
        let (mut h, mut w) = (self.n_range, self.n_doppler);
        for i in 0..self.encoder_blocks {
            r.push((h, w));
            if i + 1 < self.encoder_blocks {
                h /= 2;
                w /= 2;
            }
        }
        r
    }

    pub fn branches(&self) -> usize {
        match self.antenna_mode {
            AntennaMode::Fused => 1,
            _ => self.n_rx,
        }
    }

    pub fn input_channels(&self) -> usize {
        match self.antenna_mode {
            AntennaMode::Fused => 2 * self.n_rx,
            _ => 2,
        }
    }

    /// Flattened bottleneck feature size per branch.
    pub fn flat_features(&self) -> usize {
        let (h, w) = self.resolutions()[self.encoder_blocks - 1];
        self.channels()[self.encoder_blocks - 1] * h * w
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.encoder_blocks < 2 {
            return bad(format!("need at least 2 encoder blocks, got {}", self.encoder_blocks));
        }
        if self.initial_channels == 0 || self.latent_dim == 0 || self.n_rx == 0 {
            return bad("channels, latent width and antennas must be positive".into());
        }
        if !(self.channel_growth >= 1.0) {
            return bad(format!("channel growth {} below 1", self.channel_growth));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        let f = 1usize << (self.encoder_blocks - 1);
        if !self.n_range.is_multiple_of(f) || !self.n_doppler.is_multiple_of(f) {
            return bad(format!(
                "{}x{} input cannot be halved {} times",
                self.n_range,
                self.n_doppler,
                self.encoder_blocks - 1
            ));
        }
        if self.samples < 2 * self.n_range || self.chirps == 0 {
            return bad(format!(
                "{} fast-time kernels need at least {} samples",
                self.n_range,
                2 * self.n_range
            ));
        }
        Ok(())
    }
}
