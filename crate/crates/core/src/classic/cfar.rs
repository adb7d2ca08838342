//! Ordered-statistic CFAR along the range axis of a range-angle image.

use serde::{Deserialize, Serialize};

use super::RangeAngleImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarParams {
    /// Guard cells on each side of the cell under test.
    pub guard: usize,
    /// Training cells on each side.
    pub train: usize,
    /// Rank (1-based, ascending) of the order statistic among `2 * train` cells.
    pub k_rank: usize,
    pub alpha: f64,
}

/// Statistic the image cells follow under noise only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLaw {
    /// Exponential cells (square-law power).
    Power,
    /// Rayleigh cells (envelope).
    Amplitude,
}

impl CfarParams {
    /// Parameters with `alpha` chosen for the requested false-alarm rate.
    pub fn calibrated(guard: usize, train: usize, k_rank: usize, pfa: f64, law: CellLaw) -> Self {
        Self {
            guard,
            train,
            k_rank,
            alpha: os_cfar_alpha(2 * train, k_rank, pfa, law),
        }
    }

    pub fn validate(&self, axis_len: usize) -> Result<()> {
        if self.guard < 1 || self.train < 1 {
            return Err(Error::InvalidConfig("cfar guard and train must be >= 1".into()));
        }
        if self.k_rank < 1 || self.k_rank > 2 * self.train {
            return Err(Error::InvalidConfig(format!(
                "cfar rank {} outside [1, {}]",
                self.k_rank,
                2 * self.train
            )));
        }
        if 2 * (self.guard + self.train) + 1 > axis_len {
            return Err(Error::InvalidConfig(format!(
                "cfar window of {} cells exceeds axis of {axis_len}",
                2 * (self.guard + self.train) + 1
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("cfar alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Closed-form false-alarm probability of OS-CFAR with `n` reference cells,
/// rank `k`, and threshold `alpha * X_(k)`.
///
/// For exponential cells `P = prod_{i<k} (n-i)/(n-i+T)` with `T = alpha`;
/// Rayleigh envelopes reduce to the same form with `T = alpha^2`.
pub fn os_cfar_pfa(n: usize, k: usize, alpha: f64, law: CellLaw) -> f64 {
    let t = match law {
        CellLaw::Power => alpha,
        CellLaw::Amplitude => alpha * alpha,
    };
    (0..k).map(|i| (n - i) as f64 / ((n - i) as f64 + t)).product()
}

/// Inverse of [`os_cfar_pfa`] by bisection.
pub fn os_cfar_alpha(n: usize, k: usize, pfa: f64, law: CellLaw) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while os_cfar_pfa(n, k, hi, law) > pfa {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if os_cfar_pfa(n, k, mid, law) > pfa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Binary detection mask with the same `[range][angle]` layout as `rai`.
///
/// Windows near the ends of the range axis shrink to the cells available; the
/// rank is scaled to keep the same quantile of the shrunken window.
pub fn os_cfar(rai: &RangeAngleImage, p: &CfarParams) -> Result<Vec<bool>> {
    p.validate(rai.n_range)?;
    let (nr, na) = (rai.n_range, rai.n_angle);
    let full = 2 * p.train;
    let mut mask = vec![false; nr * na];
    let mut refs = Vec::with_capacity(full);
    for a in 0..na {
        for r in 0..nr {
            refs.clear();
            let reach = p.guard + p.train;
            let lo = r.saturating_sub(reach);
            let hi = (r + reach).min(nr - 1);
            for i in lo..=hi {
                if i.abs_diff(r) > p.guard {
                    refs.push(rai.at(i, a));
                }
            }
            if refs.is_empty() {
                continue;
            }
            let k = if refs.len() == full {
                p.k_rank
            } else {
                ((p.k_rank * refs.len()).div_ceil(full)).clamp(1, refs.len())
            };
            refs.select_nth_unstable_by(k - 1, |x, y| x.total_cmp(y));
            let threshold = p.alpha * refs[k - 1];
            mask[r * na + a] = rai.at(r, a) > threshold;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn image(nr: usize, na: usize, f: impl Fn(usize, usize) -> f64) -> RangeAngleImage {
        RangeAngleImage {
            n_range: nr,
            n_angle: na,
            data: (0..nr * na).map(|i| f(i / na, i % na)).collect(),
            angles_deg: (0..na).map(|a| a as f64).collect(),
            range_bin_m: 0.1,
        }
    }

    fn params() -> CfarParams {
        CfarParams::calibrated(2, 8, 12, 1e-3, CellLaw::Power)
    }

    #[test]
    fn flat_image_yields_nothing() {
        let rai = image(64, 4, |_, _| 3.0);
        assert!(os_cfar(&rai, &params()).unwrap().iter().all(|&m| !m));
    }

    #[test]
    fn impulse_is_the_only_detection() {
        let rai = image(64, 4, |r, a| if (r, a) == (30, 2) { 1.0 } else { 1e-12 });
        let mask = os_cfar(&rai, &params()).unwrap();
        let hits: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        assert_eq!(hits, vec![30 * 4 + 2]);
    }

    #[test]
    fn mask_is_scale_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let rai = image(128, 8, |_, _| 0.0);
        let rai = RangeAngleImage {
            data: rai.data.iter().map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect(),
            ..rai
        };
        let p = CfarParams { alpha: 2.0, ..params() };
        let a = os_cfar(&rai, &p).unwrap();
        let b = os_cfar(&rai.scaled(17.5), &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_inverts_closed_form() {
        for law in [CellLaw::Power, CellLaw::Amplitude] {
            let alpha = os_cfar_alpha(16, 12, 1e-3, law);
            assert!((os_cfar_pfa(16, 12, alpha, law) - 1e-3).abs() < 1e-12);
        }
    }

    #[test]
    fn rayleigh_false_alarm_rate_matches_calibration() {
        let p = CfarParams::calibrated(2, 8, 12, 1e-3, CellLaw::Amplitude);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (nr, na) = (4096, 32);
        let data: Vec<f64> = (0..nr * na)
            .map(|_| {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                (-2.0 * u.ln()).sqrt()
            })
            .collect();
        let rai = RangeAngleImage { data, ..image(nr, na, |_, _| 0.0) };
        let mask = os_cfar(&rai, &p).unwrap();
        let rate = mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64;
        assert!((2e-4..=5e-3).contains(&rate), "{rate}");
    }

    #[test]
    fn oversized_window_rejected() {
        let rai = image(16, 2, |_, _| 1.0);
        assert!(matches!(os_cfar(&rai, &params()), Err(Error::InvalidConfig(_))));
        let bad_rank = CfarParams { k_rank: 17, ..params() };
        assert!(bad_rank.validate(100).is_err());
    }
}
