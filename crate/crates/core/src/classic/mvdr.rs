use num_complex::Complex64;

use super::RangeDopplerImage;
use crate::config::{derive_params, RadarConfig};
use crate::error::{Error, Result};

/// Nonnegative range-angle power map, `[range][angle]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAngleImage {
    pub n_range: usize,
    pub n_angle: usize,
    pub data: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub range_bin_m: f64,
}

impl RangeAngleImage {
    #[inline]
    pub fn at(&self, r: usize, a: usize) -> f64 {
        self.data[r * self.n_angle + a]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    /// Physical angle at a fractional column coordinate.
    pub fn angle_at(&self, col: f64) -> f64 {
        if self.n_angle == 1 {
            return self.angles_deg[0];
        }
        let lo = col.floor().clamp(0.0, (self.n_angle - 2) as f64) as usize;
        let t = col - lo as f64;
        self.angles_deg[lo] + t * (self.angles_deg[lo + 1] - self.angles_deg[lo])
    }
}

/// Steering vector `[1, e^{j phi}, e^{j 2 phi}, ...]` for azimuth `deg`.
pub fn steering(deg: f64, cfg: &RadarConfig, wavelength_m: f64) -> Vec<Complex64> {
    let phi = 2.0 * std::f64::consts::PI * cfg.antenna_spacing_m * deg.to_radians().sin() / wavelength_m;
    (0..cfg.n_rx).map(|k| Complex64::from_polar(1.0, k as f64 * phi)).collect()
}

/// Capon (MVDR) spectrum per range bin.
///
/// Snapshots are the Doppler bins of that range bin; the sample covariance is
/// diagonally loaded with `loading * trace / n_rx` before inversion. Range
/// bins with no energy at all map to zero power.
pub fn mvdr_rai(rdi: &RangeDopplerImage, cfg: &RadarConfig, angles_deg: &[f64], loading: f64) -> Result<RangeAngleImage> {
    let derived = derive_params(cfg)?;
    let m = rdi.n_rx;
    if m < 2 || m != cfg.n_rx {
        return Err(Error::shape(
            "mvdr_rai",
            format!("need at least 2 antennas matching the config, got {m}"),
        ));
    }
    if !(loading >= 0.0) {
        return Err(Error::InvalidConfig("diagonal loading must be nonnegative".into()));
    }
    let steer: Vec<Vec<Complex64>> = angles_deg
        .iter()
        .map(|&a| steering(a, cfg, derived.wavelength_m))
        .collect();
    let na = angles_deg.len();
    let mut out = RangeAngleImage {
        n_range: rdi.n_range,
        n_angle: na,
        data: vec![0.0; rdi.n_range * na],
        angles_deg: angles_deg.to_vec(),
        range_bin_m: rdi.range_bin_m,
    };
    let mut cov = vec![Complex64::new(0.0, 0.0); m * m];
    for r in 0..rdi.n_range {
        cov.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for dd in 0..rdi.n_doppler {
            for i in 0..m {
                let xi = rdi.at(i, r, dd);
                for j in 0..m {
                    cov[i * m + j] += xi * rdi.at(j, r, dd).conj();
                }
            }
        }
        let inv_n = 1.0 / rdi.n_doppler as f64;
        cov.iter_mut().for_each(|c| *c *= inv_n);
        let trace: f64 = (0..m).map(|i| cov[i * m + i].re).sum();
        if trace == 0.0 {
            continue;
        }
        for i in 0..m {
            cov[i * m + i] += loading * trace / m as f64;
        }
        let inv = invert(&cov, m, trace).ok_or(Error::Singular(r))?;
        for (ai, a) in steer.iter().enumerate() {
            let mut q = Complex64::new(0.0, 0.0);
            for i in 0..m {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..m {
                    row += inv[i * m + j] * a[j];
                }
                q += a[i].conj() * row;
            }
            if !(q.re > 0.0) {
                return Err(Error::Singular(r));
            }
            out.data[r * na + ai] = 1.0 / q.re;
        }
    }
    Ok(out)
}

/// Gauss-Jordan inverse with partial pivoting; `None` when a pivot vanishes
/// relative to `scale`.
fn invert(a: &[Complex64], n: usize, scale: f64) -> Option<Vec<Complex64>> {
    let mut w = a.to_vec();
    let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        inv[i * n + i] = Complex64::new(1.0, 0.0);
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| w[x * n + col].norm().total_cmp(&w[y * n + col].norm()))?;
        if w[piv * n + col].norm() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                w.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let p = w[col * n + col];
        for k in 0..n {
            w[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = w[row * n + col];
            if f.norm() == 0.0 {
                continue;
            }
            for k in 0..n {
                let (wc, ic) = (w[col * n + k], inv[col * n + k]);
                w[row * n + k] -= f * wc;
                inv[row * n + k] -= f * ic;
            }
        }
    }
    Some(inv)
}
