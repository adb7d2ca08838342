use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::LabeledExample;
use crate::config::{derive_params, RadarConfig};
use crate::error::{Error, Result};

/// Shift every target of a raw example by `delta_m` in range.
///
/// Each chirp is lifted to its analytic (one-sided) form, multiplied by a
/// fast-time complex exponential at the beat frequency of `delta_m`, and
/// projected back onto the real axis. The label is rolled by the nearest
/// whole number of range bins.
pub fn range_shift_augment(example: &LabeledExample, delta_m: f64, cfg: &RadarConfig) -> Result<LabeledExample> {
    let d = derive_params(cfg)?;
    example.frame.check_dims(cfg)?;
    if !(delta_m.abs() <= 5.0 * d.range_resolution_m + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "range shift {delta_m} m exceeds five range bins"
        )));
    }
    for t in &example.targets {
        let r = t.range_m + delta_m;
        if !(r > 0.0 && r < d.max_range_m) {
            return Err(Error::InvalidConfig(format!(
                "shift moves target at {} m out of range",
                t.range_m
            )));
        }
    }

    let ns = cfg.n_samples;
    let shift_bins = delta_m / d.range_resolution_m;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(ns);
    let inv = planner.plan_fft_inverse(ns);
    let rotor: Vec<Complex64> = (0..ns)
        .map(|m| Complex64::from_polar(1.0 / ns as f64, 2.0 * PI * shift_bins * m as f64 / ns as f64))
        .collect();

    let mut out = example.clone();
    out.frame.normalized = false;
    let mut buf = vec![Complex64::new(0.0, 0.0); ns];
    for row in out.frame.data.chunks_exact_mut(ns) {
        for (b, &v) in buf.iter_mut().zip(row.iter()) {
            *b = Complex64::new(v as f64, 0.0);
        }
        fwd.process(&mut buf);
        one_sided(&mut buf);
        inv.process(&mut buf);
        for ((dst, z), r) in row.iter_mut().zip(&buf).zip(&rotor) {
            *dst = (z * r).re as f32;
        }
    }

    let roll = shift_bins.round() as isize;
    let (nr, na) = (cfg.n_range_bins, cfg.n_angle_bins);
    let mut label = vec![0u8; nr * na];
    for i in 0..nr {
        let src = i as isize - roll;
        if src >= 0 && (src as usize) < nr {
            label[i * na..(i + 1) * na]
                .copy_from_slice(&example.label[src as usize * na..(src as usize + 1) * na]);
        }
    }
    out.label = label;
    for t in out.targets.iter_mut() {
        t.range_m += delta_m;
    }
    Ok(out)
}

/// Spectrum of the analytic signal: keep DC (and Nyquist), double positive
/// frequencies, drop negative ones.
fn one_sided(spec: &mut [Complex64]) {
    let n = spec.len();
    let half = n / 2;
    for (k, s) in spec.iter_mut().enumerate() {
        if k == 0 || (n.is_multiple_of(2) && k == half) {
            continue;
        } else if k < n.div_ceil(2) {
            *s *= 2.0;
        } else {
            *s = Complex64::new(0.0, 0.0);
        }
    }
}
