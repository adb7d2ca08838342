use num_complex::Complex64;

use super::RangeDopplerImage;
use crate::error::{Error, Result};

/// Exponential background subtraction over a stream of range-Doppler images.
///
/// `out = rdi - background`, then `background <- alpha * background + (1 - alpha) * rdi`.
/// The background starts at zero, so the first image passes through unchanged.
#[derive(Debug, Clone)]
pub struct MtiState {
    pub alpha: f64,
    background: Option<Vec<Complex64>>,
    dims: Option<(usize, usize, usize)>,
}

impl MtiState {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            background: None,
            dims: None,
        }
    }

    pub fn reset(&mut self) {
        self.background = None;
        self.dims = None;
    }

    pub fn filter(&mut self, rdi: &RangeDopplerImage) -> Result<RangeDopplerImage> {
        let dims = (rdi.n_rx, rdi.n_range, rdi.n_doppler);
        match self.dims {
            Some(d) if d != dims => {
                return Err(Error::shape(
                    "mti_filter",
                    format!("stream is {d:?}, got image {dims:?}"),
                ))
            }
            _ => self.dims = Some(dims),
        }
        let bg = self
            .background
            .get_or_insert_with(|| vec![Complex64::new(0.0, 0.0); rdi.data.len()]);
        let mut out = rdi.clone();
        let a = self.alpha;
        for ((o, b), &x) in out.data.iter_mut().zip(bg.iter_mut()).zip(&rdi.data) {
            *o = x - *b;
            *b = *b * a + x * (1.0 - a);
        }
        Ok(out)
    }
}

pub fn mti_filter(state: &mut MtiState, rdi: &RangeDopplerImage) -> Result<RangeDopplerImage> {
    state.filter(rdi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(v: Complex64) -> RangeDopplerImage {
        RangeDopplerImage {
            n_rx: 2,
            n_range: 3,
            n_doppler: 4,
            data: (0..24).map(|i| v * (1.0 + i as f64)).collect(),
            range_bin_m: 0.1,
            velocity_bin_mps: 0.1,
        }
    }

    fn norm(x: &RangeDopplerImage) -> f64 {
        x.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn first_image_passes_through() {
        let mut s = MtiState::new(0.9);
        let x = image(Complex64::new(0.3, -1.2));
        assert_eq!(s.filter(&x).unwrap(), x);
    }

    #[test]
    fn constant_stream_decays_geometrically() {
        let alpha = 0.9;
        let mut s = MtiState::new(alpha);
        let x = image(Complex64::new(1.0, 0.5));
        let n0 = norm(&x);
        let mut prev = norm(&s.filter(&x).unwrap());
        assert!((prev - n0).abs() < 1e-12);
        for _ in 0..50 {
            let cur = norm(&s.filter(&x).unwrap());
            assert!((cur / prev - alpha).abs() < 1e-9);
            prev = cur;
        }
        assert!(prev < n0 * 0.01);
    }

    #[test]
    fn alternating_stream_keeps_a_steady_state() {
        // x_k = (-1)^k X: background converges to -(1-a)/(1+a) x_k, so the
        // output tends to x_k * 2 / (1 + a).
        let alpha = 0.9;
        let mut s = MtiState::new(alpha);
        let x = image(Complex64::new(0.7, 0.1));
        let mut neg = x.clone();
        neg.data.iter_mut().for_each(|c| *c = -*c);
        let mut last = 0.0;
        for k in 0..400 {
            let inp = if k % 2 == 0 { &x } else { &neg };
            last = norm(&s.filter(inp).unwrap());
        }
        let want = norm(&x) * 2.0 / (1.0 + alpha);
        assert!((last - want).abs() / want < 1e-9);
    }

    #[test]
    fn dimension_change_rejected() {
        let mut s = MtiState::new(0.9);
        s.filter(&image(Complex64::new(1.0, 0.0))).unwrap();
        let mut other = image(Complex64::new(1.0, 0.0));
        other.n_doppler = 2;
        other.n_range = 6;
        assert!(s.filter(&other).is_err());
    }
}
