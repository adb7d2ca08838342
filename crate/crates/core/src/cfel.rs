//! Complex frequency extraction layer: a bank of 2-D complex exponential
//! kernels with learnable fast-time/slow-time frequencies.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::sim::Frame;

/// Kernel `q = k * n_st + l` correlates the input with
/// `exp(-j 2 pi (f_ft[q] m + f_st[q] n))`; frequencies are normalized to
/// the respective sampling rate and live in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfelParams {
    pub n_ft: usize,
    pub n_st: usize,
    /// Fast-time kernel length.
    pub m: usize,
    /// Slow-time kernel length.
    pub n: usize,
    pub fs_ft_hz: f64,
    pub fs_st_hz: f64,
    pub f_ft: Vec<f64>,
    pub f_st: Vec<f64>,
}

/// Harmonic initialization: fast-time `k / (2 n_ft)`, slow-time `l / n_st`.
pub fn init_grid(n_ft: usize, n_st: usize, m: usize, n: usize, fs_ft_hz: f64, fs_st_hz: f64) -> CfelParams {
    let mut f_ft = Vec::with_capacity(n_ft * n_st);
    let mut f_st = Vec::with_capacity(n_ft * n_st);
    for k in 0..n_ft {
        for l in 0..n_st {
            f_ft.push(k as f64 / (2 * n_ft) as f64);
            f_st.push(l as f64 / n_st as f64);
        }
    }
    CfelParams {
        n_ft,
        n_st,
        m,
        n,
        fs_ft_hz,
        fs_st_hz,
        f_ft,
        f_st,
    }
}

impl CfelParams {
    pub fn kernels(&self) -> usize {
        self.n_ft * self.n_st
    }

    /// Physical frequencies of kernel `q` in Hz.
    pub fn physical(&self, q: usize) -> (f64, f64) {
        (self.f_ft[q] * self.fs_ft_hz, self.f_st[q] * self.fs_st_hz)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.kernels();
        if k == 0 || self.m == 0 || self.n == 0 {
            return Err(Error::InvalidConfig("cfel needs at least one kernel and sample".into()));
        }
        if self.f_ft.len() != k || self.f_st.len() != k {
            return Err(Error::shape(
                "cfel",
                format!("{k} kernels but {}/{} frequencies", self.f_ft.len(), self.f_st.len()),
            ));
        }
        Ok(())
    }

    pub fn wrap(&mut self) {
        for f in self.f_ft.iter_mut().chain(self.f_st.iter_mut()) {
            *f = f.rem_euclid(1.0);
            if *f >= 1.0 {
                *f = 0.0;
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kernel,f_ft,f_st\n");
        for q in 0..self.kernels() {
            let _ = writeln!(s, "{q},{},{}", self.f_ft[q], self.f_st[q]);
        }
        s
    }

    /// Replaces the frequency tables from CSV produced by [`CfelParams::to_csv`].
    pub fn load_csv_str(&mut self, text: &str, origin: &Path) -> Result<()> {
        let k = self.kernels();
        let mut ft = vec![f64::NAN; k];
        let mut st = vec![f64::NAN; k];
        let perr = |line: usize, detail: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            detail,
        };
        for (i, raw) in text.lines().enumerate().skip(1) {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 3 {
                return Err(perr(i + 1, format!("expected 3 fields, got {}", cells.len())));
            }
            let q: usize = cells[0].parse().map_err(|e| perr(i + 1, format!("kernel index: {e}")))?;
            if q >= k {
                return Err(perr(i + 1, format!("kernel {q} out of range (0..{k})")));
            }
            ft[q] = cells[1].parse().map_err(|e| perr(i + 1, format!("f_ft: {e}")))?;
            st[q] = cells[2].parse().map_err(|e| perr(i + 1, format!("f_st: {e}")))?;
        }
        if let Some(q) = (0..k).find(|&q| !ft[q].is_finite() || !st[q].is_finite()) {
            return Err(perr(0, format!("kernel {q} missing or not finite")));
        }
        self.f_ft = ft;
        self.f_st = st;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.load_csv_str(&text, path)
    }
}

/// Layout `[n_ft][n_st][n_rx][2]`, last axis real then imaginary.
#[derive(Debug, Clone, PartialEq)]
pub struct CfelOutput {
    pub n_ft: usize,
    pub n_st: usize,
    pub n_rx: usize,
    pub data: Vec<f64>,
}

impl CfelOutput {
    #[inline]
    pub fn idx(&self, k: usize, l: usize, rx: usize) -> usize {
        ((k * self.n_st + l) * self.n_rx + rx) * 2
    }

    pub fn at(&self, k: usize, l: usize, rx: usize) -> Complex64 {
        let i = self.idx(k, l, rx);
        Complex64::new(self.data[i], self.data[i + 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfelGrads {
    pub d_ft: Vec<f64>,
    pub d_st: Vec<f64>,
    /// Frame-shaped input gradient, when requested.
    pub d_input: Option<Vec<f64>>,
}

#[inline]
fn twiddle(f: f64, i: usize) -> Complex64 {
    let ph = (f * i as f64).fract();
    Complex64::from_polar(1.0, -2.0 * PI * ph)
}

fn check_frame(frame: &Frame, p: &CfelParams) -> Result<()> {
    p.validate()?;
    if frame.n_samples != p.m || frame.n_chirps != p.n || frame.data.len() != p.m * p.n * frame.n_rx {
        return Err(Error::shape(
            "cfel",
            format!(
                "frame is {}x{}x{}, kernels are {}x{}",
                frame.n_samples, frame.n_chirps, frame.n_rx, p.m, p.n
            ),
        ));
    }
    Ok(())
}

/// Kernels grouped by slow-time frequency so the inner slow-time sums are
/// shared.
fn groups(p: &CfelParams) -> BTreeMap<u64, Vec<usize>> {
    let mut g: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for q in 0..p.kernels() {
        g.entry(p.f_st[q].to_bits()).or_default().push(q);
    }
    g
}

/// Slow-time sums `T[m] = sum_n x[m, n] e_w[n]` (and `sum_n n x e_w[n]`).
fn slow_sums(x: &[f64], p: &CfelParams, rx: usize, ew: &[Complex64], t: &mut [Complex64], td: Option<&mut [Complex64]>) {
    let (m, n) = (p.m, p.n);
    t.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    let base = rx * m * n;
    for (ni, e) in ew.iter().enumerate() {
        let row = &x[base + ni * m..base + (ni + 1) * m];
        for (tm, &xv) in t.iter_mut().zip(row) {
            *tm += e * xv;
        }
    }
    if let Some(td) = td {
        td.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (ni, e) in ew.iter().enumerate() {
            let en = e * ni as f64;
            let row = &x[base + ni * m..base + (ni + 1) * m];
            for (tm, &xv) in td.iter_mut().zip(row) {
                *tm += en * xv;
            }
        }
    }
}

fn forward_raw(x: &[f64], n_rx: usize, p: &CfelParams) -> Vec<Complex64> {
    let k = p.kernels();
    let mut out = vec![Complex64::new(0.0, 0.0); k * n_rx];
    let mut t = vec![Complex64::new(0.0, 0.0); p.m];
    for (bits, members) in groups(p) {
        let w = f64::from_bits(bits);
        let ew: Vec<Complex64> = (0..p.n).map(|i| twiddle(w, i)).collect();
        for rx in 0..n_rx {
            slow_sums(x, p, rx, &ew, &mut t, None);
            for &q in &members {
                let u = p.f_ft[q];
                out[q * n_rx + rx] = t.iter().enumerate().map(|(mi, tv)| twiddle(u, mi) * tv).sum();
            }
        }
    }
    out
}

pub fn cfel_forward(frame: &Frame, params: &CfelParams) -> Result<CfelOutput> {
    check_frame(frame, params)?;
    let x = frame.to_f64();
    let y = forward_raw(&x, frame.n_rx, params);
    Ok(CfelOutput {
        n_ft: params.n_ft,
        n_st: params.n_st,
        n_rx: frame.n_rx,
        data: y.iter().flat_map(|c| [c.re, c.im]).collect(),
    })
}

/// Upstream gradient per kernel and antenna as `(d/dRe, d/dIm)`.
fn backward_raw(x: &[f64], n_rx: usize, p: &CfelParams, up: &[(f64, f64)], want_input: bool) -> CfelGrads {
    let k = p.kernels();
    let (m, n) = (p.m, p.n);
    let mut d_ft = vec![0.0; k];
    let mut d_st = vec![0.0; k];
    let mut t = vec![Complex64::new(0.0, 0.0); m];
    let mut td = vec![Complex64::new(0.0, 0.0); m];
    let two_pi = 2.0 * PI;
    for (bits, members) in groups(p) {
        let w = f64::from_bits(bits);
        let ew: Vec<Complex64> = (0..n).map(|i| twiddle(w, i)).collect();
        for rx in 0..n_rx {
            slow_sums(x, p, rx, &ew, &mut t, Some(&mut td));
            for &q in &members {
                let (gr, gi) = up[q * n_rx + rx];
                if gr == 0.0 && gi == 0.0 {
                    continue;
                }
                let u = p.f_ft[q];
                let (mut du, mut dw) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                for mi in 0..m {
                    let a = twiddle(u, mi);
                    du += a * t[mi] * mi as f64;
                    dw += a * td[mi];
                }
                // d/du y = -j 2 pi sum m a_m T[m]; d/dw y = -j 2 pi sum a_m T'[m]
                let du = Complex64::new(0.0, -two_pi) * du;
                let dw = Complex64::new(0.0, -two_pi) * dw;
                d_ft[q] += gr * du.re + gi * du.im;
                d_st[q] += gr * dw.re + gi * dw.im;
            }
        }
    }
    let d_input = want_input.then(|| {
        let mut dx = vec![0.0; n_rx * m * n];
        for q in 0..k {
            let ea: Vec<Complex64> = (0..m).map(|i| twiddle(p.f_ft[q], i)).collect();
            let eb: Vec<Complex64> = (0..n).map(|i| twiddle(p.f_st[q], i)).collect();
            for rx in 0..n_rx {
                let (gr, gi) = up[q * n_rx + rx];
                // dRe y / dx = Re(c), dIm y / dx = Im(c) with c = a_m b_n
                for ni in 0..n {
                    for mi in 0..m {
                        let c = ea[mi] * eb[ni];
                        dx[rx * m * n + ni * m + mi] += gr * c.re + gi * c.im;
                    }
                }
            }
        }
        dx
    });
    CfelGrads { d_ft, d_st, d_input }
}

/// Frequency (and optionally input) gradients for an upstream gradient laid
/// out like [`CfelOutput`].
pub fn cfel_backward(frame: &Frame, params: &CfelParams, upstream: &CfelOutput, want_input: bool) -> Result<CfelGrads> {
    check_frame(frame, params)?;
    if upstream.data.len() != params.kernels() * frame.n_rx * 2 {
        return Err(Error::shape(
            "cfel_backward",
            format!("upstream has {} values, expected {}", upstream.data.len(), params.kernels() * frame.n_rx * 2),
        ));
    }
    let up: Vec<(f64, f64)> = upstream.data.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    Ok(backward_raw(&frame.to_f64(), frame.n_rx, params, &up, want_input))
}

impl Graph {
    /// CFEL as a graph node producing `[n_rx, 2, n_ft, n_st]` scaled by
    /// `scale`. `f_ft`/`f_st` are `[n_ft * n_st]` frequency parameters.
    pub fn cfel(&mut self, frame: &Frame, shape: &CfelParams, f_ft: Var, f_st: Var, scale: f64) -> Result<Var> {
        let mut p = shape.clone();
        p.f_ft = self.value(f_ft).data().to_vec();
        p.f_st = self.value(f_st).data().to_vec();
        check_frame(frame, &p)?;
        let x = frame.to_f64();
        let n_rx = frame.n_rx;
        let (nf, ns) = (p.n_ft, p.n_st);
        let y = forward_raw(&x, n_rx, &p);
        let mut out = vec![0.0; n_rx * 2 * nf * ns];
        for q in 0..nf * ns {
            for rx in 0..n_rx {
                let c = y[q * n_rx + rx];
                out[(rx * 2) * nf * ns + q] = c.re * scale;
                out[(rx * 2 + 1) * nf * ns + q] = c.im * scale;
            }
        }
        let v = Tensor::new(&[n_rx, 2, nf, ns], out)?;
        Ok(self.push(
            "cfel",
            v,
            &[f_ft, f_st],
            Box::new(move |c| {
                let mut p = p.clone();
                p.f_ft = c.inputs[0].data().to_vec();
                p.f_st = c.inputs[1].data().to_vec();
                let g = c.grad.data();
                let up: Vec<(f64, f64)> = (0..nf * ns)
                    .flat_map(|q| (0..n_rx).map(move |rx| (q, rx)))
                    .map(|(q, rx)| (g[(rx * 2) * nf * ns + q] * scale, g[(rx * 2 + 1) * nf * ns + q] * scale))
                    .collect();
                let gr = backward_raw(&x, n_rx, &p, &up, false);
                vec![
                    Some(Tensor::new(&[nf * ns], gr.d_ft).unwrap()),
                    Some(Tensor::new(&[nf * ns], gr.d_st).unwrap()),
                ]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_frame(m: usize, n: usize, n_rx: usize, seed: u64) -> Frame {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Frame {
            n_samples: m,
            n_chirps: n,
            n_rx,
            data: (0..m * n * n_rx).map(|_| rng.random_range(-1.0..1.0)).collect(),
            normalized: false,
            index: 0,
        }
    }

    /// Direct double-sum DFT at bin (k, l) of an `m x n` grid.
    fn naive_dft(f: &Frame, rx: usize, kf: f64, lf: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ni in 0..f.n_chirps {
            for mi in 0..f.n_samples {
                let ang = -2.0 * PI * (kf * mi as f64 / f.n_samples as f64 + lf * ni as f64 / f.n_chirps as f64);
                acc += f.get(mi, ni, rx) * Complex64::from_polar(1.0, ang);
            }
        }
        acc
    }

    #[test]
    fn grid_has_expected_spacing_and_count() {
        let p = init_grid(128, 32, 256, 32, 0.98e6, 1923.0);
        assert_eq!(p.kernels(), 4096);
        let step = p.f_ft[32] - p.f_ft[0];
        assert!((step * p.fs_ft_hz - p.fs_ft_hz / 256.0).abs() < 1e-9);
        assert_eq!(p.f_st[1], 1.0 / 32.0);
        assert_eq!((p.f_ft[0], p.f_st[0]), (0.0, 0.0));
    }

    #[test]
    fn dc_kernel_sums_the_frame() {
        let f = random_frame(16, 8, 2, 1);
        let p = init_grid(8, 8, 16, 8, 1.0, 1.0);
        let y = cfel_forward(&f, &p).unwrap();
        for rx in 0..2 {
            let s: f64 = (0..8).flat_map(|n| (0..16).map(move |m| (m, n))).map(|(m, n)| f.get(m, n, rx)).sum();
            assert!((y.at(0, 0, rx).re - s).abs() < 1e-9);
            assert!(y.at(0, 0, rx).im.abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_grid_reproduces_the_dft() {
        let p = init_grid(8, 8, 16, 8, 1.0, 1.0);
        for seed in 0..5 {
            let f = random_frame(16, 8, 2, seed);
            let y = cfel_forward(&f, &p).unwrap();
            for k in 0..8 {
                for l in 0..8 {
                    for rx in 0..2 {
                        let want = naive_dft(&f, rx, k as f64, l as f64);
                        assert!((y.at(k, l, rx) - want).norm() < 1e-9 * (1.0 + want.norm()));
                    }
                }
            }
        }
    }

    #[test]
    fn grid_tone_peaks_at_its_kernel() {
        let (m, n) = (32, 16);
        let p = init_grid(16, 16, m, n, 1.0, 1.0);
        let mut f = random_frame(m, n, 1, 0);
        for ni in 0..n {
            for mi in 0..m {
                f.data[ni * m + mi] = (2.0 * PI * (5.0 * mi as f64 / 32.0 + 3.0 * ni as f64 / 16.0)).cos() as f32;
            }
        }
        let y = cfel_forward(&f, &p).unwrap();
        let best = (0..p.kernels()).max_by(|&a, &b| y.at(a / 16, a % 16, 0).norm().total_cmp(&y.at(b / 16, b % 16, 0).norm())).unwrap();
        assert_eq!((best / 16, best % 16), (5, 3));
    }

    #[test]
    fn zero_frame_gives_zero_output_and_gradients() {
        let p = init_grid(4, 4, 8, 4, 1.0, 1.0);
        let f = Frame {
            data: vec![0.0; 64],
            ..random_frame(8, 4, 2, 0)
        };
        let y = cfel_forward(&f, &p).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
        let up = CfelOutput {
            data: vec![1.0; y.data.len()],
            ..y
        };
        let g = cfel_backward(&f, &p, &up, false).unwrap();
        assert!(g.d_ft.iter().chain(&g.d_st).all(|&v| v == 0.0));
    }

    /// Loss `sum(Re y + Im y)` over all kernels and antennas.
    fn loss(f: &Frame, p: &CfelParams) -> f64 {
        cfel_forward(f, p).unwrap().data.iter().sum()
    }

    #[test]
    fn frequency_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f = random_frame(16, 8, 2, 4);
        let mut p = init_grid(5, 4, 16, 8, 1.0, 1.0);
        for q in 0..p.kernels() {
            p.f_ft[q] = rng.random_range(0.0..1.0);
            p.f_st[q] = rng.random_range(0.0..1.0);
        }
        let up = CfelOutput {
            n_ft: 5,
            n_st: 4,
            n_rx: 2,
            data: vec![1.0; 5 * 4 * 2 * 2],
        };
        let g = cfel_backward(&f, &p, &up, true).unwrap();
        let h = 1e-6;
        for q in 0..p.kernels() {
            for (which, analytic) in [(0, g.d_ft[q]), (1, g.d_st[q])] {
                let mut pp = p.clone();
                let mut pm = p.clone();
                if which == 0 {
                    pp.f_ft[q] += h;
                    pm.f_ft[q] -= h;
                } else {
                    pp.f_st[q] += h;
                    pm.f_st[q] -= h;
                }
                let numeric = (loss(&f, &pp) - loss(&f, &pm)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(rel < 1e-4, "kernel {q} axis {which}: {analytic} vs {numeric}");
            }
        }
        let dx = g.d_input.unwrap();
        for idx in [0usize, 37, 200] {
            let mut fp = f.clone();
            let mut fm = f.clone();
            fp.data[idx] += 1e-2;
            fm.data[idx] -= 1e-2;
            let step = (fp.data[idx] as f64 - fm.data[idx] as f64) / 2.0;
            let numeric = (loss(&fp, &p) - loss(&fm, &p)) / (2.0 * step);
            assert!((numeric - dx[idx]).abs() < 1e-6 * (1.0 + dx[idx].abs()));
        }
    }

    #[test]
    fn matched_tone_is_stationary() {
        let (m, n) = (32, 16);
        let p = init_grid(16, 16, m, n, 1.0, 1.0);
        let mut f = random_frame(m, n, 1, 0);
        for ni in 0..n {
            for mi in 0..m {
                f.data[ni * m + mi] = (2.0 * PI * (5.0 * mi as f64 / 32.0 + 3.0 * ni as f64 / 16.0)).cos() as f32;
            }
        }
        let y = cfel_forward(&f, &p).unwrap();
        // upstream of |y_q|^2 is 2 (Re y, Im y) at the matched kernel only
        let q = 5 * 16 + 3;
        let mut up = CfelOutput {
            data: vec![0.0; y.data.len()],
            ..y.clone()
        };
        let i = y.idx(5, 3, 0);
        up.data[i] = 2.0 * y.data[i];
        up.data[i + 1] = 2.0 * y.data[i + 1];
        let g = cfel_backward(&f, &p, &up, false).unwrap();
        let peak = y.at(5, 3, 0).norm_sqr();
        assert!(g.d_ft[q].abs() < 1e-6 * peak, "{}", g.d_ft[q]);
        assert!(g.d_st[q].abs() < 1e-6 * peak, "{}", g.d_st[q]);
    }

    #[test]
    fn output_is_linear_in_the_frame() {
        let p = init_grid(4, 4, 8, 4, 1.0, 1.0);
        let (a, b) = (random_frame(8, 4, 2, 1), random_frame(8, 4, 2, 2));
        let sum = Frame {
            data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
            ..a.clone()
        };
        let (ya, yb, ys) = (cfel_forward(&a, &p).unwrap(), cfel_forward(&b, &p).unwrap(), cfel_forward(&sum, &p).unwrap());
        for i in 0..ys.data.len() {
            assert!((ys.data[i] - ya.data[i] - yb.data[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = init_grid(4, 4, 8, 4, 1.0, 1.0);
        assert!(matches!(cfel_forward(&random_frame(8, 5, 2, 0), &p), Err(Error::Shape { .. })));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut p = init_grid(3, 2, 8, 4, 1.0, 1.0);
        p.f_ft[4] = 0.123456789012345;
        let text = p.to_csv();
        let mut q = init_grid(3, 2, 8, 4, 1.0, 1.0);
        q.load_csv_str(&text, Path::new("f.csv")).unwrap();
        assert_eq!(p, q);
        let short: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(matches!(q.load_csv_str(&short, Path::new("f.csv")), Err(Error::Parse { .. })));
        assert!(matches!(
            q.load_csv_str("kernel,f_ft,f_st\n0,abc,0.1\n", Path::new("f.csv")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn wrap_keeps_unit_interval() {
        let mut p = init_grid(2, 2, 4, 4, 1.0, 1.0);
        p.f_ft = vec![-0.1, 1.2, 0.5, 2.0];
        p.wrap();
        assert!(p.f_ft.iter().all(|f| (0.0..1.0).contains(f)));
        assert!((p.f_ft[0] - 0.9).abs() < 1e-12);
    }
}
