//! Matrix products, dense layers and 2-D convolution.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// `c = a * b + beta * c` for logical `a: [m, k]`, `b: [k, n]`, row-major
/// storage; `ta`/`tb` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output size and leading pad of "same" padding at `stride`.
pub(crate) fn same_padding(size: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = size.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(size);
    (out, total / 2)
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    ho: usize,
    wo: usize,
    pt: usize,
    pl: usize,
}

impl ConvGeom {
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let hw = self.ho * self.wo;
        for ci in 0..self.c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (ci * self.kh + i) * self.kw + j;
                    let dst = &mut cols[row * hw..(row + 1) * hw];
                    for oy in 0..self.ho {
                        let y = (oy * self.stride + i) as isize - self.pt as isize;
                        for ox in 0..self.wo {
                            let xx = (ox * self.stride + j) as isize - self.pl as isize;
                            dst[oy * self.wo + ox] = if y >= 0 && xx >= 0 && (y as usize) < self.h && (xx as usize) < self.w {
                                x[(ci * self.h + y as usize) * self.w + xx as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let hw = self.ho * self.wo;
        for ci in 0..self.c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = (ci * self.kh + i) * self.kw + j;
                    let src = &cols[row * hw..(row + 1) * hw];
                    for oy in 0..self.ho {
                        let y = (oy * self.stride + i) as isize - self.pt as isize;
                        if y < 0 || y as usize >= self.h {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let xx = (ox * self.stride + j) as isize - self.pl as isize;
                            if xx >= 0 && (xx as usize) < self.w {
                                dx[(ci * self.h + y as usize) * self.w + xx as usize] += src[oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl Graph {
    /// `a: [n, k]` times `b: [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        let v = Tensor::new(&[n, m], out)?;
        Ok(self.push(
            "matmul",
            v,
            &[a, b],
            Box::new(move |c| {
                let g = c.grad.data();
                let ga = c.needs[0].then(|| {
                    let mut d = vec![0.0; n * k];
                    gemm(n, m, k, g, false, c.inputs[1].data(), true, 0.0, &mut d);
                    Tensor::new(&[n, k], d).unwrap()
                });
                let gb = c.needs[1].then(|| {
                    let mut d = vec![0.0; k * m];
                    gemm(k, n, m, c.inputs[0].data(), true, g, false, 0.0, &mut d);
                    Tensor::new(&[k, m], d).unwrap()
                });
                vec![ga, gb]
            }),
        ))
    }

    /// Fully connected layer: `x: [batch, in]`, `w: [out, in]`, `b: [out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (
            self.value(x).shape().to_vec(),
            self.value(w).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[1] || sb != [sw[0]] {
            return Err(Error::shape("dense", format!("x {sx:?}, w {sw:?}, b {sb:?}")));
        }
        let (bs, fin, fout) = (sx[0], sx[1], sw[0]);
        let mut out = vec![0.0; bs * fout];
        for r in 0..bs {
            out[r * fout..(r + 1) * fout].copy_from_slice(self.value(b).data());
        }
        gemm(bs, fin, fout, self.value(x).data(), false, self.value(w).data(), true, 1.0, &mut out);
        let v = Tensor::new(&[bs, fout], out)?;
        Ok(self.push(
            "dense",
            v,
            &[x, w, b],
            Box::new(move |c| {
                let g = c.grad.data();
                let gx = c.needs[0].then(|| {
                    let mut d = vec![0.0; bs * fin];
                    gemm(bs, fout, fin, g, false, c.inputs[1].data(), false, 0.0, &mut d);
                    Tensor::new(&[bs, fin], d).unwrap()
                });
                let gw = c.needs[1].then(|| {
                    let mut d = vec![0.0; fout * fin];
                    gemm(fout, bs, fin, g, true, c.inputs[0].data(), false, 0.0, &mut d);
                    Tensor::new(&[fout, fin], d).unwrap()
                });
                let gb = c.needs[2].then(|| {
                    let mut d = vec![0.0; fout];
                    for r in 0..bs {
                        for (o, v) in d.iter_mut().zip(&g[r * fout..(r + 1) * fout]) {
                            *o += v;
                        }
                    }
                    Tensor::new(&[fout], d).unwrap()
                });
                vec![gx, gw, gb]
            }),
        ))
    }

    /// 2-D convolution (cross-correlation) with "same" zero padding.
    ///
    /// `x: [n, c, h, w]`, `w: [o, c, kh, kw]`, `b: [o]`; output
    /// `[n, o, ceil(h / stride), ceil(w / stride)]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (sx, sw, sb) = (
            self.value(x).shape().to_vec(),
            self.value(w).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || sb != [sw[0]] || stride == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("x {sx:?}, w {sw:?}, b {sb:?}, stride {stride}"),
            ));
        }
        let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (o, kh, kw) = (sw[0], sw[2], sw[3]);
        let (ho, pt) = same_padding(h, kh, stride);
        let (wo, pl) = same_padding(wd, kw, stride);
        let g = ConvGeom {
            c,
            h,
            w: wd,
            kh,
            kw,
            stride,
            ho,
            wo,
            pt,
            pl,
        };
        let ckk = c * kh * kw;
        let hw = ho * wo;
        let mut cols = vec![0.0; n * ckk * hw];
        let mut out = vec![0.0; n * o * hw];
        let xv = self.value(x).data();
        let (wv, bv) = (self.value(w).data(), self.value(b).data());
        for s in 0..n {
            let col = &mut cols[s * ckk * hw..(s + 1) * ckk * hw];
            g.im2col(&xv[s * c * h * wd..(s + 1) * c * h * wd], col);
            let dst = &mut out[s * o * hw..(s + 1) * o * hw];
            for (oc, &bias) in bv.iter().enumerate() {
                dst[oc * hw..(oc + 1) * hw].fill(bias);
            }
            gemm(o, ckk, hw, wv, false, col, false, 1.0, dst);
        }
        let v = Tensor::new(&[n, o, ho, wo], out)?;
        Ok(self.push(
            "conv2d",
            v,
            &[x, w, b],
            Box::new(move |ctx| {
                let gd = ctx.grad.data();
                let wv = ctx.inputs[1].data();
                let mut gw = ctx.needs[1].then(|| vec![0.0; o * ckk]);
                let mut gb = ctx.needs[2].then(|| vec![0.0; o]);
                let mut gx = ctx.needs[0].then(|| vec![0.0; n * c * h * wd]);
                let mut dcols = vec![0.0; ckk * hw];
                for s in 0..n {
                    let gs = &gd[s * o * hw..(s + 1) * o * hw];
                    let col = &cols[s * ckk * hw..(s + 1) * ckk * hw];
                    if let Some(gw) = gw.as_mut() {
                        gemm(o, hw, ckk, gs, false, col, true, 1.0, gw);
                    }
                    if let Some(gb) = gb.as_mut() {
                        for (oc, acc) in gb.iter_mut().enumerate() {
                            *acc += gs[oc * hw..(oc + 1) * hw].iter().sum::<f64>();
                        }
                    }
                    if let Some(gx) = gx.as_mut() {
                        gemm(ckk, o, hw, wv, true, gs, false, 0.0, &mut dcols);
                        g.col2im(&dcols, &mut gx[s * c * h * wd..(s + 1) * c * h * wd]);
                    }
                }
                vec![
                    gx.map(|d| Tensor::new(&[n, c, h, wd], d).unwrap()),
                    gw.map(|d| Tensor::new(&[o, c, kh, kw], d).unwrap()),
                    gb.map(|d| Tensor::new(&[o], d).unwrap()),
                ]
            }),
        ))
    }

    /// 1x1 convolution, stride 1.
    pub fn conv1x1(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let sw = self.value(w).shape();
        if sw.len() != 4 || sw[2] != 1 || sw[3] != 1 {
            return Err(Error::shape("conv1x1", format!("kernel {sw:?} is not 1x1")));
        }
        self.conv2d(x, w, b, 1)
    }

    /// Nearest-neighbour 2x upsampling of the last two axes of `[n, c, h, w]`.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 4 {
            return Err(Error::shape("upsample2", format!("expected 4 axes, got {s:?}")));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let xv = self.value(x).data();
        let mut out = vec![0.0; planes * 4 * h * w];
        for p in 0..planes {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out[(p * 2 * h + y) * 2 * w + xx] = xv[(p * h + y / 2) * w + xx / 2];
                }
            }
        }
        let v = Tensor::new(&[s[0], s[1], 2 * h, 2 * w], out)?;
        Ok(self.push(
            "upsample2",
            v,
            &[x],
            Box::new(move |c| {
                let g = c.grad.data();
                let mut d = vec![0.0; planes * h * w];
                for p in 0..planes {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            d[(p * h + y / 2) * w + xx / 2] += g[(p * 2 * h + y) * 2 * w + xx];
                        }
                    }
                }
                vec![Some(Tensor::new(c.inputs[0].shape(), d).unwrap())]
            }),
        ))
    }
}
