//! Binary (P5) greyscale image output.

use std::path::Path;

use crate::error::{Error, Result};

/// `rows x cols` row-major values, linearly mapped from `[min, max]` to 0..=255.
#[derive(Debug, Clone, PartialEq)]
pub struct Gray {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Gray {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("pgm", format!("{} values for a {rows}x{cols} image", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    fn bytes(&self) -> Vec<u8> {
        let finite = self.data.iter().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let span = hi - lo;
        self.data
            .iter()
            .map(|&v| {
                if !v.is_finite() || !(span > 0.0) {
                    0
                } else {
                    ((v - lo) / span * 255.0).round() as u8
                }
            })
            .collect()
    }
}

/// Images side by side, each scaled to its own range and upsampled by
/// `zoom`, separated by a one-pixel white column. Rows are padded to the
/// tallest image.
pub fn encode_row(images: &[Gray], zoom: usize) -> Result<Vec<u8>> {
    if images.is_empty() || zoom == 0 {
        return Err(Error::InvalidConfig("nothing to draw".into()));
    }
    let height = images.iter().map(|g| g.rows).max().unwrap_or(0) * zoom;
    let width = images.iter().map(|g| g.cols * zoom).sum::<usize>() + images.len() - 1;
    let mut px = vec![0u8; width * height];
    let mut x0 = 0;
    for (k, g) in images.iter().enumerate() {
        let b = g.bytes();
        for y in 0..g.rows * zoom {
            for x in 0..g.cols * zoom {
                px[y * width + x0 + x] = b[(y / zoom) * g.cols + x / zoom];
            }
        }
        x0 += g.cols * zoom;
        if k + 1 < images.len() {
            for y in 0..height {
                px[y * width + x0] = 255;
            }
            x0 += 1;
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&px);
    Ok(out)
}

pub fn write_row(path: &Path, images: &[Gray], zoom: usize) -> Result<()> {
    let bytes = encode_row(images, zoom)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_scaling() {
        let g = Gray::new(2, 2, vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        let b = encode_row(&[g], 1).unwrap();
        assert!(b.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&b[b.len() - 4..], &[0, 64, 128, 255]);
    }

    #[test]
    fn triptych_layout() {
        let a = Gray::new(2, 3, vec![1.0; 6]).unwrap();
        let b = Gray::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let bytes = encode_row(&[a.clone(), b, a], 2).unwrap();
        let header = b"P5\n16 8\n255\n";
        assert!(bytes.starts_with(header));
        assert_eq!(bytes.len(), header.len() + 16 * 8);
        let px = &bytes[header.len()..];
        assert_eq!(px[6], 255);
        assert_eq!(px[9], 255);
        assert_eq!(px[7 * 16 + 9], 255);
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(Gray::new(2, 2, vec![0.0; 3]).is_err());
    }
}
