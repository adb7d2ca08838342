use serde::Serialize;

use crate::config::{derive_params, RadarConfig};
use crate::error::{Error, Result};

/// Target position in polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Center {
    pub range_m: f64,
    pub angle_deg: f64,
}

impl Center {
    pub fn new(range_m: f64, angle_deg: f64) -> Self {
        Self { range_m, angle_deg }
    }

    pub fn cartesian(&self) -> (f64, f64) {
        let t = self.angle_deg.to_radians();
        (self.range_m * t.sin(), self.range_m * t.cos())
    }

    pub fn distance(&self, other: &Center) -> f64 {
        let (a, b) = (self.cartesian(), other.cartesian());
        (a.0 - b.0).hypot(a.1 - b.1)
    }
}

/// 8-connected components of cells with value `>= threshold`, each a list
/// of `(row, col)` in scan order.
pub fn connected_components(map: &[f64], rows: usize, cols: usize, threshold: f64) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; rows * cols];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..rows * cols {
        if seen[start] || !(map[start] >= threshold) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (r, c) = (i / cols, i % cols);
            comp.push((r, c));
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if !seen[j] && map[j] >= threshold {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Probability-weighted centers of the thresholded components of a
/// `[range][angle]` map.
pub fn extract_clusters(prob: &[f64], cfg: &RadarConfig, threshold: f64) -> Result<Vec<Center>> {
    let d = derive_params(cfg)?;
    let (nr, na) = (cfg.n_range_bins, cfg.n_angle_bins);
    if prob.len() != nr * na {
        return Err(Error::shape(
            "extract_clusters",
            format!("map has {} cells, grid is {nr}x{na}", prob.len()),
        ));
    }
    Ok(connected_components(prob, nr, na, threshold)
        .into_iter()
        .map(|comp| {
            let (mut w, mut sr, mut sa) = (0.0, 0.0, 0.0);
            for &(r, a) in &comp {
                let p = prob[r * na + a];
                w += p;
                sr += p * r as f64;
                sa += p * a as f64;
            }
            Center::new(sr / w * d.range_resolution_m, cfg.angle_at_bin(sa / w))
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(pred, truth, distance)` for every assigned pair.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl MatchResult {
    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }
}

/// Minimum-total-distance assignment between predictions and truths.
/// Assigned pairs farther apart than `max_dist` count as one FP and one FN.
pub fn match_detections(pred: &[Center], truth: &[Center], max_dist: f64) -> MatchResult {
    let cost: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| truth.iter().map(|t| p.distance(t)).collect())
        .collect();
    let pairs = assign(&cost, pred.len(), truth.len());
    let mut out = MatchResult::default();
    for &(i, j) in &pairs {
        let dist = cost[i][j];
        if dist <= max_dist {
            out.tp += 1;
        } else {
            out.fp += 1;
            out.fn_ += 1;
        }
        out.pairs.push((i, j, dist));
    }
    out.fp += pred.len() - pairs.len();
    out.fn_ += truth.len() - pairs.len();
    out
}

/// Hungarian algorithm (shortest augmenting path with potentials) on an
/// `n x m` cost matrix; returns `min(n, m)` `(row, col)` pairs.
fn assign(cost: &[Vec<f64>], n: usize, m: usize) -> Vec<(usize, usize)> {
    if n == 0 || m == 0 {
        return Vec::new();
    }
    if n > m {
        let t: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| cost[i][j]).collect()).collect();
        return assign(&t, m, n).into_iter().map(|(j, i)| (i, j)).collect();
    }
    // 1-based rows/cols; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}
