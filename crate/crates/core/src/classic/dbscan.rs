use serde::Serialize;

use super::RangeAngleImage;

/// One cluster of CFAR-positive cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub range_m: f64,
    pub angle_deg: f64,
    /// `(range_bin, angle_bin)` of every member cell.
    pub members: Vec<(usize, usize)>,
    /// Summed image value over the members.
    pub mass: f64,
}

pub type DetectionSet = Vec<Detection>;

/// Density clustering of 2-D points.
///
/// Returns a cluster id per point (`None` for noise). Points are visited in
/// lexicographic coordinate order, so the partition does not depend on the
/// order of the input slice.
pub fn dbscan_points(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
    });
    let eps2 = eps * eps;
    let neighbours = |i: usize| -> Vec<usize> {
        order
            .iter()
            .copied()
            .filter(|&j| {
                let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
                dx * dx + dy * dy <= eps2
            })
            .collect()
    };
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for &p in &order {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        let nb = neighbours(p);
        if nb.len() < min_pts {
            continue;
        }
        let id = next;
        next += 1;
        label[p] = Some(id);
        let mut queue = nb;
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head];
            head += 1;
            if label[q].is_none() {
                label[q] = Some(id);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            let more = neighbours(q);
            if more.len() >= min_pts {
                queue.extend(more);
            }
        }
    }
    label
}

/// Clusters the foreground cells of `mask` in Cartesian coordinates
/// (`x = r sin(theta)`, `y = r cos(theta)`, range of bin `i` is `i * dr`).
/// Centers are `rai`-weighted means of member range and angle.
pub fn dbscan(mask: &[bool], rai: &RangeAngleImage, eps_m: f64, min_pts: usize) -> DetectionSet {
    let na = rai.n_angle;
    let cells: Vec<(usize, usize)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| (i / na, i % na))
        .collect();
    let points: Vec<(f64, f64)> = cells
        .iter()
        .map(|&(r, a)| {
            let range = r as f64 * rai.range_bin_m;
            let th = rai.angles_deg[a].to_radians();
            (range * th.sin(), range * th.cos())
        })
        .collect();
    let labels = dbscan_points(&points, eps_m, min_pts.max(1));
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut out: Vec<Detection> = (0..n_clusters)
        .map(|_| Detection {
            range_m: 0.0,
            angle_deg: 0.0,
            members: Vec::new(),
            mass: 0.0,
        })
        .collect();
    for (&(r, a), l) in cells.iter().zip(&labels) {
        if let Some(id) = *l {
            out[id].members.push((r, a));
        }
    }
    for det in &mut out {
        let (mut m, mut sr, mut sa) = (0.0, 0.0, 0.0);
        for &(r, a) in &det.members {
            let w = rai.at(r, a);
            m += w;
            sr += w * r as f64 * rai.range_bin_m;
            sa += w * rai.angles_deg[a];
        }
        if m > 0.0 {
            det.range_m = sr / m;
            det.angle_deg = sa / m;
        } else {
            let k = det.members.len() as f64;
            det.range_m = det.members.iter().map(|&(r, _)| r as f64).sum::<f64>() * rai.range_bin_m / k;
            det.angle_deg = det.members.iter().map(|&(_, a)| rai.angles_deg[a]).sum::<f64>() / k;
        }
        det.mass = m;
    }
    out.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
    out
}
