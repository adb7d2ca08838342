use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::matching::{extract_clusters, match_detections, Center};
use crate::classic::{Detector, PipelineParams};
use crate::config::RadarConfig;
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};
use crate::vae::Model;

/// Matching radius between predicted and true centers (m).
pub const MATCH_RADIUS_M: f64 = 0.375;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub threshold: f64,
    pub max_dist_m: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            max_dist_m: MATCH_RADIUS_M,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    /// `2 TP / (2 TP + FP + FN)`; 1 when there is nothing to find and nothing found.
    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / den as f64
        }
    }

    fn add(&mut self, tp: usize, fp: usize, fn_: usize) {
        self.tp += tp;
        self.fp += fp;
        self.fn_ += fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMatch {
    pub example: usize,
    pub targets: usize,
    pub predicted: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Distances of the true-positive pairs (m).
    pub tp_distances: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: Counts,
    /// Keyed by number of targets in the example.
    pub per_count: BTreeMap<usize, Counts>,
    pub matches: Vec<ExampleMatch>,
    /// Mean distance over true-positive pairs (m); 0 without any.
    pub mean_localization_error_m: f64,
}

impl EvalReport {
    pub fn f1(&self) -> f64 {
        self.total.f1()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("example,targets,predicted,tp,fp,fn\n");
        for m in &self.matches {
            let _ = writeln!(s, "{},{},{},{},{},{}", m.example, m.targets, m.predicted, m.tp, m.fp, m.fn_);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let t = &self.total;
        let _ = writeln!(s, "examples: {}", self.matches.len());
        let _ = writeln!(s, "F1: {:.4} (TP {} FP {} FN {})", t.f1(), t.tp, t.fp, t.fn_);
        let _ = writeln!(s, "mean localization error: {:.4} m", self.mean_localization_error_m);
        for (k, c) in &self.per_count {
            let _ = writeln!(s, "  {k} target(s): F1 {:.4} (TP {} FP {} FN {})", c.f1(), c.tp, c.fp, c.fn_);
        }
        s
    }
}

/// Aggregates matched F1 over per-example predicted and true centers.
/// `counts[i]` is the target count of example `i` used for the breakdown.
pub fn score(pred: &[Vec<Center>], truth: &[Vec<Center>], counts: &[usize], max_dist_m: f64) -> Result<EvalReport> {
    if pred.len() != truth.len() || counts.len() != truth.len() {
        return Err(Error::shape(
            "score",
            format!("{} predictions, {} truths, {} counts", pred.len(), truth.len(), counts.len()),
        ));
    }
    let mut r = EvalReport::default();
    let mut dist_sum = 0.0;
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        let m = match_detections(p, t, max_dist_m);
        r.total.add(m.tp, m.fp, m.fn_);
        r.per_count.entry(counts[i]).or_default().add(m.tp, m.fp, m.fn_);
        let tp_distances: Vec<f64> = m.pairs.iter().filter(|x| x.2 <= max_dist_m).map(|x| x.2).collect();
        dist_sum += tp_distances.iter().sum::<f64>();
        r.matches.push(ExampleMatch {
            example: i,
            targets: counts[i],
            predicted: p.len(),
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            tp_distances,
        });
    }
    if r.total.tp > 0 {
        r.mean_localization_error_m = dist_sum / r.total.tp as f64;
    }
    Ok(r)
}

/// Reference centers of an example: the centers of its label clusters.
pub fn truth_centers(ex: &LabeledExample, cfg: &RadarConfig) -> Result<Vec<Center>> {
    let m: Vec<f64> = ex.label.iter().map(|&v| v as f64).collect();
    extract_clusters(&m, cfg, 0.5)
}

fn target_count(ex: &LabeledExample, truth: &[Center]) -> usize {
    if ex.targets.is_empty() {
        truth.len()
    } else {
        ex.targets.len()
    }
}

#[derive(Debug, Clone)]
pub enum Method<'a> {
    Vae(&'a Model),
    /// Classical chain with a fresh detector (empty MTI background) per example.
    Classic(PipelineParams),
}

pub fn predict_centers(method: &Method, examples: &[&LabeledExample], cfg: &RadarConfig, opts: &EvalOptions) -> Result<Vec<Vec<Center>>> {
    match method {
        Method::Vae(model) => {
            let frames: Vec<_> = examples.iter().map(|e| &e.frame).collect();
            model
                .predict(&frames)?
                .iter()
                .map(|p| extract_clusters(p, cfg, opts.threshold))
                .collect()
        }
        Method::Classic(params) => examples
            .iter()
            .map(|e| {
                let mut det = Detector::new(cfg, params)?;
                let out = det.process(&e.frame)?;
                Ok(out.detections.iter().map(|d| Center::new(d.range_m, d.angle_deg)).collect())
            })
            .collect(),
    }
}

pub fn evaluate(method: &Method, examples: &[&LabeledExample], cfg: &RadarConfig, opts: &EvalOptions) -> Result<EvalReport> {
    let pred = predict_centers(method, examples, cfg, opts)?;
    let truth = examples.iter().map(|e| truth_centers(e, cfg)).collect::<Result<Vec<_>>>()?;
    let counts: Vec<usize> = examples.iter().zip(&truth).map(|(e, t)| target_count(e, t)).collect();
    score(&pred, &truth, &counts, opts.max_dist_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    fn random_sets(seed: u64, n: usize) -> Vec<Vec<Center>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                (0..rng.random_range(0..5))
                    .map(|_| Center::new(rng.random_range(0.2..4.0), rng.random_range(-50.0..50.0)))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn perfect_detector_scores_one() {
        let truth = random_sets(1, 50);
        let counts: Vec<usize> = truth.iter().map(Vec::len).collect();
        let r = score(&truth, &truth, &counts, MATCH_RADIUS_M).unwrap();
        assert_eq!(r.f1(), 1.0);
        assert_eq!(r.mean_localization_error_m, 0.0);
    }

    #[test]
    fn empty_detector_scores_zero() {
        let truth = random_sets(2, 50);
        let total: usize = truth.iter().map(Vec::len).sum();
        let none = vec![Vec::new(); truth.len()];
        let counts: Vec<usize> = truth.iter().map(Vec::len).collect();
        let r = score(&none, &truth, &counts, MATCH_RADIUS_M).unwrap();
        assert_eq!(r.f1(), 0.0);
        assert_eq!(r.total.fn_, total);
    }

    #[test]
    fn f1_identity_and_order_invariance() {
        let truth = random_sets(3, 80);
        let pred = random_sets(4, 80);
        let counts: Vec<usize> = truth.iter().map(Vec::len).collect();
        let r = score(&pred, &truth, &counts, 1.0).unwrap();
        let c = r.total;
        assert!((r.f1() - 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64).abs() < 1e-15);
        let mut idx: Vec<usize> = (0..80).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
        let p2: Vec<_> = idx.iter().map(|&i| pred[i].clone()).collect();
        let t2: Vec<_> = idx.iter().map(|&i| truth[i].clone()).collect();
        let c2: Vec<_> = idx.iter().map(|&i| counts[i]).collect();
        let r2 = score(&p2, &t2, &c2, 1.0).unwrap();
        assert_eq!(r2.total, r.total);
        assert_eq!(r2.per_count, r.per_count);
        let per: Counts = r.per_count.values().fold(Counts::default(), |mut a, c| {
            a.add(c.tp, c.fp, c.fn_);
            a
        });
        assert_eq!(per, r.total);
    }

    #[test]
    fn csv_and_summary_list_every_example() {
        let truth = random_sets(6, 5);
        let counts: Vec<usize> = truth.iter().map(Vec::len).collect();
        let r = score(&truth, &truth, &counts, MATCH_RADIUS_M).unwrap();
        assert_eq!(r.to_csv().lines().count(), 6);
        assert!(r.summary().contains("F1: 1.0000"));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(score(&[vec![]], &[], &[], 0.3).is_err());
    }
}
