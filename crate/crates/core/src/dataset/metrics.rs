use std::fmt::Write as _;

use super::annotation::AnnotationRecord;
use crate::codec::{JointSchema, KeypointSet};
use crate::error::{contract, Result};

/// Normalizing length of the detection threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    /// Left hip to right shoulder.
    Torso,
    /// Annotated head size.
    Head,
}

/// Detection rates at one threshold. Joints never evaluated have no rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PckResult {
    pub r: f64,
    pub per_joint: Vec<Option<f64>>,
    pub groups: [Option<f64>; 7],
    pub total: Option<f64>,
    pub correct: Vec<usize>,
    pub evaluated: Vec<usize>,
    /// Records dropped for a zero reference length.
    pub skipped: usize,
}

/// Joint layout implied by a joint count.
pub fn schema_for(num_joints: usize) -> Result<JointSchema> {
    match num_joints {
        14 => Ok(JointSchema::Lsp14),
        16 => Ok(JointSchema::Mpii16),
        m => Err(crate::Error::Contract(format!("no joint schema with {m} joints"))),
    }
}

fn rate(c: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| c as f64 / n as f64)
}

fn evaluate(preds: &[KeypointSet], gts: &[AnnotationRecord], r: f64, reference: Reference) -> Result<PckResult> {
    contract!(preds.len() == gts.len(), "{} predictions for {} annotations", preds.len(), gts.len());
    contract!(r >= 0.0 && r <= 1.0, "threshold {r} outside [0,1]");
    let m = gts.first().map_or(0, |g| g.joints.len());
    let schema = schema_for(m).ok();
    let torso = match reference {
        Reference::Torso => Some(schema_for(m)?.torso_joints()),
        Reference::Head => None,
    };
    let mut correct = vec![0usize; m];
    let mut evaluated = vec![0usize; m];
    let mut skipped = 0;
    for (p, g) in preds.iter().zip(gts) {
        contract!(p.len() == m && g.joints.len() == m, "joint count mismatch");
        let len = match torso {
            Some((a, b)) => g.joints[a].dist(&g.joints[b]),
            None => g.head_size,
        };
        if !(len > 0.0 && len.is_finite()) {
            skipped += 1;
            continue;
        }
        for (j, (pk, gk)) in p.joints().iter().zip(&g.joints).enumerate() {
            if gk.visible {
                evaluated[j] += 1;
                correct[j] += usize::from(pk.dist(gk) / len <= r);
            }
        }
    }
    let mut groups = [None; 7];
    if let Some(schema) = schema {
        for (g, slot) in groups.iter_mut().enumerate() {
            let js: Vec<usize> = (0..m).filter(|&j| schema.group(j) == Some(g)).collect();
            *slot = rate(js.iter().map(|&j| correct[j]).sum(), js.iter().map(|&j| evaluated[j]).sum());
        }
    }
    Ok(PckResult {
        r,
        per_joint: (0..m).map(|j| rate(correct[j], evaluated[j])).collect(),
        groups,
        total: rate(correct.iter().sum(), evaluated.iter().sum()),
        correct,
        evaluated,
        skipped,
    })
}

/// Fraction of visible joints within `r` torso lengths of the truth.
pub fn pck(preds: &[KeypointSet], gts: &[AnnotationRecord], r: f64) -> Result<PckResult> {
    contract!(r > 0.0 && r <= 1.0, "threshold {r} outside (0,1]");
    evaluate(preds, gts, r, Reference::Torso)
}

/// Fraction of visible joints within `r` head sizes of the truth.
pub fn pckh(preds: &[KeypointSet], gts: &[AnnotationRecord], r: f64) -> Result<PckResult> {
    contract!(r > 0.0 && r <= 1.0, "threshold {r} outside (0,1]");
    evaluate(preds, gts, r, Reference::Head)
}

/// `0.02, 0.04, ..., 0.20`.
pub fn default_grid() -> Vec<f64> {
    (1..=10).map(|i| f64::from(i) * 0.02).collect()
}

/// Rates at every threshold of `grid`; thresholds may include 0.
pub fn pck_curve(preds: &[KeypointSet], gts: &[AnnotationRecord], grid: &[f64], reference: Reference) -> Result<Vec<PckResult>> {
    grid.iter().map(|&r| evaluate(preds, gts, r, reference)).collect()
}

/// Evaluation groups followed by the overall rate.
pub const CSV_HEADER: &str = "head,sho,elb,wri,hip,knee,ank,total";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"))
}

impl PckResult {
    /// One row in [`CSV_HEADER`] order.
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        for g in &self.groups {
            let _ = write!(s, "{},", cell(*g));
        }
        s + &cell(self.total)
    }
}

/// Header plus one row per result.
pub fn pck_table(results: &[PckResult]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in results {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
