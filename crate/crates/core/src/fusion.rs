//! Majority-vote fusion of label maps and Dice evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::volume::{LabelSet, LabelVolume, MaskVolume, MultiLabelAnnotation, VolumeError, BACKGROUND};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("majority vote needs at least 2 maps, got {0}")]
    TooFewMaps(usize),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Per roi voxel, the most frequent label across `maps` (background is a
/// vote like any other); ties go to the smallest id. Background outside the
/// roi.
pub fn majority_vote(maps: &[LabelVolume], roi: &MaskVolume) -> Result<LabelVolume, FusionError> {
    if maps.len() < 2 {
        return Err(FusionError::TooFewMaps(maps.len()));
    }
    for m in maps {
        roi.check_same_dims(m)?;
    }
    let mut votes: Vec<(u16, usize)> = Vec::with_capacity(maps.len());
    let data = (0..roi.len())
        .map(|i| {
            if !roi.data()[i] {
                return BACKGROUND;
            }
            votes.clear();
            for m in maps {
                let l = m.data()[i];
                match votes.iter_mut().find(|v| v.0 == l) {
                    Some(v) => v.1 += 1,
                    None => votes.push((l, 1)),
                }
            }
            votes
                .iter()
                .fold(
                    (u16::MAX, 0),
                    |best, &(l, c)| if c > best.1 || (c == best.1 && l < best.0) { (l, c) } else { best },
                )
                .0
        })
        .collect();
    Ok(roi.with_data(data)?)
}

/// `2|P ∩ T| / (|P| + |T|)` over `eval_mask`, with `P = {pred == label}` and
/// `T = {target == label}`; 1 when both are empty.
pub fn dice(pred: &LabelVolume, target: &LabelVolume, label: u16, eval_mask: &MaskVolume) -> Result<f64, FusionError> {
    let c = counts(pred, target, label, eval_mask)?;
    Ok(c.dice())
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    pred: usize,
    target: usize,
    both: usize,
}

impl Counts {
    fn dice(&self) -> f64 {
        if self.pred + self.target == 0 {
            1.0
        } else {
            2.0 * self.both as f64 / (self.pred + self.target) as f64
        }
    }
}

fn counts(pred: &LabelVolume, target: &LabelVolume, label: u16, mask: &MaskVolume) -> Result<Counts, FusionError> {
    pred.check_same_dims(target)?;
    pred.check_same_dims(mask)?;
    let mut c = Counts::default();
    for ((&p, &t), &m) in pred.data().iter().zip(target.data()).zip(mask.data()) {
        if m {
            let (ip, it) = (p == label, t == label);
            c.pred += ip as usize;
            c.target += it as usize;
            c.both += (ip && it) as usize;
        }
    }
    Ok(c)
}

/// `roi` minus every voxel carrying more than one annotation label.
pub fn build_eval_mask(annotation: &MultiLabelAnnotation, roi: &MaskVolume) -> Result<MaskVolume, FusionError> {
    roi.geometry().check_same_dims(annotation.geometry())?;
    let data = (0..roi.len()).map(|i| roi.data()[i] && annotation.count_at(i) <= 1).collect();
    Ok(roi.with_data(data)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDice {
    pub id: u16,
    pub dice: f64,
    pub target_volume: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiceReport {
    /// Keyed by label name.
    pub per_class: BTreeMap<String, ClassDice>,
    /// Per-class Dice weighted by target volume inside the evaluation mask.
    pub overall: f64,
    /// Roi voxels left out of the evaluation.
    pub excluded_voxels: usize,
}

impl DiceReport {
    /// Classes in label-id order.
    pub fn classes(&self) -> Vec<(&str, &ClassDice)> {
        let mut v: Vec<(&str, &ClassDice)> = self.per_class.iter().map(|(k, c)| (k.as_str(), c)).collect();
        v.sort_by_key(|(_, c)| c.id);
        v
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<6}\t{:<12}\t{:>8}\t{:>10}", "id", "name", "dice", "volume");
        for (name, c) in self.classes() {
            let _ = writeln!(s, "{:<6}\t{:<12}\t{:>8.4}\t{:>10}", c.id, name, c.dice, c.target_volume);
        }
        let _ = writeln!(s, "overall\t{:.4}", self.overall);
        let _ = writeln!(s, "excluded_voxels\t{}", self.excluded_voxels);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dice report serialises")
    }
}

/// Dice for every class of `labels`. Classes absent from the target carry
/// zero weight; if no class has target volume the overall score is the
/// plain mean.
pub fn dice_report(
    pred: &LabelVolume,
    target: &LabelVolume,
    labels: &LabelSet,
    eval_mask: &MaskVolume,
) -> Result<DiceReport, FusionError> {
    let mut per_class = BTreeMap::new();
    let (mut num, mut den, mut plain) = (0.0, 0usize, 0.0);
    for e in labels.entries() {
        let c = counts(pred, target, e.id, eval_mask)?;
        let d = c.dice();
        num += d * c.target as f64;
        den += c.target;
        plain += d;
        per_class.insert(e.name.clone(), ClassDice { id: e.id, dice: d, target_volume: c.target });
    }
    let overall = if den > 0 {
        num / den as f64
    } else if labels.is_empty() {
        1.0
    } else {
        plain / labels.len() as f64
    };
    Ok(DiceReport { per_class, overall, excluded_voxels: 0 })
}

/// Dice report over `roi`, excluding ambiguously annotated voxels when an
/// annotation is given.
pub fn evaluate(
    pred: &LabelVolume,
    target: &LabelVolume,
    labels: &LabelSet,
    roi: &MaskVolume,
    annotation: Option<&MultiLabelAnnotation>,
) -> Result<DiceReport, FusionError> {
    let mask = match annotation {
        Some(a) => build_eval_mask(a, roi)?,
        None => roi.clone(),
    };
    let mut report = dice_report(pred, target, labels, &mask)?;
    report.excluded_voxels = roi.count() - mask.count();
    Ok(report)
}
