use std::fmt::Write as _;
use std::fs;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Pixel confusion counts over visible pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// Counts `(pred, gt)` pairs where `mask != 0`.
    pub fn from_masks(pred: &[u8], gt: &[u8], mask: &[u8]) -> Self {
        let mut c = Self::default();
        for ((&p, &g), &m) in pred.iter().zip(gt).zip(mask) {
            if m == 0 {
                continue;
            }
            match (p != 0, g != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `tp / (tp + fp)`, 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, 0 when both are 0.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub counts: ConfusionCounts,
}

pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = String::from("model,f1,precision,recall,tp,fp,fn,tn\n");
    for r in rows {
        let c = &r.counts;
        writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{},{},{},{}",
            r.model,
            c.f1(),
            c.precision(),
            c.recall(),
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        )
        .expect("write to string");
    }
    s
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<(), ModelError> {
    fs::write(path, format_report(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn hand_example() {
        let c = counts(7, 3, 7, 0);
        assert!((c.precision() - 0.7).abs() < 1e-15);
        assert!((c.recall() - 0.5).abs() < 1e-15);
        assert!((c.f1() - 2.0 * 0.35 / 1.2).abs() < 1e-15);
        let csv = format_report(&[ReportRow {
            model: "bbunet".into(),
            counts: c,
        }]);
        assert_eq!(
            csv,
            "model,f1,precision,recall,tp,fp,fn,tn\nbbunet,0.583333,0.700000,0.500000,7,3,7,0\n"
        );
        assert_eq!(format_report(&[]).lines().count(), 1);
    }

    #[test]
    fn conventions() {
        let perfect = ConfusionCounts::from_masks(&[1, 0, 1], &[1, 0, 1], &[1, 1, 1]);
        assert_eq!((perfect.precision(), perfect.recall(), perfect.f1()), (1.0, 1.0, 1.0));
        let none = ConfusionCounts::from_masks(&[0, 0], &[1, 0], &[1, 1]);
        assert_eq!((none.precision(), none.recall(), none.f1()), (0.0, 0.0, 0.0));
        let masked = ConfusionCounts::from_masks(&[1, 1], &[0, 1], &[0, 1]);
        assert_eq!(masked, counts(1, 0, 0, 0));
    }

    #[test]
    fn json_uses_fn_key() {
        let v = serde_json::to_value(counts(1, 2, 3, 4)).unwrap();
        assert_eq!(v["fn"], 3);
    }
}
