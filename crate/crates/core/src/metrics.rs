//! Regression and segmentation metrics.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BandArray, ForestMask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandErrorReport {
    pub mae: f64,
    pub rmse: f64,
    /// Mean of `y - yhat`; positive means the prediction is too low.
    pub mbe: f64,
    pub n: usize,
    /// Mean target value, informational only.
    pub y_mean: f64,
}

/// Running sums for pooling band errors over many tiles.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BandErrorAccumulator {
    abs: f64,
    sq: f64,
    diff: f64,
    y: f64,
    n: usize,
}

impl BandErrorAccumulator {
    pub fn push(&mut self, y: &[f32], yhat: &[f32]) -> Result<()> {
        if y.len() != yhat.len() {
            return Err(Error::InvalidArgument(format!(
                "band lengths differ: {} vs {}",
                y.len(),
                yhat.len()
            )));
        }
        for (&a, &b) in y.iter().zip(yhat) {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidArgument("non-finite value in band".into()));
            }
            let d = a as f64 - b as f64;
            self.abs += d.abs();
            self.sq += d * d;
            self.diff += d;
            self.y += a as f64;
        }
        self.n += y.len();
        Ok(())
    }

    pub fn report(&self) -> Result<BandErrorReport> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("no pixels to compare".into()));
        }
        let n = self.n as f64;
        Ok(BandErrorReport {
            mae: self.abs / n,
            rmse: (self.sq / n).sqrt(),
            mbe: self.diff / n,
            n: self.n,
            y_mean: self.y / n,
        })
    }
}

pub fn band_errors(y: &BandArray, yhat: &BandArray) -> Result<BandErrorReport> {
    if y.dims() != yhat.dims() {
        return Err(Error::InvalidArgument(format!(
            "shape mismatch: {:?} vs {:?}",
            y.dims(),
            yhat.dims()
        )));
    }
    let mut acc = BandErrorAccumulator::default();
    acc.push(y.values(), yhat.values())?;
    acc.report()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
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

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

pub fn confusion(pred: &ForestMask, truth: &ForestMask) -> Result<ConfusionCounts> {
    if pred.dims() != truth.dims() {
        return Err(Error::InvalidArgument(format!(
            "mask shape mismatch: {:?} vs {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    confusion_values(pred.values(), truth.values())
}

pub fn confusion_values(pred: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument("mask lengths differ".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            _ => return Err(Error::InvalidArgument(format!("non-binary mask value ({p}, {t})"))),
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Empty denominators: precision is 1 when there are also no false
/// negatives (nothing to find, nothing claimed), otherwise 0; recall
/// likewise with false positives. F1 is 0 when both are 0.
pub fn seg_scores(c: &ConfusionCounts) -> SegScoreReport {
    let precision = if c.tp + c.fp == 0 {
        if c.fn_ == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let recall = if c.tp + c.fn_ == 0 {
        if c.fp == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SegScoreReport { precision, recall, f1 }
}
