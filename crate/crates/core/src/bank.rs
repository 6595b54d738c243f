//! Class prototypes: batch class-wise averaging and the momentum memory bank.

use crate::error::{Error, Result};
use crate::labels::TrainId;
use crate::matrix::{axpy, Mat};

pub const DEFAULT_BANK_MOMENTUM: f64 = 0.99;

/// Per-class mean embedding of one batch. Row `c` of `means` is the average
/// of the embeddings labeled `c`; rows of absent classes are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAverage {
    pub means: Mat,
    pub present: Vec<bool>,
}

/// Averages `embeddings` per class. Rows whose label is not one of the
/// `num_classes` scored classes are skipped.
pub fn class_average(embeddings: &Mat, labels: &[TrainId], num_classes: usize) -> Result<ClassAverage> {
    if embeddings.rows() != labels.len() {
        return Err(Error::Argument(format!(
            "{} embeddings for {} labels",
            embeddings.rows(),
            labels.len()
        )));
    }
    let mut means = Mat::zeros(num_classes, embeddings.cols());
    let mut counts = vec![0usize; num_classes];
    for (row, &label) in embeddings.iter_rows().zip(labels) {
        let c = label as usize;
        if c < num_classes {
            counts[c] += 1;
            axpy(1.0, row, means.row_mut(c));
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            let inv = n as f64;
            means.row_mut(c).iter_mut().for_each(|v| *v /= inv);
        }
    }
    Ok(ClassAverage {
        means,
        present: counts.iter().map(|&n| n > 0).collect(),
    })
}

/// Momentum-updated class prototypes. Nothing here is differentiated: the
/// losses read the bank as constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    /// `C × D`, one prototype per row.
    prototypes: Mat,
    momentum: f64,
    initialized: Vec<bool>,
}

impl MemoryBank {
    /// Zero prototypes, every class uninitialized.
    pub fn new(num_classes: usize, embed_dim: usize, momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Argument(format!("bank momentum {momentum} not in [0, 1]")));
        }
        Ok(Self {
            prototypes: Mat::zeros(num_classes, embed_dim),
            momentum,
            initialized: vec![false; num_classes],
        })
    }

    pub fn from_parts(prototypes: Mat, momentum: f64, initialized: Vec<bool>) -> Result<Self> {
        if initialized.len() != prototypes.rows() {
            return Err(Error::Argument("initialized mask length does not match classes".into()));
        }
        let mut bank = Self::new(prototypes.rows(), prototypes.cols(), momentum)?;
        bank.prototypes = prototypes;
        bank.initialized = initialized;
        Ok(bank)
    }

    /// A bank holding exactly this batch's class means. Stands in for the
    /// momentum bank in the no-bank ablation.
    pub fn from_batch(avg: &ClassAverage) -> Self {
        Self {
            prototypes: avg.means.clone(),
            momentum: 0.0,
            initialized: avg.present.clone(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn prototypes(&self) -> &Mat {
        &self.prototypes
    }

    pub fn prototype(&self, class: usize) -> &[f64] {
        self.prototypes.row(class)
    }

    pub fn is_initialized(&self, class: usize) -> bool {
        self.initialized[class]
    }

    pub fn initialized(&self) -> &[bool] {
        &self.initialized
    }

    /// `B_c ← m·B_c + (1−m)·f̄_c` for every present class. A class seen for
    /// the first time takes `f̄_c` directly. Absent classes are not touched.
    pub fn update(&mut self, avg: &ClassAverage) -> Result<()> {
        if avg.means.shape() != self.prototypes.shape() || avg.present.len() != self.num_classes() {
            return Err(Error::Argument(format!(
                "class average shape {:?} does not match bank {:?}",
                avg.means.shape(),
                self.prototypes.shape()
            )));
        }
        let m = self.momentum;
        for c in 0..self.num_classes() {
            if !avg.present[c] {
                continue;
            }
            let src = avg.means.row(c);
            let dst = self.prototypes.row_mut(c);
            if self.initialized[c] {
                for (b, f) in dst.iter_mut().zip(src) {
                    *b = m * *b + (1.0 - m) * f;
                }
            } else {
                dst.copy_from_slice(src);
                self.initialized[c] = true;
            }
        }
        Ok(())
    }
}
