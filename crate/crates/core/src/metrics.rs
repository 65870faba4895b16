//! Segmentation evaluation from a confusion matrix.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mask::LabelMask;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("masks have sizes {pred:?} (pred) and {gt:?} (gt)")]
    SizeMismatch {
        pred: (usize, usize),
        gt: (usize, usize),
    },
    #[error("label {label} at pixel {pixel} is not a class below {n_cl}")]
    LabelOutOfRange { label: u8, pixel: usize, n_cl: usize },
    #[error("confusion matrices have {0} and {1} classes")]
    ClassCountMismatch(usize, usize),
    #[error("the confusion matrix is empty")]
    Empty,
}

/// `counts[i * n_cl + j]`: pixels of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_cl: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_cl: usize) -> Self {
        Self {
            n_cl,
            counts: vec![0; n_cl * n_cl],
        }
    }

    pub fn from_counts(n_cl: usize, counts: Vec<u64>) -> Option<Self> {
        (counts.len() == n_cl * n_cl).then_some(Self { n_cl, counts })
    }

    pub fn n_cl(&self) -> usize {
        self.n_cl
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_cl + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `t_i`: pixels whose true class is `i`.
    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.n_cl..(i + 1) * self.n_cl].iter().sum()
    }

    /// Pixels predicted as `j`.
    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.n_cl).map(|i| self.get(i, j)).sum()
    }

    /// Adds the pixels of one prediction; pixels whose ground truth is
    /// `ignore_label` are skipped.
    pub fn accumulate(
        &mut self,
        pred: &LabelMask,
        gt: &LabelMask,
        ignore_label: u8,
    ) -> Result<(), MetricsError> {
        if pred.dims() != gt.dims() {
            return Err(MetricsError::SizeMismatch {
                pred: pred.dims(),
                gt: gt.dims(),
            });
        }
        let n_cl = self.n_cl;
        for (pixel, (&p, &g)) in pred.labels().iter().zip(gt.labels()).enumerate() {
            if (g as usize) >= n_cl && g != ignore_label {
                return Err(MetricsError::LabelOutOfRange { label: g, pixel, n_cl });
            }
            // A void prediction on a valid pixel has no column to land in.
            if (p as usize) >= n_cl && g != ignore_label {
                return Err(MetricsError::LabelOutOfRange { label: p, pixel, n_cl });
            }
        }
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if g != ignore_label {
                self.counts[g as usize * n_cl + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.n_cl != other.n_cl {
            return Err(MetricsError::ClassCountMismatch(self.n_cl, other.n_cl));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    fn check_nonempty(&self) -> Result<(), MetricsError> {
        if self.total() == 0 {
            Err(MetricsError::Empty)
        } else {
            Ok(())
        }
    }

    /// Classes taking part in the means: present in the ground truth or in
    /// the prediction.
    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_cl).filter(|&i| self.row_sum(i) > 0 || self.col_sum(i) > 0)
    }

    /// `sum_i n_ii / sum_i t_i`.
    pub fn pixel_accuracy(&self) -> Result<f64, MetricsError> {
        self.check_nonempty()?;
        let diag: u64 = (0..self.n_cl).map(|i| self.get(i, i)).sum();
        Ok(diag as f64 / self.total() as f64)
    }

    /// Mean of `n_ii / t_i` over classes with `t_i > 0`.
    pub fn mean_accuracy(&self) -> Result<f64, MetricsError> {
        self.check_nonempty()?;
        let per_class: Vec<f64> = (0..self.n_cl)
            .filter(|&i| self.row_sum(i) > 0)
            .map(|i| self.get(i, i) as f64 / self.row_sum(i) as f64)
            .collect();
        Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
    }

    /// `n_ii / (t_i + sum_j n_ji - n_ii)`, `None` for a class absent from both
    /// ground truth and prediction.
    pub fn iou(&self, i: usize) -> Option<f64> {
        let union = self.row_sum(i) + self.col_sum(i) - self.get(i, i);
        (union > 0).then(|| self.get(i, i) as f64 / union as f64)
    }

    /// Mean IoU over classes present in the ground truth or the prediction.
    pub fn mean_iou(&self) -> Result<f64, MetricsError> {
        self.check_nonempty()?;
        let ious: Vec<f64> = self.active().filter_map(|i| self.iou(i)).collect();
        Ok(ious.iter().sum::<f64>() / ious.len() as f64)
    }

    /// Plain-text report: per-class IoU table and the three scalars.
    pub fn report(&self) -> Result<String, MetricsError> {
        let mut out = String::new();
        writeln!(out, "class  gt_pixels  pred_pixels  iou").unwrap();
        for i in self.active() {
            let iou = self.iou(i).map_or("-".into(), |v| format!("{v:.4}"));
            writeln!(
                out,
                "{i:>5}  {:>9}  {:>11}  {iou}",
                self.row_sum(i),
                self.col_sum(i)
            )
            .unwrap();
        }
        writeln!(out, "pixel_accuracy {:.4}", self.pixel_accuracy()?).unwrap();
        writeln!(out, "mean_accuracy {:.4}", self.mean_accuracy()?).unwrap();
        writeln!(out, "mean_iou {:.4}", self.mean_iou()?).unwrap();
        Ok(out)
    }
}
