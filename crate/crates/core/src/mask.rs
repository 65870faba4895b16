//! Dense label masks.

use crate::scribbles::UNLABELED;

/// Per-pixel class ids. [`UNLABELED`] may appear in intermediate masks but
/// never in the output of the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Option<Self> {
        (labels.len() == width * height).then_some(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn has_unlabeled(&self) -> bool {
        self.labels.contains(&UNLABELED)
    }

    /// Pixel count per label value.
    pub fn histogram(&self) -> [usize; 256] {
        let mut h = [0; 256];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}
