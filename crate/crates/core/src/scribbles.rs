//! Scribble annotations: a per-pixel optional class id, either read directly
//! from a label image or rasterized from polyline strokes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pixel value meaning "no scribble" (also the void label of masks).
pub const UNLABELED: u8 = 255;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScribbleError {
    #[error("scribble set contains no labeled pixel")]
    Empty,
    #[error("class id {class} is not below the class count {n_cl}")]
    ClassOutOfRange { class: u8, n_cl: usize },
    #[error("label buffer has {got} entries, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("stroke {0} has no points")]
    EmptyStroke(usize),
    #[error("stroke {index} has invalid width {width}")]
    BadWidth { index: usize, width: f64 },
}

/// Sparse class annotation over the image grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScribbleSet {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl ScribbleSet {
    /// `labels` holds one class id per pixel or [`UNLABELED`].
    pub fn new(width: usize, height: usize, labels: Vec<u8>, n_cl: usize) -> Result<Self, ScribbleError> {
        if labels.len() != width * height {
            return Err(ScribbleError::SizeMismatch {
                expected: width * height,
                got: labels.len(),
            });
        }
        if let Some(&class) = labels
            .iter()
            .find(|&&l| l != UNLABELED && l as usize >= n_cl)
        {
            return Err(ScribbleError::ClassOutOfRange { class, n_cl });
        }
        if labels.iter().all(|&l| l == UNLABELED) {
            return Err(ScribbleError::Empty);
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> Option<u8> {
        match self.labels[y * self.width + x] {
            UNLABELED => None,
            l => Some(l),
        }
    }

    pub fn classes_present(&self) -> BTreeSet<u8> {
        self.labels.iter().copied().filter(|&l| l != UNLABELED).collect()
    }

    /// Number of scribbled pixels.
    pub fn scribbled(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }
}

/// One freehand stroke: a polyline drawn with a round brush.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub class_id: u8,
    /// `(x, y)` points in pixel coordinates; pixel centres sit on integers.
    pub polyline: Vec<[f64; 2]>,
    pub width_px: f64,
}

/// Text (JSON) scribble format: image size plus strokes painted in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeFile {
    pub width: usize,
    pub height: usize,
    pub strokes: Vec<Stroke>,
}

fn segment_distance_sq(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len_sq).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (p[0] - cx).powi(2) + (p[1] - cy).powi(2)
}

impl StrokeFile {
    /// Paints every stroke: a pixel is covered when its centre lies within
    /// `width_px / 2` of the polyline (round caps and joins). Later strokes
    /// overwrite earlier ones.
    pub fn rasterize(&self, n_cl: usize) -> Result<ScribbleSet, ScribbleError> {
        let mut labels = vec![UNLABELED; self.width * self.height];
        for (index, stroke) in self.strokes.iter().enumerate() {
            if stroke.polyline.is_empty() {
                return Err(ScribbleError::EmptyStroke(index));
            }
            if !(stroke.width_px > 0.0) {
                return Err(ScribbleError::BadWidth {
                    index,
                    width: stroke.width_px,
                });
            }
            if stroke.class_id as usize >= n_cl || stroke.class_id == UNLABELED {
                return Err(ScribbleError::ClassOutOfRange {
                    class: stroke.class_id,
                    n_cl,
                });
            }
            let r = stroke.width_px / 2.0;
            let segments: Vec<([f64; 2], [f64; 2])> = if stroke.polyline.len() == 1 {
                vec![(stroke.polyline[0], stroke.polyline[0])]
            } else {
                stroke.polyline.windows(2).map(|w| (w[0], w[1])).collect()
            };
            for (a, b) in segments {
                let x0 = (a[0].min(b[0]) - r).floor().max(0.0) as usize;
                let y0 = (a[1].min(b[1]) - r).floor().max(0.0) as usize;
                let x1 = ((a[0].max(b[0]) + r).ceil().max(-1.0) as i64).min(self.width as i64 - 1);
                let y1 = ((a[1].max(b[1]) + r).ceil().max(-1.0) as i64).min(self.height as i64 - 1);
                if x1 < 0 || y1 < 0 {
                    continue;
                }
                for y in y0..=y1 as usize {
                    for x in x0..=x1 as usize {
                        if segment_distance_sq([x as f64, y as f64], a, b) <= r * r {
                            labels[y * self.width + x] = stroke.class_id;
                        }
                    }
                }
            }
        }
        ScribbleSet::new(self.width, self.height, labels, n_cl)
    }
}
