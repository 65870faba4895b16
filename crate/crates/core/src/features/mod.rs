//! Per-superpixel colour and texture histograms and the affinity kernel built
//! on top of them.

mod color;

use std::collections::BTreeSet;

use thiserror::Error;

pub use color::{
    convert_color_space, intensity, rgb_to_hsv, rgb_to_lab, rgb_to_rg, ColorSpace,
};

use crate::graph::{AffinityGraph, GraphError};
use crate::matrix::SquareMatrix;
use crate::raster::Raster;
use crate::superpixels::SuperpixelMap;

pub const COLOR_BINS: usize = 25;
pub const TEXTURE_BINS: usize = 10;
/// Range covered by the gradient histograms.
pub const GRADIENT_RANGE: (f32, f32) = (-255.0, 255.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("kernel widths must be positive (sigma_c = {sigma_c}, sigma_t = {sigma_t})")]
    BadSigma { sigma_c: f64, sigma_t: f64 },
    #[error("superpixel {id} does not exist (count {count})")]
    UnknownSuperpixel { id: usize, count: usize },
    #[error("raster is {raster:?} but the superpixel map is {map:?}")]
    SizeMismatch {
        raster: (usize, usize),
        map: (usize, usize),
    },
    #[error("adjacency pair ({0}, {1}) refers to a missing superpixel")]
    BadAdjacency(usize, usize),
    #[error("the sigma candidate grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Colour histogram (25 bins per channel, each block summing to one) and
/// texture histogram (10 bins for each of the horizontal and vertical
/// gradients, each block summing to one).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub color: Vec<f64>,
    pub texture: Vec<f64>,
}

#[inline]
fn color_bin(v: f32) -> usize {
    ((v.clamp(0.0, 255.0) as f64 * COLOR_BINS as f64 / 256.0) as usize).min(COLOR_BINS - 1)
}

#[inline]
fn gradient_bin(g: f32) -> usize {
    let (lo, hi) = GRADIENT_RANGE;
    let t = (g.clamp(lo, hi) - lo) as f64 / (hi - lo) as f64;
    ((t * TEXTURE_BINS as f64) as usize).min(TEXTURE_BINS - 1)
}

/// Central differences `I(x+1) - I(x-1)` and `I(y+1) - I(y-1)` with clamped
/// borders.
fn gradients(channels: &Raster, c: usize, x: usize, y: usize) -> (f32, f32) {
    let (w, h) = (channels.width(), channels.height());
    let gx = channels.get((x + 1).min(w - 1), y, c) - channels.get(x.saturating_sub(1), y, c);
    let gy = channels.get(x, (y + 1).min(h - 1), c) - channels.get(x, y.saturating_sub(1), c);
    (gx, gy)
}

fn check_sizes(channels: &Raster, sp: &SuperpixelMap) -> Result<(), FeatureError> {
    if channels.width() != sp.width() || channels.height() != sp.height() {
        return Err(FeatureError::SizeMismatch {
            raster: (channels.width(), channels.height()),
            map: (sp.width(), sp.height()),
        });
    }
    Ok(())
}

struct Accumulator {
    color: Vec<f64>,
    texture: Vec<f64>,
}

impl Accumulator {
    fn new(ch: usize) -> Self {
        Self {
            color: vec![0.0; ch * COLOR_BINS],
            texture: vec![0.0; 2 * TEXTURE_BINS],
        }
    }

    fn add(&mut self, channels: &Raster, gradient_channel: usize, x: usize, y: usize) {
        for (c, &v) in channels.pixel(x, y).iter().enumerate() {
            self.color[c * COLOR_BINS + color_bin(v)] += 1.0;
        }
        let (gx, gy) = gradients(channels, gradient_channel, x, y);
        self.texture[gradient_bin(gx)] += 1.0;
        self.texture[TEXTURE_BINS + gradient_bin(gy)] += 1.0;
    }

    fn finish(mut self) -> FeatureVector {
        for block in self.color.chunks_mut(COLOR_BINS).chain(self.texture.chunks_mut(TEXTURE_BINS)) {
            let total: f64 = block.iter().sum();
            if total > 0.0 {
                block.iter_mut().for_each(|v| *v /= total);
            }
        }
        FeatureVector {
            color: self.color,
            texture: self.texture,
        }
    }
}

/// Histogram features of one superpixel.
pub fn superpixel_features(
    channels: &Raster,
    sp: &SuperpixelMap,
    id: usize,
    gradient_channel: usize,
) -> Result<FeatureVector, FeatureError> {
    check_sizes(channels, sp)?;
    if id >= sp.count() {
        return Err(FeatureError::UnknownSuperpixel {
            id,
            count: sp.count(),
        });
    }
    let mut acc = Accumulator::new(channels.channels());
    for y in 0..sp.height() {
        for x in 0..sp.width() {
            if sp.label(x, y) == id {
                acc.add(channels, gradient_channel, x, y);
            }
        }
    }
    Ok(acc.finish())
}

/// Features of every superpixel in a single pass over the image.
pub fn all_superpixel_features(
    channels: &Raster,
    sp: &SuperpixelMap,
    gradient_channel: usize,
) -> Result<Vec<FeatureVector>, FeatureError> {
    check_sizes(channels, sp)?;
    let mut accs: Vec<Accumulator> = (0..sp.count())
        .map(|_| Accumulator::new(channels.channels()))
        .collect();
    for y in 0..sp.height() {
        for x in 0..sp.width() {
            accs[sp.label(x, y)].add(channels, gradient_channel, x, y);
        }
    }
    Ok(accs.into_iter().map(Accumulator::finish).collect())
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Kernel value before normalization:
/// `exp(-|dh_c|^2 / sigma_c^2 - |dh_t|^2 / sigma_t^2)`.
pub fn raw_affinity(a: &FeatureVector, b: &FeatureVector, sigma_c: f64, sigma_t: f64) -> f64 {
    (-squared_distance(&a.color, &b.color) / (sigma_c * sigma_c)
        - squared_distance(&a.texture, &b.texture) / (sigma_t * sigma_t))
        .exp()
}

/// Affinity graph over adjacent superpixels. Non-adjacent pairs and the
/// diagonal are zero; kernel values of adjacent pairs are min-max normalized
/// to `[0, 1]` (all ones when they are all equal).
pub fn build_affinity(
    features: &[FeatureVector],
    adjacency: &BTreeSet<(usize, usize)>,
    sigma_c: f64,
    sigma_t: f64,
) -> Result<AffinityGraph, FeatureError> {
    if !(sigma_c > 0.0 && sigma_t > 0.0) {
        return Err(FeatureError::BadSigma { sigma_c, sigma_t });
    }
    let n = features.len();
    if let Some(&(i, j)) = adjacency.iter().find(|(i, j)| *i >= n || *j >= n) {
        return Err(FeatureError::BadAdjacency(i, j));
    }
    let raw: Vec<f64> = adjacency
        .iter()
        .map(|&(i, j)| raw_affinity(&features[i], &features[j], sigma_c, sigma_t))
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights = SquareMatrix::zeros(n);
    for (&(i, j), &v) in adjacency.iter().zip(&raw) {
        let normalized = if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else if hi > 0.0 {
            1.0
        } else {
            0.0
        };
        weights.set(i, j, normalized);
        weights.set(j, i, normalized);
    }
    Ok(AffinityGraph::new(weights, adjacency.iter().copied())?)
}

/// Candidate kernel widths for the per-image sigma search.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaGrid {
    pub sigma_c: Vec<f64>,
    pub sigma_t: Vec<f64>,
}

impl Default for SigmaGrid {
    fn default() -> Self {
        Self {
            sigma_c: vec![0.1, 0.2, 0.4, 0.8],
            sigma_t: vec![0.1, 0.2, 0.4, 0.8],
        }
    }
}

impl SigmaGrid {
    pub fn single(sigma_c: f64, sigma_t: f64) -> Self {
        Self {
            sigma_c: vec![sigma_c],
            sigma_t: vec![sigma_t],
        }
    }

    /// Candidates in row-major `(sigma_c, sigma_t)` order.
    pub fn candidates(&self) -> Vec<(f64, f64)> {
        self.sigma_c
            .iter()
            .flat_map(|&c| self.sigma_t.iter().map(move |&t| (c, t)))
            .collect()
    }
}

/// Picks the `(sigma_c, sigma_t)` pair with the highest score. Among tied
/// candidates the one closest (in grid index distance) to the grid midpoint
/// `(sigma_c[(m-1)/2], sigma_t[(n-1)/2])` wins, then the earliest.
pub fn best_sigma_search<E>(
    grid: &SigmaGrid,
    mut score: impl FnMut(f64, f64) -> Result<f64, E>,
) -> Result<(f64, f64), E>
where
    E: From<FeatureError>,
{
    if grid.sigma_c.is_empty() || grid.sigma_t.is_empty() {
        return Err(FeatureError::EmptyGrid.into());
    }
    let mid_c = (grid.sigma_c.len() - 1) / 2;
    let mid_t = (grid.sigma_t.len() - 1) / 2;
    let mut best: Option<(f64, usize, (f64, f64))> = None;
    for (ci, &c) in grid.sigma_c.iter().enumerate() {
        for (ti, &t) in grid.sigma_t.iter().enumerate() {
            let s = score(c, t)?;
            let dist = ci.abs_diff(mid_c) + ti.abs_diff(mid_t);
            let better = match best {
                None => true,
                Some((bs, bd, _)) => s > bs || (s == bs && dist < bd),
            };
            if better {
                best = Some((s, dist, (c, t)));
            }
        }
    }
    Ok(best.expect("grid is non-empty").2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(width: usize, height: usize, labels: &[u32]) -> SuperpixelMap {
        SuperpixelMap::from_labels(width, height, labels).unwrap()
    }

    #[test]
    fn constant_superpixel_histograms() {
        let channels = Raster::filled(4, 3, 3, 100.0);
        let sp = map(4, 3, &[0; 12]);
        let f = superpixel_features(&channels, &sp, 0, 0).unwrap();
        for block in f.color.chunks(COLOR_BINS) {
            assert_eq!(block[color_bin(100.0)], 1.0);
            assert_eq!(block.iter().sum::<f64>(), 1.0);
        }
        // Zero gradients land in the bin containing 0.
        assert_eq!(f.texture[5], 1.0);
        assert_eq!(f.texture[TEXTURE_BINS + 5], 1.0);
        assert!(superpixel_features(&channels, &sp, 1, 0).is_err());
    }

    #[test]
    fn two_value_superpixel() {
        let data: Vec<f32> = (0..8).map(|i| if i < 4 { 0.0 } else { 255.0 }).collect();
        let channels = Raster::new(8, 1, 1, data).unwrap();
        let sp = map(8, 1, &[0; 8]);
        let f = superpixel_features(&channels, &sp, 0, 0).unwrap();
        assert_eq!(f.color[0], 0.5);
        assert_eq!(f.color[COLOR_BINS - 1], 0.5);
    }

    #[test]
    fn bulk_matches_single() {
        let data: Vec<f32> = (0..60).map(|i| ((i * 37) % 256) as f32).collect();
        let channels = Raster::new(5, 4, 3, data).unwrap();
        let labels: Vec<u32> = (0..20).map(|i| (i % 5 / 2) as u32).collect();
        let sp = map(5, 4, &labels);
        let all = all_superpixel_features(&channels, &sp, 1).unwrap();
        for (id, f) in all.iter().enumerate() {
            assert_eq!(f, &superpixel_features(&channels, &sp, id, 1).unwrap());
        }
    }

    #[test]
    fn affinity_pruning_and_normalization() {
        let f = |c0: f64| FeatureVector {
            color: vec![c0, 1.0 - c0],
            texture: vec![1.0, 0.0],
        };
        let feats = vec![f(1.0), f(1.0), f(0.0)];
        assert_eq!(raw_affinity(&feats[0], &feats[1], 0.3, 0.3), 1.0);
        let adj: BTreeSet<_> = [(0, 1)].into_iter().collect();
        let g = build_affinity(&feats, &adj, 0.5, 0.5).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(0, 2), 0.0);
        assert_eq!(g.weight(1, 2), 0.0);
        assert!(matches!(
            build_affinity(&feats, &adj, 0.0, 0.5),
            Err(FeatureError::BadSigma { .. })
        ));
    }

    #[test]
    fn sigma_search_rules() {
        let single = SigmaGrid::single(0.3, 0.7);
        let pick = best_sigma_search::<FeatureError>(&single, |_, _| Ok(0.0)).unwrap();
        assert_eq!(pick, (0.3, 0.7));

        let grid = SigmaGrid::default();
        let pick =
            best_sigma_search::<FeatureError>(&grid, |c, t| Ok(if c == 0.8 && t == 0.1 { 1.0 } else { 0.0 }))
                .unwrap();
        assert_eq!(pick, (0.8, 0.1));

        // All tied: grid midpoint.
        let pick = best_sigma_search::<FeatureError>(&grid, |_, _| Ok(0.5)).unwrap();
        assert_eq!(pick, (0.2, 0.2));

        let empty = SigmaGrid { sigma_c: vec![], sigma_t: vec![0.1] };
        assert_eq!(
            best_sigma_search::<FeatureError>(&empty, |_, _| Ok(0.0)),
            Err(FeatureError::EmptyGrid)
        );
    }
}
