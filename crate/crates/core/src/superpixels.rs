//! Felzenszwalb–Huttenlocher graph-based superpixels.
//!
//! Pixels are vertices of an 8-connected grid graph whose edge weights are
//! Euclidean distances between (smoothed) pixel values. Edges are visited in
//! non-decreasing weight order and two components merge when the edge is no
//! heavier than `Int(C) + k / |C|` for both of them, where `Int(C)` is the
//! heaviest edge of the component's spanning tree.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::raster::Raster;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuperpixelError {
    #[error("image is empty")]
    EmptyImage,
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FhParams {
    /// Scale of the `k / |C|` threshold; larger values give larger segments.
    pub k: f64,
    /// Standard deviation of the Gaussian pre-smoothing, in pixels.
    pub sigma_fh: f64,
    /// Components smaller than this are merged into a neighbour.
    pub min_size: usize,
}

impl Default for FhParams {
    fn default() -> Self {
        Self {
            k: 300.0,
            sigma_fh: 0.8,
            min_size: 20,
        }
    }
}

impl FhParams {
    pub fn validate(&self) -> Result<(), SuperpixelError> {
        if !(self.k > 0.0) {
            return Err(SuperpixelError::InvalidParams("k must be positive"));
        }
        if !(self.sigma_fh >= 0.0) {
            return Err(SuperpixelError::InvalidParams("sigma_fh must be non-negative"));
        }
        if self.min_size == 0 {
            return Err(SuperpixelError::InvalidParams("min_size must be at least 1"));
        }
        Ok(())
    }
}

/// Partition of the pixel grid into contiguous ids `0..count`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl SuperpixelMap {
    /// Wraps a label image, renumbering ids by first occurrence in row-major
    /// order.
    pub fn from_labels(width: usize, height: usize, raw: &[u32]) -> Option<Self> {
        if raw.len() != width * height {
            return None;
        }
        let mut remap = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = remap.len() as u32;
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Some(Self {
            width,
            height,
            labels,
            count: remap.len(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of superpixels.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    /// Pixel count of every superpixel.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur of every channel with clamped borders. The kernel
/// radius is `ceil(3 sigma)`; `sigma == 0` returns the input unchanged.
pub fn gaussian_smooth(image: &Raster, sigma_fh: f64) -> Result<Raster, SuperpixelError> {
    if image.is_empty() {
        return Err(SuperpixelError::EmptyImage);
    }
    if !(sigma_fh >= 0.0) {
        return Err(SuperpixelError::InvalidParams("sigma_fh must be non-negative"));
    }
    if sigma_fh == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma_fh);
    let radius = (kernel.len() / 2) as isize;
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;

    let mut horizontal = Raster::filled(w, h, ch, 0.0);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let acc: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| {
                        let sx = clamp(x as isize + t as isize - radius, w);
                        kv * image.get(sx, y, c) as f64
                    })
                    .sum();
                horizontal.set(x, y, c, acc as f32);
            }
        }
    }
    let mut out = Raster::filled(w, h, ch, 0.0);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let acc: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| {
                        let sy = clamp(y as isize + t as isize - radius, h);
                        kv * horizontal.get(x, sy, c) as f64
                    })
                    .sum();
                out.set(x, y, c, acc as f32);
            }
        }
    }
    Ok(out)
}

/// Weighted edge between two vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub w: f32,
}

/// Union-find with per-component size and internal difference.
#[derive(Debug, Clone)]
pub struct Forest {
    parent: Vec<usize>,
    rank: Vec<u8>,
    size: Vec<usize>,
    internal: Vec<f32>,
}

impl Forest {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    pub fn find(&mut self, mut v: usize) -> usize {
        let mut root = v;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[v] != root {
            let next = self.parent[v];
            self.parent[v] = root;
            v = next;
        }
        root
    }

    pub fn size(&self, root: usize) -> usize {
        self.size[root]
    }

    pub fn internal(&self, root: usize) -> f32 {
        self.internal[root]
    }

    /// Joins two roots; the merged component's internal difference becomes `w`.
    pub fn join(&mut self, a: usize, b: usize, w: f32) -> usize {
        let (hi, lo) = if self.rank[a] >= self.rank[b] { (a, b) } else { (b, a) };
        if self.rank[a] == self.rank[b] {
            self.rank[hi] += 1;
        }
        self.parent[lo] = hi;
        self.size[hi] += self.size[lo];
        self.internal[hi] = w;
        hi
    }
}

/// Runs the merge criterion over an arbitrary edge list. `edges` must already
/// be in the desired processing order (non-decreasing weight).
pub fn merge_components(num_vertices: usize, edges: &[Edge], k: f64) -> Forest {
    let mut forest = Forest::new(num_vertices);
    for e in edges {
        let a = forest.find(e.a);
        let b = forest.find(e.b);
        if a == b {
            continue;
        }
        let thr_a = forest.internal(a) as f64 + k / forest.size(a) as f64;
        let thr_b = forest.internal(b) as f64 + k / forest.size(b) as f64;
        if (e.w as f64) <= thr_a.min(thr_b) {
            forest.join(a, b, e.w);
        }
    }
    forest
}

fn grid_edges(image: &Raster) -> Vec<Edge> {
    let (w, h) = (image.width(), image.height());
    let dist = |x0: usize, y0: usize, x1: usize, y1: usize| -> f32 {
        image
            .pixel(x0, y0)
            .iter()
            .zip(image.pixel(x1, y1))
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f32>()
            .sqrt()
    };
    let mut edges = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let a = y * w + x;
            if x + 1 < w {
                edges.push(Edge { a, b: a + 1, w: dist(x, y, x + 1, y) });
            }
            if y + 1 < h {
                edges.push(Edge { a, b: a + w, w: dist(x, y, x, y + 1) });
            }
            if x + 1 < w && y + 1 < h {
                edges.push(Edge { a, b: a + w + 1, w: dist(x, y, x + 1, y + 1) });
            }
            if x + 1 < w && y > 0 {
                edges.push(Edge { a, b: a + 1 - w, w: dist(x, y, x + 1, y - 1) });
            }
        }
    }
    // Stable: equal weights keep row-major pixel order.
    edges.sort_by(|p, q| p.w.total_cmp(&q.w));
    edges
}

/// Segments `image` (smoothed with `params.sigma_fh` first) into superpixels.
pub fn fh_segment(image: &Raster, params: &FhParams) -> Result<SuperpixelMap, SuperpixelError> {
    params.validate()?;
    if image.is_empty() {
        return Err(SuperpixelError::EmptyImage);
    }
    let smoothed = gaussian_smooth(image, params.sigma_fh)?;
    let (w, h) = (image.width(), image.height());
    let edges = grid_edges(&smoothed);
    let mut forest = merge_components(w * h, &edges, params.k);

    for e in &edges {
        let a = forest.find(e.a);
        let b = forest.find(e.b);
        if a != b && (forest.size(a) < params.min_size || forest.size(b) < params.min_size) {
            forest.join(a, b, e.w.max(forest.internal(a)).max(forest.internal(b)));
        }
    }

    let roots: Vec<u32> = (0..w * h).map(|v| forest.find(v) as u32).collect();
    Ok(SuperpixelMap::from_labels(w, h, &roots).expect("dimensions match"))
}

/// Unordered pairs `(i, j)`, `i < j`, of 4-connected superpixels.
pub fn adjacency(sp: &SuperpixelMap) -> BTreeSet<(usize, usize)> {
    let (w, h) = (sp.width(), sp.height());
    let mut pairs = BTreeSet::new();
    let mut add = |p: usize, q: usize| {
        if p != q {
            pairs.insert((p.min(q), p.max(q)));
        }
    };
    for y in 0..h {
        for x in 0..w {
            let l = sp.label(x, y);
            if x + 1 < w {
                add(l, sp.label(x + 1, y));
            }
            if y + 1 < h {
                add(l, sp.label(x, y + 1));
            }
        }
    }
    pairs
}
