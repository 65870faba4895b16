//! Independent oracles used by the integration tests. Nothing here calls the
//! library routine it is meant to check.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use cdseg::graph::AffinityGraph;
use cdseg::scribbles::{StrokeFile, UNLABELED};
use rand::Rng;

/// Random symmetric affinity matrix with zero diagonal, entries in `[0, 1]`
/// and roughly `density` of the pairs non-zero.
pub fn random_rows(rng: &mut impl Rng, n: usize, density: f64) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                let w: f64 = rng.gen_range(0.01..=1.0);
                rows[i][j] = w;
                rows[j][i] = w;
            }
        }
    }
    rows
}

pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> AffinityGraph {
    AffinityGraph::from_rows(&random_rows(rng, n, density)).expect("valid by construction")
}

pub fn random_subset(rng: &mut impl Rng, n: usize) -> BTreeSet<usize> {
    loop {
        let s: BTreeSet<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        if !s.is_empty() {
            return s;
        }
    }
}

pub fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

pub fn quadratic(m: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            total += x[i] * m[i][j] * x[j];
        }
    }
    total
}

/// Characteristic polynomial coefficients by Faddeev-LeVerrier:
/// `det(tI - M) = t^n + c[1] t^(n-1) + ... + c[n]`.
pub fn char_poly(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    let mut mk = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = M * M_{k-1} + c_{k-1} I, with M_0 = 0.
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += m[i][l] * mk[l][j];
                }
                next[i][j] = s + if i == j { c[k - 1] } else { 0.0 };
            }
        }
        // c_k = -tr(M M_k) / k
        let mut tr = 0.0;
        for i in 0..n {
            for l in 0..n {
                tr += m[i][l] * next[l][i];
            }
        }
        c[k] = -tr / k as f64;
        mk = next;
    }
    c
}

/// Largest root of the characteristic polynomial of a symmetric matrix, by
/// Newton iteration from above the Gershgorin bound (all roots are real, so
/// the iteration decreases monotonically onto the largest one).
pub fn lambda_max_oracle(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let c = char_poly(m);
    let eval = |t: f64| {
        let (mut p, mut dp) = (0.0, 0.0);
        for &ci in &c {
            dp = dp * t + p;
            p = p * t + ci;
        }
        (p, dp)
    };
    let bound = (0..n)
        .map(|i| (0..n).map(|j| m[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut t = bound + 1.0;
    for _ in 0..10_000 {
        let (p, dp) = eval(t);
        if dp == 0.0 {
            break;
        }
        let next = t - p / dp;
        if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) || next >= t {
            t = next.min(t);
            break;
        }
        t = next;
    }
    t
}

/// Node weights by the recursive definition, memoized on bit masks of
/// global vertex ids (n <= 20).
pub struct NodeWeights<'a> {
    a: &'a [Vec<f64>],
    memo: HashMap<(u32, usize), f64>,
}

impl<'a> NodeWeights<'a> {
    pub fn new(a: &'a [Vec<f64>]) -> Self {
        Self {
            a,
            memo: HashMap::new(),
        }
    }

    fn members(mask: u32) -> Vec<usize> {
        (0..32).filter(|b| mask & (1 << b) != 0).collect()
    }

    /// `w_S(i)` for `S` given as a mask containing `i`.
    pub fn weight(&mut self, mask: u32, i: usize) -> f64 {
        if mask.count_ones() == 1 {
            return 1.0;
        }
        if let Some(&w) = self.memo.get(&(mask, i)) {
            return w;
        }
        let rest = mask & !(1 << i);
        let rest_members = Self::members(rest);
        let mut total = 0.0;
        for &j in &rest_members {
            let mean = rest_members.iter().map(|&k| self.a[j][k]).sum::<f64>()
                / rest_members.len() as f64;
            let phi = self.a[j][i] - mean;
            total += phi * self.weight(rest, j);
        }
        self.memo.insert((mask, i), total);
        total
    }

    pub fn is_dominant(&mut self, set: &BTreeSet<usize>) -> bool {
        let mask = set.iter().fold(0u32, |m, &v| m | (1 << v));
        if set.iter().any(|&i| self.weight(mask, i) <= 0.0) {
            return false;
        }
        (0..self.a.len())
            .filter(|v| !set.contains(v))
            .all(|o| self.weight(mask | (1 << o), o) < 0.0)
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    Some(x)
}

/// Cholesky test for positive definiteness.
pub fn positive_definite(m: &[Vec<f64>]) -> bool {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if d <= 1e-12 {
                    return false;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    true
}

/// Strict local maximizers of `x'Bx` over the simplex, found by enumerating
/// supports: KKT point with positive support, no profitable outside
/// strategy, and `B` negative definite on the tangent space of the face
/// spanned by the support and any outside strategy that ties.
pub fn strict_local_maximizers(b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b.len();
    let mut found = Vec::new();
    for mask in 1u32..(1 << n) {
        let sup: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let s = sup.len();
        // [B_ss  -1] [x]   [0]
        // [1'     0] [l] = [1]
        let mut m = vec![vec![0.0; s + 1]; s + 1];
        let mut rhs = vec![0.0; s + 1];
        for (p, &i) in sup.iter().enumerate() {
            for (q, &j) in sup.iter().enumerate() {
                m[p][q] = b[i][j];
            }
            m[p][s] = -1.0;
            m[s][p] = 1.0;
        }
        rhs[s] = 1.0;
        let Some(sol) = solve(m, rhs) else { continue };
        if sol[..s].iter().any(|&v| v <= 1e-12) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (p, &i) in sup.iter().enumerate() {
            x[i] = sol[p];
        }
        let value = quadratic(b, &x);
        let mut face = sup.clone();
        let mut nash = true;
        for j in (0..n).filter(|j| mask & (1 << j) == 0) {
            let bj: f64 = (0..n).map(|k| b[j][k] * x[k]).sum();
            if bj > value + 1e-12 {
                nash = false;
            } else if bj >= value - 1e-12 {
                face.push(j);
            }
        }
        if !nash {
            continue;
        }
        // Tangent basis e_p - e_last of the face, widened by tied strategies.
        let t = face.len() - 1;
        let mut proj = vec![vec![0.0; t]; t];
        let last = face[t];
        for p in 0..t {
            for q in 0..t {
                let (i, j) = (face[p], face[q]);
                proj[p][q] = -(b[i][j] - b[i][last] - b[last][j] + b[last][last]);
            }
        }
        if t == 0 || positive_definite(&proj) {
            found.push(x);
        }
    }
    found
}

/// Pixels covered by a stroke file: a pixel centre is covered when it lies
/// within `width/2` of a segment, checked as the minimum of the endpoint
/// distances and the perpendicular distance when the foot falls inside.
pub fn rasterize_oracle(file: &StrokeFile) -> Vec<u8> {
    let mut out = vec![UNLABELED; file.width * file.height];
    for stroke in &file.strokes {
        let r = stroke.width_px / 2.0;
        let pts = &stroke.polyline;
        let segs: Vec<([f64; 2], [f64; 2])> = if pts.len() == 1 {
            vec![(pts[0], pts[0])]
        } else {
            (1..pts.len()).map(|i| (pts[i - 1], pts[i])).collect()
        };
        for y in 0..file.height {
            for x in 0..file.width {
                let p = [x as f64, y as f64];
                let hit = segs.iter().any(|&(a, b)| {
                    let da = ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt();
                    let db = ((p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)).sqrt();
                    let mut d = da.min(db);
                    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
                    if len > 0.0 {
                        let (ux, uy) = ((b[0] - a[0]) / len, (b[1] - a[1]) / len);
                        let along = (p[0] - a[0]) * ux + (p[1] - a[1]) * uy;
                        if (0.0..=len).contains(&along) {
                            let perp = ((p[0] - a[0]) * uy - (p[1] - a[1]) * ux).abs();
                            d = d.min(perp);
                        }
                    }
                    d <= r + 1e-12
                });
                if hit {
                    out[y * file.width + x] = stroke.class_id;
                }
            }
        }
    }
    out
}

/// Pixel accuracy, mean accuracy and mean IoU counted straight from the
/// pixels, skipping pixels whose truth is `ignore`.
pub fn naive_metrics(pred: &[u8], gt: &[u8], n_cl: usize, ignore: u8) -> (f64, f64, f64) {
    let valid: Vec<(u8, u8)> = pred
        .iter()
        .zip(gt)
        .filter(|(_, &g)| g != ignore)
        .map(|(&p, &g)| (p, g))
        .collect();
    let correct = valid.iter().filter(|(p, g)| p == g).count() as u64;
    let pixel = correct as f64 / valid.len() as u64 as f64;

    let mut accs = Vec::new();
    let mut ious = Vec::new();
    for c in 0..n_cl as u8 {
        let in_gt = valid.iter().filter(|(_, g)| *g == c).count() as u64;
        let in_pred = valid.iter().filter(|(p, _)| *p == c).count() as u64;
        let both = valid.iter().filter(|(p, g)| *p == c && *g == c).count() as u64;
        let either = valid.iter().filter(|(p, g)| *p == c || *g == c).count() as u64;
        if in_gt > 0 {
            accs.push(both as f64 / in_gt as f64);
        }
        if in_gt > 0 || in_pred > 0 {
            ious.push(both as f64 / either as f64);
        }
    }
    (
        pixel,
        accs.iter().sum::<f64>() / accs.len() as f64,
        ious.iter().sum::<f64>() / ious.len() as f64,
    )
}
