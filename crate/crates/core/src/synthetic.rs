//! Deterministic synthetic images with known ground truth.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mask::LabelMask;
use crate::scribbles::{ScribbleSet, Stroke, StrokeFile};

pub const THREE_REGION_SIZE: usize = 96;
pub const THREE_REGION_COLORS: [[u8; 3]; 3] = [[200, 60, 40], [40, 170, 70], [50, 80, 210]];
/// Amplitude of the uniform per-channel noise, as a fraction of 255.
pub const NOISE_FRACTION: f64 = 0.10;

/// An image with its true labels and one scribble stroke per region.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub image: RgbImage,
    pub ground_truth: LabelMask,
    pub strokes: StrokeFile,
}

impl Fixture {
    pub fn scribbles(&self, n_cl: usize) -> ScribbleSet {
        self.strokes
            .rasterize(n_cl)
            .expect("fixture strokes are valid")
    }
}

/// Region of pixel `(x, y)`: 1 inside a disk on the left, 2 inside a
/// rectangle on the right, 0 elsewhere.
pub fn three_region_label(x: usize, y: usize) -> u8 {
    let (dx, dy) = (x as f64 - 30.0, y as f64 - 48.0);
    if dx * dx + dy * dy <= 20.0 * 20.0 {
        1
    } else if (60..88).contains(&x) && (16..80).contains(&y) {
        2
    } else {
        0
    }
}

/// 96x96 image with three flat regions plus uniform noise of +/-10% of the
/// range on every channel, drawn from a ChaCha stream seeded with `seed`.
pub fn three_regions(seed: u64) -> Fixture {
    let n = THREE_REGION_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amplitude = NOISE_FRACTION * 255.0;
    let mut labels = Vec::with_capacity(n * n);
    let mut image = RgbImage::new(n as u32, n as u32);
    for y in 0..n {
        for x in 0..n {
            let l = three_region_label(x, y);
            labels.push(l);
            let base = THREE_REGION_COLORS[l as usize];
            let px = base.map(|c| {
                (c as f64 + rng.gen_range(-amplitude..=amplitude))
                    .round()
                    .clamp(0.0, 255.0) as u8
            });
            image.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    let stroke = |class_id, polyline: Vec<[f64; 2]>| Stroke {
        class_id,
        polyline,
        width_px: 3.0,
    };
    Fixture {
        image,
        ground_truth: LabelMask::new(n, n, labels).expect("sized by construction"),
        strokes: StrokeFile {
            width: n,
            height: n,
            strokes: vec![
                stroke(0, vec![[10.0, 8.0], [50.0, 8.0]]),
                stroke(1, vec![[22.0, 44.0], [38.0, 52.0]]),
                stroke(2, vec![[74.0, 30.0], [74.0, 64.0]]),
            ],
        },
    }
}

/// Left half gray level `left`, right half `right`.
pub fn two_halves(width: usize, height: usize, left: u8, right: u8) -> RgbImage {
    RgbImage::from_fn(width as u32, height as u32, |x, _| {
        let v = if (x as usize) < width / 2 { left } else { right };
        Rgb([v, v, v])
    })
}

pub fn constant(width: usize, height: usize, color: [u8; 3]) -> RgbImage {
    RgbImage::from_pixel(width as u32, height as u32, Rgb(color))
}
