//! Colour-space conversions. Every output channel is scaled to `[0, 255]` so
//! a single range of FH thresholds is meaningful in every space.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Intensity,
    Lab,
    #[serde(rename = "rgi")]
    RgI,
    Hsv,
    H,
}

impl ColorSpace {
    pub const ALL: [ColorSpace; 5] = [
        ColorSpace::Intensity,
        ColorSpace::Lab,
        ColorSpace::RgI,
        ColorSpace::Hsv,
        ColorSpace::H,
    ];

    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Intensity | ColorSpace::H => 1,
            ColorSpace::Lab | ColorSpace::RgI | ColorSpace::Hsv => 3,
        }
    }

    /// Channel carrying intensity-like information, used for texture
    /// gradients: L for Lab, I for rgI, V for HSV.
    pub fn gradient_channel(self) -> usize {
        match self {
            ColorSpace::Intensity | ColorSpace::Lab | ColorSpace::H => 0,
            ColorSpace::RgI | ColorSpace::Hsv => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorSpace::Intensity => "intensity",
            ColorSpace::Lab => "lab",
            ColorSpace::RgI => "rgi",
            ColorSpace::Hsv => "hsv",
            ColorSpace::H => "h",
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ColorSpace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ColorSpace::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown colour space `{s}`"))
    }
}

pub fn intensity(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// CIE L*a*b* (D65) of an 8-bit sRGB colour, unscaled.
pub fn rgb_to_lab(r: u8, g: u8, b: u8) -> [f64; 3] {
    let (r, g, b) = (
        srgb_to_linear(r as f64 / 255.0),
        srgb_to_linear(g as f64 / 255.0),
        srgb_to_linear(b as f64 / 255.0),
    );
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let f = |t: f64| {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.950_47), f(y), f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Hexcone HSV with hue in degrees `[0, 360)`, saturation in `[0, 1]` and
/// value in `[0, 255]`.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> [f64; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let hue = if chroma == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / chroma + 2.0)
    } else {
        60.0 * ((r - g) / chroma + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { chroma / max };
    [hue, sat, max]
}

/// Normalized `(r, g)` chromaticities; black maps to `(1/3, 1/3)`.
pub fn rgb_to_rg(r: u8, g: u8, b: u8) -> [f64; 2] {
    let total = r as f64 + g as f64 + b as f64;
    if total == 0.0 {
        [1.0 / 3.0, 1.0 / 3.0]
    } else {
        [r as f64 / total, g as f64 / total]
    }
}

pub fn convert_color_space(rgb: &RgbImage, space: ColorSpace) -> Raster {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = Vec::with_capacity(w * h * space.channels());
    for p in rgb.pixels() {
        let [r, g, b] = p.0;
        match space {
            ColorSpace::Intensity => data.push(intensity(r as f64, g as f64, b as f64) as f32),
            ColorSpace::Lab => {
                let [l, a, bb] = rgb_to_lab(r, g, b);
                data.push((l * 2.55).clamp(0.0, 255.0) as f32);
                data.push((a + 128.0).clamp(0.0, 255.0) as f32);
                data.push((bb + 128.0).clamp(0.0, 255.0) as f32);
            }
            ColorSpace::RgI => {
                let [rn, gn] = rgb_to_rg(r, g, b);
                data.push((rn * 255.0) as f32);
                data.push((gn * 255.0) as f32);
                data.push(intensity(r as f64, g as f64, b as f64) as f32);
            }
            ColorSpace::Hsv => {
                let [hh, s, v] = rgb_to_hsv(r, g, b);
                data.push((hh * 255.0 / 360.0) as f32);
                data.push((s * 255.0) as f32);
                data.push(v as f32);
            }
            ColorSpace::H => {
                let [hh, _, _] = rgb_to_hsv(r, g, b);
                data.push((hh * 255.0 / 360.0) as f32);
            }
        }
    }
    Raster::new(w, h, space.channels(), data).expect("sized by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn gray_and_red() {
        let img = RgbImage::from_pixel(1, 1, Rgb([128, 128, 128]));
        assert_eq!(convert_color_space(&img, ColorSpace::Intensity).as_slice(), &[128.0]);
        let hsv = convert_color_space(&img, ColorSpace::Hsv);
        assert_eq!(hsv.get(0, 0, 1), 0.0);
        assert_eq!(hsv.get(0, 0, 2), 128.0);

        assert_eq!(rgb_to_rg(255, 0, 0), [1.0, 0.0]);
        assert_eq!(rgb_to_rg(0, 0, 0), [1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn lab_reference_values() {
        // Reference values from an independent sRGB -> Lab implementation
        // (scikit-image, D65).
        let cases = [
            ([255, 0, 0], [53.2406, 80.0923, 67.2028]),
            ([0, 255, 0], [87.7351, -86.1830, 83.1797]),
            ([128, 128, 128], [53.5850, 0.0, 0.0]),
            ([255, 255, 255], [100.0, 0.0, 0.0]),
        ];
        for ([r, g, b], expected) in cases {
            let lab = rgb_to_lab(r, g, b);
            for c in 0..3 {
                assert!((lab[c] - expected[c]).abs() < 0.01, "{:?}: {lab:?}", (r, g, b));
            }
        }
    }

    #[test]
    fn hue_sectors() {
        assert_eq!(rgb_to_hsv(255, 0, 0)[0], 0.0);
        assert_eq!(rgb_to_hsv(0, 255, 0)[0], 120.0);
        assert_eq!(rgb_to_hsv(0, 0, 255)[0], 240.0);
        assert_eq!(rgb_to_hsv(255, 0, 255)[0], 300.0);
    }

    #[test]
    fn channel_counts() {
        let img = RgbImage::from_pixel(3, 2, Rgb([10, 200, 30]));
        for space in ColorSpace::ALL {
            let r = convert_color_space(&img, space);
            assert_eq!(r.channels(), space.channels());
            assert!(r.as_slice().iter().all(|v| (0.0..=255.0).contains(v)));
        }
        assert_eq!("RGI".parse::<ColorSpace>(), Ok(ColorSpace::RgI));
    }
}
