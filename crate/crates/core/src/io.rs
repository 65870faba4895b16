//! Image, scribble, mask and superpixel-map files.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, ImageReader, Luma, RgbImage};
use thiserror::Error;

use crate::mask::LabelMask;
use crate::scribbles::{ScribbleError, ScribbleSet, StrokeFile};
use crate::superpixels::SuperpixelMap;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot decode image: {0}")]
    Decode(#[from] image::ImageError),
    #[error("unsupported image format {0}")]
    Unsupported(String),
    #[error("scribble image must be 8-bit single channel, got {0:?}")]
    NotGray(image::ColorType),
    #[error("cannot parse stroke file: {0}")]
    Strokes(#[from] serde_json::Error),
    #[error(transparent)]
    Scribbles(#[from] ScribbleError),
    #[error("superpixel map has {0} segments, more than a 16-bit image holds")]
    TooManySegments(usize),
}

fn read(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

fn decode(bytes: &[u8]) -> Result<image::DynamicImage, IoError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(image::ImageError::IoError)?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Pnm) => Ok(reader.decode()?),
        Some(f) => Err(IoError::Unsupported(format!("{f:?}"))),
        None => Err(IoError::Unsupported("unknown".into())),
    }
}

/// Decodes PNG or binary PNM bytes into 8-bit RGB.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, IoError> {
    Ok(decode(bytes)?.to_rgb8())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage, IoError> {
    decode_image(&read(path.as_ref())?)
}

pub fn encode_png_rgb(image: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    image
        .write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn save_image(image: &RgbImage, path: impl AsRef<Path>) -> Result<(), IoError> {
    Ok(image.save(path)?)
}

fn encode_gray(width: usize, height: usize, pixels: Vec<u8>) -> Vec<u8> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, pixels).expect("sized");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

/// 8-bit gray PNG of arbitrary per-pixel values.
pub fn encode_gray_png(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    encode_gray(width, height, pixels.to_vec())
}

fn decode_gray(bytes: &[u8]) -> Result<image::GrayImage, IoError> {
    match decode(bytes)? {
        image::DynamicImage::ImageLuma8(g) => Ok(g),
        other => Err(IoError::NotGray(other.color())),
    }
}

/// Gray PNG where 255 is unlabeled and other values are class ids.
pub fn decode_scribble_png(bytes: &[u8], n_cl: usize) -> Result<ScribbleSet, IoError> {
    let g = decode_gray(bytes)?;
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok(ScribbleSet::new(w, h, g.into_raw(), n_cl)?)
}

pub fn parse_strokes(text: &str) -> Result<StrokeFile, IoError> {
    Ok(serde_json::from_str(text)?)
}

/// Reads a gray PNG scribble image, or a JSON stroke file when the content
/// does not start with the PNG signature.
pub fn load_scribbles(path: impl AsRef<Path>, n_cl: usize) -> Result<ScribbleSet, IoError> {
    let bytes = read(path.as_ref())?;
    if bytes.starts_with(b"\x89PNG") {
        decode_scribble_png(&bytes, n_cl)
    } else {
        let text = String::from_utf8_lossy(&bytes);
        Ok(parse_strokes(&text)?.rasterize(n_cl)?)
    }
}

pub fn encode_mask_png(mask: &LabelMask) -> Vec<u8> {
    encode_gray(mask.width(), mask.height(), mask.labels().to_vec())
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<LabelMask, IoError> {
    let g = decode_gray(bytes)?;
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok(LabelMask::new(w, h, g.into_raw()).expect("sized by decoder"))
}

pub fn save_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, encode_mask_png(mask)).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<LabelMask, IoError> {
    decode_mask_png(&read(path.as_ref())?)
}

/// 16-bit gray PNG of superpixel ids.
pub fn save_superpixels(sp: &SuperpixelMap, path: impl AsRef<Path>) -> Result<(), IoError> {
    if sp.count() > u16::MAX as usize + 1 {
        return Err(IoError::TooManySegments(sp.count()));
    }
    let img = image::ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(
        sp.width() as u32,
        sp.height() as u32,
        sp.labels().iter().map(|&l| l as u16).collect(),
    )
    .expect("sized");
    Ok(img.save_with_format(path, ImageFormat::Png)?)
}

pub fn load_superpixels(path: impl AsRef<Path>) -> Result<SuperpixelMap, IoError> {
    let img = decode(&read(path.as_ref())?)?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<u32> = img.into_raw().into_iter().map(u32::from).collect();
    Ok(SuperpixelMap::from_labels(w, h, &raw).expect("sized by decoder"))
}
