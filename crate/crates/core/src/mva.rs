//! Multi-view composites: the original page, a downsampled copy and a rotated
//! copy stitched side by side.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Usage(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Structural(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .ok_or_else(|| Error::Structural("pixel buffer does not match dimensions".into()))?;
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Augmentation parameters for one composite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvaParams {
    /// Fixed rotation in degrees; drawn uniformly from [-180, 180] with `seed` when absent.
    pub angle: Option<f64>,
    pub downsample_factor: f64,
    pub pad_color: Rgb,
    pub seed: u64,
}

impl Default for MvaParams {
    fn default() -> Self {
        Self {
            angle: None,
            downsample_factor: 0.5,
            pad_color: WHITE,
            seed: 0,
        }
    }
}

impl MvaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.downsample_factor > 0.0 && self.downsample_factor <= 1.0) {
            return Err(Error::Usage(format!(
                "downsample factor must lie in (0, 1], got {}",
                self.downsample_factor
            )));
        }
        if let Some(a) = self.angle {
            check_angle(a)?;
        }
        Ok(())
    }

    pub fn resolve_angle(&self) -> f64 {
        self.angle.unwrap_or_else(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.gen_range(-180.0..=180.0)
        })
    }
}

fn check_angle(angle: f64) -> Result<()> {
    if !(-180.0..=180.0).contains(&angle) {
        return Err(Error::Usage(format!(
            "rotation angle must lie in [-180, 180], got {angle}"
        )));
    }
    Ok(())
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Bilinear sample at continuous pixel-center coordinates; taps outside the image read `pad`.
fn sample(img: &RasterImage, x: f64, y: f64, pad: Rgb) -> Rgb {
    let x0 = x.floor();
    let y0 = y.floor();
    let (tx, ty) = (x - x0, y - y0);
    let tap = |xi: f64, yi: f64| -> Rgb {
        if xi < 0.0 || yi < 0.0 || xi >= img.width as f64 || yi >= img.height as f64 {
            pad
        } else {
            img.get(xi as usize, yi as usize)
        }
    };
    let (p00, p10, p01, p11) = (
        tap(x0, y0),
        tap(x0 + 1.0, y0),
        tap(x0, y0 + 1.0),
        tap(x0 + 1.0, y0 + 1.0),
    );
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = lerp(p00[c] as f64, p10[c] as f64, tx);
        let bottom = lerp(p01[c] as f64, p11[c] as f64, tx);
        out[c] = to_u8(lerp(top, bottom, ty));
    }
    out
}

/// Bilinear resize to `max(1, round(factor * dim))` in each dimension.
pub fn downsample(img: &RasterImage, factor: f64) -> Result<RasterImage> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Usage(format!(
            "downsample factor must lie in (0, 1], got {factor}"
        )));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let w = ((factor * img.width as f64).round() as usize).max(1);
    let h = ((factor * img.height as f64).round() as usize).max(1);
    let sx = img.width as f64 / w as f64;
    let sy = img.height as f64 / h as f64;
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let src_y = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        for x in 0..w {
            let src_x = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            pixels.push(sample(img, src_x, src_y, [0, 0, 0]));
        }
    }
    RasterImage::new(w, h, pixels)
}

fn rotate_quarter(img: &RasterImage, quarters: u32) -> RasterImage {
    let (w, h) = (img.width, img.height);
    match quarters % 4 {
        0 => img.clone(),
        2 => {
            let mut pixels = img.pixels.clone();
            pixels.reverse();
            RasterImage {
                width: w,
                height: h,
                pixels,
            }
        }
        q => {
            let mut out = RasterImage {
                width: h,
                height: w,
                pixels: vec![[0; 3]; w * h],
            };
            for y in 0..h {
                for x in 0..w {
                    // Counter-clockwise quarter turn: (x, y) -> (y, w - 1 - x).
                    let (nx, ny) = if q == 1 { (y, w - 1 - x) } else { (h - 1 - y, x) };
                    out.set(nx, ny, img.get(x, y));
                }
            }
            out
        }
    }
}

/// Counter-clockwise rotation onto a canvas expanded to the rotated bounding box.
///
/// Multiples of 90 degrees are exact pixel permutations; other angles use
/// bilinear inverse mapping with exposed regions filled by `pad`.
pub fn rotate(img: &RasterImage, angle: f64, pad: Rgb) -> Result<RasterImage> {
    check_angle(angle)?;
    if angle.rem_euclid(90.0) == 0.0 {
        let quarters = (angle / 90.0).rem_euclid(4.0) as u32;
        return Ok(rotate_quarter(img, quarters));
    }
    let theta = angle.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (w, h) = (img.width as f64, img.height as f64);
    let extent = |a: f64, b: f64| ((a + b) - 1e-9).ceil().max(1.0) as usize;
    let new_w = extent(w * cos.abs(), h * sin.abs());
    let new_h = extent(w * sin.abs(), h * cos.abs());
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (ncx, ncy) = (new_w as f64 / 2.0, new_h as f64 / 2.0);
    let mut pixels = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        for x in 0..new_w {
            // Destination pixel center relative to the canvas center, y pointing down.
            let dx = x as f64 + 0.5 - ncx;
            let dy = y as f64 + 0.5 - ncy;
            // Inverse of a counter-clockwise (on screen) rotation.
            let sx = cos * dx - sin * dy + cx - 0.5;
            let sy = sin * dx + cos * dy + cy - 0.5;
            let inside = sx > -0.5 && sy > -0.5 && sx < w - 0.5 && sy < h - 0.5;
            pixels.push(if inside { sample(img, sx, sy, pad) } else { pad });
        }
    }
    RasterImage::new(new_w, new_h, pixels)
}

/// Places images left to right, top-aligned; short panels are padded below.
pub fn hstack(imgs: &[RasterImage], pad: Rgb) -> Result<RasterImage> {
    if imgs.is_empty() {
        return Err(Error::Usage("hstack needs at least one image".into()));
    }
    let width: usize = imgs.iter().map(|i| i.width).sum();
    let height = imgs.iter().map(|i| i.height).max().unwrap_or(1);
    let mut out = RasterImage::filled(width, height, pad)?;
    let mut x0 = 0;
    for img in imgs {
        for y in 0..img.height {
            let dst = y * width + x0;
            out.pixels[dst..dst + img.width].copy_from_slice(&img.pixels[y * img.width..(y + 1) * img.width]);
        }
        x0 += img.width;
    }
    Ok(out)
}

/// `[original | downsampled | rotated]`.
pub fn build_composite(img: &RasterImage, params: &MvaParams) -> Result<RasterImage> {
    params.validate()?;
    let small = downsample(img, params.downsample_factor)?;
    let rotated = rotate(img, params.resolve_angle(), params.pad_color)?;
    hstack(&[img.clone(), small, rotated], params.pad_color)
}
