//! Page degradation: rotation, pixel flips, morphology and downscaling,
//! applied in that order.

use image::imageops::{self, FilterType};
use image::{GrayImage, Luma};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const MAX_ROTATION_DEG: f64 = 5.0;
pub const MAX_NOISE_DENSITY: f64 = 0.005;
pub const MIN_SCALE: f64 = 0.5;

const NOISE_STREAM: u64 = 0x6e_6f69_7365; // "noise"

/// Morphology on the ink: dilation thickens strokes, erosion thins them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Morph {
    None,
    Dilate,
    Erode,
    DilateThenErode,
    ErodeThenDilate,
}

impl Morph {
    pub const ALL: [Morph; 5] = [
        Morph::None,
        Morph::Dilate,
        Morph::Erode,
        Morph::DilateThenErode,
        Morph::ErodeThenDilate,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecipe {
    pub rotation_deg: f64,
    /// Fraction of pixels whose intensity is inverted.
    pub noise_density: f64,
    pub morph: Morph,
    /// Side of the square structuring element, 2 or 3.
    pub kernel: u32,
    pub scale_factor: f64,
    /// Seed of the pixel-flip pattern.
    pub seed: u64,
}

impl DegradationRecipe {
    /// Leaves the raster untouched.
    pub fn identity() -> Self {
        DegradationRecipe {
            rotation_deg: 0.0,
            noise_density: 0.0,
            morph: Morph::None,
            kernel: 2,
            scale_factor: 1.0,
            seed: 0,
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Parameter(m));
        if !(self.rotation_deg.abs() <= MAX_ROTATION_DEG) {
            return fail(format!("rotation {} outside ±{MAX_ROTATION_DEG}", self.rotation_deg));
        }
        if !(0.0..=MAX_NOISE_DENSITY).contains(&self.noise_density) {
            return fail(format!(
                "noise density {} outside [0, {MAX_NOISE_DENSITY}]",
                self.noise_density
            ));
        }
        if !(2..=3).contains(&self.kernel) {
            return fail(format!("kernel {} not in {{2, 3}}", self.kernel));
        }
        if !(MIN_SCALE..=1.0).contains(&self.scale_factor) {
            return fail(format!("scale factor {} outside [{MIN_SCALE}, 1]", self.scale_factor));
        }
        Ok(())
    }
}

pub fn sample_recipe(seed: u64) -> DegradationRecipe {
    let mut rng = seed::rng(seed);
    DegradationRecipe {
        rotation_deg: rng.gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
        noise_density: rng.gen_range(0.0..=MAX_NOISE_DENSITY),
        morph: Morph::ALL[rng.gen_range(0..Morph::ALL.len())],
        kernel: rng.gen_range(2..=3),
        scale_factor: rng.gen_range(MIN_SCALE..=1.0),
        seed: seed::derive_seed(seed, NOISE_STREAM),
    }
}

pub fn degrade(img: &GrayImage, recipe: &DegradationRecipe) -> Result<GrayImage> {
    recipe.validate()?;
    let mut out = if recipe.rotation_deg == 0.0 {
        img.clone()
    } else {
        rotate(img, recipe.rotation_deg)
    };
    flip_pixels(&mut out, recipe.noise_density, recipe.seed);
    let k = recipe.kernel;
    out = match recipe.morph {
        Morph::None => out,
        Morph::Dilate => dilate(&out, k),
        Morph::Erode => erode(&out, k),
        Morph::DilateThenErode => erode(&dilate(&out, k), k),
        Morph::ErodeThenDilate => dilate(&erode(&out, k), k),
    };
    Ok(downscale(&out, recipe.scale_factor))
}

/// Rotation about the center with bilinear sampling; uncovered area is white.
pub fn rotate(img: &GrayImage, degrees: f64) -> GrayImage {
    let (w, h) = img.dimensions();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let sample = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            255.0
        } else {
            img.get_pixel(x as u32, y as u32)[0] as f64
        }
    };
    GrayImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        // Inverse mapping: rotate the destination point back.
        let sx = cos * dx + sin * dy + cx;
        let sy = -sin * dx + cos * dy + cy;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = (sx - x0, sy - y0);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let top = sample(x0, y0) * (1.0 - fx) + sample(x0 + 1, y0) * fx;
        let bottom = sample(x0, y0 + 1) * (1.0 - fx) + sample(x0 + 1, y0 + 1) * fx;
        Luma([(top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8])
    })
}

/// Inverts each pixel independently with probability `density`.
pub fn flip_pixels(img: &mut GrayImage, density: f64, seed: u64) {
    if density <= 0.0 {
        return;
    }
    let mut rng = seed::rng(seed);
    for p in img.pixels_mut() {
        if rng.gen::<f64>() < density {
            p[0] = 255 - p[0];
        }
    }
}

fn window(k: u32) -> std::ops::RangeInclusive<i64> {
    let lo = -((k as i64 - 1) / 2);
    lo..=lo + k as i64 - 1
}

fn filter(img: &GrayImage, k: u32, pick: fn(u8, u8) -> u8, init: u8) -> GrayImage {
    let (w, h) = img.dimensions();
    GrayImage::from_fn(w, h, |x, y| {
        let mut v = init;
        for dy in window(k) {
            for dx in window(k) {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                    v = pick(v, img.get_pixel(nx as u32, ny as u32)[0]);
                }
            }
        }
        Luma([v])
    })
}

/// Grows dark ink with a `k × k` square element.
pub fn dilate(img: &GrayImage, k: u32) -> GrayImage {
    filter(img, k, u8::min, 255)
}

/// Shrinks dark ink with a `k × k` square element.
pub fn erode(img: &GrayImage, k: u32) -> GrayImage {
    filter(img, k, u8::max, 0)
}

/// Resizes to `(⌊W·s⌋, ⌊H·s⌋)`; the result is not scaled back up.
pub fn downscale(img: &GrayImage, s: f64) -> GrayImage {
    if s >= 1.0 {
        return img.clone();
    }
    let (w, h) = img.dimensions();
    let nw = ((w as f64 * s).floor() as u32).max(1);
    let nh = ((h as f64 * s).floor() as u32).max(1);
    imageops::resize(img, nw, nh, FilterType::Triangle)
}
