//! Difference-of-Gaussians blob detector with gradient-orientation histogram
//! descriptors (4x4 cells, 8 bins). Unoriented; three octaves by default.

use std::f32::consts::PI;

use image::GrayImage;

use super::plane::Plane;
use super::{Descriptor, DetectorId, FeatureDetector, Keypoint, KeypointSet, MatchRule};

pub const ID: &str = "dog";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dog {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub base_sigma: f32,
    /// Blur already present in the input raster.
    pub input_sigma: f32,
    /// Minimum |DoG| on a [0, 1] intensity scale.
    pub contrast_threshold: f32,
    /// Principal-curvature ratio above which edge responses are dropped.
    pub edge_ratio: f32,
    pub max_keypoints: usize,
    pub ratio_test: f32,
    /// Double the raster before building the pyramid, which small glyphs
    /// need to yield more than a handful of blobs.
    pub upsample: bool,
}

impl Default for Dog {
    fn default() -> Self {
        Dog {
            octaves: 3,
            scales_per_octave: 3,
            base_sigma: 1.6,
            input_sigma: 0.5,
            contrast_threshold: 0.015,
            edge_ratio: 10.0,
            max_keypoints: super::DEFAULT_MAX_KEYPOINTS,
            ratio_test: 0.8,
            upsample: false,
        }
    }
}

struct Candidate {
    x: i32,
    y: i32,
    octave: usize,
    level: usize,
    response: f32,
}

const CELLS: usize = 4;
const BINS: usize = 8;
const SAMPLES_PER_CELL: usize = 4;

fn describe(g: &Plane, x: f32, y: f32, sigma: f32) -> Vec<f32> {
    let cell = 3.0 * sigma;
    let half = cell * CELLS as f32 / 2.0;
    let n = CELLS * SAMPLES_PER_CELL;
    let step = cell / SAMPLES_PER_CELL as f32;
    let weight_sigma = half;
    let mut hist = vec![0.0f32; CELLS * CELLS * BINS];
    for sy in 0..n {
        for sx in 0..n {
            let ox = -half + (sx as f32 + 0.5) * step;
            let oy = -half + (sy as f32 + 0.5) * step;
            let px = (x + ox).round() as i32;
            let py = (y + oy).round() as i32;
            let gx = g.at(px + 1, py) - g.at(px - 1, py);
            let gy = g.at(px, py + 1) - g.at(px, py - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let w = (-(ox * ox + oy * oy) / (2.0 * weight_sigma * weight_sigma)).exp();
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let pos = angle / (2.0 * PI) * BINS as f32;
            let b0 = (pos.floor() as usize) % BINS;
            let frac = pos - pos.floor();
            let c = (sy / SAMPLES_PER_CELL) * CELLS + sx / SAMPLES_PER_CELL;
            hist[c * BINS + b0] += w * mag * (1.0 - frac);
            hist[c * BINS + (b0 + 1) % BINS] += w * mag * frac;
        }
    }
    normalize(&mut hist);
    for v in hist.iter_mut() {
        *v = v.min(0.2);
    }
    normalize(&mut hist);
    hist
}

fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl Dog {
    fn sigma(&self, level: usize) -> f32 {
        self.base_sigma * 2f32.powf(level as f32 / self.scales_per_octave as f32)
    }

    /// Gaussian levels of one octave from its base image (blurred to
    /// `base_sigma`).
    fn octave(&self, base: &Plane) -> Vec<Plane> {
        (0..self.scales_per_octave + 3)
            .map(|k| {
                if k == 0 {
                    base.clone()
                } else {
                    let s = self.sigma(k);
                    base.blur((s * s - self.base_sigma * self.base_sigma).sqrt())
                }
            })
            .collect()
    }

    fn is_extremum(dogs: &[Plane], level: usize, x: i32, y: i32) -> bool {
        let v = dogs[level].at(x, y);
        let (mut is_max, mut is_min) = (true, true);
        for (k, plane) in dogs[level - 1..=level + 1].iter().enumerate() {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if k == 1 && dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = plane.at(x + dx, y + dy);
                    is_max &= v > n;
                    is_min &= v < n;
                    if !is_max && !is_min {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn passes_edge_test(&self, d: &Plane, x: i32, y: i32) -> bool {
        let v = d.at(x, y);
        let dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2.0 * v;
        let dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2.0 * v;
        let dxy = (d.at(x + 1, y + 1) - d.at(x + 1, y - 1) - d.at(x - 1, y + 1) + d.at(x - 1, y - 1)) / 4.0;
        let tr = dxx + dyy;
        let det = dxx * dyy - dxy * dxy;
        let r = self.edge_ratio;
        det > 0.0 && tr * tr / det < (r + 1.0) * (r + 1.0) / r
    }
}

impl FeatureDetector for Dog {
    fn id(&self) -> DetectorId {
        DetectorId::new(ID)
    }

    fn match_rule(&self) -> MatchRule {
        MatchRule::Ratio(self.ratio_test)
    }

    fn detect(&self, image: &GrayImage) -> KeypointSet {
        let canvas = image.dimensions();
        let mut set = KeypointSet {
            detector: self.id(),
            canvas,
            points: Vec::new(),
        };
        let mut input = Plane::from_gray(image, 1.0 / 255.0);
        if input.is_flat() {
            return set;
        }
        let mut input_sigma = self.input_sigma;
        if self.upsample {
            input = input.double();
            input_sigma *= 2.0;
        }
        let initial = (self.base_sigma.powi(2) - input_sigma.powi(2)).max(0.0).sqrt();
        let mut base = input.blur(initial);

        let mut pyramids = Vec::new();
        let mut candidates = Vec::new();
        for octave in 0..self.octaves {
            if base.width < 8 || base.height < 8 {
                break;
            }
            let gauss = self.octave(&base);
            let dogs: Vec<Plane> = gauss.windows(2).map(|w| w[1].sub(&w[0])).collect();
            for level in 1..dogs.len() - 1 {
                let d = &dogs[level];
                for y in 0..d.height as i32 {
                    for x in 0..d.width as i32 {
                        let v = d.at(x, y);
                        if v.abs() < self.contrast_threshold {
                            continue;
                        }
                        if Self::is_extremum(&dogs, level, x, y) && self.passes_edge_test(d, x, y) {
                            candidates.push(Candidate {
                                x,
                                y,
                                octave,
                                level,
                                response: v.abs(),
                            });
                        }
                    }
                }
            }
            base = gauss[self.scales_per_octave].half();
            pyramids.push(gauss);
        }

        candidates.sort_by(|a, b| {
            b.response
                .total_cmp(&a.response)
                .then(a.octave.cmp(&b.octave))
                .then(a.level.cmp(&b.level))
                .then((a.y, a.x).cmp(&(b.y, b.x)))
        });
        candidates.truncate(self.max_keypoints);

        set.points = candidates
            .into_iter()
            .map(|c| {
                let factor = (1 << c.octave) as f32 / if self.upsample { 2.0 } else { 1.0 };
                let g = &pyramids[c.octave][c.level];
                Keypoint {
                    x: (c.x as f32 * factor).min(canvas.0 as f32 - 1.0),
                    y: (c.y as f32 * factor).min(canvas.1 as f32 - 1.0),
                    response: c.response,
                    descriptor: Descriptor::Numeric(describe(g, c.x as f32, c.y as f32, self.sigma(c.level))),
                }
            })
            .collect();
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    fn disc(cx: i32, cy: i32, r: i32) -> GrayImage {
        let mut img = GrayImage::from_pixel(64, 64, Luma([255]));
        for y in 0..64 {
            for x in 0..64 {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                    img.put_pixel(x as u32, y as u32, Luma([0]));
                }
            }
        }
        img
    }

    #[test]
    fn finds_a_blob_at_the_disc_center() {
        let set = Dog::default().detect(&disc(32, 32, 4));
        assert!(!set.points.is_empty());
        let best = &set.points[0];
        assert!(
            (best.x - 32.0).abs() <= 2.0 && (best.y - 32.0).abs() <= 2.0,
            "{:?}",
            (best.x, best.y)
        );
    }

    #[test]
    fn flat_image_is_featureless() {
        let img = GrayImage::from_pixel(64, 64, Luma([255]));
        assert!(Dog::default().detect(&img).points.is_empty());
    }

    #[test]
    fn descriptors_are_unit_or_zero() {
        let set = Dog::default().detect(&disc(30, 34, 6));
        for k in &set.points {
            let Descriptor::Numeric(d) = &k.descriptor else {
                panic!("numeric expected")
            };
            assert_eq!(d.len(), CELLS * CELLS * BINS);
            let n: f32 = d.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-3 || n == 0.0);
        }
    }

    #[test]
    fn even_translation_shifts_keypoints() {
        let a = Dog::default().detect(&disc(28, 32, 5));
        let b = Dog::default().detect(&disc(32, 32, 5));
        assert_eq!(a.points.len(), b.points.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(q.x - p.x, 4.0);
            assert_eq!(q.y, p.y);
        }
    }
}
