//! FAST-9 corners ranked by the Harris measure, described with 256-bit BRIEF
//! tests on a smoothed image. Single scale, unoriented.

use std::sync::OnceLock;

use image::GrayImage;

use super::plane::Plane;
use super::{Descriptor, DetectorId, FeatureDetector, Keypoint, KeypointSet, MatchRule};
use crate::seed::splitmix64;

/// Bresenham circle of radius 3, clockwise from the top.
const RING: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC: usize = 9;
const PATCH_RADIUS: i32 = 15;
const PATTERN_SEED: u64 = 0x4252_4945_465f_3235; // "BRIEF_25"

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastBrief {
    /// Intensity difference a ring pixel needs over the center.
    pub threshold: f32,
    pub max_keypoints: usize,
    /// Smoothing applied before the binary tests.
    pub smoothing_sigma: f32,
    pub harris_k: f32,
    /// Largest Hamming distance accepted when matching.
    pub max_hamming: u32,
}

impl Default for FastBrief {
    fn default() -> Self {
        FastBrief {
            threshold: 20.0,
            max_keypoints: super::DEFAULT_MAX_KEYPOINTS,
            smoothing_sigma: 2.0,
            harris_k: 0.04,
            max_hamming: 64,
        }
    }
}

pub const ID: &str = "fast-brief";

/// Point pairs of the binary test pattern, fixed for all runs.
type PointPair = ((i32, i32), (i32, i32));

fn pattern() -> &'static [PointPair; 256] {
    static PATTERN: OnceLock<[PointPair; 256]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let span = (2 * PATCH_RADIUS + 1) as u64;
        let mut state = PATTERN_SEED;
        let mut next = || {
            state = splitmix64(state);
            (state % span) as i32 - PATCH_RADIUS
        };
        let mut out = [((0, 0), (0, 0)); 256];
        for pair in out.iter_mut() {
            loop {
                let p = ((next(), next()), (next(), next()));
                if p.0 != p.1 {
                    *pair = p;
                    break;
                }
            }
        }
        out
    })
}

fn is_fast_corner(p: &Plane, x: i32, y: i32, t: f32) -> bool {
    let c = p.at(x, y);
    let mut states = [0i8; 16];
    for (k, (dx, dy)) in RING.iter().enumerate() {
        let v = p.at(x + dx, y + dy);
        states[k] = if v > c + t {
            1
        } else if v < c - t {
            -1
        } else {
            0
        };
    }
    for sign in [1i8, -1] {
        let mut run = 0;
        for k in 0..(16 + ARC) {
            if states[k % 16] == sign {
                run += 1;
                if run >= ARC {
                    return true;
                }
            } else {
                run = 0;
            }
        }
    }
    false
}

fn harris(p: &Plane, x: i32, y: i32, k: f32) -> f32 {
    let (mut a, mut b, mut c) = (0.0f32, 0.0f32, 0.0f32);
    for dy in -3..=3 {
        for dx in -3..=3 {
            let (px, py) = (x + dx, y + dy);
            let gx = (p.at(px + 1, py - 1) + 2.0 * p.at(px + 1, py) + p.at(px + 1, py + 1))
                - (p.at(px - 1, py - 1) + 2.0 * p.at(px - 1, py) + p.at(px - 1, py + 1));
            let gy = (p.at(px - 1, py + 1) + 2.0 * p.at(px, py + 1) + p.at(px + 1, py + 1))
                - (p.at(px - 1, py - 1) + 2.0 * p.at(px, py - 1) + p.at(px + 1, py - 1));
            a += gx * gx;
            b += gy * gy;
            c += gx * gy;
        }
    }
    // Scale down to keep values in a comfortable f32 range.
    let norm = 1.0 / (255.0 * 255.0 * 16.0);
    let (a, b, c) = (a * norm, b * norm, c * norm);
    a * b - c * c - k * (a + b) * (a + b)
}

fn describe(smoothed: &Plane, x: i32, y: i32) -> [u64; 4] {
    let mut bits = [0u64; 4];
    for (k, ((x1, y1), (x2, y2))) in pattern().iter().enumerate() {
        if smoothed.at(x + x1, y + y1) < smoothed.at(x + x2, y + y2) {
            bits[k / 64] |= 1 << (k % 64);
        }
    }
    bits
}

impl FeatureDetector for FastBrief {
    fn id(&self) -> DetectorId {
        DetectorId::new(ID)
    }

    fn match_rule(&self) -> MatchRule {
        MatchRule::MaxHamming(self.max_hamming)
    }

    fn detect(&self, image: &GrayImage) -> KeypointSet {
        let plane = Plane::from_gray(image, 1.0);
        let canvas = image.dimensions();
        let mut set = KeypointSet {
            detector: self.id(),
            canvas,
            points: Vec::new(),
        };
        if plane.is_flat() {
            return set;
        }
        let (w, h) = (plane.width as i32, plane.height as i32);
        let mut score = vec![f32::NEG_INFINITY; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                if is_fast_corner(&plane, x, y, self.threshold) {
                    score[(y * w + x) as usize] = harris(&plane, x, y, self.harris_k);
                }
            }
        }

        // 3x3 non-maximum suppression; equal scores keep the earlier pixel.
        let mut candidates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let s = score[(y * w + x) as usize];
                if s == f32::NEG_INFINITY {
                    continue;
                }
                let mut keep = true;
                'n: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let ns = score[(ny * w + nx) as usize];
                        let earlier = (ny, nx) < (y, x);
                        if ns > s || (ns == s && earlier) {
                            keep = false;
                            break 'n;
                        }
                    }
                }
                if keep {
                    candidates.push((x, y, s));
                }
            }
        }
        candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
        candidates.truncate(self.max_keypoints);

        let smoothed = plane.blur(self.smoothing_sigma);
        set.points = candidates
            .into_iter()
            .map(|(x, y, s)| Keypoint {
                x: x as f32,
                y: y as f32,
                response: s,
                descriptor: Descriptor::Binary(describe(&smoothed, x, y)),
            })
            .collect();
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Luma;

    fn square(offset: u32) -> GrayImage {
        let mut img = GrayImage::from_pixel(64, 64, Luma([255]));
        for y in 20..40 {
            for x in 20..40 {
                img.put_pixel(x + offset, y, Luma([0]));
            }
        }
        img
    }

    #[test]
    fn pattern_is_stable_and_in_range() {
        let p = pattern();
        assert!(p
            .iter()
            .all(|((a, b), (c, d))| [a, b, c, d].iter().all(|v| v.abs() <= PATCH_RADIUS)));
        assert_eq!(p, pattern());
        let distinct: std::collections::HashSet<_> = p.iter().collect();
        assert!(distinct.len() > 250);
    }

    #[test]
    fn square_has_four_corners() {
        let set = FastBrief::default().detect(&square(0));
        assert_eq!(
            set.points.len(),
            4,
            "{:?}",
            set.points.iter().map(|k| (k.x, k.y)).collect::<Vec<_>>()
        );
        for k in &set.points {
            let near = |v: f32, a: f32| (v - a).abs() <= 2.0;
            assert!((near(k.x, 20.0) || near(k.x, 39.0)) && (near(k.y, 20.0) || near(k.y, 39.0)));
        }
    }

    #[test]
    fn flat_image_has_no_corners() {
        let img = GrayImage::from_pixel(64, 64, Luma([255]));
        assert!(FastBrief::default().detect(&img).points.is_empty());
    }

    #[test]
    fn detection_is_translation_equivariant() {
        let a = FastBrief::default().detect(&square(0));
        let b = FastBrief::default().detect(&square(5));
        assert_eq!(a.points.len(), b.points.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(q.x - p.x, 5.0);
            assert_eq!(q.y, p.y);
            assert_eq!(p.descriptor, q.descriptor);
        }
    }
}
