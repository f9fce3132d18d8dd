//! Keypoint detection on glyph rasters and one-to-one matching between two
//! keypoint sets.
//!
//! Two glyphs are compared through their [`MatchSet`]: the Jaccard index of
//! the keypoint sets ([`jaccard`]) and the mean spatial distance between
//! matched keypoints ([`avg_distance`]).

mod dog;
mod fast_brief;
mod plane;

use std::fmt;
use std::sync::Arc;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dog::Dog;
pub use fast_brief::FastBrief;
pub use plane::Plane;

pub const DEFAULT_MAX_KEYPOINTS: usize = 100;

/// Lower clamp applied to the mean match distance, in pixels.
pub const MIN_AVG_DISTANCE: f64 = 0.5;

/// Name of a detection algorithm.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorId(String);

impl DetectorId {
    pub fn new(name: impl Into<String>) -> Self {
        DetectorId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    /// 256 binary tests.
    Binary([u64; 4]),
    Numeric(Vec<f32>),
}

impl Descriptor {
    /// Hamming distance for binary descriptors, Euclidean for numeric ones.
    pub fn distance(&self, other: &Descriptor) -> Result<f32> {
        match (self, other) {
            (Descriptor::Binary(a), Descriptor::Binary(b)) => {
                Ok(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum::<u32>() as f32)
            }
            (Descriptor::Numeric(a), Descriptor::Numeric(b)) if a.len() == b.len() => {
                Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f32>().sqrt())
            }
            _ => Err(Error::Contract("descriptor kinds or lengths differ".into())),
        }
    }

    pub fn to_hex(&self) -> String {
        match self {
            Descriptor::Binary(bits) => bits.iter().map(|w| hex::encode(w.to_le_bytes())).collect(),
            Descriptor::Numeric(v) => v.iter().map(|x| hex::encode(x.to_le_bytes())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub response: f32,
    pub descriptor: Descriptor,
}

/// Keypoints of one raster, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub detector: DetectorId,
    pub canvas: (u32, u32),
    pub points: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Debug dump: `{detector, points: [{x, y, desc_hex}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "detector": self.detector,
            "points": self.points.iter().map(|p| serde_json::json!({
                "x": p.x,
                "y": p.y,
                "desc_hex": p.descriptor.to_hex(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// How a detector's descriptors are accepted as matches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchRule {
    /// Binary descriptors: accept at or below this Hamming distance.
    MaxHamming(u32),
    /// Numeric descriptors: the best distance must be below `ratio` times
    /// the second best, in both directions.
    Ratio(f32),
}

/// A keypoint detector. Implementations must be deterministic.
pub trait FeatureDetector: Send + Sync {
    fn id(&self) -> DetectorId;
    fn detect(&self, image: &GrayImage) -> KeypointSet;
    fn match_rule(&self) -> MatchRule;
}

/// The built-in detectors: FAST/BRIEF corners and DoG blobs.
pub fn default_detectors() -> Vec<Arc<dyn FeatureDetector>> {
    vec![Arc::new(FastBrief::default()), Arc::new(Dog::default())]
}

/// Looks detectors up by name among the built-ins.
pub fn detectors_by_name(names: &[String]) -> Result<Vec<Arc<dyn FeatureDetector>>> {
    if names.is_empty() {
        return Err(Error::Parameter("detector set is empty".into()));
    }
    names
        .iter()
        .map(|n| -> Result<Arc<dyn FeatureDetector>> {
            match n.as_str() {
                fast_brief::ID => Ok(Arc::new(FastBrief::default())),
                dog::ID => Ok(Arc::new(Dog::default())),
                other => Err(Error::Parameter(format!(
                    "unknown detector `{other}` (known: {}, {})",
                    fast_brief::ID,
                    dog::ID
                ))),
            }
        })
        .collect()
}

/// One matched keypoint pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub a: usize,
    pub b: usize,
    pub spatial_distance: f64,
    pub descriptor_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    /// Sorted by index into `a`.
    pub pairs: Vec<MatchPair>,
    pub n_a: usize,
    pub n_b: usize,
}

/// Which distance [`avg_distance`] averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    #[default]
    Spatial,
    Descriptor,
}

fn spatial(p: &Keypoint, q: &Keypoint) -> f64 {
    let dx = (p.x - q.x) as f64;
    let dy = (p.y - q.y) as f64;
    (dx * dx + dy * dy).sqrt()
}

/// Mutual-nearest-neighbour matching in descriptor space.
///
/// Nearest neighbours are ranked by descriptor distance, then spatial
/// distance, then index, so the pair set is symmetric in its arguments.
pub fn match_keypoints(a: &KeypointSet, b: &KeypointSet, rule: MatchRule) -> Result<MatchSet> {
    if a.detector != b.detector {
        return Err(Error::Contract(format!(
            "cannot match keypoints from `{}` against `{}`",
            a.detector, b.detector
        )));
    }
    if a.canvas != b.canvas {
        return Err(Error::Contract(format!(
            "canvas sizes differ: {:?} vs {:?}",
            a.canvas, b.canvas
        )));
    }
    let (n_a, n_b) = (a.len(), b.len());
    let mut set = MatchSet {
        pairs: Vec::new(),
        n_a,
        n_b,
    };
    if n_a == 0 || n_b == 0 {
        return Ok(set);
    }

    let mut desc = vec![0f32; n_a * n_b];
    let mut space = vec![0f64; n_a * n_b];
    for (i, p) in a.points.iter().enumerate() {
        for (j, q) in b.points.iter().enumerate() {
            desc[i * n_b + j] = p.descriptor.distance(&q.descriptor)?;
            space[i * n_b + j] = spatial(p, q);
        }
    }
    let key = |i: usize, j: usize| (desc[i * n_b + j], space[i * n_b + j]);
    let better = |x: (f32, f64), y: (f32, f64)| x.0 < y.0 || (x.0 == y.0 && x.1 < y.1);

    let best_in_b: Vec<usize> = (0..n_a)
        .map(|i| (1..n_b).fold(0, |best, j| if better(key(i, j), key(i, best)) { j } else { best }))
        .collect();
    let best_in_a: Vec<usize> = (0..n_b)
        .map(|j| (1..n_a).fold(0, |best, i| if better(key(i, j), key(best, j)) { i } else { best }))
        .collect();

    let second_row = |i: usize, skip: usize| {
        (0..n_b)
            .filter(|&j| j != skip)
            .map(|j| desc[i * n_b + j])
            .fold(f32::INFINITY, f32::min)
    };
    let second_col = |j: usize, skip: usize| {
        (0..n_a)
            .filter(|&i| i != skip)
            .map(|i| desc[i * n_b + j])
            .fold(f32::INFINITY, f32::min)
    };

    for (i, &j) in best_in_b.iter().enumerate() {
        if best_in_a[j] != i {
            continue;
        }
        let d = desc[i * n_b + j];
        let accepted = match rule {
            MatchRule::MaxHamming(max) => d <= max as f32,
            MatchRule::Ratio(r) => d < r * second_row(i, j) && d < r * second_col(j, i),
        };
        if accepted {
            set.pairs.push(MatchPair {
                a: i,
                b: j,
                spatial_distance: space[i * n_b + j],
                descriptor_distance: d as f64,
            });
        }
    }
    Ok(set)
}

/// `|pairs| / (n_a + n_b - |pairs|)`, or `None` when both sets are empty.
pub fn jaccard(m: &MatchSet) -> Option<f64> {
    let union = m.n_a + m.n_b - m.pairs.len();
    if union == 0 {
        None
    } else {
        Some(m.pairs.len() as f64 / union as f64)
    }
}

/// Mean distance over matched pairs, clamped below at
/// [`MIN_AVG_DISTANCE`]; `None` without matches.
pub fn avg_distance(m: &MatchSet, mode: DistanceMode) -> Option<f64> {
    if m.pairs.is_empty() {
        return None;
    }
    let sum: f64 = m
        .pairs
        .iter()
        .map(|p| match mode {
            DistanceMode::Spatial => p.spatial_distance,
            DistanceMode::Descriptor => p.descriptor_distance,
        })
        .sum();
    Some((sum / m.pairs.len() as f64).max(MIN_AVG_DISTANCE))
}
