//! Glyph similarity between every ordered pair of alphabet characters.
//!
//! For a detector `q` the raw score of `(i, j)` is the mean over fonts of
//! `J / D`, where `J` is the Jaccard index of the two glyphs' keypoint sets
//! and `D` the mean distance between matched keypoints. A font contributes 0
//! when either glyph is missing, either keypoint set is empty, or nothing
//! matches.
//!
//! Each row `(i, q)` is then min-max scaled over `j ≠ i` and the scaled terms
//! are averaged over detectors:
//!
//! ```text
//! S_norm(i, j) = 1/|Q| · Σ_q (S(i,j,q) − min_j S(i,·,q)) / (max_j S(i,·,q) − min_j S(i,·,q))
//! ```
//!
//! A row whose raw scores are all equal contributes 0 for every `j`. Rows are
//! directional: `S_norm(i, j)` reads "how likely `i` is misread as `j`".

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atlas::{render_glyph_with, FontSet, DEFAULT_CANVAS, DEFAULT_MARGIN};
use crate::corpus::CharsetProfile;
use crate::error::{Error, Result};
use crate::features::{
    avg_distance, jaccard, match_keypoints, DetectorId, DistanceMode, FeatureDetector, KeypointSet, MatchRule,
};
use crate::parallel;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TOP_K: usize = 50;

/// Rendering and matching parameters that affect the scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub canvas: (u32, u32),
    pub margin: f32,
    pub distance_mode: DistanceMode,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            canvas: DEFAULT_CANVAS,
            margin: DEFAULT_MARGIN,
            distance_mode: DistanceMode::Spatial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphSimilarityMatrix {
    pub alphabet: Vec<char>,
    pub detectors: Vec<DetectorId>,
    pub fonts_digest: String,
    pub params_digest: String,
    /// Per detector, row-major `n × n` raw scores. Diagonal entries are 0 and
    /// carry no meaning. Empty when the matrix was loaded without them.
    pub raw: Vec<Vec<f64>>,
    /// Row-major `n × n` normalized scores, diagonal 0.
    pub normalized: Vec<f64>,
}

impl GlyphSimilarityMatrix {
    /// A matrix from hand-built normalized scores.
    pub fn from_normalized(alphabet: Vec<char>, normalized: Vec<f64>) -> Self {
        assert_eq!(normalized.len(), alphabet.len() * alphabet.len());
        GlyphSimilarityMatrix {
            alphabet,
            detectors: Vec::new(),
            fonts_digest: String::new(),
            params_digest: String::new(),
            raw: Vec::new(),
            normalized,
        }
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.alphabet.iter().position(|&a| a == c)
    }

    /// `S_norm(i, j)` by character; `None` for unknown characters or `i = j`.
    pub fn get(&self, i: char, j: char) -> Option<f64> {
        let (a, b) = (self.index_of(i)?, self.index_of(j)?);
        (a != b).then(|| self.normalized[a * self.len() + b])
    }

    /// Off-diagonal entries of row `i` as `(j, S_norm)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.len();
        (0..n)
            .filter(move |&j| j != i)
            .map(move |j| (j, self.normalized[i * n + j]))
    }

    /// Digest of the alphabet, for compatibility checks.
    pub fn alphabet_digest(&self) -> String {
        alphabet_digest(&self.alphabet)
    }

    /// Warns when the matrix was built for a different alphabet than the
    /// profile's.
    pub fn check_profile(&self, profile: &CharsetProfile) -> Option<String> {
        let expected = alphabet_digest(&profile.alphabet);
        if expected == self.alphabet_digest() {
            return None;
        }
        let missing = profile.alphabet.iter().filter(|c| self.index_of(**c).is_none()).count();
        Some(format!(
            "similarity matrix alphabet digest {} differs from profile digest {} \
             ({} profile character(s) absent from the matrix)",
            &self.alphabet_digest()[..12],
            &expected[..12],
            missing
        ))
    }

    /// Keeps the `k` highest entries of every row and zeroes the rest.
    /// Ties keep the earlier alphabet position.
    pub fn sparsified(&self, k: usize) -> Self {
        let n = self.len();
        let mut out = self.clone();
        for i in 0..n {
            let mut entries: Vec<(usize, f64)> = self.row(i).collect();
            entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(j, _) in entries.iter().skip(k) {
                out.normalized[i * n + j] = 0.0;
            }
        }
        out
    }
}

pub fn alphabet_digest(alphabet: &[char]) -> String {
    let s: String = alphabet.iter().collect();
    hex::encode(Sha256::digest(s.as_bytes()))
}

/// One font's contribution `J / D` for a pair of keypoint sets.
pub fn font_term(a: Option<&KeypointSet>, b: Option<&KeypointSet>, rule: MatchRule, mode: DistanceMode) -> Result<f64> {
    let (Some(a), Some(b)) = (a, b) else {
        return Ok(0.0);
    };
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    let m = match_keypoints(a, b, rule)?;
    match (jaccard(&m), avg_distance(&m, mode)) {
        (Some(j), Some(d)) => Ok(j / d),
        _ => Ok(0.0),
    }
}

/// Mean of per-font terms.
pub fn mean_over_fonts(terms: &[f64]) -> f64 {
    if terms.is_empty() {
        0.0
    } else {
        terms.iter().sum::<f64>() / terms.len() as f64
    }
}

fn detect_glyph(
    fonts: &FontSet,
    font: usize,
    c: char,
    detector: &dyn FeatureDetector,
    params: &SimilarityParams,
) -> Result<Option<KeypointSet>> {
    match render_glyph_with(&fonts.fonts()[font], c, params.canvas, params.margin) {
        Ok(g) => Ok(Some(detector.detect(&g.pixels))),
        Err(Error::GlyphUnavailable { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Raw score `S(i, j, q)` computed from scratch.
pub fn pair_score(
    i: char,
    j: char,
    detector: &dyn FeatureDetector,
    fonts: &FontSet,
    params: &SimilarityParams,
) -> Result<f64> {
    if i == j {
        return Err(Error::Contract(format!("similarity of {i:?} with itself is undefined")));
    }
    let mut terms = Vec::with_capacity(fonts.len());
    for f in 0..fonts.len() {
        let a = detect_glyph(fonts, f, i, detector, params)?;
        let b = detect_glyph(fonts, f, j, detector, params)?;
        terms.push(font_term(
            a.as_ref(),
            b.as_ref(),
            detector.match_rule(),
            params.distance_mode,
        )?);
    }
    Ok(mean_over_fonts(&terms))
}

/// Min-max scales each row of one detector's `n × n` raw scores over its
/// off-diagonal entries. Degenerate rows become all zeros.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN rows count as degenerate
pub fn normalize_detector(raw: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row = (0..n).filter(|&j| j != i).map(|j| raw[i * n + j]);
        let (lo, hi) = row.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !(hi > lo) {
            continue;
        }
        for j in (0..n).filter(|&j| j != i) {
            out[i * n + j] = (raw[i * n + j] - lo) / (hi - lo);
        }
    }
    out
}

/// Averages the per-detector scaled terms.
pub fn normalize(raw: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    if raw.is_empty() {
        return out;
    }
    for r in raw {
        for (o, v) in out.iter_mut().zip(normalize_detector(r, n)) {
            *o += v;
        }
    }
    let q = raw.len() as f64;
    out.iter_mut().for_each(|v| *v /= q);
    out
}

/// Progress callback: `(done, total)` ordered pairs.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

#[derive(Default)]
pub struct BuildOptions<'a> {
    pub params: SimilarityParams,
    /// Worker threads; 0 uses all cores. Output does not depend on it.
    pub jobs: usize,
    pub progress: Option<Progress<'a>>,
}

fn params_digest(params: &SimilarityParams, detectors: &[Arc<dyn FeatureDetector>]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(params).expect("params serialize"));
    for d in detectors {
        h.update(d.id().as_str().as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

/// Computes the full matrix for `alphabet`. Cost is
/// `O(n² · |fonts| · |detectors|)` matches.
pub fn build(
    alphabet: &[char],
    fonts: &FontSet,
    detectors: &[Arc<dyn FeatureDetector>],
    opts: &BuildOptions<'_>,
) -> Result<GlyphSimilarityMatrix> {
    let n = alphabet.len();
    if n < 2 {
        return Err(Error::Build(format!("alphabet needs at least 2 characters, got {n}")));
    }
    if detectors.is_empty() {
        return Err(Error::Build("no detectors".into()));
    }
    let n_f = fonts.len();
    let params = &opts.params;

    parallel::install(opts.jobs, || {
        // keypoints[q][i * n_f + f]
        let keypoints: Vec<Vec<Option<KeypointSet>>> = detectors
            .iter()
            .map(|d| {
                (0..n * n_f)
                    .into_par_iter()
                    .map(|k| detect_glyph(fonts, k % n_f, alphabet[k / n_f], d.as_ref(), params))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        if keypoints[0].iter().all(|k| k.is_none()) {
            return Err(Error::Build("no font renders any alphabet character".into()));
        }

        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let total = 2 * pairs.len();
        let done = AtomicUsize::new(0);
        let report_every = (pairs.len() / 20).max(1);

        let mut raw = Vec::with_capacity(detectors.len());
        for (q, d) in detectors.iter().enumerate() {
            let kp = &keypoints[q];
            let scores = pairs
                .par_iter()
                .map(|&(i, j)| {
                    let terms = (0..n_f)
                        .map(|f| {
                            font_term(
                                kp[i * n_f + f].as_ref(),
                                kp[j * n_f + f].as_ref(),
                                d.match_rule(),
                                params.distance_mode,
                            )
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                    if k % report_every == 0 {
                        let overall = (q * pairs.len() + k) * 2 / detectors.len();
                        if let Some(cb) = opts.progress {
                            cb(overall.min(total), total);
                        }
                        log::info!("similarity [{}] {k}/{} unordered pairs", d.id(), pairs.len());
                    }
                    Ok(mean_over_fonts(&terms))
                })
                .collect::<Result<Vec<f64>>>()?;
            done.store(0, Ordering::Relaxed);

            // Matching is symmetric, so S(i, j, q) = S(j, i, q).
            let mut m = vec![0.0; n * n];
            for (&(i, j), s) in pairs.iter().zip(scores) {
                m[i * n + j] = s;
                m[j * n + i] = s;
            }
            raw.push(m);
        }
        if let Some(cb) = opts.progress {
            cb(total, total);
        }

        Ok(GlyphSimilarityMatrix {
            alphabet: alphabet.to_vec(),
            detectors: detectors.iter().map(|d| d.id()).collect(),
            fonts_digest: fonts.digest().to_string(),
            params_digest: params_digest(params, detectors),
            normalized: normalize(&raw, n),
            raw,
        })
    })
}

/// `build` over a profile's alphabet.
pub fn build_for_profile(
    profile: &CharsetProfile,
    fonts: &FontSet,
    detectors: &[Arc<dyn FeatureDetector>],
    opts: &BuildOptions<'_>,
) -> Result<GlyphSimilarityMatrix> {
    build(&profile.alphabet, fonts, detectors, opts)
}

#[derive(Debug, Clone, Copy)]
pub struct SaveOptions {
    pub include_raw: bool,
    /// Keep only the top `k` entries per row; the rest are implied zero.
    pub top_k: Option<usize>,
}

impl Default for SaveOptions {
    fn default() -> Self {
        SaveOptions {
            include_raw: true,
            top_k: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    char_j: char,
    #[serde(alias = "s")]
    s_norm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEntry {
    char_j: char,
    s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixFile {
    version: u32,
    alphabet: Vec<char>,
    detectors: Vec<DetectorId>,
    fonts_digest: String,
    params_digest: String,
    rows: BTreeMap<char, Vec<Entry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<BTreeMap<DetectorId, BTreeMap<char, Vec<RawEntry>>>>,
}

impl GlyphSimilarityMatrix {
    pub fn to_json(&self, opts: &SaveOptions) -> Result<String> {
        let n = self.len();
        let source = match opts.top_k {
            Some(k) => self.sparsified(k),
            None => self.clone(),
        };
        let mut rows = BTreeMap::new();
        for (i, &c) in self.alphabet.iter().enumerate() {
            let entries = match opts.top_k {
                Some(k) => {
                    let mut e: Vec<(usize, f64)> = source.row(i).filter(|&(_, v)| v > 0.0).collect();
                    e.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    e.truncate(k);
                    e
                }
                None => source.row(i).collect(),
            };
            rows.insert(
                c,
                entries
                    .into_iter()
                    .map(|(j, s_norm)| Entry {
                        char_j: self.alphabet[j],
                        s_norm,
                    })
                    .collect(),
            );
        }
        let raw = (opts.include_raw && !self.raw.is_empty()).then(|| {
            self.detectors
                .iter()
                .zip(&self.raw)
                .map(|(d, m)| {
                    let rows = self
                        .alphabet
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| {
                            let row = (0..n)
                                .filter(|&j| j != i)
                                .map(|j| RawEntry {
                                    char_j: self.alphabet[j],
                                    s: m[i * n + j],
                                })
                                .collect();
                            (c, row)
                        })
                        .collect();
                    (d.clone(), rows)
                })
                .collect()
        });
        let file = MatrixFile {
            version: FORMAT_VERSION,
            alphabet: self.alphabet.clone(),
            detectors: self.detectors.clone(),
            fonts_digest: self.fonts_digest.clone(),
            params_digest: self.params_digest.clone(),
            rows,
            raw,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("similarity matrix: {e}")))?;
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Incompatible(format!(
                    "similarity matrix format version {v}, expected {FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::Parse("similarity matrix: missing version".into())),
        }
        let file: MatrixFile =
            serde_json::from_value(probe).map_err(|e| Error::Parse(format!("similarity matrix: {e}")))?;
        let n = file.alphabet.len();
        let index: BTreeMap<char, usize> = file.alphabet.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if index.len() != n {
            return Err(Error::Parse("similarity matrix: duplicate alphabet characters".into()));
        }
        let lookup = |c: char| {
            index
                .get(&c)
                .copied()
                .ok_or_else(|| Error::Parse(format!("similarity matrix: {c:?} not in alphabet")))
        };

        let mut normalized = vec![0.0; n * n];
        for (c, entries) in &file.rows {
            let i = lookup(*c)?;
            for e in entries {
                let j = lookup(e.char_j)?;
                if i == j || !(0.0..=1.0).contains(&e.s_norm) {
                    return Err(Error::Parse(format!(
                        "similarity matrix: bad entry {c:?} -> {:?} = {}",
                        e.char_j, e.s_norm
                    )));
                }
                normalized[i * n + j] = e.s_norm;
            }
        }
        let mut raw = Vec::new();
        if let Some(raw_file) = &file.raw {
            for d in &file.detectors {
                let rows = raw_file
                    .get(d)
                    .ok_or_else(|| Error::Parse(format!("similarity matrix: raw scores missing for `{d}`")))?;
                let mut m = vec![0.0; n * n];
                for (c, entries) in rows {
                    let i = lookup(*c)?;
                    for e in entries {
                        m[i * n + lookup(e.char_j)?] = e.s;
                    }
                }
                raw.push(m);
            }
        }
        Ok(GlyphSimilarityMatrix {
            alphabet: file.alphabet,
            detectors: file.detectors,
            fonts_digest: file.fonts_digest,
            params_digest: file.params_digest,
            raw,
            normalized,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, opts: &SaveOptions) -> Result<()> {
        fs::write(path, self.to_json(opts)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Loads a matrix and reports whether it fits the profile's alphabet.
    pub fn load_for_profile(path: impl AsRef<Path>, profile: &CharsetProfile) -> Result<(Self, Option<String>)> {
        let m = Self::load(path)?;
        let warning = m.check_profile(profile);
        if let Some(w) = &warning {
            log::warn!("{w}");
        }
        Ok((m, warning))
    }
}
