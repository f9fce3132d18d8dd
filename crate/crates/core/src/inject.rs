//! Character-level noise injection.
//!
//! Both injectors share one skeleton. For a target rate `p` and an operation
//! ratio `sub:ins:del` (default 5:1:1) every character takes a single uniform
//! draw `u`:
//!
//! * `u < p·sub/Σ` replaces it,
//! * `u < p·(sub+del)/Σ` deletes it,
//! * otherwise it is kept.
//!
//! Each of the `n-1` interior gaps of the original string independently
//! receives an inserted character with probability `p·ins/Σ`. Boundaries never
//! receive insertions. The expected number of edits per character is
//! therefore `p` (minus `p·ins/Σ·1/n` for the missing end gap).
//!
//! The injectors differ only in how a replacement is picked: uniformly from
//! the alphabet, or proportionally to glyph similarity.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::CharsetProfile;
use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::similarity::GlyphSimilarityMatrix;

/// Highest target rate accepted by default.
pub const MAX_RATE: f64 = 0.15;

/// Relative weights of substitution, insertion and deletion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpRatio {
    pub sub: f64,
    pub ins: f64,
    pub del: f64,
}

impl Default for OpRatio {
    fn default() -> Self {
        OpRatio {
            sub: 5.0,
            ins: 1.0,
            del: 1.0,
        }
    }
}

impl OpRatio {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.sub) && ok(self.ins) && ok(self.del) {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "operation ratio components must be positive: {self:?}"
            )))
        }
    }

    fn total(&self) -> f64 {
        self.sub + self.ins + self.del
    }

    /// Per-character replacement, deletion and per-gap insertion
    /// probabilities for a target rate.
    pub fn bands(&self, p: f64) -> Bands {
        let t = self.total();
        Bands {
            replace: p * self.sub / t,
            delete: p * self.del / t,
            insert: p * self.ins / t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bands {
    pub replace: f64,
    pub delete: f64,
    pub insert: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct InjectOptions {
    pub ratio: OpRatio,
    /// Upper bound on `p`, inclusive.
    pub max_rate: f64,
}

impl Default for InjectOptions {
    fn default() -> Self {
        InjectOptions {
            ratio: OpRatio::default(),
            max_rate: MAX_RATE,
        }
    }
}

/// Counts of the edits an injector applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionStats {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    /// Replacements that fell back to uniform sampling.
    pub fallbacks: usize,
}

impl InjectionStats {
    pub fn total_edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn merge(&mut self, other: &InjectionStats) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.fallbacks += other.fallbacks;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injected {
    pub text: String,
    pub stats: InjectionStats,
}

/// Picks the character that replaces `c`.
pub trait ReplacementSampler {
    /// Returns `None` when no character other than `c` is available.
    /// The boolean reports a uniform fallback.
    fn replace(&self, c: char, rng: &mut Rng) -> Option<(char, bool)>;
}

/// Uniform choice over the alphabet, never returning the input character.
#[derive(Debug, Clone)]
pub struct UniformSampler<'a> {
    alphabet: &'a [char],
}

impl<'a> UniformSampler<'a> {
    pub fn new(alphabet: &'a [char]) -> Self {
        UniformSampler { alphabet }
    }

    pub fn pick_other(&self, c: char, rng: &mut Rng) -> Option<char> {
        match self.alphabet.iter().position(|&a| a == c) {
            Some(pos) => {
                if self.alphabet.len() < 2 {
                    return None;
                }
                let k = rng.gen_range(0..self.alphabet.len() - 1);
                Some(self.alphabet[if k >= pos { k + 1 } else { k }])
            }
            None => self.pick_any(rng),
        }
    }

    pub fn pick_any(&self, rng: &mut Rng) -> Option<char> {
        if self.alphabet.is_empty() {
            None
        } else {
            Some(self.alphabet[rng.gen_range(0..self.alphabet.len())])
        }
    }
}

impl ReplacementSampler for UniformSampler<'_> {
    fn replace(&self, c: char, rng: &mut Rng) -> Option<(char, bool)> {
        self.pick_other(c, rng).map(|r| (r, false))
    }
}

/// Categorical choice proportional to `S_norm(c, ·)`.
#[derive(Debug, Clone)]
pub struct GlyphSampler<'a> {
    uniform: UniformSampler<'a>,
    rows: HashMap<char, (Vec<char>, Vec<f64>)>,
}

impl<'a> GlyphSampler<'a> {
    pub fn new(matrix: &GlyphSimilarityMatrix, alphabet: &'a [char]) -> Self {
        let mut rows = HashMap::with_capacity(matrix.alphabet.len());
        for (i, &c) in matrix.alphabet.iter().enumerate() {
            let mut targets = Vec::new();
            let mut cumulative = Vec::new();
            let mut acc = 0.0;
            for (j, w) in matrix.row(i) {
                if w > 0.0 {
                    acc += w;
                    targets.push(matrix.alphabet[j]);
                    cumulative.push(acc);
                }
            }
            rows.insert(c, (targets, cumulative));
        }
        GlyphSampler {
            uniform: UniformSampler::new(alphabet),
            rows,
        }
    }
}

impl ReplacementSampler for GlyphSampler<'_> {
    fn replace(&self, c: char, rng: &mut Rng) -> Option<(char, bool)> {
        match self.rows.get(&c) {
            Some((targets, cumulative)) if !targets.is_empty() => {
                let total = *cumulative.last().expect("non-empty row");
                let x = rng.gen::<f64>() * total;
                let k = cumulative.partition_point(|&v| v <= x).min(targets.len() - 1);
                Some((targets[k], false))
            }
            Some(_) => self.uniform.pick_other(c, rng).map(|r| (r, false)),
            None => {
                log::debug!("character {c:?} missing from similarity matrix; uniform fallback");
                self.uniform.pick_other(c, rng).map(|r| (r, true))
            }
        }
    }
}

fn check_rate(p: f64, max: f64) -> Result<()> {
    if p.is_finite() && (0.0..=max).contains(&p) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("target rate {p} outside [0, {max}]")))
    }
}

/// The shared band skeleton.
pub fn inject_with(
    text: &str,
    bands: Bands,
    sampler: &dyn ReplacementSampler,
    insertions: &UniformSampler<'_>,
    rng: &mut Rng,
) -> Injected {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    let mut stats = InjectionStats::default();
    let replace_below = bands.replace;
    let delete_below = bands.replace + bands.delete;

    for (k, &c) in chars.iter().enumerate() {
        let u: f64 = rng.gen();
        if u < replace_below {
            match sampler.replace(c, rng) {
                Some((r, fallback)) => {
                    out.push(r);
                    stats.substitutions += 1;
                    stats.fallbacks += usize::from(fallback);
                }
                None => out.push(c),
            }
        } else if u < delete_below {
            stats.deletions += 1;
        } else {
            out.push(c);
        }

        if k + 1 < chars.len() {
            let v: f64 = rng.gen();
            if v < bands.insert {
                if let Some(ins) = insertions.pick_any(rng) {
                    out.push(ins);
                    stats.insertions += 1;
                }
            }
        }
    }
    Injected { text: out, stats }
}

/// Uniform random injection.
pub fn inject_random(text: &str, profile: &CharsetProfile, p: f64, seed: u64) -> Result<Injected> {
    inject_random_with(text, profile, p, seed, &InjectOptions::default())
}

pub fn inject_random_with(
    text: &str,
    profile: &CharsetProfile,
    p: f64,
    seed: u64,
    opts: &InjectOptions,
) -> Result<Injected> {
    check_rate(p, opts.max_rate)?;
    opts.ratio.validate()?;
    if profile.alphabet.is_empty() {
        return Err(Error::Parameter("profile alphabet is empty".into()));
    }
    let uniform = UniformSampler::new(&profile.alphabet);
    Ok(inject_with(
        text,
        opts.ratio.bands(p),
        &uniform,
        &uniform,
        &mut seed::rng(seed),
    ))
}

/// Glyph-similarity injection: replacements follow `S_norm(i, ·)`, with a
/// uniform fallback for characters whose row is empty or missing.
pub fn inject_glyph(
    text: &str,
    matrix: &GlyphSimilarityMatrix,
    profile: &CharsetProfile,
    p: f64,
    seed: u64,
) -> Result<Injected> {
    inject_glyph_with(
        text,
        &GlyphSampler::new(matrix, &profile.alphabet),
        profile,
        p,
        seed,
        &InjectOptions::default(),
    )
}

pub fn inject_glyph_with(
    text: &str,
    sampler: &GlyphSampler<'_>,
    profile: &CharsetProfile,
    p: f64,
    seed: u64,
    opts: &InjectOptions,
) -> Result<Injected> {
    check_rate(p, opts.max_rate)?;
    opts.ratio.validate()?;
    if profile.alphabet.is_empty() {
        return Err(Error::Parameter("profile alphabet is empty".into()));
    }
    let uniform = UniformSampler::new(&profile.alphabet);
    let out = inject_with(text, opts.ratio.bands(p), sampler, &uniform, &mut seed::rng(seed));
    if out.stats.fallbacks > 0 {
        log::warn!(
            "{} replacement(s) used the uniform fallback: characters missing from the similarity matrix",
            out.stats.fallbacks
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_charset_profile;
    use crate::metrics::cer;

    fn profile() -> CharsetProfile {
        build_charset_profile("abcdefghijklmnopqrstuvwxyz ", 0, "en").unwrap()
    }

    fn long_text(seed: u64) -> String {
        let mut rng = seed::rng(seed);
        (0..240)
            .map(|_| {
                let k = rng.gen_range(0..27u8);
                if k == 26 {
                    ' '
                } else {
                    (b'a' + k) as char
                }
            })
            .collect()
    }

    #[test]
    fn zero_rate_is_identity() {
        let p = profile();
        let t = "the quick brown fox";
        assert_eq!(inject_random(t, &p, 0.0, 9).unwrap().text, t);
        let m = GlyphSimilarityMatrix::from_normalized(vec!['a', 'b'], vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(inject_glyph(t, &m, &p, 0.0, 9).unwrap().text, t);
    }

    #[test]
    fn rejects_out_of_range_rates() {
        let p = profile();
        assert!(matches!(inject_random("abc", &p, 0.2, 0), Err(Error::Parameter(_))));
        assert!(matches!(inject_random("abc", &p, -0.01, 0), Err(Error::Parameter(_))));
        assert!(inject_random("abc", &p, 0.15, 0).is_ok());
    }

    #[test]
    fn deterministic_per_seed() {
        let p = profile();
        let t = long_text(1);
        let a = inject_random(&t, &p, 0.1, 42).unwrap();
        let b = inject_random(&t, &p, 0.1, 42).unwrap();
        let c = inject_random(&t, &p, 0.1, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.text, c.text);
    }

    #[test]
    fn bands_follow_ratio() {
        let b = OpRatio::default().bands(0.07);
        assert!((b.replace - 0.05).abs() < 1e-12);
        assert!((b.delete - 0.01).abs() < 1e-12);
        assert!((b.insert - 0.01).abs() < 1e-12);
        assert!(OpRatio {
            sub: 0.0,
            ins: 1.0,
            del: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn replacement_never_selects_itself() {
        let alphabet = ['a', 'b', 'c'];
        let u = UniformSampler::new(&alphabet);
        let mut rng = seed::rng(5);
        let mut seen = [0usize; 3];
        for _ in 0..3000 {
            let r = u.pick_other('b', &mut rng).unwrap();
            assert_ne!(r, 'b');
            seen[(r as u8 - b'a') as usize] += 1;
        }
        assert!(seen[0] > 1300 && seen[2] > 1300);
        assert_eq!(UniformSampler::new(&['a']).pick_other('a', &mut rng), None);
    }

    #[test]
    fn mean_cer_tracks_rate() {
        let p = profile();
        let mut total = 0.0;
        let n = 400;
        for i in 0..n {
            let t = long_text(i);
            let noisy = inject_random(&t, &p, 0.1, 1000 + i).unwrap();
            total += cer(&t, &noisy.text).unwrap();
        }
        let mean = total / n as f64;
        assert!((mean - 0.1).abs() < 0.01, "mean CER {mean}");
    }

    #[test]
    fn glyph_sampler_follows_weights() {
        // Row of 'l': I 0.9, W 0.1.
        let alphabet = vec!['I', 'W', 'l'];
        let mut norm = vec![0.0; 9];
        norm[2 * 3] = 0.9;
        norm[2 * 3 + 1] = 0.1;
        let m = GlyphSimilarityMatrix::from_normalized(alphabet.clone(), norm);
        let s = GlyphSampler::new(&m, &alphabet);
        let mut rng = seed::rng(11);
        let (mut i, mut w) = (0usize, 0usize);
        for _ in 0..10_000 {
            match s.replace('l', &mut rng).unwrap() {
                ('I', false) => i += 1,
                ('W', false) => w += 1,
                other => panic!("unexpected {other:?}"),
            }
        }
        let ratio = i as f64 / w as f64;
        assert!((ratio / 9.0 - 1.0).abs() < 0.10, "ratio {ratio}");
    }

    #[test]
    fn zero_row_falls_back_to_uniform() {
        let alphabet = vec!['a', 'b', 'c'];
        let m = GlyphSimilarityMatrix::from_normalized(alphabet.clone(), vec![0.0; 9]);
        let s = GlyphSampler::new(&m, &alphabet);
        let mut rng = seed::rng(2);
        let mut counts = HashMap::new();
        for _ in 0..6000 {
            let (r, fb) = s.replace('a', &mut rng).unwrap();
            assert!(!fb);
            *counts.entry(r).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 2);
        assert!(counts.values().all(|&n| n > 2700));
        // Missing characters fall back too, and are reported.
        let (r, fb) = s.replace('z', &mut rng).unwrap();
        assert!(fb && alphabet.contains(&r));
    }
}
