//! Parallel (clean, noisy) corpora and the text-side generators.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{augment, CharsetProfile, Chunk};
use crate::error::{Error, Result};
use crate::error_model::{inject_model, OcrErrorModel};
use crate::imaging::DegradationRecipe;
use crate::inject::{
    inject_glyph_with, inject_random_with, GlyphSampler, InjectOptions, InjectionStats, OpRatio, MAX_RATE,
};
use crate::metrics;
use crate::parallel;
use crate::seed;
use crate::similarity::GlyphSimilarityMatrix;

/// Stream of the per-chunk target-rate draw.
pub const TARGET_STREAM: u64 = 0x7461_7267_6574; // "target"

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Uniform character noise.
    Random,
    /// Rendered, degraded and re-recognized pages.
    Image,
    /// Noise following an error model learned from real OCR output.
    Realworld,
    /// Replacements weighted by glyph similarity.
    Glyph,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Image => "image",
            Method::Realworld => "realworld",
            Method::Glyph => "glyph",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Method::Random),
            "image" => Ok(Method::Image),
            "realworld" => Ok(Method::Realworld),
            "glyph" => Ok(Method::Glyph),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected random, image, realworld or glyph)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub method: Method,
    /// Target error rate range in percent, inclusive.
    pub p_range: [f64; 2],
    pub op_ratio: OpRatio,
    pub master_seed: u64,
    /// Noisy variants per clean chunk.
    pub augment_k: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            method: Method::Random,
            p_range: [0.0, 15.0],
            op_ratio: OpRatio::default(),
            master_seed: 0,
            augment_k: 1,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.p_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 100.0) {
            return Err(Error::Config(format!(
                "p_range [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 100"
            )));
        }
        if self.augment_k == 0 {
            return Err(Error::Config("augment_k must be at least 1".into()));
        }
        self.op_ratio.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Per-chunk seed and target rate (percent).
    pub fn draw(&self, chunk_id: u64) -> (u64, f64) {
        let s = seed::derive_seed(self.master_seed, chunk_id);
        let [lo, hi] = self.p_range;
        let p = if hi > lo {
            seed::rng(seed::derive_seed(s, TARGET_STREAM)).gen_range(lo..=hi)
        } else {
            lo
        };
        (s, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: u64,
    pub clean: String,
    pub noisy: String,
    /// Percent; absent for rendered pages, whose rate is not controlled.
    pub target_p: Option<f64>,
    pub seed: u64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<DegradationRecipe>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParallelCorpus {
    pub pairs: Vec<PairRecord>,
    /// Digest of the generating configuration; not stored in the JSON-lines
    /// file (the run manifest carries it).
    pub config_digest: String,
}

/// Files written by [`ParallelCorpus::export_text`].
#[derive(Debug, Clone)]
pub struct ExportPaths {
    pub clean: PathBuf,
    pub noisy: PathBuf,
    pub tsv: PathBuf,
}

fn one_line(s: &str) -> String {
    s.chars()
        .map(|c| if matches!(c, '\n' | '\r' | '\t') { ' ' } else { c })
        .collect()
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn method(&self) -> Option<Method> {
        self.pairs.first().map(|p| p.method)
    }

    /// Micro-averaged CER of noisy against clean over non-failed pairs.
    pub fn corpus_cer(&self) -> Result<f64> {
        let (mut edits, mut chars) = (0usize, 0usize);
        for p in self.pairs.iter().filter(|p| !p.failed) {
            edits += metrics::edit_distance(&p.clean, &p.noisy);
            chars += p.clean.chars().count();
        }
        if chars == 0 {
            return Err(Error::Metric("corpus has no reference characters".into()));
        }
        Ok(edits as f64 / chars as f64)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for p in &self.pairs {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: PairRecord =
                serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            pairs.push(p);
        }
        Ok(ParallelCorpus {
            pairs,
            config_digest: String::new(),
        })
    }

    /// Writes `<prefix>.clean.txt` and `<prefix>.noisy.txt` (line `k` of one
    /// is aligned with line `k` of the other) and a `<prefix>.tsv` index.
    /// Line breaks and tabs inside texts become spaces.
    pub fn export_text(&self, prefix: impl AsRef<Path>) -> Result<ExportPaths> {
        let prefix = prefix.as_ref().to_string_lossy().into_owned();
        let paths = ExportPaths {
            clean: PathBuf::from(format!("{prefix}.clean.txt")),
            noisy: PathBuf::from(format!("{prefix}.noisy.txt")),
            tsv: PathBuf::from(format!("{prefix}.tsv")),
        };
        let mut clean = BufWriter::new(fs::File::create(&paths.clean)?);
        let mut noisy = BufWriter::new(fs::File::create(&paths.noisy)?);
        let mut tsv = BufWriter::new(fs::File::create(&paths.tsv)?);
        writeln!(tsv, "line\tid\ttarget_p\tseed\tmethod\tfailed")?;
        for (k, p) in self.pairs.iter().enumerate() {
            writeln!(clean, "{}", one_line(&p.clean))?;
            writeln!(noisy, "{}", one_line(&p.noisy))?;
            let target = p.target_p.map(|t| t.to_string()).unwrap_or_default();
            writeln!(
                tsv,
                "{}\t{}\t{}\t{}\t{}\t{}",
                k + 1,
                p.id,
                target,
                p.seed,
                p.method,
                p.failed
            )?;
        }
        clean.flush()?;
        noisy.flush()?;
        tsv.flush()?;
        Ok(paths)
    }
}

/// What the text-side methods need besides the chunks.
#[derive(Default, Clone, Copy)]
pub struct Resources<'a> {
    pub profile: Option<&'a CharsetProfile>,
    pub matrix: Option<&'a GlyphSimilarityMatrix>,
    pub model: Option<&'a OcrErrorModel>,
}

/// Runs the random, glyph or error-model injector over every chunk (after
/// `augment_k` replication). Output order and bytes do not depend on `jobs`.
pub fn generate_dataset(
    chunks: &[Chunk],
    config: &GenerationConfig,
    resources: &Resources<'_>,
    jobs: usize,
) -> Result<(ParallelCorpus, InjectionStats)> {
    config.validate()?;
    if chunks.is_empty() {
        return Err(Error::Parameter("no chunks to generate from".into()));
    }
    let need_profile = || {
        resources
            .profile
            .ok_or_else(|| Error::Config(format!("method `{}` needs a charset profile", config.method)))
    };
    let opts = InjectOptions {
        ratio: config.op_ratio,
        max_rate: MAX_RATE.max(config.p_range[1] / 100.0),
    };
    let chunks = augment(chunks, config.augment_k)?;

    enum Injector<'a> {
        Random(&'a CharsetProfile),
        Glyph(&'a CharsetProfile, GlyphSampler<'a>),
        Model(&'a OcrErrorModel),
    }
    let injector = match config.method {
        Method::Random => Injector::Random(need_profile()?),
        Method::Glyph => {
            let profile = need_profile()?;
            let matrix = resources
                .matrix
                .ok_or_else(|| Error::Config("method `glyph` needs a similarity matrix".into()))?;
            if let Some(w) = matrix.check_profile(profile) {
                log::warn!("{w}");
            }
            Injector::Glyph(profile, GlyphSampler::new(matrix, &profile.alphabet))
        }
        Method::Realworld => Injector::Model(
            resources
                .model
                .ok_or_else(|| Error::Config("method `realworld` needs an error model".into()))?,
        ),
        Method::Image => {
            return Err(Error::Config(
                "method `image` renders pages and runs an OCR engine; use the OCR pipeline".into(),
            ))
        }
    };

    let results: Vec<(PairRecord, InjectionStats)> = parallel::install(jobs, || {
        chunks
            .par_iter()
            .map(|chunk| {
                let (s, p) = config.draw(chunk.id);
                let out = match &injector {
                    Injector::Random(profile) => inject_random_with(&chunk.text, profile, p / 100.0, s, &opts)?,
                    Injector::Glyph(profile, sampler) => {
                        inject_glyph_with(&chunk.text, sampler, profile, p / 100.0, s, &opts)?
                    }
                    Injector::Model(model) => inject_model(&chunk.text, model, p / 100.0, s)?,
                };
                Ok((
                    PairRecord {
                        id: chunk.id,
                        clean: chunk.text.clone(),
                        noisy: out.text,
                        target_p: Some(p),
                        seed: s,
                        method: config.method,
                        font: None,
                        recipe: None,
                        failed: false,
                    },
                    out.stats,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut stats = InjectionStats::default();
    let pairs = results
        .into_iter()
        .map(|(p, s)| {
            stats.merge(&s);
            p
        })
        .collect();
    Ok((
        ParallelCorpus {
            pairs,
            config_digest: config.digest(),
        },
        stats,
    ))
}
