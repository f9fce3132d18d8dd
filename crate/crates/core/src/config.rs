//! Run configuration: documented defaults, overridden by a TOML file,
//! overridden by command-line flags.
//!
//! ```toml
//! seed = 7
//!
//! [corpus]
//! language = "te"      # chunk limit defaults to 90 for Telugu
//!
//! [generation]
//! method = "glyph"
//! p_range = [0, 15]    # percent
//! op_ratio = [5, 1, 1] # substitution : insertion : deletion
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{default_chunk_limit, DEFAULT_MIN_COUNT};
use crate::dataset::{GenerationConfig, Method};
use crate::error::{Error, Result};
use crate::inject::OpRatio;
use crate::ocr::TESSERACT_TEMPLATE;
use crate::similarity::DEFAULT_TOP_K;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub language: String,
    /// Defaults per language (230 en, 140 ru, 90 te).
    pub chunk_limit: Option<usize>,
    pub min_count: u64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            language: "en".into(),
            chunk_limit: None,
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

impl CorpusSection {
    pub fn resolved_limit(&self) -> usize {
        self.chunk_limit.unwrap_or_else(|| default_chunk_limit(&self.language))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub method: Method,
    pub p_range: [f64; 2],
    pub op_ratio: [f64; 3],
    pub augment_k: usize,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let g = GenerationConfig::default();
        GenerationSection {
            method: g.method,
            p_range: g.p_range,
            op_ratio: [g.op_ratio.sub, g.op_ratio.ins, g.op_ratio.del],
            augment_k: g.augment_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilaritySection {
    pub detectors: Vec<String>,
    pub fonts: Option<PathBuf>,
    pub canvas: u32,
    pub top_k: usize,
}

impl Default for SimilaritySection {
    fn default() -> Self {
        SimilaritySection {
            detectors: vec!["fast-brief".into(), "dog".into()],
            fonts: None,
            canvas: crate::atlas::DEFAULT_CANVAS.0,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcrSection {
    pub engine: String,
    pub lang: String,
    pub timeout_secs: f64,
    pub point_size: f32,
    pub dpi: f32,
}

impl Default for OcrSection {
    fn default() -> Self {
        let layout = crate::atlas::TextLayout::default();
        OcrSection {
            engine: TESSERACT_TEMPLATE.into(),
            lang: "eng".into(),
            timeout_secs: 60.0,
            point_size: layout.point_size,
            dpi: layout.dpi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignSection {
    pub segment_threshold: usize,
    pub min_anchor_len: usize,
}

impl Default for AlignSection {
    fn default() -> Self {
        let a = crate::align::AlignOptions::default();
        AlignSection {
            segment_threshold: a.segment_threshold,
            min_anchor_len: a.min_anchor_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub corpus: CorpusSection,
    pub generation: GenerationSection,
    pub similarity: SimilaritySection,
    pub ocr: OcrSection,
    pub align: AlignSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(l) => Error::Config(format!("line {l}: {}", e.message())),
                None => Error::Config(e.message().to_string()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.generation_config().validate()?;
        if self.corpus.resolved_limit() == 0 {
            return Err(Error::Config("chunk_limit must be positive".into()));
        }
        if self.similarity.canvas < 32 {
            return Err(Error::Config("similarity canvas must be at least 32 px".into()));
        }
        Ok(())
    }

    pub fn generation_config(&self) -> GenerationConfig {
        let [sub, ins, del] = self.generation.op_ratio;
        GenerationConfig {
            method: self.generation.method,
            p_range: self.generation.p_range,
            op_ratio: OpRatio { sub, ins, del },
            master_seed: self.seed,
            augment_k: self.generation.augment_k,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        let g = c.generation_config();
        assert_eq!(g.p_range, [0.0, 15.0]);
        assert_eq!(g.op_ratio, OpRatio::default());
        assert_eq!(g.augment_k, 1);
        assert_eq!(c.corpus.resolved_limit(), 230);
    }

    #[test]
    fn language_limits() {
        let te = Config::from_toml("[corpus]\nlanguage = \"te\"\n").unwrap();
        assert_eq!(te.corpus.resolved_limit(), 90);
        let explicit = Config::from_toml("[corpus]\nlanguage = \"te\"\nchunk_limit = 90\n").unwrap();
        assert_eq!(explicit.corpus.resolved_limit(), 90);
        let ru = Config::from_toml("[corpus]\nlanguage = \"ru\"\n").unwrap();
        assert_eq!(ru.corpus.resolved_limit(), 140);
    }

    #[test]
    fn reversed_range_rejected() {
        let e = Config::from_toml("[generation]\np_range = [10, 5]\n").unwrap_err();
        assert!(matches!(e, Error::Config(m) if m.contains("p_range")));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = Config::from_toml("seed = 1\n\n[generation]\nmethod = = 3\n").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.starts_with("line 4")), "{e}");
        let e = Config::from_toml("[generation]\nbogus = 1\n").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("line 2")), "{e}");
    }

    #[test]
    fn toml_round_trip() {
        let mut c = Config {
            seed: 9,
            ..Config::default()
        };
        c.generation.method = Method::Glyph;
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }
}
