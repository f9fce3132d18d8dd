//! External OCR engines and the render → degrade → recognize pipeline.

use std::env;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{render_chunk, save_png, FontSet, TextLayout};
use crate::corpus::Chunk;
use crate::dataset::{Method, PairRecord, ParallelCorpus};
use crate::error::{Error, Result};
use crate::imaging::{degrade, sample_recipe, DegradationRecipe};
use crate::parallel;
use crate::seed;

/// Environment variable that overrides the engine command template.
pub const ENGINE_ENV: &str = "GLYPHNOISE_OCR_ENGINE";
pub const TESSERACT_TEMPLATE: &str = "tesseract {input_path} stdout -l {lang}";

const FONT_STREAM: u64 = 0x666f_6e74; // "font"
const RECIPE_STREAM: u64 = 0x7265_6369_7065; // "recipe"

/// A command template such as `tesseract {input_path} stdout -l {lang}`.
/// The template is split on whitespace; placeholders are substituted inside
/// each argument and no shell is involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrEngine {
    pub template: String,
    pub lang: String,
    pub timeout_secs: f64,
}

impl OcrEngine {
    pub fn new(template: impl Into<String>, lang: impl Into<String>, timeout_secs: f64) -> Result<Self> {
        let e = OcrEngine {
            template: template.into(),
            lang: lang.into(),
            timeout_secs,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn tesseract(lang: impl Into<String>) -> Self {
        OcrEngine::new(TESSERACT_TEMPLATE, lang, 60.0).expect("built-in template is valid")
    }

    /// The template from [`ENGINE_ENV`] if set, else `default`.
    pub fn from_env_or(default: &str, lang: impl Into<String>, timeout_secs: f64) -> Result<Self> {
        let template = env::var(ENGINE_ENV).ok().filter(|s| !s.trim().is_empty());
        OcrEngine::new(template.as_deref().unwrap_or(default), lang, timeout_secs)
    }

    pub fn validate(&self) -> Result<()> {
        for ph in ["{input_path}", "{lang}"] {
            if !self.template.contains(ph) {
                return Err(Error::Config(format!("engine template `{}` lacks {ph}", self.template)));
            }
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config(format!(
                "engine timeout {} must be positive",
                self.timeout_secs
            )));
        }
        if self.template.split_whitespace().next().is_none() {
            return Err(Error::Config("engine template is empty".into()));
        }
        Ok(())
    }

    pub fn program(&self) -> &str {
        self.template.split_whitespace().next().unwrap_or("")
    }

    pub fn args_for(&self, input: &Path) -> Vec<String> {
        let input = input.to_string_lossy();
        self.template
            .split_whitespace()
            .skip(1)
            .map(|a| a.replace("{input_path}", &input).replace("{lang}", &self.lang))
            .collect()
    }

    /// Resolves the program on `PATH` (or as a path), failing fast when it
    /// cannot be run.
    pub fn probe(&self) -> Result<PathBuf> {
        let program = self.program();
        let candidate = Path::new(program);
        let found = if candidate.components().count() > 1 {
            is_executable(candidate).then(|| candidate.to_path_buf())
        } else {
            env::var_os("PATH").and_then(|paths| {
                env::split_paths(&paths)
                    .map(|d| d.join(program))
                    .find(|p| is_executable(p))
            })
        };
        found.ok_or_else(|| Error::EngineUnavailable(format!("`{program}` not found or not executable")))
    }
}

#[cfg(unix)]
fn is_executable(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    p.metadata()
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

#[cfg(not(unix))]
fn is_executable(p: &Path) -> bool {
    p.is_file()
}

/// Runs the engine on one image and returns its standard output with
/// trailing whitespace removed.
pub fn run_ocr(image: &Path, engine: &OcrEngine) -> Result<String> {
    let program = engine.probe()?;
    if !image.is_file() {
        return Err(Error::OcrFailed(format!("image {} does not exist", image.display())));
    }
    let mut child = Command::new(program)
        .args(engine.args_for(image))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::EngineUnavailable(format!("cannot start `{}`: {e}", engine.program())))?;

    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + Duration::from_secs_f64(engine.timeout_secs);
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::OcrFailed(format!(
                "engine timed out after {}s on {}",
                engine.timeout_secs,
                image.display()
            )));
        }
        thread::sleep(Duration::from_millis(5));
    };
    let out = out_reader.join().expect("reader thread")?;
    let err = err_reader.join().expect("reader thread");
    if !status.success() {
        let msg = String::from_utf8_lossy(&err);
        return Err(Error::OcrFailed(format!(
            "engine exited with {status} on {}: {}",
            image.display(),
            msg.trim()
        )));
    }
    let text = String::from_utf8(out).map_err(|_| Error::OcrFailed("engine output is not UTF-8".into()))?;
    Ok(text.trim_end().to_string())
}

/// Joins the engine's layout line breaks: every whitespace run that contains
/// a line break becomes one space.
pub fn join_lines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            pending.push(c);
            continue;
        }
        if pending.contains(['\n', '\r']) {
            out.push(' ');
        } else {
            out.push_str(&pending);
        }
        pending.clear();
        out.push(c);
    }
    out.trim().to_string()
}

#[derive(Debug, Clone, Default)]
pub struct OcrPipelineOptions {
    pub layout: TextLayout,
    /// Force the identity recipe instead of sampling one per chunk.
    pub identity_recipes: bool,
    /// Where page images go; a temporary directory when `None`.
    pub work_dir: Option<PathBuf>,
    pub jobs: usize,
}

/// Font index and recipe of one chunk.
pub fn chunk_plan(master_seed: u64, chunk_id: u64, n_fonts: usize, identity: bool) -> (u64, usize, DegradationRecipe) {
    let s = seed::derive_seed(master_seed, chunk_id);
    let font = seed::rng(seed::derive_seed(s, FONT_STREAM)).gen_range(0..n_fonts);
    let recipe = if identity {
        DegradationRecipe::identity()
    } else {
        sample_recipe(seed::derive_seed(s, RECIPE_STREAM))
    };
    (s, font, recipe)
}

/// Renders each chunk in a seeded random font, degrades it, and pairs the
/// engine's output with the clean text. Failed chunks keep an empty noisy
/// side and `failed = true`; an unavailable engine aborts before any work.
pub fn generate_ocr_dataset(
    chunks: &[Chunk],
    fonts: &FontSet,
    engine: &OcrEngine,
    master_seed: u64,
    opts: &OcrPipelineOptions,
) -> Result<ParallelCorpus> {
    engine.probe()?;
    if fonts.is_empty() {
        return Err(Error::Font("no fonts loaded".into()));
    }
    let tmp;
    let dir = match &opts.work_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            d.clone()
        }
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };

    let pairs = parallel::install(opts.jobs, || {
        chunks
            .par_iter()
            .map(|chunk| {
                let (s, font_idx, recipe) = chunk_plan(master_seed, chunk.id, fonts.len(), opts.identity_recipes);
                let font = &fonts.fonts()[font_idx];
                let page = render_chunk(&chunk.text, font, &opts.layout)?;
                let degraded = degrade(&page, &recipe)?;
                let path = dir.join(format!("chunk-{}.png", chunk.id));
                save_png(&degraded, &path)?;
                let (noisy, failed) = match run_ocr(&path, engine) {
                    Ok(text) => (join_lines(&text), false),
                    Err(Error::OcrFailed(msg)) => {
                        log::warn!("chunk {}: {msg}", chunk.id);
                        (String::new(), true)
                    }
                    Err(e) => return Err(e),
                };
                Ok(PairRecord {
                    id: chunk.id,
                    clean: chunk.text.clone(),
                    noisy,
                    target_p: None,
                    seed: s,
                    method: Method::Image,
                    font: Some(font.entry.id.clone()),
                    recipe: Some(recipe),
                    failed,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ParallelCorpus {
        pairs,
        config_digest: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_validation() {
        assert!(OcrEngine::new("tesseract {input_path} stdout", "eng", 10.0).is_err());
        assert!(OcrEngine::new("tesseract stdout -l {lang}", "eng", 10.0).is_err());
        assert!(OcrEngine::new(TESSERACT_TEMPLATE, "eng", 0.0).is_err());
        let e = OcrEngine::tesseract("eng");
        assert_eq!(e.program(), "tesseract");
        assert_eq!(
            e.args_for(Path::new("/tmp/a.png")),
            vec!["/tmp/a.png", "stdout", "-l", "eng"]
        );
    }

    #[test]
    fn missing_program_is_unavailable() {
        let e = OcrEngine::new("definitely-not-an-ocr-engine {input_path} {lang}", "eng", 1.0).unwrap();
        assert!(matches!(e.probe(), Err(Error::EngineUnavailable(_))));
        assert!(matches!(
            run_ocr(Path::new("x.png"), &e),
            Err(Error::EngineUnavailable(_))
        ));
    }

    #[test]
    fn line_joining() {
        assert_eq!(join_lines("hello\nworld"), "hello world");
        assert_eq!(join_lines("a  b \n\n c\n"), "a  b c");
        assert_eq!(join_lines(""), "");
    }

    #[test]
    fn plans_are_seeded() {
        assert_eq!(chunk_plan(1, 2, 3, false), chunk_plan(1, 2, 3, false));
        let (_, _, r) = chunk_plan(1, 2, 3, true);
        assert_eq!(r, DegradationRecipe::identity());
        let fonts: std::collections::HashSet<usize> = (0..100).map(|i| chunk_plan(9, i, 3, false).1).collect();
        assert_eq!(fonts.len(), 3);
    }
}
