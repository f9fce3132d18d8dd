use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use glyphnoise::align::{align_with, AlignOptions, Alignment};
use glyphnoise::atlas::{FontSet, TextLayout};
use glyphnoise::config::Config;
use glyphnoise::corpus::{
    build_charset_profile, chunk_with, read_chunk_file, split_corpus, write_chunk_file, CharsetProfile, ChunkOptions,
};
use glyphnoise::dataset::{generate_dataset, Method, ParallelCorpus, Resources};
use glyphnoise::error_model::{extract, OcrErrorModel};
use glyphnoise::features::detectors_by_name;
use glyphnoise::manifest::RunManifest;
use glyphnoise::metrics::{report, Triple};
use glyphnoise::ocr::{generate_ocr_dataset, OcrEngine, OcrPipelineOptions};
use glyphnoise::similarity::{build, BuildOptions, GlyphSimilarityMatrix, SaveOptions, SimilarityParams};

#[derive(Parser, Serialize)]
#[command(
    name = "glyphnoise",
    version,
    about = "Synthetic OCR noise generation and evaluation"
)]
struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only report warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Character inventory of a corpus.
    Profile(ProfileArgs),
    /// Split a corpus into sentence-packed chunks, one per line.
    Chunk(ChunkArgs),
    /// Partition chunks into error-extraction/train/validation/test.
    Split(SplitArgs),
    /// Build the glyph similarity matrix for a profile.
    Simmatrix(SimmatrixArgs),
    /// Generate a parallel (clean, noisy) corpus.
    Gen(GenArgs),
    /// Learn an error model from aligned clean/OCR text.
    ExtractErrors(ExtractArgs),
    /// Character-align clean and OCR text.
    Align(AlignArgs),
    /// CER/WER before and after correction.
    Eval(EvalArgs),
}

#[derive(Args, Serialize)]
struct ProfileArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    min_count: Option<u64>,
}

#[derive(Args, Serialize)]
struct ChunkArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    language: Option<String>,
    /// Maximum characters per chunk (default depends on the language).
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    /// Chunk file, one chunk per line.
    #[arg(long)]
    input: PathBuf,
    /// Writes `<prefix>.error_extraction.txt`, `.train.txt`, `.validation.txt`, `.test.txt`.
    #[arg(long)]
    output_prefix: PathBuf,
}

#[derive(Args, Serialize)]
struct SimmatrixArgs {
    #[arg(long, required_unless_present = "alphabet")]
    profile: Option<PathBuf>,
    /// Characters to compare, as one string (instead of a profile).
    #[arg(long, conflicts_with = "profile")]
    alphabet: Option<String>,
    /// Font manifest (JSON list of {id, path, name}).
    #[arg(long)]
    fonts: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated detector names.
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<String>>,
    /// Entries kept per row in the file; 0 keeps all.
    #[arg(long)]
    top_k: Option<usize>,
    /// Leave per-detector raw scores out of the file.
    #[arg(long)]
    no_raw: bool,
}

#[derive(Args, Serialize)]
struct GenArgs {
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Chunk file, one chunk per line.
    #[arg(long)]
    chunks: PathBuf,
    /// Parallel corpus output (JSON lines).
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    fonts: Option<PathBuf>,
    /// Target error range in percent, e.g. `0,15`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    p_range: Option<Vec<f64>>,
    /// Noisy variants per chunk.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    language: Option<String>,
    /// Also write `<prefix>.clean.txt`, `<prefix>.noisy.txt` and `<prefix>.tsv`.
    #[arg(long)]
    export: Option<PathBuf>,
    /// Image method: skip degradation.
    #[arg(long)]
    identity_recipes: bool,
    /// Image method: keep page images here.
    #[arg(long)]
    work_dir: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ExtractArgs {
    /// Parallel corpus (JSON lines) whose pairs are aligned.
    #[arg(long, conflicts_with_all = ["clean", "ocr"], required_unless_present_all = ["clean", "ocr"])]
    corpus: Option<PathBuf>,
    #[arg(long, requires = "ocr")]
    clean: Option<PathBuf>,
    #[arg(long, requires = "clean")]
    ocr: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Serialize)]
struct AlignArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    ocr: PathBuf,
    /// One alignment per line (JSON lines).
    #[arg(long)]
    output: PathBuf,
    /// Align whole files instead of line by line.
    #[arg(long)]
    whole: bool,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    ocr: PathBuf,
    #[arg(long)]
    corrected: PathBuf,
    /// Report file; the report goes to standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-sentence TSV.
    #[arg(long)]
    sentences: Option<PathBuf>,
    /// Category chart data (CSV).
    #[arg(long)]
    chart: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: glyphnoise::Error| e.to_string())
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<glyphnoise::Error>() {
            Some(glyphnoise::Error::Config(_)) => Failure::Usage(format!("{e:#}")),
            _ => Failure::Data(e),
        }
    }
}

impl From<glyphnoise::Error> for Failure {
    fn from(e: glyphnoise::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Defaults ← config file ← flags.
fn resolve_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

struct Run {
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    fn new(cli: &Cli, cfg: &Config, name: &str) -> Self {
        let config = serde_json::json!({ "resolved": cfg, "command": &cli.command });
        Run {
            manifest: RunManifest::new(name, cfg.seed, config),
            started: Instant::now(),
        }
    }

    fn input(&mut self, p: &Path) -> anyhow::Result<()> {
        self.manifest
            .add_input(p)
            .with_context(|| format!("reading {}", p.display()))
    }

    fn output(&mut self, p: &Path) -> anyhow::Result<()> {
        self.manifest
            .add_output(p)
            .with_context(|| format!("reading back {}", p.display()))
    }

    fn finish(mut self, primary: &Path) -> anyhow::Result<()> {
        self.manifest.finish(self.started.elapsed());
        let path = self.manifest.write_beside(primary)?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }
}

fn read_text(p: &Path) -> anyhow::Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn read_lines(p: &Path) -> anyhow::Result<Vec<String>> {
    Ok(read_text(p)?
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect())
}

fn run(cli: &Cli) -> Outcome {
    let mut cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Profile(a) => profile(cli, &mut cfg, a),
        Command::Chunk(a) => chunk(cli, &mut cfg, a),
        Command::Split(a) => split(cli, &cfg, a),
        Command::Simmatrix(a) => simmatrix(cli, &mut cfg, a),
        Command::Gen(a) => gen(cli, &mut cfg, a),
        Command::ExtractErrors(a) => extract_errors(cli, &cfg, a),
        Command::Align(a) => align_cmd(cli, &cfg, a),
        Command::Eval(a) => eval(cli, &cfg, a),
    }
}

fn profile(cli: &Cli, cfg: &mut Config, a: &ProfileArgs) -> Outcome {
    if let Some(l) = &a.language {
        cfg.corpus.language = l.clone();
    }
    if let Some(m) = a.min_count {
        cfg.corpus.min_count = m;
    }
    let mut run = Run::new(cli, cfg, "profile");
    let mut text = String::new();
    for p in &a.input {
        run.input(p)?;
        text.push_str(&read_text(p)?);
        text.push('\n');
    }
    let profile = build_charset_profile(&text, cfg.corpus.min_count, &cfg.corpus.language)?;
    profile.save(&a.output)?;
    log::info!("{} characters in the alphabet", profile.alphabet.len());
    run.output(&a.output)?;
    run.finish(&a.output)?;
    Ok(())
}

fn chunk(cli: &Cli, cfg: &mut Config, a: &ChunkArgs) -> Outcome {
    if let Some(l) = &a.language {
        cfg.corpus.language = l.clone();
        if a.limit.is_none() {
            cfg.corpus.chunk_limit = None;
        }
    }
    if let Some(l) = a.limit {
        cfg.corpus.chunk_limit = Some(l);
    }
    cfg.validate()?;
    let mut run = Run::new(cli, cfg, "chunk");
    run.input(&a.input)?;
    let opts = ChunkOptions {
        limit: cfg.corpus.resolved_limit(),
        ..ChunkOptions::for_language(&cfg.corpus.language)
    };
    let chunks = chunk_with(&read_text(&a.input)?, &opts)?;
    write_chunk_file(&a.output, &chunks)?;
    log::info!("{} chunks of at most {} characters", chunks.len(), opts.limit);
    run.output(&a.output)?;
    run.finish(&a.output)?;
    Ok(())
}

fn split(cli: &Cli, cfg: &Config, a: &SplitArgs) -> Outcome {
    let mut run = Run::new(cli, cfg, "split");
    run.input(&a.input)?;
    let chunks = read_chunk_file(&a.input, &cfg.corpus.language)?;
    let s = split_corpus(&chunks, cfg.seed)?;
    let prefix = a.output_prefix.to_string_lossy();
    for (name, part) in [
        ("error_extraction", &s.error_extraction),
        ("train", &s.train),
        ("validation", &s.validation),
        ("test", &s.test),
    ] {
        let path = PathBuf::from(format!("{prefix}.{name}.txt"));
        write_chunk_file(&path, part)?;
        run.output(&path)?;
        log::info!("{name}: {} chunks", part.len());
    }
    run.finish(&a.output_prefix)?;
    Ok(())
}

fn fonts_path(flag: &Option<PathBuf>, cfg: &Config, what: &str) -> Result<PathBuf, Failure> {
    flag.clone()
        .or_else(|| cfg.similarity.fonts.clone())
        .ok_or_else(|| usage(format!("{what} needs --fonts (or `similarity.fonts` in the config)")))
}

fn simmatrix(cli: &Cli, cfg: &mut Config, a: &SimmatrixArgs) -> Outcome {
    if let Some(d) = &a.detectors {
        cfg.similarity.detectors = d.clone();
    }
    if let Some(k) = a.top_k {
        cfg.similarity.top_k = k;
    }
    let fonts_file = fonts_path(&a.fonts, cfg, "simmatrix")?;
    let detectors = detectors_by_name(&cfg.similarity.detectors).map_err(|e| usage(e.to_string()))?;
    let mut run = Run::new(cli, cfg, "simmatrix");
    let alphabet: Vec<char> = match (&a.profile, &a.alphabet) {
        (Some(p), _) => {
            run.input(p)?;
            CharsetProfile::load(p)?.alphabet
        }
        (None, Some(s)) => {
            let mut chars: Vec<char> = s.chars().collect();
            let mut seen = std::collections::HashSet::new();
            chars.retain(|c| seen.insert(*c));
            chars
        }
        (None, None) => return Err(usage("simmatrix needs --profile or --alphabet")),
    };
    run.input(&fonts_file)?;
    let fonts = FontSet::from_manifest(&fonts_file)?;
    let progress = |done: usize, total: usize| {
        log::info!("similarity: {done}/{total} ordered pairs");
    };
    let opts = BuildOptions {
        params: SimilarityParams {
            canvas: (cfg.similarity.canvas, cfg.similarity.canvas),
            ..SimilarityParams::default()
        },
        jobs: cfg.jobs,
        progress: Some(&progress),
    };
    let matrix = build(&alphabet, &fonts, &detectors, &opts)?;
    let save = SaveOptions {
        include_raw: !a.no_raw,
        top_k: (cfg.similarity.top_k > 0).then_some(cfg.similarity.top_k),
    };
    matrix.save(&a.output, &save)?;
    run.output(&a.output)?;
    run.finish(&a.output)?;
    Ok(())
}

fn gen(cli: &Cli, cfg: &mut Config, a: &GenArgs) -> Outcome {
    if let Some(m) = a.method {
        cfg.generation.method = m;
    }
    if let Some(r) = &a.p_range {
        cfg.generation.p_range = [r[0], r[1]];
    }
    if let Some(k) = a.k {
        cfg.generation.augment_k = k;
    }
    if let Some(l) = &a.language {
        cfg.corpus.language = l.clone();
    }
    cfg.validate()?;
    let method = cfg.generation.method;
    match method {
        Method::Random if a.profile.is_none() => return Err(usage("--method random requires --profile")),
        Method::Glyph if a.matrix.is_none() => return Err(usage("--method glyph requires --matrix")),
        Method::Glyph if a.profile.is_none() => return Err(usage("--method glyph requires --profile")),
        Method::Realworld if a.model.is_none() => return Err(usage("--method realworld requires --model")),
        _ => {}
    }
    let fonts_file = if method == Method::Image {
        Some(fonts_path(&a.fonts, cfg, "--method image")?)
    } else {
        None
    };

    let mut run = Run::new(cli, cfg, "gen");
    run.input(&a.chunks)?;
    let chunks = read_chunk_file(&a.chunks, &cfg.corpus.language)?;
    if chunks.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!("{} holds no chunks", a.chunks.display())));
    }

    let corpus = if let Some(fonts_file) = fonts_file {
        let engine = OcrEngine::from_env_or(&cfg.ocr.engine, cfg.ocr.lang.clone(), cfg.ocr.timeout_secs)?;
        run.input(&fonts_file)?;
        let fonts = FontSet::from_manifest(&fonts_file)?;
        let chunks = glyphnoise::corpus::augment(&chunks, cfg.generation.augment_k)?;
        let opts = OcrPipelineOptions {
            layout: TextLayout {
                point_size: cfg.ocr.point_size,
                dpi: cfg.ocr.dpi,
                ..TextLayout::default()
            },
            identity_recipes: a.identity_recipes,
            work_dir: a.work_dir.clone(),
            jobs: cfg.jobs,
        };
        let mut corpus = generate_ocr_dataset(&chunks, &fonts, &engine, cfg.seed, &opts)?;
        corpus.config_digest = cfg.generation_config().digest();
        let failed = corpus.pairs.iter().filter(|p| p.failed).count();
        if failed > 0 {
            log::warn!("{failed} chunk(s) failed OCR");
        }
        corpus
    } else {
        let profile = match &a.profile {
            Some(p) => {
                run.input(p)?;
                Some(CharsetProfile::load(p)?)
            }
            None => None,
        };
        let matrix = match &a.matrix {
            Some(p) => {
                run.input(p)?;
                Some(GlyphSimilarityMatrix::load(p)?)
            }
            None => None,
        };
        let model = match &a.model {
            Some(p) => {
                run.input(p)?;
                Some(OcrErrorModel::load(p)?)
            }
            None => None,
        };
        let resources = Resources {
            profile: profile.as_ref(),
            matrix: matrix.as_ref(),
            model: model.as_ref(),
        };
        let (corpus, stats) = generate_dataset(&chunks, &cfg.generation_config(), &resources, cfg.jobs)?;
        log::info!(
            "{} substitutions, {} insertions, {} deletions",
            stats.substitutions,
            stats.insertions,
            stats.deletions
        );
        corpus
    };

    corpus.write_jsonl(&a.output)?;
    run.output(&a.output)?;
    if let Ok(c) = corpus.corpus_cer() {
        log::info!("{} pairs, corpus CER {:.4}", corpus.len(), c);
    }
    if let Some(prefix) = &a.export {
        let paths = corpus.export_text(prefix)?;
        for p in [&paths.clean, &paths.noisy, &paths.tsv] {
            run.output(p)?;
        }
    }
    run.finish(&a.output)?;
    Ok(())
}

fn align_opts(cfg: &Config) -> AlignOptions {
    AlignOptions {
        segment_threshold: cfg.align.segment_threshold,
        min_anchor_len: cfg.align.min_anchor_len,
        ..AlignOptions::default()
    }
}

fn paired_lines(clean: &Path, ocr: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let c = read_lines(clean)?;
    let o = read_lines(ocr)?;
    anyhow::ensure!(
        c.len() == o.len(),
        "{} has {} lines but {} has {}",
        clean.display(),
        c.len(),
        ocr.display(),
        o.len()
    );
    Ok(c.into_iter().zip(o).collect())
}

fn extract_errors(cli: &Cli, cfg: &Config, a: &ExtractArgs) -> Outcome {
    let mut run = Run::new(cli, cfg, "extract-errors");
    let pairs: Vec<(String, String)> = match (&a.corpus, &a.clean, &a.ocr) {
        (Some(p), _, _) => {
            run.input(p)?;
            ParallelCorpus::read_jsonl(p)?
                .pairs
                .into_iter()
                .filter(|r| !r.failed)
                .map(|r| (r.clean, r.noisy))
                .collect()
        }
        (None, Some(c), Some(o)) => {
            run.input(c)?;
            run.input(o)?;
            paired_lines(c, o)?
        }
        _ => return Err(usage("extract-errors needs --corpus, or --clean with --ocr")),
    };
    let opts = align_opts(cfg);
    let alignments: Vec<Alignment> = pairs.iter().map(|(c, o)| align_with(c, o, &opts)).collect();
    let model = extract(&alignments)?;
    log::info!(
        "base CER {:.4} over {} clean characters",
        model.base_cer,
        model.counts.clean_chars
    );
    model.save(&a.output)?;
    run.output(&a.output)?;
    run.finish(&a.output)?;
    Ok(())
}

fn align_cmd(cli: &Cli, cfg: &Config, a: &AlignArgs) -> Outcome {
    let mut run = Run::new(cli, cfg, "align");
    run.input(&a.clean)?;
    run.input(&a.ocr)?;
    let pairs = if a.whole {
        vec![(read_text(&a.clean)?, read_text(&a.ocr)?)]
    } else {
        paired_lines(&a.clean, &a.ocr)?
    };
    let opts = align_opts(cfg);
    let mut out = String::new();
    let mut cost = 0;
    for (k, (c, o)) in pairs.iter().enumerate() {
        let mut al = align_with(c, o, &opts);
        al.source_id = Some(k as u64);
        cost += al.cost();
        out.push_str(&serde_json::to_string(&al).context("serializing alignment")?);
        out.push('\n');
    }
    fs::write(&a.output, out).with_context(|| format!("writing {}", a.output.display()))?;
    log::info!("{} alignment(s), {cost} edit operations", pairs.len());
    run.output(&a.output)?;
    run.finish(&a.output)?;
    Ok(())
}

fn eval(cli: &Cli, cfg: &Config, a: &EvalArgs) -> Outcome {
    let mut run = Run::new(cli, cfg, "eval");
    let r = read_lines(&a.reference)?;
    let o = read_lines(&a.ocr)?;
    let c = read_lines(&a.corrected)?;
    if r.len() != o.len() || r.len() != c.len() {
        return Err(Failure::Data(anyhow::anyhow!(
            "line counts differ: ref {}, ocr {}, corrected {}",
            r.len(),
            o.len(),
            c.len()
        )));
    }
    for p in [&a.reference, &a.ocr, &a.corrected] {
        run.input(p)?;
    }
    let triples: Vec<Triple> = r
        .into_iter()
        .zip(o)
        .zip(c)
        .filter(|((r, o), c)| !(r.is_empty() && o.is_empty() && c.is_empty()))
        .map(|((r, o), c)| Triple::new(r, o, c))
        .collect();
    let rep = report(&triples)?;
    let json = rep.to_json()?;
    eprintln!("{}", rep.to_text());
    if let Some(p) = &a.sentences {
        fs::write(p, rep.sentence_tsv()).with_context(|| format!("writing {}", p.display()))?;
        run.output(p)?;
    }
    if let Some(p) = &a.chart {
        fs::write(p, rep.chart_csv()).with_context(|| format!("writing {}", p.display()))?;
        run.output(p)?;
    }
    match &a.output {
        Some(p) => {
            fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
            run.output(p)?;
            run.finish(p)?;
        }
        None => println!("{json}"),
    }
    Ok(())
}
