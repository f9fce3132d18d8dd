#![cfg(unix)]

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use glyphnoise::atlas::FontSet;
use glyphnoise::corpus::Chunk;
use glyphnoise::ocr::{generate_ocr_dataset, run_ocr, OcrEngine, OcrPipelineOptions};
use glyphnoise::Error;

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
    path
}

fn engine(path: &Path, timeout: f64) -> OcrEngine {
    OcrEngine::new(format!("{} {{input_path}} {{lang}}", path.display()), "eng", timeout).unwrap()
}

fn fonts() -> FontSet {
    FontSet::from_manifest(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/fonts/fonts.json")).unwrap()
}

#[test]
fn captures_stdout_and_trims_the_end() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("page.png");
    fs::write(&img, b"not really a png").unwrap();
    let e = engine(&script(dir.path(), "ocr", "printf '  hello world \\n\\n'"), 5.0);
    assert_eq!(run_ocr(&img, &e).unwrap(), "  hello world");
}

#[test]
fn passes_path_and_language() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("page.png");
    fs::write(&img, b"x").unwrap();
    let e = engine(&script(dir.path(), "ocr", "echo \"$1|$2\""), 5.0);
    assert_eq!(run_ocr(&img, &e).unwrap(), format!("{}|eng", img.display()));
}

#[test]
fn nonzero_exit_is_a_chunk_failure() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("page.png");
    fs::write(&img, b"x").unwrap();
    let e = engine(&script(dir.path(), "ocr", "echo broken >&2; exit 3"), 5.0);
    match run_ocr(&img, &e) {
        Err(Error::OcrFailed(m)) => assert!(m.contains("broken"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn slow_engines_time_out() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("page.png");
    fs::write(&img, b"x").unwrap();
    let e = engine(&script(dir.path(), "ocr", "sleep 5"), 0.2);
    let t = std::time::Instant::now();
    assert!(matches!(run_ocr(&img, &e), Err(Error::OcrFailed(_))));
    assert!(t.elapsed().as_secs_f64() < 3.0);
}

#[test]
fn missing_image_is_a_failure_not_unavailability() {
    let dir = tempfile::tempdir().unwrap();
    let e = engine(&script(dir.path(), "ocr", "echo hi"), 5.0);
    assert!(matches!(
        run_ocr(&dir.path().join("none.png"), &e),
        Err(Error::OcrFailed(_))
    ));
}

#[test]
fn pipeline_keeps_order_and_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    // Echoes a fixed line, but fails on chunk 3.
    let body = "case \"$1\" in *chunk-3.png) exit 1;; esac\nprintf 'recognized\\ntext\\n'";
    let e = engine(&script(dir.path(), "ocr", body), 10.0);
    let chunks: Vec<Chunk> = (0..6)
        .map(|i| Chunk::new(i, format!("Sentence number {i}."), "en"))
        .collect();
    let work = dir.path().join("pages");
    let opts = OcrPipelineOptions {
        work_dir: Some(work.clone()),
        jobs: 3,
        ..OcrPipelineOptions::default()
    };
    let corpus = generate_ocr_dataset(&chunks, &fonts(), &e, 11, &opts).unwrap();
    assert_eq!(corpus.len(), 6);
    for (pair, chunk) in corpus.pairs.iter().zip(&chunks) {
        assert_eq!(pair.id, chunk.id);
        assert_eq!(pair.clean, chunk.text);
        assert!(pair.recipe.is_some() && pair.font.is_some());
        if chunk.id == 3 {
            assert!(pair.failed);
            assert_eq!(pair.noisy, "");
        } else {
            assert!(!pair.failed);
            assert_eq!(pair.noisy, "recognized text");
        }
    }
    assert!(work.join("chunk-0.png").is_file());

    let again = generate_ocr_dataset(&chunks, &fonts(), &e, 11, &OcrPipelineOptions { jobs: 1, ..opts }).unwrap();
    assert_eq!(again.to_jsonl().unwrap(), corpus.to_jsonl().unwrap());
}

#[test]
fn unavailable_engine_aborts_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let e = OcrEngine::new("no-such-ocr-binary {input_path} {lang}", "eng", 1.0).unwrap();
    let opts = OcrPipelineOptions {
        work_dir: Some(dir.path().join("pages")),
        ..OcrPipelineOptions::default()
    };
    let chunks = vec![Chunk::new(0, "text", "en")];
    assert!(matches!(
        generate_ocr_dataset(&chunks, &fonts(), &e, 0, &opts),
        Err(Error::EngineUnavailable(_))
    ));
    assert!(!dir.path().join("pages").exists());
}
