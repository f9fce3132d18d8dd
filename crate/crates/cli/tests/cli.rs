use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_glyphnoise"));
    c.arg("-q");
    c.env_remove("GLYPHNOISE_OCR_ENGINE");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn fonts_manifest() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/fonts/fonts.json")
        .display()
        .to_string()
}

const PROSE: &str = "The lighthouse keeper wrote every evening. He counted ships and storms. \
Some nights the fog hid everything! Was anyone out there? The lamp turned, slow and patient. \
By morning the harbour woke again. Gulls argued over scraps near the pier. \
Fishermen mended their nets and spoke little. Nobody asked about the keeper's notebook. ";

fn corpus(dir: &Path) {
    fs::write(dir.join("raw.txt"), PROSE.repeat(6)).unwrap();
    ok(dir, &["chunk", "--input", "raw.txt", "--output", "chunks.txt"]);
    ok(
        dir,
        &[
            "profile",
            "--input",
            "raw.txt",
            "--output",
            "profile.json",
            "--min-count",
            "1",
        ],
    );
}

fn without_timing(manifest: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    let o = v.as_object_mut().unwrap();
    o.remove("started_unix_secs");
    o.remove("duration_secs");
    v
}

#[test]
fn eval_matches_hand_computed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture("eval");
    let report = dir.path().join("report.json");
    let chart = dir.path().join("chart.csv");
    let sentences = dir.path().join("sentences.tsv");
    let out = bin()
        .arg("eval")
        .arg("--ref")
        .arg(f.join("ref.txt"))
        .arg("--ocr")
        .arg(f.join("ocr.txt"))
        .arg("--corrected")
        .arg(f.join("corrected.txt"))
        .arg("--output")
        .arg(&report)
        .arg("--chart")
        .arg(&chart)
        .arg("--sentences")
        .arg(&sentences)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // 40 reference characters, 11 words; OCR has 4 character and 4 word
    // errors, the correction 3 and 3.
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let close = |v: &Value, x: f64| (v.as_f64().unwrap() - x).abs() < 1e-12;
    assert!(close(&r["before"]["cer"], 0.1));
    assert!(close(&r["before"]["wer"], 4.0 / 11.0));
    assert!(close(&r["after"]["cer"], 0.075));
    assert!(close(&r["after"]["wer"], 3.0 / 11.0));
    for cat in ["increased", "decreased", "equal", "zero"] {
        assert_eq!(r["categories"][cat], 1, "{cat}");
        assert!(close(&r["percentages"][cat], 25.0));
    }
    assert_eq!(
        fs::read_to_string(&chart).unwrap(),
        "category,count,percent\nincreased,1,25.0000\ndecreased,1,25.0000\nequal,1,25.0000\nzero,1,25.0000\n"
    );
    let rows: Vec<String> = fs::read_to_string(&sentences)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(rows[1], "0\t0.090909\t0.000000\tzero");
    assert_eq!(rows[4], "3\t0.000000\t0.111111\tincreased");
    assert!(fs::metadata(dir.path().join("report.json.manifest.json")).is_ok());
}

#[test]
fn eval_rejects_ragged_inputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "one\ntwo\n").unwrap();
    fs::write(dir.path().join("b.txt"), "one\n").unwrap();
    let out = run(
        dir.path(),
        &["eval", "--ref", "a.txt", "--ocr", "b.txt", "--corrected", "a.txt"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line counts differ"));
}

#[test]
fn glyph_without_matrix_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let out = run(
        dir.path(),
        &[
            "gen",
            "--method",
            "glyph",
            "--chunks",
            "chunks.txt",
            "--profile",
            "profile.json",
            "--output",
            "o.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--matrix"));
    assert!(!dir.path().join("o.jsonl").exists());
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));

    fs::write(dir.path().join("bad.toml"), "[generation]\np_range = [20, 5]\n").unwrap();
    fs::write(dir.path().join("chunks.txt"), "text\n").unwrap();
    let out = run(
        dir.path(),
        &[
            "--config",
            "bad.toml",
            "gen",
            "--chunks",
            "chunks.txt",
            "--output",
            "o.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_range"));

    fs::write(dir.path().join("typo.toml"), "seed = 1\nsede = 2\n").unwrap();
    let out = run(
        dir.path(),
        &[
            "--config",
            "typo.toml",
            "gen",
            "--chunks",
            "chunks.txt",
            "--output",
            "o.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["chunk", "--input", "nope.txt", "--output", "c.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn image_method_without_engine_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let out = bin()
        .current_dir(dir.path())
        .env("GLYPHNOISE_OCR_ENGINE", "no-such-ocr-engine {input_path} {lang}")
        .args([
            "gen",
            "--method",
            "image",
            "--chunks",
            "chunks.txt",
            "--output",
            "o.jsonl",
        ])
        .args(["--fonts", &fonts_manifest()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-ocr-engine"));
}

#[test]
fn rerun_reproduces_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let args = [
        "--seed",
        "17",
        "gen",
        "--method",
        "random",
        "--chunks",
        "chunks.txt",
        "--profile",
        "profile.json",
        "--output",
        "o.jsonl",
        "--export",
        "o",
        "--k",
        "2",
    ];
    ok(d, &args);
    let first = fs::read(d.join("o.jsonl")).unwrap();
    let tsv = fs::read(d.join("o.tsv")).unwrap();
    let manifest = without_timing(&d.join("o.jsonl.manifest.json"));
    ok(d, &args);
    assert_eq!(fs::read(d.join("o.jsonl")).unwrap(), first);
    assert_eq!(fs::read(d.join("o.tsv")).unwrap(), tsv);
    assert_eq!(without_timing(&d.join("o.jsonl.manifest.json")), manifest);

    assert_eq!(manifest["subcommand"], "gen");
    assert_eq!(manifest["seed"], 17);
    assert_eq!(manifest["config"]["resolved"]["generation"]["augment_k"], 2);
    assert!(manifest["inputs"].as_object().unwrap().len() >= 2);
    let digest = manifest["outputs"]["o.jsonl"].as_str().unwrap();
    assert_eq!(digest.len(), 64);

    let lines = String::from_utf8(first).unwrap();
    let chunks = fs::read_to_string(d.join("chunks.txt")).unwrap().lines().count();
    assert_eq!(lines.lines().count(), 2 * chunks);

    ok(
        d,
        &[
            "--seed",
            "18",
            "gen",
            "--method",
            "random",
            "--chunks",
            "chunks.txt",
            "--profile",
            "profile.json",
            "--output",
            "p.jsonl",
        ],
    );
    ok(
        d,
        &[
            "--seed",
            "17",
            "gen",
            "--method",
            "random",
            "--chunks",
            "chunks.txt",
            "--profile",
            "profile.json",
            "--output",
            "q.jsonl",
        ],
    );
    assert_ne!(
        fs::read(d.join("p.jsonl")).unwrap(),
        fs::read(d.join("q.jsonl")).unwrap()
    );
}

#[test]
fn split_writes_four_disjoint_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(d, &["split", "--input", "chunks.txt", "--output-prefix", "part"]);
    let mut all = Vec::new();
    for name in ["error_extraction", "train", "validation", "test"] {
        let text = fs::read_to_string(d.join(format!("part.{name}.txt"))).unwrap();
        all.extend(text.lines().map(String::from));
    }
    let mut original: Vec<String> = fs::read_to_string(d.join("chunks.txt"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    all.sort();
    original.sort();
    assert_eq!(all, original);
}

#[test]
fn align_then_extract_from_text_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("clean.txt"), "the harbour woke again\ngulls argued\n").unwrap();
    fs::write(d.join("ocr.txt"), "the harhour woke agian\ngulls argued\n").unwrap();
    ok(
        d,
        &[
            "align",
            "--clean",
            "clean.txt",
            "--ocr",
            "ocr.txt",
            "--output",
            "a.jsonl",
        ],
    );
    let lines: Vec<Value> = fs::read_to_string(d.join("a.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert!(
        lines[0].to_string().contains(r#"{"substitute":["b","h"]}"#),
        "{}",
        lines[0]
    );

    ok(
        d,
        &[
            "extract-errors",
            "--clean",
            "clean.txt",
            "--ocr",
            "ocr.txt",
            "--output",
            "m.json",
        ],
    );
    let m: Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert!(m["base_cer"].as_f64().unwrap() > 0.0);
    assert!(m["sub"]["b"]["h"].as_f64().unwrap() > 0.0);
}
