use std::path::{Path, PathBuf};
use std::process::Command;

use prepocr::io;
use prepocr_core::ocrnoise::{ErrorModel, RateScale, TrainingPair};
use prepocr_core::GrayImage;
use serde_json::Value;

const TEXT: &str = "the quick brown fox jumps over the lazy dog. \
the lazy dog sleeps in the warm sun while the fox runs away. \
a brown dog and a quick fox meet again by the river.\n";

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn prepocr(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_prepocr")).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "prepocr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn text_tools_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gt = d.join("gt.txt");
    let hyp = d.join("hyp.txt");
    io::write_text(&gt, TEXT).unwrap();
    io::write_text(&hyp, &TEXT.replace("the", "tbe").replace("fox", "f0x")).unwrap();

    let report = d.join("evals.jsonl");
    prepocr(&["align", "--gt", s(&gt), "--hyp", s(&hyp), "--report", s(&report)]);
    let rows: Vec<Value> = io::read_jsonl(&report).unwrap();
    assert_eq!(rows[0]["page_id"], "hyp");
    assert!(rows[0]["cer"].as_f64().unwrap() > 0.0);
    assert!(rows[0]["unmatched"].as_array().unwrap().is_empty());

    let errors = d.join("errors.json");
    prepocr(&["extract-errors", "--gt", s(&gt), "--hyp", s(&hyp), "--out", s(&errors)]);
    let model: ErrorModel = io::read_json(&errors).unwrap();
    assert!(model.probability('h', "b") > 0.0);
    assert!(model.probability('o', "0") > 0.0);

    let rate = d.join("rate.json");
    let sample: String = TEXT.repeat(40);
    io::write_text(&d.join("sample.txt"), &sample).unwrap();
    prepocr(&["calibrate", "--model", s(&errors), "--sample", s(&d.join("sample.txt")), "--target", "0.03", "--out", s(&rate)]);
    let scale: RateScale = io::read_json(&rate).unwrap();
    assert!(!scale.saturated);
    assert!((scale.achieved_cer - 0.03).abs() <= 0.03 * 0.02 + 1e-12);

    let noisy = d.join("noisy.txt");
    prepocr(&["inject", "--in", s(&gt), "--model", s(&errors), "--rate", s(&rate), "--seed", "4", "--out", s(&noisy)]);
    let again = d.join("noisy2.txt");
    prepocr(&["inject", "--in", s(&gt), "--model", s(&errors), "--rate", s(&rate), "--seed", "4", "--out", s(&again)]);
    assert_eq!(io::read_text(&noisy).unwrap(), io::read_text(&again).unwrap());

    let pairs = d.join("pairs.jsonl");
    prepocr(&["make-pairs", "--corpus", s(&d.join("sample.txt")), "--model", s(&errors), "--rates", "0.02,0.1", "--max-chars", "120", "--out", s(&pairs)]);
    let rows: Vec<TrainingPair> = io::read_jsonl(&pairs).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.clean.chars().count() <= 120 && !r.noisy.contains('@')));

    let lm = d.join("lm.bin");
    prepocr(&["lm-train", "--corpus", s(&d.join("sample.txt")), "--order", "4", "--out", s(&lm)]);
    let fixed = d.join("fixed.txt");
    io::write_text(&d.join("typo.txt"), "tbe lazy dog\n").unwrap();
    prepocr(&["correct", "--in", s(&d.join("typo.txt")), "--lm", s(&lm), "--channel", s(&errors), "--out", s(&fixed)]);
    assert_eq!(io::read_text(&fixed).unwrap(), "the lazy dog\n");
}

#[test]
fn image_tools_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clean = GrayImage::from_fn(400, 300, |x, y| if (x / 9 + y / 13) % 4 == 0 { 20 } else { 240 }).unwrap();
    io::write_png(&d.join("gt/a.png"), &clean).unwrap();
    prepocr(&["degrade", "--in", s(&d.join("gt/a.png")), "--level", "2", "--seed", "3", "--out", s(&d.join("noisy/a.png"))]);
    prepocr(&[
        "restore", "--in", s(&d.join("noisy/a.png")), "--out", s(&d.join("pred/a.png")),
        "--restorer", "otsu", "--mode", "multi", "--fusion", "median", "--trim", "64",
        "--passes", s(&d.join("passes.json")),
    ]);
    let passes: Vec<Value> = io::read_json(&d.join("passes.json")).unwrap();
    assert_eq!(passes.len(), 4);
    prepocr(&[
        "restore", "--in", s(&d.join("noisy/a.png")), "--out", s(&d.join("single.png")),
        "--mode", "single", "--direction", "br-tl", "--resize-width", "200",
    ]);
    assert_eq!(io::read_gray(&d.join("single.png")).unwrap().dims(), (200, 150));

    let report = d.join("amp.json");
    prepocr(&["amp", "--gt-dir", s(&d.join("gt")), "--pred-dir", s(&d.join("pred")), "--region", "128", "--report", s(&report)]);
    let r: Value = io::read_json(&report).unwrap();
    assert_eq!(r["pairs"], 1);
    assert_eq!(r["patch_pairs"], 4);
    assert!(r["amp"]["full"].as_f64().unwrap() > 0.0);
    let heat = io::read_gray(&report.with_extension("png")).unwrap();
    assert_eq!(heat.dims(), (128, 128));

    prepocr(&["amp", "--gt-dir", s(&d.join("gt")), "--pred-dir", s(&d.join("gt")), "--report", s(&report)]);
    let r: Value = io::read_json(&report).unwrap();
    assert_eq!(r["amp"]["full"].as_f64(), Some(100.0));
}

#[test]
fn synth_then_pipeline_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus.txt");
    io::write_text(&corpus, &TEXT.repeat(12)).unwrap();
    let data = d.join("data");
    let cfg = d.join("synth.json");
    io::write_text(&cfg, r#"{"page_chars": 200, "stitch_fraction": 0.0, "render": {"page_width": 640}}"#).unwrap();
    prepocr(&[
        "synth", "--corpus", s(&corpus), "--font", s(&fixture("DejaVuSans.ttf")), "--font", s(&fixture("DejaVuSerif.ttf")),
        "--config", s(&cfg), "--count", "2", "--seed", "5", "--level", "3", "--out", s(&data),
    ]);
    let records: Vec<Value> = io::read_jsonl(&data.join("manifest.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r["level"] == 3));
    for r in &records {
        let clean = io::read_gray(&data.join(r["clean"].as_str().unwrap())).unwrap();
        assert_eq!(clean.width(), 640);
    }

    let config = d.join("run.json");
    io::write_text(&config, r#"{"version": 1, "engine": {"kind": "mock", "lambda": 0}, "restorer": "otsu"}"#).unwrap();
    let run = d.join("run");
    let table = prepocr(&["pipeline", "--config", s(&config), "--pages", s(&data.join("manifest.jsonl")), "--out", s(&run), "--workers", "2"]);
    assert!(table.contains("Raw"));
    assert!(table.contains("AMP (dB)"));
    let before = std::fs::read(run.join("report.json")).unwrap();
    std::fs::remove_file(run.join("report.json")).unwrap();
    prepocr(&["report", "--manifest", s(&run.join("manifest.json"))]);
    assert_eq!(std::fs::read(run.join("report.json")).unwrap(), before);
}

#[test]
fn ocr_verb_writes_texts_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    io::write_png(&d.join("p.png"), &GrayImage::filled(10, 10, 200).unwrap()).unwrap();
    io::write_text(&d.join("pages.jsonl"), "{\"image\": \"p.png\", \"text\": \"hello\"}\n{\"image\": \"p.png\"}\n").unwrap();
    prepocr(&["ocr", "--pages", s(&d.join("pages.jsonl")), "--lambda", "0", "--out", s(&d.join("out"))]);
    assert_eq!(io::read_text(&d.join("out/000000.txt")).unwrap(), "hello");
    let failures: Vec<Value> = io::read_jsonl(&d.join("out/failures.jsonl")).unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0]["index"], 1);

    prepocr(&["ocr", "--pages", s(&d.join("pages.jsonl")), "--command", "echo read > {output}", "--out", s(&d.join("ext"))]);
    assert_eq!(io::read_text(&d.join("ext/000001.txt")).unwrap(), "read\n");
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = Command::new(env!("CARGO_BIN_EXE_prepocr"))
        .args(["restore", "--in", "x.png", "--out", "y.png", "--restorer", "magic"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown restorer"));
    let out = Command::new(env!("CARGO_BIN_EXE_prepocr"))
        .args(["degrade", "--in", "/nonexistent.png", "--out", "y.png"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}
