//! OCR engine adapters.
//!
//! The mock engine never looks at pixels: it takes the page's ground truth
//! and injects errors from an error model. It exercises the pipeline and
//! the post-correction stage without an OCR install, but it cannot show
//! any effect of restoration on recognition.

use std::path::{Path, PathBuf};
use std::process::Command;

use prepocr_core::math::derive_seed;
use prepocr_core::ocrnoise::{calibrate_rate, inject_errors, ErrorModel, RateScale};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OcrEngineSpec {
    Mock {
        /// JSON error model; without one the mock returns the ground truth.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error_model: Option<PathBuf>,
        /// Fixed rate multiplier, used when `target_cer` is absent.
        #[serde(default = "one")]
        lambda: f64,
        /// Calibrate the multiplier on the run's ground truth instead.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_cer: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    /// Shell command with `{image}` and `{output}` placeholders; it must
    /// exit 0 and write UTF-8 text to `{output}`.
    ExternalCommand { command: String },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OcrFailure {
    #[error("mock engine needs ground truth for this page")]
    NoGroundTruth,
    #[error("`{command}` exited with {status}: {stderr}")]
    Exit {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("engine output unreadable: {0}")]
    Output(String),
    #[error("could not start engine: {0}")]
    Spawn(String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Noise(#[from] prepocr_core::ocrnoise::NoiseError),
}

/// A ready-to-run engine.
#[derive(Debug, Clone)]
pub enum OcrEngine {
    Mock {
        model: ErrorModel,
        scale: RateScale,
        seed: u64,
    },
    External {
        template: String,
    },
}

/// One page handed to an engine.
#[derive(Debug, Clone, Copy)]
pub struct OcrInput<'a> {
    pub page_id: &'a str,
    pub image: &'a Path,
    pub gt: Option<&'a str>,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl OcrEngine {
    /// Resolves a spec. `calibration_text` is the corpus used when the mock
    /// is asked for a target CER.
    pub fn from_spec(spec: &OcrEngineSpec, calibration_text: &str) -> Result<OcrEngine, EngineError> {
        Ok(match spec {
            OcrEngineSpec::Mock {
                error_model,
                lambda,
                target_cer,
                seed,
            } => {
                let model = match error_model {
                    Some(p) => io::read_json(p)?,
                    None => ErrorModel::default(),
                };
                let scale = match target_cer {
                    Some(t) => calibrate_rate(&model, *t, calibration_text, *seed)?,
                    None => RateScale::fixed(*lambda),
                };
                OcrEngine::Mock { model, scale, seed: *seed }
            }
            OcrEngineSpec::ExternalCommand { command } => OcrEngine::External { template: command.clone() },
        })
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, OcrEngine::Mock { .. })
    }

    pub fn recognize(&self, input: &OcrInput) -> Result<String, OcrFailure> {
        match self {
            OcrEngine::Mock { model, scale, seed } => {
                let gt = input.gt.ok_or(OcrFailure::NoGroundTruth)?;
                // Keyed by page id, so the same page reads the same way in
                // every stage and under any scheduling.
                Ok(inject_errors(gt, model, scale, derive_seed(*seed, fnv1a(input.page_id))))
            }
            OcrEngine::External { template } => run_external(template, input.image),
        }
    }
}

fn quote(p: &Path) -> String {
    format!("'{}'", p.to_string_lossy().replace('\'', r"'\''"))
}

fn run_external(template: &str, image: &Path) -> Result<String, OcrFailure> {
    let dir = tempfile::tempdir().map_err(|e| OcrFailure::Spawn(e.to_string()))?;
    let out = dir.path().join("out.txt");
    let command = template.replace("{image}", &quote(image)).replace("{output}", &quote(&out));
    let result = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .output()
        .map_err(|e| OcrFailure::Spawn(e.to_string()))?;
    if !result.status.success() {
        return Err(OcrFailure::Exit {
            command,
            status: result.status.to_string(),
            stderr: String::from_utf8_lossy(&result.stderr).trim().to_string(),
        });
    }
    let bytes = std::fs::read(&out).map_err(|e| OcrFailure::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| OcrFailure::Output(e.to_string()))
}

/// One result per input, in input order. Failures stay per page.
pub fn run_ocr(inputs: &[OcrInput], engine: &OcrEngine) -> Vec<Result<String, OcrFailure>> {
    inputs.par_iter().map(|i| engine.recognize(i)).collect()
}
