//! Raw / Pre / PreP runs over a page set.
//!
//! * raw: OCR on the original image
//! * pre: restore, then OCR
//! * prep: restore, OCR, then post-correct
//!
//! Each page writes only under `pages/NNNNNN/`, so the worker count never
//! changes what ends up on disk.

use std::path::{Path, PathBuf};

use prepocr_core::amp::{AmpRegion, PsnrAccumulator};
use prepocr_core::correct::{BeamConfig, CharLM, Corrector, CORRECTOR_LABEL};
use prepocr_core::ocrnoise::ErrorModel;
use prepocr_core::patch::{restore_image_detailed, FusionMethod, PassSummary, RestoreMode};
use prepocr_core::text::{evaluate_page, DocumentAlignConfig, PageEval, OUTLIER_CER};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::ocr::{EngineError, OcrEngine, OcrEngineSpec, OcrInput};
use crate::report::{build_report, Report};
use crate::restorer::RestorerSpec;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("config version {0} is not supported (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("language model: {0}")]
    Lm(#[from] prepocr_core::correct::LmError),
    #[error("corrector: {0}")]
    Beam(#[from] prepocr_core::correct::BeamError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSpec {
    /// Character LM written by `lm-train`.
    pub lm: PathBuf,
    /// Error model (JSON) used as the channel.
    pub channel: PathBuf,
    #[serde(default)]
    pub beam: BeamConfig,
}

/// Versioned run configuration. See the README for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub version: u32,
    pub engine: OcrEngineSpec,
    pub restorer: RestorerSpec,
    #[serde(default = "default_mode")]
    pub mode: RestoreMode,
    #[serde(default = "default_trim")]
    pub trim: u32,
    #[serde(default = "default_threshold")]
    pub outlier_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrector: Option<CorrectorSpec>,
    #[serde(default = "DocumentAlignConfig::default")]
    pub align: DocumentAlignConfig,
}

fn default_mode() -> RestoreMode {
    RestoreMode::Multi {
        fusion: FusionMethod::Median,
    }
}

fn default_trim() -> u32 {
    64
}

fn default_threshold() -> f64 {
    OUTLIER_CER
}

impl PipelineConfig {
    pub fn new(engine: OcrEngineSpec, restorer: RestorerSpec) -> PipelineConfig {
        PipelineConfig {
            version: CONFIG_VERSION,
            engine,
            restorer,
            mode: default_mode(),
            trim: default_trim(),
            outlier_threshold: default_threshold(),
            corrector: None,
            align: DocumentAlignConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.version != CONFIG_VERSION {
            return Err(PipelineError::Version(self.version));
        }
        if !prepocr_core::patch::SUPPORTED_TRIMS.contains(&self.trim) {
            return Err(PipelineError::Invalid(format!("trim {} not in {{0, 32, 64}}", self.trim)));
        }
        if !(self.outlier_threshold.is_finite() && self.outlier_threshold >= 0.0) {
            return Err(PipelineError::Invalid("outlier_threshold".into()));
        }
        if let Some(c) = &self.corrector {
            c.beam.validate()?;
        }
        Ok(())
    }

    /// Reads a config and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let mut cfg: PipelineConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let OcrEngineSpec::Mock { error_model: Some(p), .. } = &mut cfg.engine {
            fix(p);
        }
        if let Some(c) = &mut cfg.corrector {
            fix(&mut c.lm);
            fix(&mut c.channel);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One page to process. Dataset manifests (`degraded`, `clean`, `text`)
/// load directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(alias = "degraded")]
    pub image: PathBuf,
    /// Ground-truth text file; may hold a whole book.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    /// Inline ground truth, used when `gt` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Clean image for AMP.
    #[serde(default, alias = "clean", skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
}

/// Reads a JSONL page list, resolving relative paths against its directory.
pub fn load_pages(path: &Path) -> Result<Vec<PageInput>, PipelineError> {
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut pages: Vec<PageInput> = io::read_jsonl(path)?;
    for p in &mut pages {
        for q in [Some(&mut p.image), p.gt.as_mut(), p.reference.as_mut()].into_iter().flatten() {
            if q.is_relative() {
                *q = base.join(&*q);
            }
        }
    }
    Ok(pages)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Output text, relative to the run directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<PageEval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StageRecord {
    fn failed(msg: impl Into<String>) -> StageRecord {
        StageRecord {
            text: None,
            eval: None,
            error: Some(msg.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRecord {
    pub index: usize,
    pub id: String,
    pub image: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restored: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passes: Vec<PassSummary>,
    pub raw: StageRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre: Option<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prep: Option<StageRecord>,
    /// Some stage of this page failed or did not run.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpRow {
    pub region: AmpRegion,
    /// Degraded input scored against the reference (identity restorer).
    pub raw: Option<f64>,
    pub pre: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpComparison {
    pub patch_pairs: u32,
    pub rows: Vec<AmpRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub config: PipelineConfig,
    pub engine_is_mock: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrector: Option<String>,
    pub pages: Vec<PageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amp: Option<AmpComparison>,
}

struct Context<'a> {
    config: &'a PipelineConfig,
    engine: OcrEngine,
    corrector: Option<Corrector<'a>>,
    out: &'a Path,
}

fn page_gt(page: &PageInput) -> Result<Option<String>, IoError> {
    match (&page.gt, &page.text) {
        (Some(p), _) => io::read_text(p).map(Some),
        (None, Some(t)) => Ok(Some(t.clone())),
        (None, None) => Ok(None),
    }
}

struct PageOutcome {
    record: PageRecord,
    amp: Option<(PsnrAccumulator, PsnrAccumulator)>,
}

fn process_page(ctx: &Context, index: usize, page: &PageInput) -> PageOutcome {
    let id = page.id.clone().unwrap_or_else(|| format!("{index:06}"));
    let dir = PathBuf::from("pages").join(format!("{index:06}"));
    let mut notes = Vec::new();
    let gt = match page_gt(page) {
        Ok(g) => g,
        Err(e) => {
            notes.push(format!("ground truth unreadable: {e}"));
            None
        }
    };
    let gt_label = page
        .gt
        .as_ref()
        .map(|p| p.display().to_string())
        .or_else(|| page.text.as_ref().map(|_| "inline".to_string()));
    let align = &ctx.config.align;
    let evaluate = |text: &str| gt.as_deref().map(|g| evaluate_page(id.clone(), g, text, align).0);
    let write_stage = |name: &str, text: &str| -> StageRecord {
        let rel = dir.join(format!("{name}.txt"));
        match io::write_text(&ctx.out.join(&rel), text) {
            Ok(()) => StageRecord {
                text: Some(rel),
                eval: evaluate(text),
                error: None,
            },
            Err(e) => StageRecord::failed(e.to_string()),
        }
    };

    let raw = match ctx.engine.recognize(&OcrInput {
        page_id: &id,
        image: &page.image,
        gt: gt.as_deref(),
    }) {
        Ok(text) => write_stage("raw", &text),
        Err(e) => StageRecord::failed(e.to_string()),
    };

    let restorer = ctx.config.restorer.build();
    let mut restored_rel = None;
    let mut passes = Vec::new();
    let mut amp = None;
    let pre = match io::read_gray(&page.image) {
        Err(e) => Some(StageRecord::failed(format!("image unreadable: {e}"))),
        Ok(img) => match restore_image_detailed(&img, &restorer, ctx.config.mode, ctx.config.trim) {
            Err(e) => Some(StageRecord::failed(format!("restoration failed: {e}"))),
            Ok(outcome) => {
                let rel = dir.join("restored.png");
                if let Err(e) = io::write_png(&ctx.out.join(&rel), &outcome.image) {
                    notes.push(e.to_string());
                }
                if let Some(reference) = &page.reference {
                    match page_amp(reference, &img, &outcome.image) {
                        Ok(pair) => amp = Some(pair),
                        Err(e) => notes.push(format!("AMP skipped: {e}")),
                    }
                }
                restored_rel = Some(rel.clone());
                if !restorer_is_deterministic(&ctx.config.restorer) {
                    passes = outcome.passes;
                }
                let input = OcrInput {
                    page_id: &id,
                    image: &ctx.out.join(&rel),
                    gt: gt.as_deref(),
                };
                Some(match ctx.engine.recognize(&input) {
                    Ok(text) => write_stage("pre", &text),
                    Err(e) => StageRecord::failed(e.to_string()),
                })
            }
        },
    };

    let prep = match (&ctx.corrector, &pre) {
        (Some(c), Some(stage)) => Some(match &stage.text {
            Some(rel) => match io::read_text(&ctx.out.join(rel)) {
                Ok(text) => write_stage("prep", &c.correct_lines(&text)),
                Err(e) => StageRecord::failed(e.to_string()),
            },
            None => StageRecord::failed("pre stage produced no text"),
        }),
        _ => None,
    };

    let stage_failed = |s: &StageRecord| s.error.is_some();
    let partial = stage_failed(&raw)
        || pre.as_ref().map_or(true, stage_failed)
        || (ctx.corrector.is_some() && prep.as_ref().map_or(true, stage_failed));
    PageOutcome {
        record: PageRecord {
            index,
            id,
            image: page.image.clone(),
            gt: gt_label,
            restored: restored_rel,
            passes,
            raw,
            pre,
            prep,
            partial,
            notes,
        },
        amp,
    }
}

fn restorer_is_deterministic(spec: &RestorerSpec) -> bool {
    matches!(spec, RestorerSpec::Builtin(_))
}

fn page_amp(
    reference: &Path,
    raw: &prepocr_core::GrayImage,
    restored: &prepocr_core::GrayImage,
) -> Result<(PsnrAccumulator, PsnrAccumulator), String> {
    let gt = io::read_gray(reference).map_err(|e| e.to_string())?;
    let mut a = PsnrAccumulator::for_patches();
    let mut b = PsnrAccumulator::for_patches();
    a.accumulate_page(&gt, raw).map_err(|e| e.to_string())?;
    b.accumulate_page(&gt, restored).map_err(|e| e.to_string())?;
    Ok((a, b))
}

/// Runs every stage, then writes `manifest.json`, `report.json` and
/// `report.txt` under `out`.
pub fn run_pipeline(
    pages: &[PageInput],
    config: &PipelineConfig,
    out: &Path,
    workers: usize,
) -> Result<(RunManifest, Report), PipelineError> {
    config.validate()?;
    let calibration: String = match &config.engine {
        OcrEngineSpec::Mock { target_cer: Some(_), .. } => {
            let mut s = String::new();
            for p in pages {
                if let Some(t) = page_gt(p)? {
                    s.push_str(&t);
                    s.push('\n');
                }
            }
            s
        }
        _ => String::new(),
    };
    let engine = OcrEngine::from_spec(&config.engine, &calibration)?;
    let lm = match &config.corrector {
        Some(c) => Some(CharLM::from_bytes(&io::read_bytes(&c.lm)?)?),
        None => None,
    };
    let corrector = match (&config.corrector, &lm) {
        (Some(c), Some(lm)) => {
            let channel: ErrorModel = io::read_json(&c.channel)?;
            Some(Corrector::new(lm, &channel, c.beam.clone())?)
        }
        _ => None,
    };
    let ctx = Context {
        config,
        engine,
        corrector,
        out,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;

    let mut records = Vec::with_capacity(pages.len());
    let mut raw_acc = PsnrAccumulator::for_patches();
    let mut pre_acc = PsnrAccumulator::for_patches();
    let mut any_amp = false;
    // Bounded batches keep at most a few accumulators alive at once.
    let batch = workers.max(1) * 4;
    for (b, chunk) in pages.chunks(batch).enumerate() {
        let outcomes: Vec<PageOutcome> = pool.install(|| {
            chunk
                .par_iter()
                .enumerate()
                .map(|(i, p)| process_page(&ctx, b * batch + i, p))
                .collect()
        });
        for o in outcomes {
            if let Some((a, p)) = &o.amp {
                raw_acc.merge(a).expect("patch accumulators");
                pre_acc.merge(p).expect("patch accumulators");
                any_amp = true;
            }
            records.push(o.record);
        }
    }

    let amp = any_amp.then(|| AmpComparison {
        patch_pairs: raw_acc.pairs(),
        rows: AmpRegion::ALL
            .iter()
            .map(|&region| AmpRow {
                region,
                raw: raw_acc.finalize(region).ok().map(|r| r.amp),
                pre: pre_acc.finalize(region).ok().map(|r| r.amp),
            })
            .collect(),
    });
    let manifest = RunManifest {
        version: CONFIG_VERSION,
        config: config.clone(),
        engine_is_mock: ctx.engine.is_mock(),
        corrector: ctx.corrector.as_ref().map(|_| CORRECTOR_LABEL.to_string()),
        pages: records,
        amp,
    };
    let report = build_report(&manifest);
    write_outputs(out, &manifest, &report)?;
    Ok((manifest, report))
}

pub fn write_outputs(out: &Path, manifest: &RunManifest, report: &Report) -> Result<(), IoError> {
    io::write_json(&out.join("manifest.json"), manifest)?;
    io::write_json(&out.join("report.json"), report)?;
    io::write_text(&out.join("report.txt"), &report.to_text())
}
