//! Comparison report built from a run manifest.

use std::fmt::Write as _;

use prepocr_core::text::{filter_outliers, PageEval, RateSummary};
use serde::{Deserialize, Serialize};

use crate::pipeline::{AmpRow, RunManifest, StageRecord};

pub const MOCK_NOTE: &str = "mock OCR engine: text is injected from ground truth and ignores pixels, \
so raw and pre CER cannot reflect restoration; use AMP or an external engine for image quality";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Raw,
    Pre,
    Prep,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Raw, Stage::Pre, Stage::Prep];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "Raw",
            Stage::Pre => "Pre",
            Stage::Prep => "PreP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    /// Pages with an evaluation in this stage.
    pub evaluated: usize,
    pub failed: usize,
    pub all: RateSummary,
    pub kept: RateSummary,
    pub outliers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub pages: usize,
    pub partial_pages: Vec<String>,
    pub outlier_threshold: f64,
    pub stages: Vec<StageSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrector: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub amp: Vec<AmpRow>,
    pub notes: Vec<String>,
}

fn stage_of(page: &crate::pipeline::PageRecord, stage: Stage) -> Option<&StageRecord> {
    match stage {
        Stage::Raw => Some(&page.raw),
        Stage::Pre => page.pre.as_ref(),
        Stage::Prep => page.prep.as_ref(),
    }
}

/// Pure function of the manifest.
pub fn build_report(manifest: &RunManifest) -> Report {
    let threshold = manifest.config.outlier_threshold;
    let mut stages = Vec::new();
    for stage in Stage::ALL {
        let records: Vec<&StageRecord> = manifest.pages.iter().filter_map(|p| stage_of(p, stage)).collect();
        if records.is_empty() {
            continue;
        }
        let evals: Vec<PageEval> = records.iter().filter_map(|r| r.eval.clone()).collect();
        let split = filter_outliers(&evals, threshold);
        stages.push(StageSummary {
            stage,
            evaluated: evals.len(),
            failed: records.iter().filter(|r| r.error.is_some()).count(),
            all: split.all_summary,
            kept: split.kept_summary,
            outliers: split.dropped.iter().map(|p| p.page_id.clone()).collect(),
        });
    }
    let mut notes = Vec::new();
    if manifest.engine_is_mock {
        notes.push(MOCK_NOTE.to_string());
    }
    if manifest.corrector.is_some() {
        notes.push(
            "PreP uses the reference corrector, a character n-gram noisy-channel model standing in for a learned post-corrector"
                .to_string(),
        );
    }
    if manifest.amp.is_some() {
        notes.push("AMP raw scores the degraded input itself, i.e. the identity restorer".to_string());
    }
    Report {
        pages: manifest.pages.len(),
        partial_pages: manifest.pages.iter().filter(|p| p.partial).map(|p| p.id.clone()).collect(),
        outlier_threshold: threshold,
        stages,
        corrector: manifest.corrector.clone(),
        amp: manifest.amp.as_ref().map(|a| a.rows.clone()).unwrap_or_default(),
        notes,
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

fn cell(all: f64, kept: f64, kept_pages: usize) -> String {
    if kept_pages == 0 {
        format!("{} (-)", pct(all))
    } else {
        format!("{} ({})", pct(all), pct(kept))
    }
}

fn db(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl Report {
    /// Plain-text table: mean over all pages, with the mean excluding
    /// outliers in parentheses. Rates are percentages.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pages: {}  outlier threshold: CER > {}", self.pages, pct(self.outlier_threshold) + "%");
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<6} {:>18} {:>18} {:>6} {:>6} {:>8}", "stage", "CER %", "WER %", "pages", "failed", "outliers");
        for st in &self.stages {
            let _ = writeln!(
                s,
                "{:<6} {:>18} {:>18} {:>6} {:>6} {:>8}",
                st.stage.as_str(),
                cell(st.all.mean_cer, st.kept.mean_cer, st.kept.pages),
                cell(st.all.mean_wer, st.kept.mean_wer, st.kept.pages),
                st.evaluated,
                st.failed,
                st.outliers.len()
            );
        }
        if let Some(c) = &self.corrector {
            let _ = writeln!(s, "PreP corrector: {c}");
        }
        if !self.amp.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<12} {:>10} {:>10}", "AMP (dB)", "raw", "pre");
            for row in &self.amp {
                let _ = writeln!(s, "{:<12} {:>10} {:>10}", row.region.as_str(), db(row.raw), db(row.pre));
            }
        }
        if !self.partial_pages.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "partial pages: {}", self.partial_pages.join(", "));
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}
