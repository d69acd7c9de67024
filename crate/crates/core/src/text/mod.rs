//! OCR evaluation: normalization, alignment, CER/WER and outlier filtering.
//!
//! Both sides are NFC-normalized and whitespace runs (newlines included)
//! collapse to one space before anything is compared. Rates count Unicode
//! scalar values.

mod align;
mod document;

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub use align::{align_banded, align_exact, edit_distance, edit_distance_within, EditOp, EditScript};
pub use document::{align_document, align_normalized, DocumentAlignConfig, DocumentAlignment, Segment};

pub const OUTLIER_CER: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("ground truth is empty after normalization")]
    EmptyGroundTruth,
}

/// NFC, whitespace runs to a single space, no leading or trailing space.
pub fn normalize(text: &str) -> Vec<char> {
    let mut out = Vec::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfc() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

pub fn normalize_string(text: &str) -> String {
    normalize(text).into_iter().collect()
}

/// Character spans of the words of normalized text.
pub fn word_spans(text: &[char]) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &c) in text.iter().enumerate() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

fn words(text: &[char]) -> Vec<&[char]> {
    word_spans(text).into_iter().map(|r| &text[r]).collect()
}

/// Raw error counts behind a CER/WER pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub char_errors: usize,
    pub gt_chars: usize,
    pub word_errors: usize,
    pub gt_words: usize,
}

impl ErrorCounts {
    pub fn of_normalized(gt: &[char], hyp: &[char]) -> ErrorCounts {
        let gw = words(gt);
        let hw = words(hyp);
        ErrorCounts {
            char_errors: edit_distance(gt, hyp),
            gt_chars: gt.len(),
            word_errors: edit_distance(&gw, &hw),
            gt_words: gw.len(),
        }
    }

    pub fn add(&mut self, other: ErrorCounts) {
        self.char_errors += other.char_errors;
        self.gt_chars += other.gt_chars;
        self.word_errors += other.word_errors;
        self.gt_words += other.gt_words;
    }

    pub fn cer(&self) -> Option<f64> {
        (self.gt_chars > 0).then(|| self.char_errors as f64 / self.gt_chars as f64)
    }

    pub fn wer(&self) -> Option<f64> {
        (self.gt_words > 0).then(|| self.word_errors as f64 / self.gt_words as f64)
    }
}

/// Whole-text CER and WER.
pub fn error_rates(gt: &str, hyp: &str) -> Result<(f64, f64), TextError> {
    let g = normalize(gt);
    if g.is_empty() {
        return Err(TextError::EmptyGroundTruth);
    }
    let counts = ErrorCounts::of_normalized(&g, &normalize(hyp));
    Ok((counts.cer().unwrap_or(0.0), counts.wer().unwrap_or(0.0)))
}

/// Error counts over the matched segments of a document alignment.
pub fn document_counts(al: &DocumentAlignment) -> ErrorCounts {
    let mut total = ErrorCounts::default();
    for seg in &al.segments {
        let gw = words(&al.gt[seg.gt.clone()]);
        let hw = words(&al.hyp[seg.hyp.clone()]);
        total.add(ErrorCounts {
            char_errors: seg.script.cost(),
            gt_chars: seg.gt.len(),
            word_errors: edit_distance(&gw, &hw),
            gt_words: gw.len(),
        });
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageEval {
    pub page_id: String,
    pub cer: f64,
    pub wer: f64,
    pub gt_length: usize,
    pub matched: bool,
    pub outlier: bool,
}

impl PageEval {
    /// Builds a row; pages with no matched ground truth score 1.0.
    pub fn new(page_id: impl Into<String>, counts: ErrorCounts) -> PageEval {
        let matched = counts.gt_chars > 0;
        let cer = counts.cer().unwrap_or(1.0);
        let wer = counts.wer().unwrap_or(1.0);
        PageEval {
            page_id: page_id.into(),
            cer,
            wer,
            gt_length: counts.gt_chars,
            matched,
            outlier: cer > OUTLIER_CER,
        }
    }
}

/// Aligns a hypothesis page against (possibly book-level) ground truth.
pub fn evaluate_page(
    page_id: impl Into<String>,
    gt: &str,
    hyp: &str,
    config: &DocumentAlignConfig,
) -> (PageEval, DocumentAlignment) {
    let al = align_document(gt, hyp, config);
    (PageEval::new(page_id, document_counts(&al)), al)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub pages: usize,
    pub mean_cer: f64,
    pub mean_wer: f64,
}

impl RateSummary {
    pub fn of<'a>(pages: impl IntoIterator<Item = &'a PageEval>) -> RateSummary {
        let mut s = RateSummary::default();
        for p in pages {
            s.pages += 1;
            s.mean_cer += p.cer;
            s.mean_wer += p.wer;
        }
        if s.pages > 0 {
            s.mean_cer /= s.pages as f64;
            s.mean_wer /= s.pages as f64;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSplit {
    pub threshold: f64,
    pub kept: Vec<PageEval>,
    pub dropped: Vec<PageEval>,
    pub all_summary: RateSummary,
    pub kept_summary: RateSummary,
}

/// Drops pages with `cer > threshold` (strict).
pub fn filter_outliers(pages: &[PageEval], threshold: f64) -> OutlierSplit {
    let (dropped, kept): (Vec<PageEval>, Vec<PageEval>) =
        pages.iter().cloned().partition(|p| p.cer > threshold);
    OutlierSplit {
        threshold,
        all_summary: RateSummary::of(pages),
        kept_summary: RateSummary::of(&kept),
        kept,
        dropped,
    }
}
