//! Reference post-corrector: a noisy-channel decoder that combines an
//! [`ErrorModel`] channel with a character n-gram language model.
//!
//! This is a small, deterministic stand-in for a trained neural corrector.
//! It undoes the kinds of edits the channel knows about: single
//! substitutions, multi-character readings of one character, and deletions.
//! It does not try to match neural quality.

mod lm;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocrnoise::{ErrorModel, DELETION};

pub use lm::{train_char_lm, CharLM, LmError, DEFAULT_K, DEFAULT_ORDER};

/// Label used wherever corrected output is reported.
pub const CORRECTOR_LABEL: &str = "reference corrector";

/// Probability floor for keeping a character the channel never keeps.
pub const KEEP_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamError {
    #[error("beam width must be at least 1")]
    ZeroWidth,
    #[error("weights must be finite and non-negative")]
    BadWeight,
    #[error("edit window must be at least 1 character")]
    ZeroWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub channel_weight: f64,
    pub lm_weight: f64,
    /// Edits allowed in any window of `window_chars` noisy characters.
    pub max_edits_per_window: usize,
    pub window_chars: usize,
    /// Re-inserted deleted characters allowed between two noisy characters.
    pub max_consecutive_insertions: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 16,
            channel_weight: 1.0,
            lm_weight: 1.0,
            max_edits_per_window: 4,
            window_chars: 16,
            max_consecutive_insertions: 1,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), BeamError> {
        if self.beam_width == 0 {
            return Err(BeamError::ZeroWidth);
        }
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.channel_weight) || !ok(self.lm_weight) {
            return Err(BeamError::BadWeight);
        }
        if self.window_chars == 0 {
            return Err(BeamError::ZeroWindow);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Inversion {
    emitted: Vec<char>,
    source: char,
    log_p: f64,
}

/// Reverse lookup of an error model: which clean characters could have
/// produced a given stretch of noisy text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChannelIndex {
    log_keep: BTreeMap<char, f64>,
    by_first: BTreeMap<char, Vec<Inversion>>,
    deletions: Vec<(char, f64)>,
}

impl ChannelIndex {
    pub fn new(model: &ErrorModel) -> ChannelIndex {
        let mut log_keep = BTreeMap::new();
        let mut grouped: BTreeMap<(char, Vec<char>), f64> = BTreeMap::new();
        for (&src, cands) in model.table() {
            let keep = (1.0 - model.mass(src)).max(KEEP_FLOOR);
            log_keep.insert(src, libm::log(keep));
            for (cand, &p) in cands {
                let emitted: Vec<char> = cand.chars().filter(|&c| c != DELETION).collect();
                *grouped.entry((src, emitted)).or_default() += p;
            }
        }
        let mut by_first: BTreeMap<char, Vec<Inversion>> = BTreeMap::new();
        let mut deletions = Vec::new();
        for ((source, emitted), p) in grouped {
            let log_p = libm::log(p.min(1.0));
            match emitted.first() {
                None => deletions.push((source, log_p)),
                Some(&first) => by_first.entry(first).or_default().push(Inversion { emitted, source, log_p }),
            }
        }
        ChannelIndex { log_keep, by_first, deletions }
    }

    pub fn is_empty(&self) -> bool {
        self.by_first.is_empty() && self.deletions.is_empty()
    }

    pub fn log_keep(&self, c: char) -> f64 {
        self.log_keep.get(&c).copied().unwrap_or(0.0)
    }
}

/// One decoding step: a clean character and how it was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// The noisy character is taken as is.
    Keep,
    /// The clean character was read as the next `len` noisy characters.
    Invert { source: char, len: usize },
    /// The clean character was dropped by the OCR engine.
    Reinsert { source: char },
}

#[derive(Debug, Clone)]
struct Hyp {
    score: f64,
    node: u32,
    ctx: Vec<char>,
    /// Noisy positions of edits that can still affect the window check.
    edits: Vec<u32>,
}

const ROOT: u32 = u32::MAX;

/// A corrector bound to one language model and channel.
#[derive(Debug, Clone)]
pub struct Corrector<'a> {
    lm: &'a CharLM,
    channel: ChannelIndex,
    config: BeamConfig,
}

impl<'a> Corrector<'a> {
    pub fn new(lm: &'a CharLM, channel: &ErrorModel, config: BeamConfig) -> Result<Self, BeamError> {
        config.validate()?;
        Ok(Corrector {
            lm,
            channel: ChannelIndex::new(channel),
            config,
        })
    }

    pub fn config(&self) -> &BeamConfig {
        &self.config
    }

    fn push_ctx(&self, ctx: &[char], c: char) -> Vec<char> {
        let keep = self.lm.order() - 1;
        let mut next = Vec::with_capacity(keep);
        if keep > 0 {
            let from = (ctx.len() + 1).saturating_sub(keep);
            next.extend(ctx.iter().chain(core::iter::once(&c)).skip(from));
        }
        next
    }

    fn step_score(&self, channel_log: f64, ctx: &[char], c: char) -> f64 {
        self.config.channel_weight * channel_log + self.config.lm_weight * self.lm.log_prob(ctx, c)
    }

    fn edit_allowed(&self, edits: &[u32], pos: usize) -> bool {
        let w = self.config.window_chars;
        edits.iter().filter(|&&p| p as usize + w > pos).count() < self.config.max_edits_per_window
    }

    /// Score of a decoding path; `None` if the path does not consume the
    /// noisy text exactly or uses an edit the channel cannot produce.
    pub fn path_score(&self, noisy: &[char], path: &[Step]) -> Option<f64> {
        let mut score = 0.0;
        let mut ctx: Vec<char> = Vec::new();
        let mut pos = 0;
        for step in path {
            let (c, ch, adv) = match *step {
                Step::Keep => (*noisy.get(pos)?, self.channel.log_keep(noisy[pos]), 1),
                Step::Invert { source, len } => {
                    let seg = noisy.get(pos..pos + len)?;
                    let inv = self
                        .channel
                        .by_first
                        .get(seg.first()?)?
                        .iter()
                        .find(|i| i.source == source && i.emitted == seg)?;
                    (source, inv.log_p, len)
                }
                Step::Reinsert { source } => {
                    let &(_, lp) = self.channel.deletions.iter().find(|d| d.0 == source)?;
                    (source, lp, 0)
                }
            };
            score += self.step_score(ch, &ctx, c);
            ctx = self.push_ctx(&ctx, c);
            pos += adv;
        }
        (pos == noisy.len()).then_some(score)
    }

    /// Score of reading the noisy text as correct.
    pub fn identity_score(&self, noisy: &[char]) -> f64 {
        let mut score = 0.0;
        let mut ctx: Vec<char> = Vec::new();
        for &c in noisy {
            score += self.step_score(self.channel.log_keep(c), &ctx, c);
            ctx = self.push_ctx(&ctx, c);
        }
        score
    }

    /// Best-scoring clean hypothesis and its score. Returns the input when
    /// no hypothesis scores strictly higher than reading it unchanged.
    pub fn decode(&self, noisy: &[char]) -> (Vec<char>, f64) {
        let identity = self.identity_score(noisy);
        if self.channel.is_empty() || self.config.max_edits_per_window == 0 {
            return (noisy.to_vec(), identity);
        }
        let n = noisy.len();
        let stages = self.config.max_consecutive_insertions + 1;
        let w = self.config.window_chars;
        let mut arena: Vec<(char, u32)> = Vec::new();
        let mut buckets: Vec<Vec<Hyp>> = vec![Vec::new(); (n + 1) * stages];
        buckets[0].push(Hyp {
            score: 0.0,
            node: ROOT,
            ctx: Vec::new(),
            edits: Vec::new(),
        });
        let mut finals: Vec<Hyp> = Vec::new();

        for pos in 0..=n {
            for stage in 0..stages {
                let bucket = core::mem::take(&mut buckets[pos * stages + stage]);
                let bucket = self.prune(bucket, pos);
                for h in &bucket {
                    let mut emit = |c: char, ch: f64, to: usize, st: usize, edit: bool, arena: &mut Vec<(char, u32)>| {
                        let mut edits = h.edits.clone();
                        if edit {
                            edits.push(pos as u32);
                        }
                        edits.retain(|&p| p as usize + w > to);
                        arena.push((c, h.node));
                        buckets[to * stages + st].push(Hyp {
                            score: h.score + self.step_score(ch, &h.ctx, c),
                            node: (arena.len() - 1) as u32,
                            ctx: self.push_ctx(&h.ctx, c),
                            edits,
                        });
                    };
                    let can_edit = self.edit_allowed(&h.edits, pos);
                    if pos < n {
                        let c = noisy[pos];
                        emit(c, self.channel.log_keep(c), pos + 1, 0, false, &mut arena);
                        if can_edit {
                            for inv in self.channel.by_first.get(&c).map(Vec::as_slice).unwrap_or(&[]) {
                                if noisy[pos..].starts_with(&inv.emitted) {
                                    emit(inv.source, inv.log_p, pos + inv.emitted.len(), 0, true, &mut arena);
                                }
                            }
                        }
                    }
                    if can_edit && stage + 1 < stages {
                        for &(src, lp) in &self.channel.deletions {
                            emit(src, lp, pos, stage + 1, true, &mut arena);
                        }
                    }
                }
                if pos == n {
                    finals.extend(bucket);
                }
            }
        }

        let text_of = |mut node: u32| {
            let mut out = Vec::new();
            while node != ROOT {
                let (c, parent) = arena[node as usize];
                out.push(c);
                node = parent;
            }
            out.reverse();
            out
        };
        let mut best: Option<(f64, Vec<char>)> = None;
        for h in &finals {
            let better = match &best {
                None => true,
                Some((s, _)) => h.score > *s,
            };
            let tie = matches!(&best, Some((s, _)) if h.score == *s);
            if better {
                best = Some((h.score, text_of(h.node)));
            } else if tie {
                let t = text_of(h.node);
                if let Some((_, bt)) = &mut best {
                    if t < *bt {
                        *bt = t;
                    }
                }
            }
        }
        match best {
            Some((score, text)) if score > identity => (text, score),
            _ => (noisy.to_vec(), identity),
        }
    }

    /// Keeps the best hypothesis per recombination state, then the best
    /// `beam_width` states.
    fn prune(&self, mut bucket: Vec<Hyp>, pos: usize) -> Vec<Hyp> {
        if bucket.len() <= 1 {
            return bucket;
        }
        bucket.sort_by(|a, b| b.score.total_cmp(&a.score));
        let w = self.config.window_chars;
        let mut seen: BTreeSet<(Vec<char>, Vec<u32>)> = BTreeSet::new();
        let mut out = Vec::with_capacity(self.config.beam_width.min(bucket.len()));
        for h in bucket {
            let edits: Vec<u32> = h.edits.iter().copied().filter(|&p| p as usize + w > pos).collect();
            if seen.insert((h.ctx.clone(), edits)) {
                out.push(h);
                if out.len() == self.config.beam_width {
                    break;
                }
            }
        }
        out
    }

    pub fn correct(&self, noisy: &str) -> String {
        let chars: Vec<char> = noisy.chars().collect();
        self.decode(&chars).0.into_iter().collect()
    }

    /// Corrects each line independently, preserving line breaks.
    pub fn correct_lines(&self, noisy: &str) -> String {
        let mut out = String::with_capacity(noisy.len());
        for (i, line) in noisy.split('\n').enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&self.correct(line));
        }
        out
    }
}

/// One-shot correction of a single segment.
pub fn correct_text(noisy: &str, lm: &CharLM, channel: &ErrorModel, config: &BeamConfig) -> Result<String, BeamError> {
    Ok(Corrector::new(lm, channel, config.clone())?.correct(noisy))
}
