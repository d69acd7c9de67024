//! Character-level OCR error models: extraction from aligned pairs,
//! calibrated injection into clean text, and training-pair generation.
//!
//! An error set maps a source character to replacement strings with
//! probabilities. Replacements may be several characters long, contain
//! spaces, or be the deletion placeholder `@`, which is dropped from the
//! output after injection. Probabilities are conditioned per occurrence of
//! the source character; the remaining mass is "left unchanged".

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{derive_seed, rng_from_seed};
use crate::text::{edit_distance, normalize, EditOp, EditScript};

pub const DELETION: char = '@';
pub const DELETION_STR: &str = "@";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error("no aligned ground-truth characters to learn from")]
    EmptyCorpus,
    #[error("`@` is reserved for deletions and cannot be a source character")]
    PlaceholderSource,
    #[error("candidate {candidate:?} for {source_char:?} has probability {prob} outside (0, 1]")]
    BadProbability {
        source_char: char,
        candidate: String,
        prob: f64,
    },
    #[error("candidates for {source_char:?} sum to {total} > 1")]
    MassExceedsOne { source_char: char, total: f64 },
    #[error("empty candidate for {0:?}; use \"@\" for deletions")]
    EmptyCandidate(char),
    #[error("target CER must be finite and non-negative, got {0}")]
    BadTarget(f64),
}

type Table = BTreeMap<char, BTreeMap<String, f64>>;

/// Per-character error sets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Table", into = "Table")]
pub struct ErrorModel {
    table: Table,
}

impl TryFrom<Table> for ErrorModel {
    type Error = NoiseError;

    fn try_from(table: Table) -> Result<Self, Self::Error> {
        ErrorModel::new(table)
    }
}

impl From<ErrorModel> for Table {
    fn from(m: ErrorModel) -> Table {
        m.table
    }
}

impl ErrorModel {
    pub fn new(table: Table) -> Result<ErrorModel, NoiseError> {
        for (&source_char, cands) in &table {
            if source_char == DELETION {
                return Err(NoiseError::PlaceholderSource);
            }
            let mut total = 0.0;
            for (candidate, &prob) in cands {
                if candidate.is_empty() {
                    return Err(NoiseError::EmptyCandidate(source_char));
                }
                if !(prob > 0.0 && prob <= 1.0) {
                    return Err(NoiseError::BadProbability {
                        source_char,
                        candidate: candidate.clone(),
                        prob,
                    });
                }
                total += prob;
            }
            if total > 1.0 + 1e-9 {
                return Err(NoiseError::MassExceedsOne { source_char, total });
            }
        }
        let table = table.into_iter().filter(|(_, c)| !c.is_empty()).collect();
        Ok(ErrorModel { table })
    }

    /// Convenience constructor from `(source, candidate, probability)` rows.
    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (char, &'a str, f64)>,
    ) -> Result<ErrorModel, NoiseError> {
        let mut table = Table::new();
        for (c, cand, p) in entries {
            table.entry(c).or_default().insert(String::from(cand), p);
        }
        ErrorModel::new(table)
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn candidates(&self, c: char) -> Option<&BTreeMap<String, f64>> {
        self.table.get(&c)
    }

    pub fn probability(&self, c: char, candidate: &str) -> f64 {
        self.table
            .get(&c)
            .and_then(|m| m.get(candidate))
            .copied()
            .unwrap_or(0.0)
    }

    /// Total error mass of a source character.
    pub fn mass(&self, c: char) -> f64 {
        self.table.get(&c).map(|m| m.values().sum()).unwrap_or(0.0)
    }

    pub fn entry_count(&self) -> usize {
        self.table.values().map(|m| m.len()).sum()
    }

    /// Probability that `c` is replaced at rate `lambda`.
    pub fn replacement_probability(&self, c: char, lambda: f64) -> f64 {
        (lambda * self.mass(c)).min(1.0)
    }

    /// Smallest rate at which every modeled character is always replaced.
    pub fn saturation_lambda(&self) -> f64 {
        self.table
            .keys()
            .map(|&c| 1.0 / self.mass(c))
            .fold(0.0, f64::max)
    }

    /// The model with every probability multiplied by `lambda`, clipped so
    /// each character's mass stays at most 1.
    pub fn scaled(&self, lambda: f64) -> ErrorModel {
        let table = self
            .table
            .iter()
            .map(|(&c, cands)| {
                let mass: f64 = cands.values().sum();
                let factor = self.replacement_probability(c, lambda) / mass;
                let cands = cands
                    .iter()
                    .map(|(k, &p)| (k.clone(), p * factor))
                    .filter(|(_, p)| *p > 0.0)
                    .collect::<BTreeMap<_, _>>();
                (c, cands)
            })
            .filter(|(_, m)| !m.is_empty())
            .collect();
        ErrorModel { table }
    }

    /// Characters appearing anywhere in the model, placeholder excluded.
    pub fn alphabet(&self) -> Vec<char> {
        let mut set = BTreeSet::new();
        for (&c, cands) in &self.table {
            set.insert(c);
            for k in cands.keys() {
                set.extend(k.chars().filter(|&ch| ch != DELETION));
            }
        }
        set.into_iter().collect()
    }
}

/// Learns error sets from alignment scripts.
///
/// Every script op that consumes a ground-truth character is one occurrence
/// of that character. Inserted hypothesis characters attach to the preceding
/// occurrence (to the following one at the very start), forming
/// multi-character candidates; a deletion with nothing attached becomes `@`.
pub fn extract_error_model<'a>(
    scripts: impl IntoIterator<Item = &'a EditScript>,
) -> Result<ErrorModel, NoiseError> {
    let mut occurrences: BTreeMap<char, u64> = BTreeMap::new();
    let mut errors: BTreeMap<char, BTreeMap<String, u64>> = BTreeMap::new();

    for script in scripts {
        let mut events: Vec<(char, String)> = Vec::new();
        let mut leading = String::new();
        for op in &script.ops {
            match *op {
                EditOp::Insert { hyp } => match events.last_mut() {
                    Some((_, obs)) => obs.push(hyp),
                    None => leading.push(hyp),
                },
                other => {
                    let src = other.gt_char().expect("op consumes ground truth");
                    let mut obs = core::mem::take(&mut leading);
                    if let Some(h) = other.hyp_char() {
                        obs.push(h);
                    }
                    events.push((src, obs));
                }
            }
        }
        for (src, obs) in events {
            if src == DELETION || obs.contains(DELETION) {
                continue;
            }
            *occurrences.entry(src).or_default() += 1;
            let mut chars = obs.chars();
            let identity = chars.next() == Some(src) && chars.next().is_none();
            if identity {
                continue;
            }
            let cand = if obs.is_empty() {
                String::from(DELETION_STR)
            } else {
                obs
            };
            *errors.entry(src).or_default().entry(cand).or_default() += 1;
        }
    }
    if occurrences.is_empty() {
        return Err(NoiseError::EmptyCorpus);
    }
    let table = errors
        .into_iter()
        .map(|(c, cands)| {
            let n = occurrences[&c] as f64;
            (c, cands.into_iter().map(|(k, v)| (k, v as f64 / n)).collect())
        })
        .collect();
    ErrorModel::new(table)
}

/// Global rate multiplier and what it was calibrated to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateScale {
    pub lambda: f64,
    pub target_cer: f64,
    /// CER measured on the calibration sample at `lambda`.
    pub achieved_cer: f64,
    /// The target lies beyond what the model can reach even when every
    /// modeled character is replaced.
    pub saturated: bool,
}

impl RateScale {
    pub fn fixed(lambda: f64) -> RateScale {
        RateScale {
            lambda,
            target_cer: f64::NAN,
            achieved_cer: f64::NAN,
            saturated: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectOptions {
    /// Chance of inserting a random model character after each character.
    pub insertion_rate: f64,
}

impl Default for InjectOptions {
    fn default() -> Self {
        InjectOptions { insertion_rate: 0.0 }
    }
}

pub fn inject_errors(text: &str, model: &ErrorModel, scale: &RateScale, seed: u64) -> String {
    inject_with(text, model, scale.lambda, &InjectOptions::default(), seed)
}

/// Injection with explicit options.
///
/// Each character draws two uniforms: one decides replacement against
/// `min(1, lambda * mass)`, the other picks the candidate in proportion to
/// its probability. Raising `lambda` under a fixed seed therefore only ever
/// adds replacements.
pub fn inject_with(
    text: &str,
    model: &ErrorModel,
    lambda: f64,
    options: &InjectOptions,
    seed: u64,
) -> String {
    let mut rng = rng_from_seed(seed);
    let pool = if options.insertion_rate > 0.0 {
        model.alphabet()
    } else {
        Vec::new()
    };
    let mut out = String::with_capacity(text.len() + text.len() / 8);
    for c in text.chars() {
        let u_replace: f64 = rng.gen();
        let u_pick: f64 = rng.gen();
        match model.candidates(c) {
            Some(cands) if u_replace < model.replacement_probability(c, lambda) => {
                let mass: f64 = cands.values().sum();
                let target = u_pick * mass;
                let mut acc = 0.0;
                let mut chosen = cands.keys().next_back().expect("nonempty");
                for (k, &p) in cands {
                    acc += p;
                    if target < acc {
                        chosen = k;
                        break;
                    }
                }
                out.extend(chosen.chars().filter(|&ch| ch != DELETION));
            }
            _ => out.push(c),
        }
        if !pool.is_empty() && rng.gen::<f64>() < options.insertion_rate {
            out.push(pool[rng.gen_range(0..pool.len())]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrateOptions {
    /// Accepted relative deviation from the target.
    pub tolerance: f64,
    pub max_iterations: u32,
    /// Chunk length used for measuring CER.
    pub chunk_chars: usize,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            tolerance: 0.02,
            max_iterations: 60,
            chunk_chars: 512,
        }
    }
}

/// CER between `sample` chunks and their noisy versions at `lambda`,
/// with per-chunk seeds derived from `seed`.
pub fn measure_injected_cer(chunks: &[String], model: &ErrorModel, lambda: f64, seed: u64) -> f64 {
    let mut errors = 0usize;
    let mut total = 0usize;
    for (i, chunk) in chunks.iter().enumerate() {
        let noisy = inject_with(chunk, model, lambda, &InjectOptions::default(), derive_seed(seed, i as u64));
        let g = normalize(chunk);
        let h = normalize(&noisy);
        errors += edit_distance(&g, &h);
        total += g.len();
    }
    if total == 0 {
        0.0
    } else {
        errors as f64 / total as f64
    }
}

/// Bisection on `lambda` until the measured CER is within tolerance.
pub fn calibrate_rate(
    model: &ErrorModel,
    target_cer: f64,
    sample: &str,
    seed: u64,
) -> Result<RateScale, NoiseError> {
    calibrate_with(model, target_cer, sample, seed, &CalibrateOptions::default())
}

pub fn calibrate_with(
    model: &ErrorModel,
    target_cer: f64,
    sample: &str,
    seed: u64,
    options: &CalibrateOptions,
) -> Result<RateScale, NoiseError> {
    if !target_cer.is_finite() || target_cer < 0.0 {
        return Err(NoiseError::BadTarget(target_cer));
    }
    if target_cer == 0.0 {
        return Ok(RateScale {
            lambda: 0.0,
            target_cer,
            achieved_cer: 0.0,
            saturated: false,
        });
    }
    let chunks = chunk_text(sample, options.chunk_chars);
    let measure = |lambda: f64| measure_injected_cer(&chunks, model, lambda, seed);
    let within = |cer: f64| (cer - target_cer).abs() <= options.tolerance * target_cer;

    let ceiling = model.saturation_lambda();
    let at_ceiling = measure(ceiling);
    if at_ceiling < target_cer && !within(at_ceiling) {
        return Ok(RateScale {
            lambda: ceiling,
            target_cer,
            achieved_cer: at_ceiling,
            saturated: true,
        });
    }

    let (mut lo, mut hi) = (0.0, ceiling);
    let mut best = (ceiling, at_ceiling);
    for _ in 0..options.max_iterations {
        let mid = 0.5 * (lo + hi);
        let cer = measure(mid);
        if (cer - target_cer).abs() < (best.1 - target_cer).abs() {
            best = (mid, cer);
        }
        if within(cer) {
            break;
        }
        if cer < target_cer {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RateScale {
        lambda: best.0,
        target_cer,
        achieved_cer: best.1,
        saturated: false,
    })
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ';')
}

/// Splits text into trimmed, nonempty pieces of at most `max_chars` scalars,
/// cutting after a sentence terminator when possible, then at whitespace,
/// then hard.
pub fn chunk_text(text: &str, max_chars: usize) -> Vec<String> {
    let max_chars = max_chars.max(1);
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        while pos < chars.len() && chars[pos].is_whitespace() {
            pos += 1;
        }
        if pos >= chars.len() {
            break;
        }
        let end = if chars.len() - pos <= max_chars {
            chars.len()
        } else {
            let window = &chars[pos..pos + max_chars];
            let after_terminator = (1..window.len()).rev().find(|&i| {
                is_terminator(window[i - 1]) && chars[pos + i].is_whitespace()
            });
            match after_terminator {
                Some(i) => pos + i,
                None => match (1..=window.len()).rev().find(|&i| chars[pos + i].is_whitespace()) {
                    Some(i) => pos + i,
                    None => pos + max_chars,
                },
            }
        };
        let piece: String = chars[pos..end].iter().collect();
        let piece = piece.trim_end();
        if !piece.is_empty() {
            out.push(String::from(piece));
        }
        pos = end;
    }
    out
}

/// One post-correction training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub clean: String,
    pub noisy: String,
    pub target_cer: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub rate_grid: Vec<f64>,
    pub max_chars: usize,
    pub seed: u64,
    /// Characters of corpus used to calibrate each grid rate.
    pub calibration_chars: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            rate_grid: alloc::vec![0.02, 0.05, 0.1],
            max_chars: 512,
            seed: 0,
            calibration_chars: 200_000,
        }
    }
}

/// Calibrated rates for each grid entry, in grid order.
pub fn calibrate_grid(
    corpus: &str,
    model: &ErrorModel,
    config: &PairConfig,
) -> Result<Vec<RateScale>, NoiseError> {
    let sample: String = corpus.chars().take(config.calibration_chars).collect();
    config
        .rate_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| calibrate_rate(model, t, &sample, derive_seed(config.seed ^ 0xCA1B, k as u64)))
        .collect()
}

/// Builds the pair for chunk `index`. Independent of every other chunk.
pub fn training_pair(
    index: usize,
    clean: &str,
    model: &ErrorModel,
    scales: &[RateScale],
    seed: u64,
) -> TrainingPair {
    let mut rng = rng_from_seed(derive_seed(seed, index as u64));
    let scale = &scales[rng.gen_range(0..scales.len())];
    let pair_seed: u64 = rng.gen();
    TrainingPair {
        clean: String::from(clean),
        noisy: inject_errors(clean, model, scale, pair_seed),
        target_cer: scale.target_cer,
        seed: pair_seed,
    }
}

pub fn make_training_pairs(
    corpus: &str,
    model: &ErrorModel,
    config: &PairConfig,
) -> Result<Vec<TrainingPair>, NoiseError> {
    let chunks = chunk_text(corpus, config.max_chars);
    if chunks.is_empty() || config.rate_grid.is_empty() {
        return Err(NoiseError::EmptyCorpus);
    }
    let scales = calibrate_grid(corpus, model, config)?;
    Ok(chunks
        .iter()
        .enumerate()
        .map(|(i, c)| training_pair(i, c, model, &scales, config.seed))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::align_exact;
    use alloc::vec;

    fn script(gt: &str, hyp: &str) -> EditScript {
        let g: Vec<char> = gt.chars().collect();
        let h: Vec<char> = hyp.chars().collect();
        align_exact(&g, &h)
    }

    #[test]
    fn extract_single_observations() {
        let m = extract_error_model([&script("m", "rn")]).unwrap();
        assert_eq!(m.probability('m', "rn"), 1.0);
        assert_eq!(m.entry_count(), 1);

        let m = extract_error_model([&script("ab", "a")]).unwrap();
        assert_eq!(m.probability('b', "@"), 1.0);
        assert_eq!(m.entry_count(), 1);

        let m = extract_error_model([&script("lamp", "larnp")]).unwrap();
        assert_eq!(m.probability('m', "rn"), 1.0);
    }

    #[test]
    fn extract_reported_error_set() {
        // 1000 occurrences of "m": one read as "n", two as "rn".
        let mut scripts = Vec::new();
        for i in 0..1000 {
            let hyp = match i {
                0 => "an",
                1 | 2 => "arn",
                _ => "am",
            };
            scripts.push(script("am", hyp));
        }
        let m = extract_error_model(&scripts).unwrap();
        assert!((m.probability('m', "n") - 0.001).abs() < 1e-15);
        assert!((m.probability('m', "rn") - 0.002).abs() < 1e-15);
        assert_eq!(m.mass('a'), 0.0);
    }

    #[test]
    fn leading_insert_attaches_forward() {
        let s = EditScript {
            ops: vec![EditOp::Insert { hyp: 'x' }, EditOp::Match { ch: 'a' }],
        };
        let m = extract_error_model([&s]).unwrap();
        assert_eq!(m.probability('a', "xa"), 1.0);
    }

    #[test]
    fn extract_empty_corpus() {
        assert_eq!(extract_error_model(core::iter::empty()), Err(NoiseError::EmptyCorpus));
    }

    #[test]
    fn model_validation() {
        assert_eq!(ErrorModel::from_entries([('@', "a", 0.1)]), Err(NoiseError::PlaceholderSource));
        assert!(ErrorModel::from_entries([('a', "b", 0.7), ('a', "c", 0.6)]).is_err());
        assert!(ErrorModel::from_entries([('a', "b", 0.0)]).is_err());
        assert!(ErrorModel::from_entries([('a', "", 0.1)]).is_err());
    }

    #[test]
    fn inject_examples() {
        let del = ErrorModel::from_entries([('m', "@", 1.0)]).unwrap();
        assert_eq!(inject_errors("ram", &del, &RateScale::fixed(1.0), 7), "ra");
        let rn = ErrorModel::from_entries([('m', "rn", 1.0)]).unwrap();
        assert_eq!(inject_errors("lamp", &rn, &RateScale::fixed(1.0), 7), "larnp");
        let any = ErrorModel::from_entries([('a', "o", 0.5), ('p', "@", 0.5)]).unwrap();
        assert_eq!(inject_errors("lamp lamp", &any, &RateScale::fixed(0.0), 3), "lamp lamp");
    }

    #[test]
    fn scaled_model_clips_mass() {
        let m = ErrorModel::from_entries([('a', "b", 0.2), ('a', "c", 0.2), ('x', "y", 0.1)]).unwrap();
        let s = m.scaled(4.0);
        assert!((s.mass('a') - 1.0).abs() < 1e-12);
        assert!((s.probability('a', "b") - 0.5).abs() < 1e-12);
        assert!((s.mass('x') - 0.4).abs() < 1e-12);
        assert_eq!(m.saturation_lambda(), 10.0);
        assert_eq!(m.replacement_probability('a', 2.0), 0.8);
        assert_eq!(m.replacement_probability('a', 3.0), 1.0);
    }

    #[test]
    fn replacement_frequency_matches_expectation() {
        let m = ErrorModel::from_entries([('a', "b", 0.1), ('a', "cc", 0.05)]).unwrap();
        let text: String = core::iter::repeat('a').take(200_000).collect();
        let lambda = 2.0;
        let noisy = inject_with(&text, &m, lambda, &InjectOptions::default(), 11);
        let kept = noisy.chars().filter(|&c| c == 'a').count();
        let n = text.len() as f64;
        let p = m.replacement_probability('a', lambda);
        let observed = 1.0 - kept as f64 / n;
        // Four binomial standard deviations.
        let sd = (p * (1.0 - p) / n).sqrt();
        assert!((observed - p).abs() < 4.0 * sd, "observed {observed} expected {p}");
    }

    #[test]
    fn calibration_edge_cases() {
        let m = ErrorModel::from_entries([('e', "c", 0.01)]).unwrap();
        let zero = calibrate_rate(&m, 0.0, "some text here", 1).unwrap();
        assert_eq!(zero.lambda, 0.0);
        assert!(calibrate_rate(&m, -0.1, "x", 1).is_err());
    }

    #[test]
    fn insertion_rate_adds_characters() {
        let m = ErrorModel::from_entries([('a', "b", 0.1)]).unwrap();
        let text = "aaaa aaaa aaaa aaaa";
        let plain = inject_with(text, &m, 0.0, &InjectOptions::default(), 5);
        assert_eq!(plain, text);
        let more = inject_with(text, &m, 0.0, &InjectOptions { insertion_rate: 1.0 }, 5);
        assert_eq!(more.chars().count(), 2 * text.chars().count());
    }

    #[test]
    fn chunking_rules() {
        let t = "One two three. Four five six seven. Eight";
        let c = chunk_text(t, 20);
        assert_eq!(c, vec!["One two three.", "Four five six seven.", "Eight"]);
        assert_eq!(chunk_text("aaa bbb. ccc ddd eee fff", 14), vec!["aaa bbb.", "ccc ddd eee", "fff"]);
        let hard = chunk_text("abcdefghij", 4);
        assert_eq!(hard, vec!["abcd", "efgh", "ij"]);
        assert!(chunk_text("   \n ", 10).is_empty());
        let uni = chunk_text("ééééé ééé", 3);
        assert!(uni.iter().all(|p| p.chars().count() <= 3 && !p.is_empty()));
    }

    #[test]
    fn zero_grid_pairs_are_clean() {
        let m = ErrorModel::from_entries([('e', "c", 0.3)]).unwrap();
        let corpus = "The secret sentence ends here. Another sentence begins where the first one ended.";
        let cfg = PairConfig { rate_grid: vec![0.0], max_chars: 30, ..Default::default() };
        let pairs = make_training_pairs(corpus, &m, &cfg).unwrap();
        assert!(pairs.len() >= 3);
        for p in &pairs {
            assert_eq!(p.clean, p.noisy);
            assert!(p.clean.chars().count() <= 30);
        }
        assert_eq!(make_training_pairs("", &m, &cfg), Err(NoiseError::EmptyCorpus));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn injected_text_has_no_placeholder(text in "[a-z ]{0,80}", seed in any::<u64>(), lambda in 0.0f64..20.0) {
                let m = ErrorModel::from_entries([('a', "@", 0.2), ('b', "@x", 0.1), ('c', "d d", 0.1)]).unwrap();
                let out = inject_with(&text, &m, lambda, &InjectOptions::default(), seed);
                prop_assert!(!out.contains('@'));
            }

            #[test]
            fn chunks_are_bounded_and_nonempty(text in "\\PC{0,300}", max in 1usize..40) {
                for c in chunk_text(&text, max) {
                    prop_assert!(!c.is_empty());
                    prop_assert!(c.chars().count() <= max);
                }
            }
        }
    }
}
