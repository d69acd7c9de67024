use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use thiserror::Error;

pub const DEFAULT_ORDER: usize = 5;
pub const DEFAULT_K: f64 = 0.01;

const MAGIC: &[u8; 4] = b"PLM1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("order must be at least 1, got {0}")]
    BadOrder(usize),
    #[error("smoothing constant must be positive and finite")]
    BadSmoothing,
    #[error("malformed model file: {0}")]
    Format(&'static str),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<char, u64>,
}

/// Character n-gram model with add-k smoothing and recursive backoff.
///
/// `P_0(c) = (C(c) + k) / (N + k V)` over the vocabulary plus one unknown
/// symbol (`V` counts both). A longer history `h` with suffix `h'` gives
/// `P(c | h) = (C(h c) + k V P(c | h')) / (C(h) + k V)`, and unseen
/// histories back off to `h'` directly. Every context therefore defines a
/// proper distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CharLM {
    order: usize,
    k: f64,
    vocab: Vec<char>,
    contexts: BTreeMap<Box<[char]>, ContextCounts>,
}

pub fn train_char_lm(corpus: &str, order: usize, k: f64) -> Result<CharLM, LmError> {
    CharLM::train(corpus, order, k)
}

impl CharLM {
    pub fn train(corpus: &str, order: usize, k: f64) -> Result<CharLM, LmError> {
        if order < 1 {
            return Err(LmError::BadOrder(order));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(LmError::BadSmoothing);
        }
        let chars: Vec<char> = corpus.chars().collect();
        if chars.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let mut contexts: BTreeMap<Box<[char]>, ContextCounts> = BTreeMap::new();
        for (i, &c) in chars.iter().enumerate() {
            let longest = (order - 1).min(i);
            for len in 0..=longest {
                let hist = &chars[i - len..i];
                let entry = match contexts.get_mut(hist) {
                    Some(e) => e,
                    None => contexts.entry(hist.into()).or_default(),
                };
                entry.total += 1;
                *entry.next.entry(c).or_default() += 1;
            }
        }
        let vocab = chars.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        Ok(CharLM { order, k, vocab, contexts })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    pub fn vocabulary(&self) -> &[char] {
        &self.vocab
    }

    pub fn context_count(&self) -> usize {
        self.contexts.len()
    }

    pub fn in_vocabulary(&self, c: char) -> bool {
        self.vocab.binary_search(&c).is_ok()
    }

    /// Vocabulary size including the unknown symbol.
    fn v(&self) -> f64 {
        (self.vocab.len() + 1) as f64
    }

    /// `P(c | history)`; only the last `order - 1` characters of the
    /// history are used. Characters outside the vocabulary share the
    /// unknown symbol's mass.
    pub fn prob(&self, history: &[char], c: char) -> f64 {
        self.prob_of(history, Some(c))
    }

    /// Probability of the unknown symbol in a context.
    pub fn unknown_prob(&self, history: &[char]) -> f64 {
        self.prob_of(history, None)
    }

    fn prob_of(&self, history: &[char], c: Option<char>) -> f64 {
        let count = |ctx: &ContextCounts| c.and_then(|c| ctx.next.get(&c)).copied().unwrap_or(0) as f64;
        let keep = history.len().min(self.order - 1);
        let history = &history[history.len() - keep..];
        let kv = self.k * self.v();
        let root = &self.contexts[&[][..]];
        let mut p = (count(root) + self.k) / (root.total as f64 + kv);
        for len in 1..=history.len() {
            let hist = &history[history.len() - len..];
            match self.contexts.get(hist) {
                Some(ctx) => {
                    p = (count(ctx) + kv * p) / (ctx.total as f64 + kv);
                }
                None => break,
            }
        }
        p
    }

    pub fn log_prob(&self, history: &[char], c: char) -> f64 {
        libm::log(self.prob(history, c))
    }

    /// Log-probability of a whole string, starting from an empty history.
    pub fn score(&self, text: &[char]) -> f64 {
        (0..text.len()).map(|i| self.log_prob(&text[..i], text[i])).sum()
    }

    /// Versioned little-endian binary encoding.
    ///
    /// Layout: `PLM1`, order (u32), k (f64 bits, u64), vocabulary length
    /// (u32) then each scalar (u32), context count (u32), then per context
    /// its length (u32), scalars (u32 each), total (u64), successor count
    /// (u32) and `(scalar u32, count u64)` pairs. Contexts and successors
    /// are in ascending order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.order as u32);
        out.extend_from_slice(&self.k.to_bits().to_le_bytes());
        put_u32(&mut out, self.vocab.len() as u32);
        for &c in &self.vocab {
            put_u32(&mut out, c as u32);
        }
        put_u32(&mut out, self.contexts.len() as u32);
        for (hist, ctx) in &self.contexts {
            put_u32(&mut out, hist.len() as u32);
            for &c in hist.iter() {
                put_u32(&mut out, c as u32);
            }
            out.extend_from_slice(&ctx.total.to_le_bytes());
            put_u32(&mut out, ctx.next.len() as u32);
            for (&c, &n) in &ctx.next {
                put_u32(&mut out, c as u32);
                out.extend_from_slice(&n.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CharLM, LmError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(LmError::Format("bad magic or unsupported version"));
        }
        let order = r.u32()? as usize;
        if order < 1 {
            return Err(LmError::BadOrder(order));
        }
        let k = f64::from_bits(r.u64()?);
        if !(k > 0.0 && k.is_finite()) {
            return Err(LmError::BadSmoothing);
        }
        let nv = r.u32()? as usize;
        let mut vocab = Vec::with_capacity(nv.min(1 << 20));
        for _ in 0..nv {
            vocab.push(r.char()?);
        }
        if vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LmError::Format("vocabulary not sorted"));
        }
        let nc = r.u32()? as usize;
        let mut contexts = BTreeMap::new();
        for _ in 0..nc {
            let len = r.u32()? as usize;
            if len >= order {
                return Err(LmError::Format("context longer than order"));
            }
            let mut hist = Vec::with_capacity(len);
            for _ in 0..len {
                hist.push(r.char()?);
            }
            let total = r.u64()?;
            let nn = r.u32()? as usize;
            let mut next = BTreeMap::new();
            for _ in 0..nn {
                let c = r.char()?;
                next.insert(c, r.u64()?);
            }
            if next.values().sum::<u64>() != total {
                return Err(LmError::Format("context total does not match successors"));
            }
            contexts.insert(hist.into_boxed_slice(), ContextCounts { total, next });
        }
        if r.pos != bytes.len() {
            return Err(LmError::Format("trailing bytes"));
        }
        if !contexts.contains_key(&[][..]) {
            return Err(LmError::Format("missing unigram context"));
        }
        Ok(CharLM { order, k, vocab, contexts })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LmError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(LmError::Format("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, LmError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn char(&mut self) -> Result<char, LmError> {
        char::from_u32(self.u32()?).ok_or(LmError::Format("invalid scalar value"))
    }
}
