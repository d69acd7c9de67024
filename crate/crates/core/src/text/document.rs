//! Long-text alignment anchored on word n-grams that occur exactly once in
//! both texts.
//!
//! Anchors are chained by a longest increasing subsequence, consecutive
//! anchors on one diagonal merge into exact blocks, and the gaps between
//! blocks are aligned with the unit-cost DP (banded when large). The ends of
//! each chain are extended outward by a local alignment; hypothesis text the
//! extension does not reach has no ground-truth counterpart and is reported
//! as unmatched.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use super::align::{align_banded, align_exact, EditScript};
use super::{normalize, word_spans};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DocumentAlignConfig {
    /// Words per anchor n-gram.
    pub anchor_n: usize,
    /// Extra diagonals either side of the gap diagonal for banded gaps.
    pub band: usize,
    /// Gaps with more DP cells than this use the banded aligner.
    pub dense_cells: usize,
    /// Without anchors, both texts must be at most this many characters to
    /// fall back to a whole-text alignment.
    pub fallback_chars: usize,
    /// A gap splits the chain when its longer side exceeds
    /// `gap_ratio * shorter + gap_slack` characters.
    pub gap_ratio: usize,
    pub gap_slack: usize,
    /// Longest hypothesis stretch an edge extension will consider.
    pub edge_chars: usize,
}

impl Default for DocumentAlignConfig {
    fn default() -> Self {
        DocumentAlignConfig {
            anchor_n: 4,
            band: 64,
            dense_cells: 4_000_000,
            fallback_chars: 5_000,
            gap_ratio: 4,
            gap_slack: 200,
            edge_chars: 2_000,
        }
    }
}

/// A matched stretch: ranges index the normalized texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub gt: Range<usize>,
    pub hyp: Range<usize>,
    pub script: EditScript,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentAlignment {
    pub gt: Vec<char>,
    pub hyp: Vec<char>,
    pub segments: Vec<Segment>,
    /// Hypothesis ranges with no ground-truth counterpart.
    pub unmatched: Vec<Range<usize>>,
}

impl DocumentAlignment {
    pub fn cost(&self) -> usize {
        self.segments.iter().map(|s| s.script.cost()).sum()
    }

    pub fn matched_gt_chars(&self) -> usize {
        self.segments.iter().map(|s| s.gt.len()).sum()
    }

    pub fn unmatched_chars(&self) -> usize {
        self.unmatched.iter().map(|r| r.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    gt_word: usize,
    hyp_word: usize,
    words: usize,
}

pub fn align_document(gt: &str, hyp: &str, config: &DocumentAlignConfig) -> DocumentAlignment {
    let gt = normalize(gt);
    let hyp = normalize(hyp);
    align_normalized(gt, hyp, config)
}

pub fn align_normalized(gt: Vec<char>, hyp: Vec<char>, config: &DocumentAlignConfig) -> DocumentAlignment {
    let n = config.anchor_n.max(1);
    let gt_words = word_spans(&gt);
    let hyp_words = word_spans(&hyp);
    let blocks = anchor_blocks(&gt, &gt_words, &hyp, &hyp_words, n);

    let mut out = DocumentAlignment {
        gt,
        hyp,
        segments: Vec::new(),
        unmatched: Vec::new(),
    };
    if out.hyp.is_empty() {
        return out;
    }
    if blocks.is_empty() {
        if out.gt.len() <= config.fallback_chars && out.hyp.len() <= config.fallback_chars {
            let script = align_exact(&out.gt, &out.hyp);
            out.segments.push(Segment {
                gt: 0..out.gt.len(),
                hyp: 0..out.hyp.len(),
                script,
            });
        } else {
            out.unmatched.push(0..out.hyp.len());
        }
        return out;
    }

    let span = |words: &[Range<usize>], b: &Block, first: usize| -> Range<usize> {
        words[first].start..words[first + b.words - 1].end
    };
    let gt_span = |b: &Block| span(&gt_words, b, b.gt_word);
    let hyp_span = |b: &Block| span(&hyp_words, b, b.hyp_word);

    let mut pieces: Vec<Segment> = Vec::new();
    let mut hyp_cursor = 0usize;

    // Leading edge of the first block.
    let first = blocks[0];
    let (g0, h0) = (gt_span(&first), hyp_span(&first));
    let lead = extend_backward(&out.gt, 0..g0.start, &out.hyp, 0..h0.start, config);
    if let Some(seg) = lead {
        if seg.hyp.start > 0 {
            out.unmatched.push(0..seg.hyp.start);
        }
        pieces.push(seg);
    } else if h0.start > 0 {
        out.unmatched.push(0..h0.start);
    }

    for (bi, block) in blocks.iter().enumerate() {
        let g = gt_span(block);
        let h = hyp_span(block);
        pieces.push(Segment {
            gt: g.clone(),
            hyp: h.clone(),
            script: EditScript::matches_only(&out.gt[g.clone()]),
        });
        hyp_cursor = h.end;

        let Some(next) = blocks.get(bi + 1) else {
            break;
        };
        let ng = gt_span(next);
        let nh = hyp_span(next);
        let gap_g = g.end..ng.start;
        let gap_h = h.end..nh.start;
        let (short, long) = (gap_g.len().min(gap_h.len()), gap_g.len().max(gap_h.len()));
        if long <= config.gap_ratio * short + config.gap_slack {
            let script = align_gap(&out.gt[gap_g.clone()], &out.hyp[gap_h.clone()], config);
            pieces.push(Segment {
                gt: gap_g,
                hyp: gap_h.clone(),
                script,
            });
            hyp_cursor = gap_h.end;
            continue;
        }

        // Implausible gap: close this chain and reopen at the next block.
        let mut tail_end = gap_h.start;
        if let Some(seg) = extend_forward(&out.gt, gap_g.clone(), &out.hyp, gap_h.clone(), config) {
            tail_end = seg.hyp.end;
            pieces.push(seg);
        }
        let mut head_start = gap_h.end;
        if let Some(seg) = extend_backward(&out.gt, gap_g.clone(), &out.hyp, tail_end..gap_h.end, config) {
            head_start = seg.hyp.start;
            if head_start > tail_end {
                out.unmatched.push(tail_end..head_start);
            }
            pieces.push(seg);
        } else if head_start > tail_end {
            out.unmatched.push(tail_end..head_start);
        }
        hyp_cursor = gap_h.end;
    }

    // Trailing edge of the last block.
    let last = *blocks.last().unwrap();
    let gl = gt_span(&last);
    let trail = extend_forward(&out.gt, gl.end..out.gt.len(), &out.hyp, hyp_cursor..out.hyp.len(), config);
    let mut matched_end = hyp_cursor;
    if let Some(seg) = trail {
        matched_end = seg.hyp.end;
        pieces.push(seg);
    }
    if matched_end < out.hyp.len() {
        out.unmatched.push(matched_end..out.hyp.len());
    }

    pieces.sort_by_key(|p| (p.hyp.start, p.hyp.end));
    out.segments = merge_pieces(pieces);
    out.unmatched.sort_by_key(|r| r.start);
    out
}

fn merge_pieces(pieces: Vec<Segment>) -> Vec<Segment> {
    let mut merged: Vec<Segment> = Vec::new();
    for p in pieces {
        if p.gt.is_empty() && p.hyp.is_empty() {
            continue;
        }
        if let Some(last) = merged.last_mut() {
            if last.gt.end == p.gt.start && last.hyp.end == p.hyp.start {
                last.gt.end = p.gt.end;
                last.hyp.end = p.hyp.end;
                last.script.extend(p.script);
                continue;
            }
        }
        merged.push(p);
    }
    merged
}

fn align_gap(gt: &[char], hyp: &[char], config: &DocumentAlignConfig) -> EditScript {
    if gt.len().saturating_mul(hyp.len()) <= config.dense_cells {
        align_exact(gt, hyp)
    } else {
        align_banded(gt, hyp, config.band)
    }
}

/// Unique-in-both n-grams, chained and merged into exact blocks.
fn anchor_blocks(
    gt: &[char],
    gt_words: &[Range<usize>],
    hyp: &[char],
    hyp_words: &[Range<usize>],
    n: usize,
) -> Vec<Block> {
    if gt_words.len() < n || hyp_words.len() < n {
        return Vec::new();
    }
    fn grams<'t>(text: &'t [char], words: &[Range<usize>], n: usize) -> BTreeMap<&'t [char], (u32, usize)> {
        let mut map: BTreeMap<&'t [char], (u32, usize)> = BTreeMap::new();
        for i in 0..=words.len() - n {
            let key = &text[words[i].start..words[i + n - 1].end];
            let e = map.entry(key).or_insert((0, i));
            e.0 += 1;
        }
        map
    }
    let gt_grams = grams(gt, gt_words, n);
    let hyp_grams = grams(hyp, hyp_words, n);
    let mut anchors: Vec<(usize, usize)> = hyp_grams
        .iter()
        .filter(|(_, &(c, _))| c == 1)
        .filter_map(|(k, &(_, hi))| match gt_grams.get(k) {
            Some(&(1, gi)) => Some((gi, hi)),
            _ => None,
        })
        .collect();
    anchors.sort_unstable();

    let chain = longest_increasing_chain(&anchors);

    // Keep anchors that stay on the previous diagonal or start past it.
    let mut kept: Vec<(usize, usize)> = Vec::with_capacity(chain.len());
    for a in chain {
        match kept.last() {
            Some(&(pg, ph)) => {
                let same_diagonal = a.0 - pg == a.1 - ph;
                if same_diagonal || (a.0 >= pg + n && a.1 >= ph + n) {
                    kept.push(a);
                }
            }
            None => kept.push(a),
        }
    }

    let mut blocks: Vec<Block> = Vec::new();
    for (gi, hi) in kept {
        if let Some(b) = blocks.last_mut() {
            let same_diagonal = gi - b.gt_word == hi - b.hyp_word;
            if same_diagonal && gi <= b.gt_word + b.words {
                b.words = gi + n - b.gt_word;
                continue;
            }
        }
        blocks.push(Block {
            gt_word: gi,
            hyp_word: hi,
            words: n,
        });
    }
    blocks
}

/// Longest chain strictly increasing in both coordinates; input sorted by
/// the first coordinate, which is unique per anchor.
fn longest_increasing_chain(anchors: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut tails: Vec<usize> = Vec::new();
    let mut parent: Vec<Option<usize>> = alloc::vec![None; anchors.len()];
    for (i, &(_, h)) in anchors.iter().enumerate() {
        let pos = tails.partition_point(|&t| anchors[t].1 < h);
        if pos > 0 {
            parent[i] = Some(tails[pos - 1]);
        }
        if pos == tails.len() {
            tails.push(i);
        } else {
            tails[pos] = i;
        }
    }
    let mut chain = Vec::with_capacity(tails.len());
    let mut cur = tails.last().copied();
    while let Some(i) = cur {
        chain.push(anchors[i]);
        cur = parent[i];
    }
    chain.reverse();
    chain
}

/// Local extension that starts right after an anchor and runs forward.
/// Returns the best-scoring prefix pair as an aligned segment.
fn extend_forward(
    gt: &[char],
    gt_range: Range<usize>,
    hyp: &[char],
    hyp_range: Range<usize>,
    config: &DocumentAlignConfig,
) -> Option<Segment> {
    let h_len = hyp_range.len().min(config.edge_chars);
    let g_len = gt_range.len().min(h_len + h_len / 2 + 16);
    let g = &gt[gt_range.start..gt_range.start + g_len];
    let h = &hyp[hyp_range.start..hyp_range.start + h_len];
    let whole = g_len == gt_range.len() && h_len == hyp_range.len();
    let (gi, hj) = best_prefix(g.iter(), h.iter(), g_len, h_len, whole);
    if hj == 0 {
        return None;
    }
    let gt_r = gt_range.start..gt_range.start + gi;
    let hyp_r = hyp_range.start..hyp_range.start + hj;
    Some(Segment {
        script: align_exact(&gt[gt_r.clone()], &hyp[hyp_r.clone()]),
        gt: gt_r,
        hyp: hyp_r,
    })
}

/// Mirror of [`extend_forward`] for the stretch ending right before an anchor.
fn extend_backward(
    gt: &[char],
    gt_range: Range<usize>,
    hyp: &[char],
    hyp_range: Range<usize>,
    config: &DocumentAlignConfig,
) -> Option<Segment> {
    let h_len = hyp_range.len().min(config.edge_chars);
    let g_len = gt_range.len().min(h_len + h_len / 2 + 16);
    let g = &gt[gt_range.end - g_len..gt_range.end];
    let h = &hyp[hyp_range.end - h_len..hyp_range.end];
    let whole = g_len == gt_range.len() && h_len == hyp_range.len();
    let (gi, hj) = best_prefix(g.iter().rev(), h.iter().rev(), g_len, h_len, whole);
    if hj == 0 {
        return None;
    }
    let gt_r = gt_range.end - gi..gt_range.end;
    let hyp_r = hyp_range.end - hj..hyp_range.end;
    Some(Segment {
        script: align_exact(&gt[gt_r.clone()], &hyp[hyp_r.clone()]),
        gt: gt_r,
        hyp: hyp_r,
    })
}

/// Prefix lengths maximizing a +1/-1 global alignment score of the two
/// prefixes. Ties keep the shortest hypothesis prefix, except that with
/// `whole` set (both stretches run to a text boundary) aligning everything
/// wins ties.
fn best_prefix<'a>(
    g: impl Iterator<Item = &'a char> + Clone,
    h: impl Iterator<Item = &'a char> + Clone,
    g_len: usize,
    h_len: usize,
    whole: bool,
) -> (usize, usize) {
    let gv: Vec<char> = g.copied().collect();
    let hv: Vec<char> = h.copied().collect();
    debug_assert_eq!((gv.len(), hv.len()), (g_len, h_len));
    let w = g_len + 1;
    let mut prev: Vec<i64> = (0..=g_len as i64).map(|i| -i).collect();
    let mut cur = alloc::vec![0i64; w];
    let mut best = (0i64, 0usize, 0usize);
    for j in 1..=h_len {
        cur[0] = -(j as i64);
        for i in 1..=g_len {
            let diag = prev[i - 1] + if gv[i - 1] == hv[j - 1] { 1 } else { -1 };
            cur[i] = diag.max(prev[i] - 1).max(cur[i - 1] - 1);
        }
        for (i, &s) in cur.iter().enumerate() {
            if s > best.0 {
                best = (s, i, j);
            }
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    if whole && h_len > 0 && prev[g_len] >= best.0 {
        return (g_len, h_len);
    }
    (best.1, best.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn body() -> String {
        let words = [
            "the", "old", "house", "stood", "upon", "a", "hill", "above", "the", "village", "and",
            "every", "morning", "its", "windows", "caught", "first", "light", "while", "mist",
            "still", "lay", "along", "river", "where", "boats", "waited", "for", "tide",
        ];
        let mut s = String::new();
        for i in 0..120 {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(words[(i * 7 + i / 5) % words.len()]);
        }
        s
    }

    #[test]
    fn identical_texts_form_one_segment() {
        let b = body();
        let al = align_document(&b, &b, &DocumentAlignConfig::default());
        assert_eq!(al.segments.len(), 1);
        assert!(al.unmatched.is_empty());
        assert_eq!(al.cost(), 0);
        assert_eq!(al.matched_gt_chars(), al.gt.len());
    }

    #[test]
    fn prepended_header_is_unmatched() {
        let b = body();
        let hyp = alloc::format!("CHAPTER XII PAGE 314 {b}");
        let al = align_document(&b, &hyp, &DocumentAlignConfig::default());
        assert_eq!(al.cost(), 0);
        let header: String = al.unmatched.iter().flat_map(|r| al.hyp[r.clone()].iter()).collect();
        assert_eq!(header.trim(), "CHAPTER XII PAGE 314");
        assert_eq!(al.matched_gt_chars(), al.gt.len());
    }

    #[test]
    fn local_edits_cost_the_same_as_exact() {
        let b = body();
        let mut hyp: Vec<char> = b.chars().collect();
        hyp[10] = 'x';
        hyp.remove(200);
        hyp.insert(400, 'q');
        let hyp: String = hyp.into_iter().collect();
        let al = align_document(&b, &hyp, &DocumentAlignConfig::default());
        let exact = align_exact(&al.gt, &al.hyp).cost();
        assert_eq!(al.cost(), exact);
        assert!(al.unmatched.is_empty());
    }

    #[test]
    fn no_shared_ngram_over_cap_is_unmatched() {
        let gt: String = (0..3000).map(|i| if i % 6 == 5 { ' ' } else { 'a' }).collect();
        let hyp: String = (0..3000).map(|i| if i % 6 == 5 { ' ' } else { 'b' }).collect();
        let cfg = DocumentAlignConfig { fallback_chars: 1000, ..Default::default() };
        let al = align_document(&gt, &hyp, &cfg);
        assert!(al.segments.is_empty());
        assert_eq!(al.unmatched, alloc::vec![0..al.hyp.len()]);
    }

    #[test]
    fn short_texts_fall_back_to_exact() {
        let al = align_document("one two", "one tvo", &DocumentAlignConfig::default());
        assert_eq!(al.segments.len(), 1);
        assert_eq!(al.cost(), 1);
    }

    #[test]
    fn edits_at_the_document_start_stay_matched() {
        let gt = body();
        let hyp = gt.replacen("the", "tbe", 1);
        assert!(hyp.starts_with("tbe"));
        let al = align_document(&gt, &hyp, &DocumentAlignConfig::default());
        assert!(al.unmatched.is_empty());
        assert_eq!(al.cost(), 1);
    }

    #[test]
    fn lis_chain() {
        let a = [(0, 5), (1, 1), (2, 2), (3, 0), (4, 3)];
        assert_eq!(longest_increasing_chain(&a), alloc::vec![(1, 1), (2, 2), (4, 3)]);
    }
}
