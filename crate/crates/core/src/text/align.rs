use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum EditOp {
    Match { ch: char },
    Substitute { gt: char, hyp: char },
    Insert { hyp: char },
    Delete { gt: char },
}

impl EditOp {
    pub fn cost(&self) -> usize {
        match self {
            EditOp::Match { .. } => 0,
            _ => 1,
        }
    }

    pub fn gt_char(&self) -> Option<char> {
        match *self {
            EditOp::Match { ch } => Some(ch),
            EditOp::Substitute { gt, .. } | EditOp::Delete { gt } => Some(gt),
            EditOp::Insert { .. } => None,
        }
    }

    pub fn hyp_char(&self) -> Option<char> {
        match *self {
            EditOp::Match { ch } => Some(ch),
            EditOp::Substitute { hyp, .. } | EditOp::Insert { hyp } => Some(hyp),
            EditOp::Delete { .. } => None,
        }
    }
}

/// Ordered edit operations turning a ground-truth string into a hypothesis.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn cost(&self) -> usize {
        self.ops.iter().map(EditOp::cost).sum()
    }

    pub fn gt_chars(&self) -> Vec<char> {
        self.ops.iter().filter_map(EditOp::gt_char).collect()
    }

    pub fn hyp_chars(&self) -> Vec<char> {
        self.ops.iter().filter_map(EditOp::hyp_char).collect()
    }

    pub fn gt_string(&self) -> String {
        self.gt_chars().into_iter().collect()
    }

    pub fn hyp_string(&self) -> String {
        self.hyp_chars().into_iter().collect()
    }

    /// Replays the script on `gt`; `None` when the script does not describe `gt`.
    pub fn apply(&self, gt: &[char]) -> Option<Vec<char>> {
        let mut out = Vec::with_capacity(gt.len());
        let mut i = 0;
        for op in &self.ops {
            match *op {
                EditOp::Match { ch } => {
                    if gt.get(i) != Some(&ch) {
                        return None;
                    }
                    out.push(ch);
                    i += 1;
                }
                EditOp::Substitute { gt: g, hyp } => {
                    if gt.get(i) != Some(&g) || g == hyp {
                        return None;
                    }
                    out.push(hyp);
                    i += 1;
                }
                EditOp::Delete { gt: g } => {
                    if gt.get(i) != Some(&g) {
                        return None;
                    }
                    i += 1;
                }
                EditOp::Insert { hyp } => out.push(hyp),
            }
        }
        (i == gt.len()).then_some(out)
    }

    pub fn extend(&mut self, other: EditScript) {
        self.ops.extend(other.ops);
    }

    pub fn matches_only(chars: &[char]) -> EditScript {
        EditScript {
            ops: chars.iter().map(|&ch| EditOp::Match { ch }).collect(),
        }
    }
}

/// Minimal unit-cost alignment.
///
/// The table holds suffix distances and the script is read front to back,
/// preferring match/substitute, then delete, then insert at equal cost. Read
/// this way, an extra hypothesis character follows the substitution it
/// belongs to (`"m"` vs `"rn"` gives `m->r, +n`).
pub fn align_exact(gt: &[char], hyp: &[char]) -> EditScript {
    let n = gt.len();
    let m = hyp.len();
    let w = m + 1;
    let mut d = vec![0u32; (n + 1) * w];
    for j in 0..=m {
        d[n * w + j] = (m - j) as u32;
    }
    for i in (0..n).rev() {
        d[i * w + m] = (n - i) as u32;
        for j in (0..m).rev() {
            let diag = d[(i + 1) * w + j + 1] + (gt[i] != hyp[j]) as u32;
            let del = d[(i + 1) * w + j] + 1;
            let ins = d[i * w + j + 1] + 1;
            d[i * w + j] = diag.min(del).min(ins);
        }
    }
    trace(gt, hyp, |i, j| d[i * w + j])
}

fn trace(gt: &[char], hyp: &[char], cell: impl Fn(usize, usize) -> u32) -> EditScript {
    let (n, m) = (gt.len(), hyp.len());
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = cell(i, j);
        if i < n && j < m {
            let same = gt[i] == hyp[j];
            let next = cell(i + 1, j + 1);
            if next != u32::MAX && here == next + (!same) as u32 {
                ops.push(if same {
                    EditOp::Match { ch: gt[i] }
                } else {
                    EditOp::Substitute { gt: gt[i], hyp: hyp[j] }
                });
                i += 1;
                j += 1;
                continue;
            }
        }
        if i < n {
            let next = cell(i + 1, j);
            if next != u32::MAX && here == next + 1 {
                ops.push(EditOp::Delete { gt: gt[i] });
                i += 1;
                continue;
            }
        }
        ops.push(EditOp::Insert { hyp: hyp[j] });
        j += 1;
    }
    EditScript { ops }
}

/// Alignment restricted to diagonals `j - i` in
/// `[min(0, m - n) - band, max(0, m - n) + band]`.
///
/// Equals [`align_exact`] whenever some optimal path stays in the band.
pub fn align_banded(gt: &[char], hyp: &[char], band: usize) -> EditScript {
    let n = gt.len() as i64;
    let m = hyp.len() as i64;
    let lo = (m - n).min(0) - band as i64;
    let hi = (m - n).max(0) + band as i64;
    let width = (hi - lo + 1) as usize;
    const INF: u32 = u32::MAX;
    let mut d = vec![INF; (n as usize + 1) * width];
    let idx = |i: i64, j: i64| -> Option<usize> {
        let k = j - i;
        (j >= 0 && j <= m && k >= lo && k <= hi).then(|| i as usize * width + (k - lo) as usize)
    };
    for i in (0..=n).rev() {
        for j in ((i + lo).max(0)..=(i + hi).min(m)).rev() {
            let at = idx(i, j).unwrap();
            if i == n && j == m {
                d[at] = 0;
                continue;
            }
            let mut best = INF;
            if i < n && j < m {
                if let Some(k) = idx(i + 1, j + 1) {
                    if d[k] != INF {
                        best = best.min(d[k] + (gt[i as usize] != hyp[j as usize]) as u32);
                    }
                }
            }
            if i < n {
                if let Some(k) = idx(i + 1, j) {
                    if d[k] != INF {
                        best = best.min(d[k] + 1);
                    }
                }
            }
            if j < m {
                if let Some(k) = idx(i, j + 1) {
                    if d[k] != INF {
                        best = best.min(d[k] + 1);
                    }
                }
            }
            d[at] = best;
        }
    }
    trace(gt, hyp, |i, j| {
        idx(i as i64, j as i64).map(|k| d[k]).unwrap_or(INF)
    })
}

/// Edit distance if it is at most `k`, computed over `2k + 1` diagonals.
pub fn edit_distance_within<T: PartialEq>(a: &[T], b: &[T], k: usize) -> Option<usize> {
    let n = a.len();
    let m = b.len();
    if n.abs_diff(m) > k {
        return None;
    }
    const INF: usize = usize::MAX / 2;
    let mut prev = vec![INF; m + 1];
    let mut cur = vec![INF; m + 1];
    for (j, v) in prev.iter_mut().enumerate().take(k.min(m) + 1) {
        *v = j;
    }
    for i in 1..=n {
        let jlo = i.saturating_sub(k);
        let jhi = (i + k).min(m);
        if jlo > 0 {
            cur[jlo - 1] = INF;
        }
        for j in jlo..=jhi {
            let v = if j == 0 {
                i
            } else {
                let diag = prev[j - 1] + (a[i - 1] != b[j - 1]) as usize;
                (prev[j] + 1).min(cur[j - 1] + 1).min(diag)
            };
            cur[j] = v;
        }
        if jhi < m {
            cur[jhi + 1] = INF;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[m];
    (d <= k).then_some(d)
}

/// Exact unit-cost edit distance, widening the band until it holds the answer.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut k = a.len().abs_diff(b.len()).max(16);
    loop {
        if let Some(d) = edit_distance_within(a, b, k) {
            return d;
        }
        k *= 2;
    }
}
