//! Character alignment of an OCR text against its clean source.
//!
//! Long texts are split recursively at anchor words: whitespace-delimited
//! words of at least three characters that occur exactly once in both
//! segments, taken in their longest common order. Segments shorter than the
//! threshold on both sides are aligned with a full edit-distance table, so
//! their scripts are minimal. Large segments without anchors use a diagonal
//! band that fits a fixed cell budget.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Match(char),
    Substitute(char, char),
    Delete(char),
    Insert(char),
}

impl EditOp {
    pub fn is_edit(&self) -> bool {
        !matches!(self, EditOp::Match(_))
    }

    pub fn clean(&self) -> Option<char> {
        match *self {
            EditOp::Match(c) | EditOp::Substitute(c, _) | EditOp::Delete(c) => Some(c),
            EditOp::Insert(_) => None,
        }
    }

    pub fn ocr(&self) -> Option<char> {
        match *self {
            EditOp::Match(c) | EditOp::Substitute(_, c) | EditOp::Insert(c) => Some(c),
            EditOp::Delete(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<u64>,
    pub ops: Vec<EditOp>,
}

impl Alignment {
    /// Applies the script to its clean side, producing the OCR text.
    pub fn replay(&self) -> String {
        self.ops.iter().filter_map(EditOp::ocr).collect()
    }

    pub fn clean_text(&self) -> String {
        self.ops.iter().filter_map(EditOp::clean).collect()
    }

    /// Number of non-match operations.
    pub fn cost(&self) -> usize {
        self.ops.iter().filter(|o| o.is_edit()).count()
    }

    /// Applies the script to `clean`, checking that it is the script's
    /// clean side. `None` on mismatch.
    pub fn apply(&self, clean: &str) -> Option<String> {
        let mut src = clean.chars();
        let mut out = String::new();
        for op in &self.ops {
            if let Some(c) = op.clean() {
                if src.next() != Some(c) {
                    return None;
                }
            }
            if let Some(c) = op.ocr() {
                out.push(c);
            }
        }
        src.next().is_none().then_some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    /// Segments shorter than this on both sides get an exact alignment.
    pub segment_threshold: usize,
    pub min_anchor_len: usize,
    /// Largest edit table built for an anchorless segment; beyond it the
    /// table is restricted to a diagonal band.
    pub cell_budget: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            segment_threshold: 400,
            min_anchor_len: 3,
            cell_budget: 25_000_000,
        }
    }
}

pub fn align(clean: &str, ocr: &str) -> Alignment {
    align_with(clean, ocr, &AlignOptions::default())
}

pub fn align_with(clean: &str, ocr: &str, opts: &AlignOptions) -> Alignment {
    let a: Vec<char> = clean.chars().collect();
    let b: Vec<char> = ocr.chars().collect();
    let mut ops = Vec::with_capacity(a.len().max(b.len()));
    align_segment(&a, &b, opts, &mut ops);
    Alignment { source_id: None, ops }
}

fn align_segment(a: &[char], b: &[char], opts: &AlignOptions, out: &mut Vec<EditOp>) {
    if a.is_empty() || b.is_empty() {
        out.extend(a.iter().map(|&c| EditOp::Delete(c)));
        out.extend(b.iter().map(|&c| EditOp::Insert(c)));
        return;
    }
    if a.len() < opts.segment_threshold && b.len() < opts.segment_threshold {
        edit_script(a, b, None, out);
        return;
    }
    let anchors = anchors(a, b, opts.min_anchor_len);
    if anchors.is_empty() {
        let cells = (a.len() + 1) * (b.len() + 1);
        let band = (cells > opts.cell_budget).then(|| {
            let per_row = opts.cell_budget / (a.len() + 1);
            let slope = b.len().div_ceil(a.len());
            (per_row / 2).max(slope + 1)
        });
        edit_script(a, b, band, out);
        return;
    }
    let (mut pa, mut pb) = (0, 0);
    for (sa, sb, len) in anchors {
        align_segment(&a[pa..sa], &b[pb..sb], opts, out);
        out.extend(a[sa..sa + len].iter().map(|&c| EditOp::Match(c)));
        pa = sa + len;
        pb = sb + len;
    }
    align_segment(&a[pa..], &b[pb..], opts, out);
}

/// Whitespace-delimited words as `(start, len)` in chars.
fn words(s: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.iter().enumerate() {
        match (c.is_whitespace(), start) {
            (true, Some(st)) => {
                out.push((st, i - st));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(st) = start {
        out.push((st, s.len() - st));
    }
    out
}

fn unique_words(s: &[char], min_len: usize) -> HashMap<&[char], usize> {
    let mut seen: HashMap<&[char], Option<usize>> = HashMap::new();
    for (st, len) in words(s) {
        let w = &s[st..st + len];
        seen.entry(w).and_modify(|v| *v = None).or_insert(Some(st));
    }
    seen.into_iter()
        .filter_map(|(w, pos)| Some((w, pos?)))
        .filter(|(w, _)| w.len() >= min_len)
        .collect()
}

/// Anchor words as `(start_a, start_b, len)`, increasing in both texts.
fn anchors(a: &[char], b: &[char], min_len: usize) -> Vec<(usize, usize, usize)> {
    let ua = unique_words(a, min_len);
    let ub = unique_words(b, min_len);
    let mut shared: Vec<(usize, usize, usize)> = ua
        .iter()
        .filter_map(|(w, &pa)| ub.get(w).map(|&pb| (pa, pb, w.len())))
        .collect();
    shared.sort_unstable();
    longest_increasing_by_b(&shared)
}

/// Longest subsequence with strictly increasing `b` positions; ties resolve
/// to the earliest candidates so the choice is deterministic.
fn longest_increasing_by_b(items: &[(usize, usize, usize)]) -> Vec<(usize, usize, usize)> {
    let mut tails: Vec<usize> = Vec::new();
    let mut prev = vec![usize::MAX; items.len()];
    for (k, item) in items.iter().enumerate() {
        let pos = tails.partition_point(|&t| items[t].1 < item.1);
        if pos > 0 {
            prev[k] = tails[pos - 1];
        }
        if pos == tails.len() {
            tails.push(k);
        } else {
            tails[pos] = k;
        }
    }
    let mut out = Vec::with_capacity(tails.len());
    let mut k = tails.last().copied().unwrap_or(usize::MAX);
    while k != usize::MAX {
        out.push(items[k]);
        k = prev[k];
    }
    out.reverse();
    out
}

const DIAG: u8 = 0;
const UP: u8 = 1;
const LEFT: u8 = 2;

/// Minimum-edit script, optionally restricted to `|j − i·m/n| ≤ band`.
/// Among equal-cost moves, backtracking prefers match, then substitution,
/// then deletion, then insertion.
fn edit_script(a: &[char], b: &[char], band: Option<usize>, out: &mut Vec<EditOp>) {
    let (n, m) = (a.len(), b.len());
    let range = |i: usize| -> (usize, usize) {
        match band {
            None => (0, m),
            Some(w) => {
                let center = i * m / n.max(1);
                (center.saturating_sub(w), (center + w).min(m))
            }
        }
    };
    const INF: u32 = u32::MAX / 2;
    let mut prev = vec![INF; m + 1];
    let mut cur = vec![INF; m + 1];
    let mut dirs: Vec<Vec<u8>> = Vec::with_capacity(n + 1);
    let mut los = Vec::with_capacity(n + 1);

    let (lo0, hi0) = range(0);
    for (j, v) in prev.iter_mut().enumerate().take(hi0 + 1).skip(lo0) {
        *v = j as u32;
    }
    dirs.push(vec![LEFT; hi0 - lo0 + 1]);
    los.push(lo0);

    for i in 1..=n {
        let (lo, hi) = range(i);
        let (plo, phi) = range(i - 1);
        cur.iter_mut().for_each(|v| *v = INF);
        let mut row = Vec::with_capacity(hi - lo + 1);
        for j in lo..=hi {
            let up = if j >= plo && j <= phi { prev[j] + 1 } else { INF };
            let (diag, left) = if j == 0 {
                (INF, INF)
            } else {
                let d = if j > plo && j - 1 <= phi {
                    prev[j - 1] + u32::from(a[i - 1] != b[j - 1])
                } else {
                    INF
                };
                let l = if j > lo { cur[j - 1] + 1 } else { INF };
                (d, l)
            };
            let best = diag.min(up).min(left);
            cur[j] = best;
            row.push(if diag == best {
                DIAG
            } else if up == best {
                UP
            } else {
                LEFT
            });
        }
        dirs.push(row);
        los.push(lo);
        std::mem::swap(&mut prev, &mut cur);
    }

    let start = out.len();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let d = if i == 0 { LEFT } else { dirs[i][j - los[i]] };
        match d {
            DIAG => {
                out.push(if a[i - 1] == b[j - 1] {
                    EditOp::Match(a[i - 1])
                } else {
                    EditOp::Substitute(a[i - 1], b[j - 1])
                });
                i -= 1;
                j -= 1;
            }
            UP => {
                out.push(EditOp::Delete(a[i - 1]));
                i -= 1;
            }
            _ => {
                out.push(EditOp::Insert(b[j - 1]));
                j -= 1;
            }
        }
    }
    out[start..].reverse();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::edit_distance;
    use proptest::prelude::*;

    #[test]
    fn identity_is_all_matches() {
        let a = align("hello world", "hello world");
        assert!(a.ops.iter().all(|o| matches!(o, EditOp::Match(_))));
        assert_eq!(a.ops.len(), 11);
    }

    #[test]
    fn single_substitution() {
        let a = align("the cat sat", "the cot sat");
        let edits: Vec<_> = a.ops.iter().filter(|o| o.is_edit()).collect();
        assert_eq!(edits, vec![&EditOp::Substitute('a', 'o')]);
    }

    #[test]
    fn single_insertion() {
        let a = align("abc", "abxc");
        assert_eq!(
            a.ops,
            vec![
                EditOp::Match('a'),
                EditOp::Match('b'),
                EditOp::Insert('x'),
                EditOp::Match('c')
            ]
        );
    }

    #[test]
    fn empty_sides() {
        assert_eq!(align("ab", "").ops, vec![EditOp::Delete('a'), EditOp::Delete('b')]);
        assert_eq!(align("", "x").ops, vec![EditOp::Insert('x')]);
        assert!(align("", "").ops.is_empty());
    }

    #[test]
    fn prefers_substitution_over_indel_pair() {
        // "ab" -> "ba" costs 2 either as two substitutions or delete+insert.
        let a = align("ab", "ba");
        assert_eq!(a.ops, vec![EditOp::Substitute('a', 'b'), EditOp::Substitute('b', 'a')]);
    }

    #[test]
    fn anchors_follow_common_order() {
        let a: Vec<char> = "alpha beta gamma delta".chars().collect();
        let b: Vec<char> = "gamma alpha beta delta".chars().collect();
        let got: Vec<String> = anchors(&a, &b, 3)
            .iter()
            .map(|&(s, _, l)| a[s..s + l].iter().collect())
            .collect();
        assert_eq!(got, vec!["alpha", "beta", "delta"]);
    }

    #[test]
    fn repeated_words_are_not_anchors() {
        let a: Vec<char> = "the cat the dog".chars().collect();
        let got = anchors(&a, &a, 3);
        let words: Vec<String> = got.iter().map(|&(s, _, l)| a[s..s + l].iter().collect()).collect();
        assert_eq!(words, vec!["cat", "dog"]);
    }

    fn long_text(words: usize) -> String {
        (0..words).map(|i| format!("w{i:05}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn long_texts_use_anchors_and_replay() {
        let clean = long_text(400);
        let ocr = clean.replace("w00017", "w0O017").replace(" w00200", "w00200");
        let a = align(&clean, &ocr);
        assert_eq!(a.replay(), ocr);
        assert_eq!(a.clean_text(), clean);
        assert_eq!(a.cost(), 2);
    }

    #[test]
    fn banded_fallback_replays() {
        let clean: String = "abcdefghij".repeat(300);
        let ocr: String = clean.replacen("cde", "cXe", 5).replacen("ghi", "gi", 3);
        let opts = AlignOptions {
            cell_budget: 200_000,
            ..AlignOptions::default()
        };
        let a = align_with(&clean, &ocr, &opts);
        assert_eq!(a.replay(), ocr);
        assert_eq!(a.cost(), edit_distance(&clean, &ocr));
    }

    #[test]
    fn apply_checks_the_clean_side() {
        let a = align("abc", "abxc");
        assert_eq!(a.apply("abc").as_deref(), Some("abxc"));
        assert_eq!(a.apply("abd"), None);
        assert_eq!(a.apply("abcd"), None);
    }

    #[test]
    fn json_shape() {
        let a = align("ab", "b");
        let v = serde_json::to_value(&a).unwrap();
        assert_eq!(v["ops"][0], serde_json::json!({"delete": "a"}));
        assert_eq!(v["ops"][1], serde_json::json!({"match": "b"}));
    }

    proptest! {
        #[test]
        fn short_segments_are_minimal(a in "[abc ]{0,40}", b in "[abc ]{0,40}") {
            let al = align(&a, &b);
            prop_assert_eq!(al.replay(), b.clone());
            prop_assert_eq!(al.clean_text(), a.clone());
            prop_assert_eq!(al.cost(), edit_distance(&a, &b));
        }

        #[test]
        fn mutated_long_texts_replay(edits in prop::collection::vec((0usize..3000, 0u8..3, "[a-z]"), 0..40)) {
            let clean = long_text(500);
            let mut chars: Vec<char> = clean.chars().collect();
            for (pos, kind, c) in edits {
                let c = c.chars().next().unwrap();
                let pos = pos % (chars.len() + 1);
                match kind {
                    0 if pos < chars.len() => chars[pos] = c,
                    1 if pos < chars.len() => { chars.remove(pos); }
                    _ => chars.insert(pos, c),
                }
            }
            let ocr: String = chars.into_iter().collect();
            let al = align(&clean, &ocr);
            prop_assert_eq!(al.replay(), ocr);
            prop_assert_eq!(al.clean_text(), clean);
        }
    }
}
