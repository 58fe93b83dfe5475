//! Edit distance, WER and minimum-edit-distance resegmentation.
//!
//! [`resegment`] cuts a hypothesis token stream into as many pieces as there
//! are reference segments so that the summed edit distance is minimal. It runs
//! a single Levenshtein alignment between the hypothesis and the concatenated
//! references and reads the cut points off the backtrace where the path
//! crosses a reference boundary. The summed per-segment distance at those cuts
//! equals the distance to the concatenation, which is a lower bound for every
//! monotone segmentation.
//!
//! Backtrace preference among equal-cost predecessors is diagonal, then
//! hypothesis-token-consumed (vertical), then reference-token-consumed
//! (horizontal). Hypothesis tokens left over exactly at a reference boundary
//! belong to the earlier segment.
//!
//! Two memory modes produce identical output: a full predecessor matrix, and
//! a recursive row-splitting mode that keeps O(log |H|) DP rows alive and only
//! materializes small blocks.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalset::{Document, DocumentOutput, SystemOutput};
use crate::textproc::{join_tokens, tokenize, TokenStream, TokenizationLevel};

/// Matrix size (cells) above which [`MemoryMode::Auto`] switches to linear memory.
pub const FULL_MATRIX_CELL_LIMIT: usize = 40_000_000;

/// Largest block the linear-memory mode solves with a dense predecessor matrix.
const BLOCK_CELLS: usize = 1 << 16;

const INF: u32 = u32::MAX / 2;

const DIAG: u8 = 1;
const UP: u8 = 2;
const LEFT: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentCost {
    pub distance: usize,
    pub ref_len: usize,
}

impl AlignmentCost {
    pub fn wer(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| self.distance as f64 / self.ref_len as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    /// K+1 offsets into the hypothesis stream, starting at 0 and ending at |H|.
    pub cut_points: Vec<usize>,
    pub total_distance: usize,
    /// Set when a diagonal band restricted the search.
    pub approximate: bool,
}

impl Segmentation {
    pub fn segment_count(&self) -> usize {
        self.cut_points.len() - 1
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.cut_points.windows(2).map(|w| w[0]..w[1])
    }

    /// Splits `hyp` at the cut points.
    pub fn apply(&self, hyp: &TokenStream) -> Vec<TokenStream> {
        self.ranges().map(|r| hyp.slice(r)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryMode {
    #[default]
    Auto,
    FullMatrix,
    LinearSpace,
}

impl std::str::FromStr for MemoryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(MemoryMode::Auto),
            "full" | "full-matrix" => Ok(MemoryMode::FullMatrix),
            "linear" | "linear-space" => Ok(MemoryMode::LinearSpace),
            _ => Err(Error::invalid(format!("unknown memory mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResegmentOptions {
    pub memory: MemoryMode,
    /// Half-width of a diagonal band restricting the DP. `None` searches the
    /// whole matrix. Banded results are flagged approximate.
    pub band: Option<usize>,
    /// Reference set to align against; defaults to the document's first set.
    pub reference_set: Option<String>,
}

fn check_levels(a: &TokenStream, b: &TokenStream) -> Result<()> {
    if a.level() != b.level() {
        return Err(Error::LevelMismatch(a.level(), b.level()));
    }
    Ok(())
}

/// Unit-cost Levenshtein distance between two token streams.
pub fn edit_distance(a: &TokenStream, b: &TokenStream) -> Result<usize> {
    check_levels(a, b)?;
    Ok(levenshtein(a.tokens(), b.tokens()))
}

fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn alignment_cost(hyp: &TokenStream, reference: &TokenStream) -> Result<AlignmentCost> {
    Ok(AlignmentCost {
        distance: edit_distance(hyp, reference)?,
        ref_len: reference.len(),
    })
}

pub fn wer(hyp: &TokenStream, reference: &TokenStream) -> Result<f64> {
    check_levels(hyp, reference)?;
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(levenshtein(hyp.tokens(), reference.tokens()) as f64 / reference.len() as f64)
}

pub fn resegment(hyp: &TokenStream, refs: &[TokenStream]) -> Result<Segmentation> {
    resegment_with(hyp, refs, &ResegmentOptions::default())
}

pub fn resegment_with(
    hyp: &TokenStream,
    refs: &[TokenStream],
    opts: &ResegmentOptions,
) -> Result<Segmentation> {
    if refs.is_empty() {
        return Err(Error::NoReferences);
    }
    for r in refs {
        check_levels(hyp, r)?;
    }

    let mut vocab: HashMap<&str, u32> = HashMap::new();
    let h: Vec<u32> = hyp.tokens().iter().map(|t| intern(&mut vocab, t)).collect();
    let mut bounds = Vec::with_capacity(refs.len() + 1);
    bounds.push(0);
    let mut r = Vec::new();
    for seg in refs {
        r.extend(seg.tokens().iter().map(|t| intern(&mut vocab, t)));
        bounds.push(r.len());
    }

    let grid = Grid::new(&h, &r, opts.band);
    let use_full = match opts.memory {
        MemoryMode::FullMatrix => true,
        MemoryMode::LinearSpace => false,
        MemoryMode::Auto => (h.len() + 1).saturating_mul(r.len() + 1) <= FULL_MATRIX_CELL_LIMIT,
    };
    let block_cells = if use_full { usize::MAX } else { BLOCK_CELLS };
    let (row_at_col, end_value) = grid.trace_path(block_cells);

    // Column 0 and column |R| may also be interior boundaries (empty
    // reference segments), so the outer cuts are pinned explicitly.
    let mut cut_points: Vec<usize> = bounds.iter().map(|&b| row_at_col[b]).collect();
    cut_points[0] = 0;
    *cut_points.last_mut().expect("non-empty") = h.len();

    let approximate = grid.band.is_some();
    let total_distance = if approximate {
        cut_points
            .windows(2)
            .zip(bounds.windows(2))
            .map(|(c, b)| levenshtein(&h[c[0]..c[1]], &r[b[0]..b[1]]))
            .sum()
    } else {
        end_value as usize
    };
    Ok(Segmentation {
        cut_points,
        total_distance,
        approximate,
    })
}

fn intern<'a>(vocab: &mut HashMap<&'a str, u32>, tok: &'a str) -> u32 {
    let next = vocab.len() as u32;
    *vocab.entry(tok).or_insert(next)
}

/// Alignment grid: rows index hypothesis prefixes, columns reference prefixes.
struct Grid<'a> {
    hyp: &'a [u32],
    refs: &'a [u32],
    band: Option<usize>,
}

impl<'a> Grid<'a> {
    fn new(hyp: &'a [u32], refs: &'a [u32], band: Option<usize>) -> Self {
        let (n, m) = (hyp.len(), refs.len());
        // Widen the band so consecutive rows always overlap and (n, m) is reachable.
        let band = band.filter(|_| n > 0 && m > 0).map(|w| {
            let slope = m.div_ceil(n).max(n.div_ceil(m));
            w.max(slope + 1)
        });
        Grid { hyp, refs, band }
    }

    /// Inclusive column range of row `i` inside the band.
    fn cols(&self, i: usize, jend: usize) -> (usize, usize) {
        match self.band {
            None => (0, jend),
            Some(w) => {
                let (n, m) = (self.hyp.len() as u64, self.refs.len() as u64);
                let center = ((i as u64 * m + n / 2) / n) as usize;
                (center.saturating_sub(w), (center + w).min(jend))
            }
        }
    }

    fn first_row(&self) -> Vec<u32> {
        let m = self.refs.len();
        let (_, hi) = self.cols(0, m);
        (0..=m)
            .map(|j| if j <= hi { j as u32 } else { INF })
            .collect()
    }

    /// Computes row `i` from row `i - 1`, optionally recording predecessor masks.
    fn step(&self, i: usize, prev: &[u32], cur: &mut [u32], mut mask: Option<&mut [u8]>) {
        let jend = cur.len() - 1;
        let (lo, hi) = self.cols(i, jend);
        let tok = self.hyp[i - 1];
        cur.fill(INF);
        if let Some(m) = mask.as_deref_mut() {
            m.fill(0);
        }
        for j in lo..=hi {
            let up = prev[j].saturating_add(1);
            let (diag, left) = if j == 0 {
                (INF, INF)
            } else {
                (
                    prev[j - 1].saturating_add(u32::from(tok != self.refs[j - 1])),
                    cur[j - 1].saturating_add(1),
                )
            };
            let best = diag.min(up).min(left);
            if best >= INF {
                continue;
            }
            cur[j] = best;
            if let Some(m) = mask.as_deref_mut() {
                m[j] = (if diag == best { DIAG } else { 0 })
                    | (if up == best { UP } else { 0 })
                    | (if left == best { LEFT } else { 0 });
            }
        }
    }

    /// Returns, for every reference column, the largest hypothesis row the
    /// optimal path visits in it, plus the optimal distance.
    fn trace_path(&self, block_cells: usize) -> (Vec<usize>, u32) {
        let (n, m) = (self.hyp.len(), self.refs.len());
        let mut row_at_col = vec![usize::MAX; m + 1];
        let top = self.first_row();
        let (entry, end_value) = self.trace(0, n, &top, m, block_cells, &mut row_at_col);
        // The remainder of the path runs left along row 0.
        for slot in row_at_col.iter_mut().take(entry) {
            if *slot == usize::MAX {
                *slot = 0;
            }
        }
        (row_at_col, end_value)
    }

    /// Traces the optimal path from `(hi, jend)` back to row `lo`, given the DP
    /// values of row `lo`. Returns the column at which the path reaches row
    /// `lo` and the DP value at `(hi, jend)`.
    fn trace(
        &self,
        lo: usize,
        hi: usize,
        top: &[u32],
        jend: usize,
        block_cells: usize,
        row_at_col: &mut [usize],
    ) -> (usize, u32) {
        let width = jend + 1;
        if hi - lo <= 1 || (hi - lo).saturating_mul(width) <= block_cells {
            return self.trace_block(lo, hi, top, jend, row_at_col);
        }
        let mid = lo + (hi - lo) / 2;
        let mut prev = top[..width].to_vec();
        let mut cur = vec![INF; width];
        for i in lo + 1..=mid {
            self.step(i, &prev, &mut cur, None);
            std::mem::swap(&mut prev, &mut cur);
        }
        let (j_mid, end_value) = self.trace(mid, hi, &prev, jend, block_cells, row_at_col);
        drop(prev);
        drop(cur);
        let (entry, _) = self.trace(lo, mid, &top[..=j_mid], j_mid, block_cells, row_at_col);
        (entry, end_value)
    }

    fn trace_block(
        &self,
        lo: usize,
        hi: usize,
        top: &[u32],
        jend: usize,
        row_at_col: &mut [usize],
    ) -> (usize, u32) {
        let width = jend + 1;
        let rows = hi - lo;
        let mut masks = vec![0u8; rows * width];
        let mut prev = top[..width].to_vec();
        let mut cur = vec![INF; width];
        for (k, mask) in masks.chunks_mut(width).enumerate() {
            self.step(lo + k + 1, &prev, &mut cur, Some(mask));
            std::mem::swap(&mut prev, &mut cur);
        }
        let end_value = prev[jend];

        let (mut i, mut j) = (hi, jend);
        loop {
            if row_at_col[j] == usize::MAX {
                row_at_col[j] = i;
            }
            if i == lo {
                return (j, end_value);
            }
            let mask = masks[(i - lo - 1) * width + j];
            if mask & DIAG != 0 {
                i -= 1;
                j -= 1;
            } else if mask & UP != 0 {
                i -= 1;
            } else {
                debug_assert!(mask & LEFT != 0, "broken backtrace at ({i}, {j})");
                j -= 1;
            }
        }
    }
}

/// Resegments the system's hypothesis for `ref_doc` onto the reference
/// segmentation. The result holds exactly that one document.
pub fn resegment_system_output(
    sys: &SystemOutput,
    ref_doc: &Document,
    level: TokenizationLevel,
) -> Result<SystemOutput> {
    resegment_system_output_with(sys, ref_doc, level, &ResegmentOptions::default())
        .map(|(out, _)| out)
}

pub fn resegment_system_output_with(
    sys: &SystemOutput,
    ref_doc: &Document,
    level: TokenizationLevel,
    opts: &ResegmentOptions,
) -> Result<(SystemOutput, Segmentation)> {
    let doc_out = match sys.documents.as_slice() {
        [only] if only.doc_id != ref_doc.doc_id => {
            return Err(Error::DocumentMismatch {
                expected: ref_doc.doc_id.clone(),
                found: only.doc_id.clone(),
            })
        }
        docs => docs
            .iter()
            .find(|d| d.doc_id == ref_doc.doc_id)
            .ok_or_else(|| Error::DocumentMismatch {
                expected: ref_doc.doc_id.clone(),
                found: docs
                    .iter()
                    .map(|d| d.doc_id.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            })?,
    };
    let (document, seg) = resegment_document(doc_out, ref_doc, level, opts)?;
    Ok((
        SystemOutput {
            system_id: sys.system_id.clone(),
            condition: sys.condition.clone(),
            documents: vec![document],
            resegmented: true,
        },
        seg,
    ))
}

/// Resegments one document's hypothesis lines onto `ref_doc`.
pub fn resegment_document(
    doc_out: &DocumentOutput,
    ref_doc: &Document,
    level: TokenizationLevel,
    opts: &ResegmentOptions,
) -> Result<(DocumentOutput, Segmentation)> {
    if doc_out.doc_id != ref_doc.doc_id {
        return Err(Error::DocumentMismatch {
            expected: ref_doc.doc_id.clone(),
            found: doc_out.doc_id.clone(),
        });
    }
    let ref_set = match &opts.reference_set {
        Some(name) => name.clone(),
        None => ref_doc
            .reference_sets()
            .next()
            .map(str::to_owned)
            .ok_or_else(|| Error::invalid(format!("document {} has no references", ref_doc.doc_id)))?,
    };
    let refs = ref_doc
        .segments
        .iter()
        .map(|s| {
            s.references
                .get(&ref_set)
                .map(|text| tokenize(text, level))
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "segment {} lacks reference set {ref_set:?}",
                        s.segment_id
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let hyp_parts: Vec<TokenStream> = doc_out.segments.iter().map(|t| tokenize(t, level)).collect();
    let hyp = crate::textproc::concat_streams(&hyp_parts)?.stream;
    let seg = resegment_with(&hyp, &refs, opts)?;
    let segments = seg.apply(&hyp).iter().map(join_tokens).collect();
    Ok((
        DocumentOutput {
            doc_id: doc_out.doc_id.clone(),
            segments,
        },
        seg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::TokenizationLevel::*;
    use proptest::prelude::*;

    fn words(s: &str) -> TokenStream {
        tokenize(s, Word)
    }

    fn chars(s: &str) -> TokenStream {
        tokenize(s, Character)
    }

    /// Independent recursive edit distance with memoization.
    fn oracle_distance(a: &[String], b: &[String]) -> usize {
        fn go(a: &[String], b: &[String], memo: &mut HashMap<(usize, usize), usize>) -> usize {
            if a.is_empty() {
                return b.len();
            }
            if b.is_empty() {
                return a.len();
            }
            if let Some(&v) = memo.get(&(a.len(), b.len())) {
                return v;
            }
            let v = if a[0] == b[0] {
                go(&a[1..], &b[1..], memo)
            } else {
                1 + go(&a[1..], b, memo)
                    .min(go(a, &b[1..], memo))
                    .min(go(&a[1..], &b[1..], memo))
            };
            memo.insert((a.len(), b.len()), v);
            v
        }
        go(a, b, &mut HashMap::new())
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(&words("a b c"), &words("a b c")).unwrap(), 0);
        assert_eq!(edit_distance(&words(""), &words("a b")).unwrap(), 2);
        let (k, s) = (chars("kitten"), chars("sitting"));
        let expected = oracle_distance(k.tokens(), s.tokens());
        assert_eq!(expected, 3);
        assert_eq!(edit_distance(&k, &s).unwrap(), expected);
    }

    #[test]
    fn edit_distance_rejects_mixed_levels() {
        assert!(matches!(
            edit_distance(&words("a"), &chars("a")),
            Err(Error::LevelMismatch(..))
        ));
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&words("a b c"), &words("a b c")).unwrap(), 0.0);
        assert_eq!(wer(&words(""), &words("a b c d")).unwrap(), 1.0);
        let d = oracle_distance(words("a x c").tokens(), words("a b c").tokens());
        assert_eq!(d, 1);
        assert_eq!(wer(&words("a x c"), &words("a b c")).unwrap(), 1.0 / 3.0);
        assert!(matches!(wer(&words("a"), &words("")), Err(Error::EmptyReference)));
    }

    #[test]
    fn resegment_examples() {
        let hyp = words("a b c d");
        let s = resegment(&hyp, &[words("a b"), words("c d")]).unwrap();
        assert_eq!(s.cut_points, [0, 2, 4]);
        assert_eq!(s.total_distance, 0);

        let s = resegment(&hyp, &[words("a b c d")]).unwrap();
        assert_eq!(s.cut_points, [0, 4]);
        assert_eq!(s.total_distance, 0);

        assert!(matches!(resegment(&hyp, &[]), Err(Error::NoReferences)));
    }

    #[test]
    fn empty_hypothesis() {
        let refs = [words("a b"), words("c"), words("d e f")];
        let s = resegment(&words(""), &refs).unwrap();
        assert_eq!(s.cut_points, [0, 0, 0, 0]);
        assert_eq!(s.total_distance, 6);
    }

    #[test]
    fn empty_reference_segments() {
        let refs = [words("a"), words(""), words("b")];
        let s = resegment(&words("a b"), &refs).unwrap();
        assert_eq!(s.cut_points, [0, 1, 1, 2]);
        assert_eq!(s.total_distance, 0);
    }

    #[test]
    fn extra_tokens_at_boundary_attach_to_earlier_segment() {
        let s = resegment(&words("a x b"), &[words("a"), words("b")]).unwrap();
        assert_eq!(s.cut_points, [0, 2, 3]);
        assert_eq!(s.total_distance, 1);
    }

    #[test]
    fn band_marks_approximate() {
        let hyp = words("a b c d e f");
        let refs = [words("a b c"), words("d e f")];
        let s = resegment_with(
            &hyp,
            &refs,
            &ResegmentOptions {
                band: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(s.approximate);
        assert_eq!(s.cut_points, [0, 3, 6]);
        assert_eq!(s.total_distance, 0);
    }

    fn instance() -> impl Strategy<Value = (Vec<String>, Vec<Vec<String>>)> {
        let tok = prop::sample::select(vec!["a", "b", "c"]).prop_map(str::to_owned);
        (
            prop::collection::vec(tok.clone(), 0..40),
            prop::collection::vec(prop::collection::vec(tok, 0..10), 1..6),
        )
    }

    proptest! {
        #[test]
        fn structure_and_decomposition((h, rs) in instance()) {
            let hyp = TokenStream::new(h, Word).unwrap();
            let refs: Vec<_> = rs.into_iter().map(|r| TokenStream::new(r, Word).unwrap()).collect();
            let seg = resegment(&hyp, &refs).unwrap();
            prop_assert_eq!(seg.segment_count(), refs.len());
            prop_assert!(seg.cut_points.windows(2).all(|w| w[0] <= w[1]));
            let pieces = seg.apply(&hyp);
            let rejoined: Vec<String> = pieces.iter().flat_map(|p| p.tokens().to_vec()).collect();
            prop_assert_eq!(rejoined.as_slice(), hyp.tokens());
            let summed: usize = pieces.iter().zip(&refs).map(|(p, r)| edit_distance(p, r).unwrap()).sum();
            let concat = crate::textproc::concat_streams(&refs).unwrap().stream;
            prop_assert_eq!(summed, seg.total_distance);
            prop_assert_eq!(seg.total_distance, edit_distance(&hyp, &concat).unwrap());
        }

        #[test]
        fn memory_modes_agree((h, rs) in instance()) {
            let hyp = TokenStream::new(h, Word).unwrap();
            let refs: Vec<_> = rs.into_iter().map(|r| TokenStream::new(r, Word).unwrap()).collect();
            let full = resegment_with(&hyp, &refs, &ResegmentOptions {
                memory: MemoryMode::FullMatrix, ..Default::default()
            }).unwrap();
            let hyp_ids: Vec<u32> = hyp.tokens().iter().map(|t| t.as_bytes()[0] as u32).collect();
            let ref_ids: Vec<u32> = refs.iter().flat_map(|r| r.tokens().iter().map(|t| t.as_bytes()[0] as u32)).collect();
            // block budget of zero forces recursion down to single rows
            let grid = Grid::new(&hyp_ids, &ref_ids, None);
            let (cols, end) = grid.trace_path(0);
            let (full_cols, full_end) = grid.trace_path(usize::MAX);
            prop_assert_eq!(cols, full_cols);
            prop_assert_eq!(end, full_end);
            prop_assert_eq!(end as usize, full.total_distance);
        }

        #[test]
        fn resegment_is_idempotent((h, rs) in instance()) {
            let hyp = TokenStream::new(h, Word).unwrap();
            let refs: Vec<_> = rs.into_iter().map(|r| TokenStream::new(r, Word).unwrap()).collect();
            let first = resegment(&hyp, &refs).unwrap();
            let again = crate::textproc::concat_streams(&first.apply(&hyp)).unwrap().stream;
            prop_assert_eq!(resegment(&again, &refs).unwrap(), first);
        }

        #[test]
        fn banded_cuts_are_valid((h, rs) in instance(), w in 1usize..4) {
            let hyp = TokenStream::new(h, Word).unwrap();
            let refs: Vec<_> = rs.into_iter().map(|r| TokenStream::new(r, Word).unwrap()).collect();
            let exact = resegment(&hyp, &refs).unwrap();
            let banded = resegment_with(&hyp, &refs, &ResegmentOptions { band: Some(w), ..Default::default() }).unwrap();
            prop_assert_eq!(banded.cut_points.len(), refs.len() + 1);
            prop_assert_eq!(*banded.cut_points.last().unwrap(), hyp.len());
            prop_assert!(banded.total_distance >= exact.total_distance);
        }
    }
}
