//! Fixed-rate quantized control: greedy section-wise minimization of the
//! condensed cost over the dictionary, an exhaustive oracle, and the
//! index/bitstream codecs.
//!
//! The quantized controller minimizes `u' W u + 2 x' F u` over codewords
//! `u` that are sums of one dictionary column per section. The greedy
//! search commits one section per round; a variant searches all remaining
//! sections each round and retires the best section. Candidate costs are
//! evaluated incrementally from precomputed per-column quantities in
//! `O(horizon + state_dim)` per candidate, which is what makes the larger
//! section sizes practical.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dictionary::Dictionary;
use crate::scalar::{real, Scalar};

/// Default cap on the number of codeword combinations the exhaustive
/// oracle will enumerate.
pub const DEFAULT_EXHAUSTIVE_CAP: u128 = 1 << 20;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("codeword space of {combinations} combinations exceeds cap {cap}")]
    TooLarge { combinations: u128, cap: u128 },
    #[error("bitstring has the wrong length or encodes an out-of-range offset")]
    MalformedBitstring,
    #[error("index {index} is outside section {section}")]
    IndexOutOfSection { index: usize, section: usize },
    #[error("index vector has {got} entries, dictionary has {expected} sections")]
    SectionCountMismatch { got: usize, expected: usize },
}

/// Selected columns, one per section, as zero-based column ids into the
/// dictionary. Entry `s` lies in section `s`'s column range. This is the
/// canonical sparse representation of a codeword.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodewordIndex {
    pub indices: Vec<usize>,
}

impl CodewordIndex {
    /// Validate the per-section range invariant against a dictionary.
    pub fn validate<T: Scalar>(&self, dict: &Dictionary<T>) -> Result<(), EncodeError> {
        if self.indices.len() != dict.sections() {
            return Err(EncodeError::SectionCountMismatch {
                got: self.indices.len(),
                expected: dict.sections(),
            });
        }
        for (section, &index) in self.indices.iter().enumerate() {
            if !dict.section_range(section).contains(&index) {
                return Err(EncodeError::IndexOutOfSection { index, section });
            }
        }
        Ok(())
    }
}

/// Per-dictionary precomputation: the quadratic self-cost of every column
/// and the cross-cost map `F * D` (one `state_dim` column per dictionary
/// column).
#[derive(Debug, Clone)]
pub struct EncoderWorkspace<T: Scalar> {
    /// `d_i' W d_i` for every column `i`; nonnegative for positive
    /// definite `W`.
    pub col_quad: Vec<T>,
    /// `F * d_i` for every column `i`, stored as a `state_dim x total`
    /// matrix.
    pub col_cross: DMatrix<T>,
}

impl<T: Scalar> EncoderWorkspace<T> {
    pub fn new(dict: &Dictionary<T>, hessian: &DMatrix<T>, cross: &DMatrix<T>) -> Self {
        let weighted = hessian * dict.columns();
        let total = dict.total_words();
        let n = dict.rows();
        let mut col_quad = Vec::with_capacity(total);
        let cols = dict.columns().as_slice();
        let wcols = weighted.as_slice();
        for i in 0..total {
            let mut acc = T::zero();
            for r in 0..n {
                acc += cols[i * n + r] * wcols[i * n + r];
            }
            col_quad.push(acc);
        }
        let col_cross = cross * dict.columns();
        Self {
            col_quad,
            col_cross,
        }
    }
}

/// The condensed quantized cost `u' W u + 2 x' F u`. Differs from the full
/// horizon cost only by a term constant in `u`.
pub fn quantized_cost<T: Scalar>(
    u: &DVector<T>,
    x: &DVector<T>,
    hessian: &DMatrix<T>,
    cross: &DMatrix<T>,
) -> T {
    let quad = (u.transpose() * hessian * u)[(0, 0)];
    let lin = (x.transpose() * cross * u)[(0, 0)];
    quad + real::<T>(2.0) * lin
}

/// An encoding result: the index vector, the reconstructed codeword and
/// its condensed cost.
#[derive(Debug, Clone)]
pub struct Encoded<T: Scalar> {
    pub index: CodewordIndex,
    pub codeword: DVector<T>,
    pub cost: T,
}

/// Scan one section for the candidate minimizing
/// `carried + quad_i + 2 drive . d_i`, where `drive = W sum + F' x` folds
/// the running-sum and state cross terms of the candidate cost into one
/// vector. Ties break toward the lowest column index.
fn scan_columns<T: Scalar>(
    dict: &Dictionary<T>,
    ws: &EncoderWorkspace<T>,
    drive: &[T],
    carried: T,
    range: std::ops::Range<usize>,
) -> (usize, T) {
    let n = dict.rows();
    let cols = &dict.columns().as_slice()[range.start * n..range.end * n];
    let quads = &ws.col_quad[range.clone()];
    let two = real::<T>(2.0);

    let mut best_index = range.start;
    let mut best_cost = T::zero();
    let mut first = true;
    for (offset, (column, &quad)) in cols.chunks_exact(n).zip(quads).enumerate() {
        let mut dot = T::zero();
        for (&d, &c) in drive.iter().zip(column) {
            dot += d * c;
        }
        let cost = carried + quad + two * dot;
        if first || cost < best_cost {
            best_cost = cost;
            best_index = range.start + offset;
            first = false;
        }
    }
    (best_index, best_cost)
}

fn add_column<T: Scalar>(sum: &mut DVector<T>, dict: &Dictionary<T>, index: usize) {
    let n = dict.rows();
    let col = dict.column_slice(index);
    for r in 0..n {
        sum[r] += col[r];
    }
}

/// Recompute the running products after committing a column: the drive
/// vector `W sum + F' x` and the carried constant `sum' W sum + 2 x' F sum`.
fn refresh_running<T: Scalar>(
    sum: &DVector<T>,
    state_cross: &DVector<T>,
    hessian: &DMatrix<T>,
) -> (DVector<T>, T) {
    let wsum = hessian * sum;
    let carried = sum.dot(&wsum) + real::<T>(2.0) * state_cross.dot(sum);
    (wsum + state_cross, carried)
}

/// Greedy search: for each section in order, commit the column that
/// minimizes the cost of the running sum plus that column.
pub fn greedy_encode<T: Scalar>(
    dict: &Dictionary<T>,
    ws: &EncoderWorkspace<T>,
    hessian: &DMatrix<T>,
    cross: &DMatrix<T>,
    x: &DVector<T>,
) -> Encoded<T> {
    let n = dict.rows();
    let state_cross = cross.transpose() * x;
    let mut indices = Vec::with_capacity(dict.sections());
    let mut sum = DVector::<T>::zeros(n);
    let mut drive = state_cross.clone();
    let mut carried = T::zero();
    let mut cost = T::zero();
    for section in 0..dict.sections() {
        let (best, best_cost) = scan_columns(
            dict,
            ws,
            drive.as_slice(),
            carried,
            dict.section_range(section),
        );
        indices.push(best);
        cost = best_cost;
        add_column(&mut sum, dict, best);
        let refreshed = refresh_running(&sum, &state_cross, hessian);
        drive = refreshed.0;
        carried = refreshed.1;
    }
    Encoded {
        index: CodewordIndex { indices },
        codeword: sum,
        cost,
    }
}

/// Greedy variant that searches every not-yet-used section each round and
/// retires the section of the winning column. Can beat the in-order greedy
/// on some states but costs `sections` times more candidate evaluations.
pub fn greedy_encode_reuse<T: Scalar>(
    dict: &Dictionary<T>,
    ws: &EncoderWorkspace<T>,
    hessian: &DMatrix<T>,
    cross: &DMatrix<T>,
    x: &DVector<T>,
) -> Encoded<T> {
    let n = dict.rows();
    let sections = dict.sections();
    let state_cross = cross.transpose() * x;
    let mut chosen: Vec<Option<usize>> = vec![None; sections];
    let mut sum = DVector::<T>::zeros(n);
    let mut drive = state_cross.clone();
    let mut carried = T::zero();
    let mut cost = T::zero();
    for _round in 0..sections {
        let mut best: Option<(usize, T)> = None;
        let open_sections: Vec<usize> = (0..sections).filter(|&s| chosen[s].is_none()).collect();
        for section in open_sections {
            let (index, candidate_cost) = scan_columns(
                dict,
                ws,
                drive.as_slice(),
                carried,
                dict.section_range(section),
            );
            let better = match &best {
                None => true,
                Some((_, incumbent)) => candidate_cost < *incumbent,
            };
            if better {
                best = Some((index, candidate_cost));
            }
        }
        let (index, round_cost) = best.expect("at least one unused section");
        chosen[dict.section_of(index)] = Some(index);
        cost = round_cost;
        add_column(&mut sum, dict, index);
        let refreshed = refresh_running(&sum, &state_cross, hessian);
        drive = refreshed.0;
        carried = refreshed.1;
    }
    let indices = chosen
        .into_iter()
        .map(|c| c.expect("all sections used"))
        .collect();
    Encoded {
        index: CodewordIndex { indices },
        codeword: sum,
        cost,
    }
}

/// Greedy search with two network states: pick the dictionary of the
/// current state, then run the in-order greedy. Returns the zero-based
/// dictionary id so the receiver, which tracks the same network state,
/// decodes against the matching dictionary.
#[allow(clippy::too_many_arguments)]
pub fn greedy_encode_switched<T: Scalar>(
    dict_state1: &Dictionary<T>,
    ws_state1: &EncoderWorkspace<T>,
    dict_state2: &Dictionary<T>,
    ws_state2: &EncoderWorkspace<T>,
    state: crate::channel::ChannelState,
    hessian: &DMatrix<T>,
    cross: &DMatrix<T>,
    x: &DVector<T>,
) -> (Encoded<T>, usize) {
    let (dict, ws) = if state.index == 0 {
        (dict_state1, ws_state1)
    } else {
        (dict_state2, ws_state2)
    };
    (greedy_encode(dict, ws, hessian, cross, x), state.index)
}

/// Exhaustive oracle: the global minimizer over all per-section
/// combinations, ties broken toward the lexicographically smallest index
/// vector. Intended for testing at small sizes.
pub fn exhaustive_encode<T: Scalar>(
    dict: &Dictionary<T>,
    ws: &EncoderWorkspace<T>,
    hessian: &DMatrix<T>,
    cross: &DMatrix<T>,
    x: &DVector<T>,
) -> Result<(CodewordIndex, T), EncodeError> {
    exhaustive_encode_with_cap(dict, ws, hessian, cross, x, DEFAULT_EXHAUSTIVE_CAP)
}

/// As [`exhaustive_encode`] with an explicit combination cap.
pub fn exhaustive_encode_with_cap<T: Scalar>(
    dict: &Dictionary<T>,
    ws: &EncoderWorkspace<T>,
    hessian: &DMatrix<T>,
    cross: &DMatrix<T>,
    x: &DVector<T>,
    cap: u128,
) -> Result<(CodewordIndex, T), EncodeError> {
    let combinations = (dict.words_per_section() as u128)
        .checked_pow(dict.sections() as u32)
        .unwrap_or(u128::MAX);
    if combinations > cap {
        return Err(EncodeError::TooLarge { combinations, cap });
    }

    struct Search<'a, T: Scalar> {
        dict: &'a Dictionary<T>,
        ws: &'a EncoderWorkspace<T>,
        hessian: &'a DMatrix<T>,
        state_cross: DVector<T>,
        current: Vec<usize>,
        best: Option<(Vec<usize>, T)>,
    }

    impl<T: Scalar> Search<'_, T> {
        // Depth-first in ascending index order: the first strict minimum
        // found is the lexicographically smallest minimizer.
        fn descend(&mut self, section: usize, sum: &DVector<T>, drive: &DVector<T>, carried: T) {
            let n = self.dict.rows();
            let cols = self.dict.columns().as_slice();
            let two = real::<T>(2.0);
            let last = section + 1 == self.dict.sections();
            for i in self.dict.section_range(section) {
                let dcol = &cols[i * n..(i + 1) * n];
                let mut dot = T::zero();
                for r in 0..n {
                    dot += drive[r] * dcol[r];
                }
                let cost = carried + self.ws.col_quad[i] + two * dot;
                self.current.push(i);
                if last {
                    let better = match &self.best {
                        None => true,
                        Some((_, incumbent)) => cost < *incumbent,
                    };
                    if better {
                        self.best = Some((self.current.clone(), cost));
                    }
                } else {
                    let mut next_sum = sum.clone();
                    add_column(&mut next_sum, self.dict, i);
                    let (next_drive, next_carried) =
                        refresh_running(&next_sum, &self.state_cross, self.hessian);
                    self.descend(section + 1, &next_sum, &next_drive, next_carried);
                }
                self.current.pop();
            }
        }
    }

    let n = dict.rows();
    let state_cross = cross.transpose() * x;
    let drive = state_cross.clone();
    let mut search = Search {
        dict,
        ws,
        hessian,
        state_cross: state_cross.clone(),
        current: Vec::with_capacity(dict.sections()),
        best: None,
    };
    search.descend(0, &DVector::zeros(n), &drive, T::zero());
    let (indices, cost) = search.best.expect("nonempty codeword space");
    Ok((CodewordIndex { indices }, cost))
}

/// Bits needed to address one of `words` offsets.
pub fn bits_per_section(words: usize) -> usize {
    debug_assert!(words >= 1);
    if words <= 1 {
        0
    } else {
        (usize::BITS - (words - 1).leading_zeros()) as usize
    }
}

/// Pack an index vector into the wire bitstring: each section's local
/// offset written big-endian in `ceil(log2(words))` bits, first section
/// first, final partial byte zero-padded at the least significant end.
pub fn pack_indices(
    index: &CodewordIndex,
    words_per_section: usize,
) -> Result<Vec<u8>, EncodeError> {
    let bits = bits_per_section(words_per_section);
    let total_bits = bits * index.indices.len();
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    let mut position = 0usize;
    for (section, &column) in index.indices.iter().enumerate() {
        let start = section * words_per_section;
        if column < start || column >= start + words_per_section {
            return Err(EncodeError::IndexOutOfSection {
                index: column,
                section,
            });
        }
        let offset = column - start;
        for bit in (0..bits).rev() {
            if offset >> bit & 1 == 1 {
                out[position / 8] |= 1 << (7 - position % 8);
            }
            position += 1;
        }
    }
    Ok(out)
}

/// Inverse of [`pack_indices`]. The bitstring length must match exactly.
pub fn unpack_indices(
    bytes: &[u8],
    sections: usize,
    words_per_section: usize,
) -> Result<CodewordIndex, EncodeError> {
    let bits = bits_per_section(words_per_section);
    let total_bits = bits * sections;
    if bytes.len() != total_bits.div_ceil(8) {
        return Err(EncodeError::MalformedBitstring);
    }
    let mut indices = Vec::with_capacity(sections);
    let mut position = 0usize;
    for section in 0..sections {
        let mut offset = 0usize;
        for _ in 0..bits {
            offset <<= 1;
            offset |= (bytes[position / 8] >> (7 - position % 8) & 1) as usize;
            position += 1;
        }
        if offset >= words_per_section {
            return Err(EncodeError::MalformedBitstring);
        }
        indices.push(section * words_per_section + offset);
    }
    Ok(CodewordIndex { indices })
}

/// Reconstruct the codeword: the sum of the selected columns.
pub fn decode<T: Scalar>(
    dict: &Dictionary<T>,
    index: &CodewordIndex,
) -> Result<DVector<T>, EncodeError> {
    index.validate(dict)?;
    let mut sum = DVector::<T>::zeros(dict.rows());
    for &column in &index.indices {
        add_column(&mut sum, dict, column);
    }
    Ok(sum)
}
