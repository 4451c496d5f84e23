//! Frequency-word combinatorics for a single staircase stage.
//!
//! A word over stage n is a signed subset sum of the stage frequencies: a
//! support I ⊆ {0, …, p_n − 1} together with signs η_j ∈ {±1}, with value
//!
//! ```text
//! value(I, η) = Σ_{j ∈ I} η_j ω_n(j).
//! ```
//!
//! Words index the cross terms that appear when a partial Riesz product is
//! expanded into exponentials, so two questions decide whether the expansion
//! behaves like a lacunary series: are all word values distinct, and how many
//! words can fall into a fixed window [−Ω, Ω]?
//!
//! [`enumerate_words`] lists all words up to a length cap (there are
//! C(p, r)·2^r of each length r), [`min_gap`] certifies distinctness by
//! computing the minimum pairwise gap in extended precision, and
//! [`count_in_window`] / [`bound_window`] compare empirical window counts
//! against the counting bounds for even lengths:
//!
//! ```text
//! r = 4:        Ω p² log(p) / m
//! r = 8:        Ω p³ log(p)² / (m ε)
//! even r ≥ 4:   Ω p · p^{k−1} log(p)^{k−1} / (m ε^{k−2}),   k = ⌊log₂ r⌋
//! ```
//!
//! (natural logarithms; the general form reduces to the r = 4 and r = 8
//! bounds at k = 2 and k = 3). Odd-length words and words whose signs do not
//! cancel (Σ η_j ≠ 0) sit far outside any window of interest: their values
//! grow like the frequencies themselves rather than like frequency
//! differences. They carry no window bound, and [`exclusion_report`] verifies
//! the exclusion empirically by reporting the minimum |value| over each class.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use astro_float::BigFloat;

use crate::prec::Ctx;
use crate::staircase::{StaircaseError, StaircaseParams};

/// Hard cap on Σ C(p, r)·2^r for [`enumerate_words`].
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// Gap below which [`min_gap`] refuses to certify distinctness.
pub const DISTINCTNESS_THRESHOLD: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum WordsError {
    #[error(transparent)]
    Staircase(#[from] StaircaseError),
    #[error("stage {stage} out of range; parameters define {available} stages")]
    StageOutOfRange { stage: usize, available: usize },
    #[error("enumeration would produce at least {count} words (limit {limit})")]
    CombinatorialOverflow { count: u128, limit: u128 },
    #[error("gap statistics need at least two words, got {got}")]
    TooFewWords { got: usize },
    #[error("malformed word: {reason}")]
    MalformedWord { reason: &'static str },
    #[error("window radius must be positive, got {0}")]
    WindowNotPositive(f64),
    #[error("window bounds cover even lengths only, got {0}; odd-length values diverge")]
    OddLength(u32),
    #[error("window bounds start at length 4, got {0}")]
    LengthTooSmall(u32),
    #[error("minimum gap stayed below {threshold:e} after retry at {digits} digits")]
    PrecisionExhausted { threshold: f64, digits: u32 },
}

/// One signed subset sum of stage frequencies.
///
/// `indices` is the support in strictly increasing order, `signs[k]` is the
/// sign attached to `indices[k]`, and `value` is the double rounding of the
/// extended-precision sum Σ η_j ω_n(j). The full-precision value is not
/// stored; it is recomputed from `(indices, signs)` whenever a consumer
/// needs more than double accuracy ([`min_gap`] does).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyWord {
    pub indices: Vec<u32>,
    pub signs: Vec<i8>,
    pub value: f64,
}

impl FrequencyWord {
    pub fn length(&self) -> usize {
        self.indices.len()
    }

    /// Whether the signs cancel: Σ η_j = 0.
    pub fn is_balanced(&self) -> bool {
        self.signs.iter().map(|&s| i64::from(s)).sum::<i64>() == 0
    }
}

/// Distinctness verdict from [`min_gap`].
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    /// Minimum |value(w) − value(w′)| over distinct pairs.
    pub min_gap: f64,
    /// True when the gap clears [`DISTINCTNESS_THRESHOLD`].
    pub distinct: bool,
    /// Working precision that produced the verdict.
    pub digits_used: u32,
}

/// Minimum |value| over the word classes excluded from window accounting.
#[derive(Debug, Clone, Serialize)]
pub struct ExclusionReport {
    /// Over odd-length words; `None` when the list has none.
    pub odd_min_abs: Option<f64>,
    /// Over even-length words with Σ η_j ≠ 0; `None` when the list has none.
    pub unbalanced_min_abs: Option<f64>,
}

fn check_stage(params: &StaircaseParams, n: usize) -> Result<(), WordsError> {
    if n >= params.stages() {
        return Err(WordsError::StageOutOfRange { stage: n, available: params.stages() });
    }
    Ok(())
}

/// Exact word count Σ_{r=1..min(max_length, p)} C(p, r)·2^r, rejected when it
/// exceeds [`ENUMERATION_LIMIT`] (the reported count saturates at the point
/// the cap was crossed).
pub fn expected_count(p: u32, max_length: u32) -> Result<u128, WordsError> {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for r in 1..=max_length.min(p) {
        // C(p, r) from C(p, r−1); the multiplicative recurrence divides exactly
        binom = binom * u128::from(p - r + 1) / u128::from(r);
        let term = if r >= 100 {
            ENUMERATION_LIMIT + 1
        } else {
            binom.saturating_mul(1u128 << r)
        };
        total = total.saturating_add(term);
        if total > ENUMERATION_LIMIT {
            return Err(WordsError::CombinatorialOverflow {
                count: total,
                limit: ENUMERATION_LIMIT,
            });
        }
    }
    Ok(total)
}

/// Enumerate every word of length 1..=`max_length` over stage n, in
/// lexicographic order of (support, signs with + before −).
///
/// Values accumulate in extended precision, one addition per emitted word.
/// Errors with [`WordsError::CombinatorialOverflow`] when the exact count
/// Σ C(p, r)·2^r would exceed [`ENUMERATION_LIMIT`].
pub fn enumerate_words(
    params: &StaircaseParams,
    ctx: &Ctx,
    n: usize,
    max_length: u32,
) -> Result<Vec<FrequencyWord>, WordsError> {
    check_stage(params, n)?;
    let p = params.p(n);
    let expected = expected_count(p, max_length)?;
    let freqs = params.stage_frequencies(ctx, n)?.omega_big;

    let mut out = Vec::with_capacity(expected as usize);
    let mut indices: Vec<u32> = Vec::new();
    let mut signs: Vec<i8> = Vec::new();
    let zero = ctx.from_u64(0);
    extend(ctx, &freqs, max_length as usize, 0, &mut indices, &mut signs, &zero, &mut out);
    debug_assert_eq!(out.len() as u128, expected);
    Ok(out)
}

fn extend(
    ctx: &Ctx,
    freqs: &[BigFloat],
    max_length: usize,
    start: usize,
    indices: &mut Vec<u32>,
    signs: &mut Vec<i8>,
    value: &BigFloat,
    out: &mut Vec<FrequencyWord>,
) {
    if indices.len() == max_length {
        return;
    }
    for j in start..freqs.len() {
        for sign in [1i8, -1] {
            let next = if sign > 0 {
                ctx.add(value, &freqs[j])
            } else {
                ctx.sub(value, &freqs[j])
            };
            indices.push(j as u32);
            signs.push(sign);
            out.push(FrequencyWord {
                indices: indices.clone(),
                signs: signs.clone(),
                value: ctx.to_f64(&next),
            });
            extend(ctx, freqs, max_length, j + 1, indices, signs, &next, out);
            indices.pop();
            signs.pop();
        }
    }
}

fn word_value(
    ctx: &Ctx,
    freqs: &[BigFloat],
    word: &FrequencyWord,
) -> Result<BigFloat, WordsError> {
    if word.indices.is_empty() {
        return Err(WordsError::MalformedWord { reason: "empty support" });
    }
    if word.indices.len() != word.signs.len() {
        return Err(WordsError::MalformedWord { reason: "support/sign length mismatch" });
    }
    if !word.indices.windows(2).all(|w| w[0] < w[1]) {
        return Err(WordsError::MalformedWord { reason: "support not strictly increasing" });
    }
    let mut acc = ctx.from_u64(0);
    for (&j, &sign) in word.indices.iter().zip(&word.signs) {
        let freq = freqs
            .get(j as usize)
            .ok_or(WordsError::MalformedWord { reason: "index beyond stage width" })?;
        acc = match sign {
            1 => ctx.add(&acc, freq),
            -1 => ctx.sub(&acc, freq),
            _ => return Err(WordsError::MalformedWord { reason: "sign not in {+1, -1}" }),
        };
    }
    Ok(acc)
}

fn pairwise_gap(
    params: &StaircaseParams,
    ctx: &Ctx,
    n: usize,
    words: &[FrequencyWord],
) -> Result<f64, WordsError> {
    let freqs = params.stage_frequencies(ctx, n)?.omega_big;
    let mut values: Vec<BigFloat> = words
        .iter()
        .map(|w| word_value(ctx, &freqs, w))
        .collect::<Result<_, _>>()?;
    values.sort_by(|a, b| ctx.cmp(a, b));
    // min over all pairs = min over sorted neighbours
    let mut best: Option<BigFloat> = None;
    for pair in values.windows(2) {
        let diff = ctx.sub(&pair[1], &pair[0]);
        let smaller = match &best {
            None => true,
            Some(b) => ctx.cmp(&diff, b) == Ordering::Less,
        };
        if smaller {
            best = Some(diff);
        }
    }
    Ok(ctx.to_f64(&best.expect("caller guarantees at least two words")))
}

/// Minimum pairwise gap between word values, as a distinctness certificate.
///
/// Values are recomputed from `(indices, signs)` at max(60, `ctx`) digits. A
/// gap at or below [`DISTINCTNESS_THRESHOLD`] at that precision is treated as
/// precision exhaustion rather than a verdict: the computation retries once
/// at doubled precision and then fails hard. Structural duplicates (two words
/// with identical support and signs) short-circuit to an exact zero gap with
/// `distinct: false`, since no precision can separate them.
///
/// `words` must all come from stage n of `params`.
pub fn min_gap(
    params: &StaircaseParams,
    ctx: &Ctx,
    n: usize,
    words: &[FrequencyWord],
) -> Result<GapReport, WordsError> {
    check_stage(params, n)?;
    if words.len() < 2 {
        return Err(WordsError::TooFewWords { got: words.len() });
    }
    let mut keys: Vec<(&[u32], &[i8])> =
        words.iter().map(|w| (&w.indices[..], &w.signs[..])).collect();
    keys.sort();
    if keys.windows(2).any(|w| w[0] == w[1]) {
        return Ok(GapReport { min_gap: 0.0, distinct: false, digits_used: ctx.digits() });
    }

    let base = ctx.digits().max(60);
    for digits in [base, 2 * base] {
        let local = Ctx::new(digits);
        let gap = pairwise_gap(params, &local, n, words)?;
        if gap > DISTINCTNESS_THRESHOLD {
            return Ok(GapReport { min_gap: gap, distinct: true, digits_used: digits });
        }
    }
    Err(WordsError::PrecisionExhausted {
        threshold: DISTINCTNESS_THRESHOLD,
        digits: 2 * base,
    })
}

/// Number of words with |value| ≤ Ω (closed window).
pub fn count_in_window(words: &[FrequencyWord], omega: f64) -> Result<usize, WordsError> {
    if !(omega > 0.0) {
        return Err(WordsError::WindowNotPositive(omega));
    }
    Ok(words.iter().filter(|w| w.value.abs() <= omega).count())
}

/// Counting bound for length-r words in the window [−Ω, Ω] over stage n.
///
/// Even r ≥ 4 only; with k = ⌊log₂ r⌋ the bound is
/// Ω · p · p^{k−1} log(p)^{k−1} / (m ε^{k−2}), which specializes to
/// Ω p² log(p)/m at r = 4 and Ω p³ log(p)²/(m ε) at r = 8. Odd lengths carry
/// no bound (their values diverge with the frequencies) and are a typed
/// error. The bound is a prediction, not a guarantee: callers compare it
/// against [`count_in_window`] and report compliance.
pub fn bound_window(
    params: &StaircaseParams,
    n: usize,
    r: u32,
    omega: f64,
) -> Result<f64, WordsError> {
    check_stage(params, n)?;
    if !(omega > 0.0) {
        return Err(WordsError::WindowNotPositive(omega));
    }
    if r % 2 == 1 {
        return Err(WordsError::OddLength(r));
    }
    if r < 4 {
        return Err(WordsError::LengthTooSmall(r));
    }
    let k = r.ilog2() as i32;
    let p = f64::from(params.p(n));
    let m = params.m(n) as f64;
    let eps = params.eps(n);
    let eps = *eps.numer() as f64 / *eps.denom() as f64;
    Ok(omega * p * p.powi(k - 1) * p.ln().powi(k - 1) / (m * eps.powi(k - 2)))
}

/// Minimum |value| over the excluded classes (odd length, and even length
/// with Σ η_j ≠ 0), for checking that both classes stay far outside the
/// windows the bounds are applied to.
pub fn exclusion_report(words: &[FrequencyWord]) -> ExclusionReport {
    let mut odd: Option<f64> = None;
    let mut unbalanced: Option<f64> = None;
    for w in words {
        let v = w.value.abs();
        let slot = if w.length() % 2 == 1 {
            &mut odd
        } else if !w.is_balanced() {
            &mut unbalanced
        } else {
            continue;
        };
        *slot = Some(slot.map_or(v, |m: f64| m.min(v)));
    }
    ExclusionReport { odd_min_abs: odd, unbalanced_min_abs: unbalanced }
}
