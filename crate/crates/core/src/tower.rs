//! Exact finite-stage tower model of the flow, and the autocorrelation
//! oracle it supports.
//!
//! Stage N of the cutting-and-stacking construction is a single column of
//! height h_N whose base block recurs at the occurrence heights
//!
//! ```text
//! O_{k+1} = { j·h_k + s̄_k(j) + o : 0 ≤ j < p_k, o ∈ O_k },   O_0 = {0}.
//! ```
//!
//! The autocorrelation of the height-s base block under the vertical flow is
//! a finite sum of interval overlaps, computable exactly. Normalized by its
//! value at t = 0 it must agree with the partial Riesz product's Fourier
//! transform up to the boundary term (t+s)/h_N, which makes the tower an
//! independent cross-check of the whole spectral pipeline: the two sides
//! share no code beyond the spec itself.
//!
//! Points flowing past the stage-N top are dropped rather than wrapped; the
//! discrepancy is what the boundary bound absorbs. The base block must fit in
//! one level, so s ≤ h_0 is required.

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::flowspec::{FlowspecError, RankOneSpec};
use crate::kernel::{FejerKernel, KernelError};
use crate::prec::{Ctx, Value};
use crate::riesz::{PartialProduct, RieszError};

/// Default cap on |O_N|.
pub const DEFAULT_OCCURRENCE_LIMIT: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum TowerError {
    #[error(transparent)]
    Spec(#[from] FlowspecError),
    #[error(transparent)]
    Riesz(#[from] RieszError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("stage {n} has {size} occurrences, limit is {limit}")]
    TooManyOccurrences { n: usize, size: u128, limit: usize },
    #[error("block height s={s} must satisfy 0 < s <= h_0 = {h0}")]
    InvalidBlockHeight { s: f64, h0: f64 },
    #[error("time offset t={0} must be nonnegative")]
    NegativeTime(f64),
}

/// Occurrence heights in the arithmetic the spec supports: exact rationals
/// for exact specs (bit-exact oracle), f64 converted after an
/// extended-precision sort otherwise.
enum Occurrences {
    Exact(Vec<BigRational>),
    Approx(Vec<f64>),
}

/// Stage-N tower: sorted occurrence heights of the base block, the stage
/// height h_N, and the implied base width 1/h_N (total mass 1).
pub struct TowerStage {
    occ: Occurrences,
    height: Value,
    height_f64: f64,
    base_f64: f64,
}

impl TowerStage {
    pub fn len(&self) -> usize {
        match &self.occ {
            Occurrences::Exact(v) => v.len(),
            Occurrences::Approx(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.occ, Occurrences::Exact(_))
    }

    pub fn height(&self) -> &Value {
        &self.height
    }

    pub fn height_f64(&self) -> f64 {
        self.height_f64
    }

    pub fn base_height_f64(&self) -> f64 {
        self.base_f64
    }

    /// Base width w_N = 1/h_N.
    pub fn width(&self) -> f64 {
        1.0 / self.height_f64
    }

    pub fn occurrences_f64(&self) -> Vec<f64> {
        match &self.occ {
            Occurrences::Exact(v) => v.iter().map(|q| q.to_f64().unwrap_or(f64::NAN)).collect(),
            Occurrences::Approx(v) => v.clone(),
        }
    }

    pub fn occurrences_exact(&self) -> Option<&[BigRational]> {
        match &self.occ {
            Occurrences::Exact(v) => Some(v),
            Occurrences::Approx(_) => None,
        }
    }

    /// Minimum gap between consecutive occurrences (+∞ for a single one).
    pub fn min_gap(&self) -> f64 {
        let v = self.occurrences_f64();
        v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Build the stage-N occurrence set by the stacking recursion.
pub fn occurrence_heights(
    spec: &RankOneSpec,
    ctx: &Ctx,
    n: usize,
) -> Result<TowerStage, TowerError> {
    let mut size = 1u128;
    for k in 0..n {
        size = size.saturating_mul(u128::from(spec.cut(k)?));
    }
    if size > DEFAULT_OCCURRENCE_LIMIT as u128 {
        return Err(TowerError::TooManyOccurrences {
            n,
            size,
            limit: DEFAULT_OCCURRENCE_LIMIT,
        });
    }
    let heights = spec.derive_heights(ctx, n)?;
    let mut occ = vec![Value::zero()];
    for k in 0..n {
        let p = spec.cut(k)? as usize;
        let sbar = spec.cumulative_spacers(ctx, k)?;
        let mut next = Vec::with_capacity(occ.len() * p);
        for j in 0..p {
            let base = heights[k].mul_u64(j as u64, ctx).add(&sbar[j], ctx);
            for o in &occ {
                next.push(base.add(o, ctx));
            }
        }
        occ = next;
    }
    let (exact, height_f64, base_f64) = (
        spec.is_exact(),
        heights[n].to_f64(ctx),
        heights[0].to_f64(ctx),
    );
    let occ = if exact {
        let mut v: Vec<BigRational> = occ
            .into_iter()
            .map(|x| x.as_exact().expect("exact spec yields exact occurrences").clone())
            .collect();
        v.sort();
        Occurrences::Exact(v)
    } else {
        occ.sort_by(|a, b| a.cmp(b, ctx));
        Occurrences::Approx(occ.iter().map(|x| x.to_f64(ctx)).collect())
    };
    Ok(TowerStage { occ, height: heights[n].clone(), height_f64, base_f64 })
}

/// ∫ 1_B(T_t x)·1_B(x) dν for B the height-s base block:
/// w_N · Σ_{o,o'} |[o+t, o+t+s) ∩ [o', o'+s) ∩ [0, h_N)|.
pub fn autocorrelation(ts: &TowerStage, s: f64, t: f64) -> Result<f64, TowerError> {
    if !(s > 0.0 && s <= ts.base_f64) {
        return Err(TowerError::InvalidBlockHeight { s, h0: ts.base_f64 });
    }
    if !(t >= 0.0) {
        return Err(TowerError::NegativeTime(t));
    }
    match &ts.occ {
        Occurrences::Approx(v) => {
            let h = ts.height_f64;
            let mut sum = 0.0;
            for &o in v {
                let a = o + t;
                let start = v.partition_point(|x| *x <= a - s);
                for &o2 in &v[start..] {
                    if o2 >= a + s {
                        break;
                    }
                    let overlap = (a + s).min(o2 + s).min(h) - a.max(o2);
                    if overlap > 0.0 {
                        sum += overlap;
                    }
                }
            }
            Ok(sum / h)
        }
        Occurrences::Exact(v) => {
            let s_r = BigRational::from_float(s).expect("finite s");
            let t_r = BigRational::from_float(t).expect("finite t");
            let h_r = ts
                .height
                .as_exact()
                .expect("exact occurrences imply exact height")
                .clone();
            let shadow: Vec<f64> = v.iter().map(|q| q.to_f64().unwrap_or(f64::NAN)).collect();
            // window by the f64 shadow with generous slack; spurious
            // candidates contribute an exact zero
            let slack = 1e-9 * (1.0 + ts.height_f64.abs());
            let mut sum = BigRational::zero();
            for (i, o) in v.iter().enumerate() {
                let a = o + &t_r;
                let a_f = shadow[i] + t;
                let start = shadow.partition_point(|x| *x < a_f - s - slack);
                for (o2, &o2_f) in v[start..].iter().zip(&shadow[start..]) {
                    if o2_f > a_f + s + slack {
                        break;
                    }
                    let top = &a + &s_r;
                    let mut hi = if top < o2 + &s_r { top } else { o2 + &s_r };
                    if hi > h_r {
                        hi = h_r.clone();
                    }
                    let lo = if a > *o2 { a.clone() } else { o2.clone() };
                    if hi > lo {
                        sum += hi - lo;
                    }
                }
            }
            Ok((sum / h_r).to_f64().expect("autocorrelation fits in f64"))
        }
    }
}

/// One point of the tower-vs-Riesz cross-check.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FtComparison {
    pub t: f64,
    /// Raw autocorrelation of the base block at offset t.
    pub autocorrelation: f64,
    /// Autocorrelation normalized by its value at t = 0.
    pub normalized: f64,
    /// Exact Fourier transform of the partial Riesz product.
    pub ft: f64,
    pub residual: f64,
    /// A-priori boundary bound (t+s)/h_N on the residual.
    pub bound: f64,
    pub pass: bool,
}

/// Amortizes tower construction and product expansion over a t-grid.
pub struct FtOracle {
    stage: TowerStage,
    product: PartialProduct,
    s: f64,
    a0: f64,
}

impl FtOracle {
    pub fn new(spec: &RankOneSpec, ctx: &Ctx, n: usize, s: f64) -> Result<Self, TowerError> {
        let stage = occurrence_heights(spec, ctx, n)?;
        if !(s > 0.0 && s <= stage.base_f64) {
            return Err(TowerError::InvalidBlockHeight { s, h0: stage.base_f64 });
        }
        let kernel = FejerKernel::new(s)?;
        let stages: Vec<usize> = (0..n).collect();
        let product = PartialProduct::new(spec, ctx, &stages, kernel)?;
        let a0 = autocorrelation(&stage, s, 0.0)?;
        Ok(FtOracle { stage, product, s, a0 })
    }

    pub fn stage(&self) -> &TowerStage {
        &self.stage
    }

    pub fn product(&self) -> &PartialProduct {
        &self.product
    }

    pub fn compare(&self, t: f64) -> Result<FtComparison, TowerError> {
        let at = autocorrelation(&self.stage, self.s, t)?;
        let ft = self.product.ft_exact(t)?;
        let normalized = at / self.a0;
        let residual = (normalized - ft).abs();
        let bound = (t + self.s) / self.stage.height_f64;
        Ok(FtComparison {
            t,
            autocorrelation: at,
            normalized,
            ft,
            residual,
            bound,
            pass: residual <= bound + 1e-9,
        })
    }
}

/// One-shot [`FtOracle::compare`].
pub fn compare_ft(
    spec: &RankOneSpec,
    ctx: &Ctx,
    n: usize,
    s: f64,
    t: f64,
) -> Result<FtComparison, TowerError> {
    FtOracle::new(spec, ctx, n, s)?.compare(t)
}
