//! Exponential staircase frequency sequences and the presets built on them.
//!
//! A staircase stage is a triple (m_n, p_n, ε_n) generating
//!
//! ```text
//! ω_n(j) = (m_n/ε_n²)·p_n·exp(ε_n·j/p_n)            (Theorem form)
//! ω_n(j) = (m_n/ε_n²)·p_n·(exp(ε_n·j/p_n) − 1)      (type-I form)
//! ```
//!
//! The two forms differ by the additive constant (m_n/ε_n²)p_n only, so the
//! spacer rows they induce are identical; which form a run used is still
//! recorded because the clt statistic evaluates ω itself, not differences.
//! Spacers come from the recurrence h_n + s_{n+1,j+1} = ω_n(j+1) − ω_n(j),
//! which needs ω at j = p_n; the closed form extends there and this module
//! uses that extension.
//!
//! ε is kept as an exact rational; only exp leaves the rational world, at the
//! context's working precision.

use astro_float::BigFloat;
use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::dd::Dd;
use crate::flowspec::{ConditionCheck, RankOneSpec, ValidityReport};
use crate::prec::{Ctx, Value};

pub type Rational = Ratio<u64>;

#[derive(Debug, Error)]
pub enum StaircaseError {
    #[error("parameter sequences must be nonempty and of equal length")]
    Shape,
    #[error("stage {0}: m must be positive")]
    ZeroM(usize),
    #[error("stage {0}: p must be positive")]
    ZeroP(usize),
    #[error("stage {0}: eps must be positive")]
    ZeroEps(usize),
    #[error("stage {n}: omega index {j} out of range 0..={p}")]
    OmegaRange { n: usize, j: u32, p: u32 },
    #[error(
        "stage {n}: spacer {j} is negative; condition (1) m >= eps*h is violated (m = {m}, eps*h ~ {eps_h})"
    )]
    NegativeSpacer { n: usize, j: u32, m: u64, eps_h: f64 },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// Which closed form of ω a run evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// ω_n(p) = (m/ε²)p_n·exp(εp/p_n), the form the spectral statements use.
    Theorem,
    /// Same with (exp(·) − 1): the type-I definition, zero at p = 0.
    TypeIMinusOne,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Theorem => "theorem",
            Variant::TypeIMinusOne => "type-i-minus-one",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "theorem" => Some(Variant::Theorem),
            "type-i-minus-one" => Some(Variant::TypeIMinusOne),
            _ => None,
        }
    }
}

/// Staircase parameter sequences.
///
/// Construction enforces positivity and shape. The family's asymptotic side
/// conditions (p_n growing, ε_n shrinking) cannot hold in any finite prefix
/// and some presets deliberately bend them (the desk preset trades ε
/// monotonicity for a clean desk-scale CLT trend), so those are reported by
/// [`StaircaseParams::validate`] instead of being construction errors.
#[derive(Clone, Debug)]
pub struct StaircaseParams {
    m: Vec<u64>,
    p: Vec<u32>,
    eps: Vec<Rational>,
    variant: Variant,
}

impl StaircaseParams {
    pub fn new(
        m: Vec<u64>,
        p: Vec<u32>,
        eps: Vec<Rational>,
        variant: Variant,
    ) -> Result<Self, StaircaseError> {
        if m.is_empty() || m.len() != p.len() || m.len() != eps.len() {
            return Err(StaircaseError::Shape);
        }
        for (n, &v) in m.iter().enumerate() {
            if v == 0 {
                return Err(StaircaseError::ZeroM(n));
            }
        }
        for (n, &v) in p.iter().enumerate() {
            if v == 0 {
                return Err(StaircaseError::ZeroP(n));
            }
        }
        for (n, e) in eps.iter().enumerate() {
            if *e.numer() == 0 {
                return Err(StaircaseError::ZeroEps(n));
            }
        }
        Ok(StaircaseParams { m, p, eps, variant })
    }

    pub fn stages(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self, n: usize) -> u64 {
        self.m[n]
    }

    pub fn p(&self, n: usize) -> u32 {
        self.p[n]
    }

    pub fn eps(&self, n: usize) -> Rational {
        self.eps[n]
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Shape/monotonicity report: p ≥ 2, p nondecreasing, ε nonincreasing.
    pub fn validate(&self) -> ValidityReport {
        let mut conditions = Vec::new();
        for (n, &p) in self.p.iter().enumerate() {
            conditions.push(ConditionCheck {
                name: format!("stage {n}: p >= 2"),
                pass: p >= 2,
                margin: f64::from(p) - 2.0,
            });
        }
        let p_mono = self.p.windows(2).all(|w| w[1] >= w[0]);
        conditions.push(ConditionCheck {
            name: "p nondecreasing".to_string(),
            pass: p_mono,
            margin: if p_mono { 0.0 } else { -1.0 },
        });
        let e_mono = self.eps.windows(2).all(|w| w[1] <= w[0]);
        conditions.push(ConditionCheck {
            name: "eps nonincreasing".to_string(),
            pass: e_mono,
            margin: if e_mono { 0.0 } else { -1.0 },
        });
        ValidityReport {
            conditions,
            finiteness_terms: Vec::new(),
            finiteness_partial_sums: Vec::new(),
            plausibly_finite_heuristic: None,
        }
    }

    /// The prefactor (m_n/ε_n²)·p_n as an exact quotient of integers.
    fn scale(&self, ctx: &Ctx, n: usize) -> BigFloat {
        let e = self.eps[n];
        let num = u128::from(self.m[n]) * u128::from(self.p[n]) * u128::from(*e.denom()).pow(2);
        let den = u128::from(*e.numer()).pow(2);
        ctx.div(&ctx.from_u128(num), &ctx.from_u128(den))
    }

    /// ω_n(j) at working precision; j may equal p_n (closed-form extension).
    pub fn omega(&self, ctx: &Ctx, n: usize, j: u32) -> Result<BigFloat, StaircaseError> {
        let p = self.p[n];
        if j > p {
            return Err(StaircaseError::OmegaRange { n, j, p });
        }
        let e = self.eps[n];
        // exp(ε·j/p) with the exact rational argument ε·j/p
        let arg = ctx.div(
            &ctx.from_u128(u128::from(*e.numer()) * u128::from(j)),
            &ctx.from_u128(u128::from(*e.denom()) * u128::from(p)),
        );
        let ex = ctx.exp(&arg);
        let factor = match self.variant {
            Variant::Theorem => ex,
            Variant::TypeIMinusOne => ctx.sub(&ex, &ctx.from_u64(1)),
        };
        Ok(ctx.mul(&self.scale(ctx, n), &factor))
    }

    /// Spacer row (s_{n+1,1}, …, s_{n+1,p_n}) above height h_n:
    /// s_{n+1,j+1} = ω_n(j+1) − ω_n(j) − h_n.
    ///
    /// Computed from the Theorem-form increments, which the type-I form
    /// shares term by term, so the output is bit-identical for both variants.
    pub fn spacers_from_omega(
        &self,
        ctx: &Ctx,
        n: usize,
        h_n: &BigFloat,
    ) -> Result<Vec<BigFloat>, StaircaseError> {
        let p = self.p[n];
        let theorem = StaircaseParams {
            m: self.m.clone(),
            p: self.p.clone(),
            eps: self.eps.clone(),
            variant: Variant::Theorem,
        };
        let mut prev = theorem.omega(ctx, n, 0)?;
        let mut row = Vec::with_capacity(p as usize);
        for j in 1..=p {
            let cur = theorem.omega(ctx, n, j)?;
            let s = ctx.sub(&ctx.sub(&cur, &prev), h_n);
            if s.is_negative() && !s.is_zero() {
                let eps_h = ctx.to_f64(&ctx.mul(&ctx.from_ratio(*self.eps[n].numer(), *self.eps[n].denom()), h_n));
                return Err(StaircaseError::NegativeSpacer { n, j, m: self.m[n], eps_h });
            }
            row.push(s);
            prev = cur;
        }
        Ok(row)
    }

    /// Frequencies j·h_n + s̄_n(j) for j = 0..p_n−1, via the prefix sums.
    /// By telescoping these equal ω_n(j) − ω_n(0) up to working precision.
    pub fn frequencies(
        &self,
        ctx: &Ctx,
        n: usize,
        h_n: &BigFloat,
    ) -> Result<Vec<BigFloat>, StaircaseError> {
        let row = self.spacers_from_omega(ctx, n, h_n)?;
        let p = self.p[n] as usize;
        let mut out = Vec::with_capacity(p);
        out.push(ctx.from_u64(0));
        let mut sbar = ctx.from_u64(0);
        for (j, s) in row.iter().take(p - 1).enumerate() {
            sbar = ctx.add(&sbar, s);
            out.push(ctx.add(&ctx.mul_u64(h_n, j as u64 + 1), &sbar));
        }
        Ok(out)
    }

    /// Heights h_0..h_up_to of the induced construction (h_0 = 1).
    pub fn heights(&self, ctx: &Ctx, up_to: usize) -> Result<Vec<BigFloat>, StaircaseError> {
        let up_to = up_to.min(self.stages());
        let mut hs = vec![ctx.from_u64(1)];
        for n in 0..up_to {
            let row = self.spacers_from_omega(ctx, n, &hs[n])?;
            let mut h = ctx.mul_u64(&hs[n], u64::from(self.p[n]));
            for s in &row {
                h = ctx.add(&h, s);
            }
            hs.push(h);
        }
        Ok(hs)
    }

    /// The induced rank-one specification over the first `n_stages` stages.
    pub fn to_spec(&self, ctx: &Ctx, n_stages: usize) -> Result<RankOneSpec, StaircaseError> {
        let hs = self.heights(ctx, n_stages)?;
        let mut rows = Vec::with_capacity(n_stages);
        for n in 0..n_stages {
            let row = self.spacers_from_omega(ctx, n, &hs[n])?;
            rows.push(row.into_iter().map(Value::Approx).collect());
        }
        Ok(RankOneSpec::new(self.p[..n_stages].to_vec(), rows, Value::from_u64(1))
            .expect("staircase rows are shape-correct and nonnegative"))
    }

    /// Per-stage frequency cache for fast evaluation paths.
    pub fn stage_frequencies(&self, ctx: &Ctx, n: usize) -> Result<StageFrequencies, StaircaseError> {
        let p = self.p[n] as usize;
        let mut omega_big = Vec::with_capacity(p);
        for j in 0..p as u32 {
            omega_big.push(self.omega(ctx, n, j)?);
        }
        let rel_big: Vec<BigFloat> =
            omega_big.iter().map(|w| ctx.sub(w, &omega_big[0])).collect();
        let omega_dd: Vec<Dd> = omega_big.iter().map(|w| ctx.to_dd(w)).collect();
        let rel_dd: Vec<Dd> = rel_big.iter().map(|w| ctx.to_dd(w)).collect();
        let max_abs_omega = omega_dd.iter().map(|d| d.hi.abs()).fold(0.0, f64::max);
        Ok(StageFrequencies { omega_big, rel_big, omega_dd, rel_dd, max_abs_omega })
    }

    /// Prikhodko subclass membership h_n^β ≥ p_n ≥ h_n^{1+α} per stage.
    /// Caller contract: α ∈ (0, 1/4), β ≥ 2.
    pub fn prikhodko_subclass_check(
        &self,
        ctx: &Ctx,
        heights: &[BigFloat],
        alpha: Rational,
        beta: Rational,
    ) -> ValidityReport {
        let mut conditions = Vec::new();
        let pow = |h: &BigFloat, q: Rational, plus_one: bool| {
            let mut e = ctx.from_ratio(*q.numer(), *q.denom());
            if plus_one {
                e = ctx.add(&e, &ctx.from_u64(1));
            }
            ctx.exp(&ctx.mul(&e, &ctx.ln(h)))
        };
        // exp(q·ln h) is inexact, so equality at a bound (a documented case)
        // lands within a rounding error of zero; tolerate that and no more
        let rel_tol = 10f64.powi(-(ctx.digits() as i32 - 10));
        for n in 0..self.stages().min(heights.len()) {
            let p_big = ctx.from_u64(u64::from(self.p[n]));
            let h_beta = pow(&heights[n], beta, false);
            let upper = ctx.to_f64(&ctx.sub(&h_beta, &p_big));
            conditions.push(ConditionCheck {
                name: format!("n={n}: h^beta >= p"),
                pass: upper >= -ctx.to_f64(&h_beta).abs() * rel_tol,
                margin: upper,
            });
            let h_alpha = pow(&heights[n], alpha, true);
            let lower = ctx.to_f64(&ctx.sub(&p_big, &h_alpha));
            conditions.push(ConditionCheck {
                name: format!("n={n}: p >= h^(1+alpha)"),
                pass: lower >= -ctx.to_f64(&h_alpha).abs() * rel_tol,
                margin: lower,
            });
        }
        ValidityReport {
            conditions,
            finiteness_terms: Vec::new(),
            finiteness_partial_sums: Vec::new(),
            plausibly_finite_heuristic: None,
        }
    }
}

/// Cached per-stage frequency data: ω_n(j) (variant-applied) and the
/// variant-independent relative frequencies ω_n(j) − ω_n(0), in extended
/// precision and as double-double pairs for the fast phase path.
pub struct StageFrequencies {
    pub omega_big: Vec<BigFloat>,
    pub rel_big: Vec<BigFloat>,
    pub omega_dd: Vec<Dd>,
    pub rel_dd: Vec<Dd>,
    pub max_abs_omega: f64,
}

/// Shipped parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Preset {
    /// Tiny stages for exhaustive tests: p = (4, 6, 8, 12).
    Mini,
    /// Desk-scale CLT preset: p = (64, 256, 1024), |ω| ≤ 10^12.
    Desk,
    /// Six equal stages p = 64 for the singularity-trend scan.
    DeskDeep,
    /// Mid-scale chain with dyadic ε: p = (16, 32, 64, 128).
    PaperMain,
    /// p_n = n, ε_n = 1/n², m_n = ⌈h_n/n²⌉ over n = 3..12.
    Remark,
}

impl Preset {
    pub fn all() -> [Preset; 5] {
        [Preset::Mini, Preset::Desk, Preset::DeskDeep, Preset::PaperMain, Preset::Remark]
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Mini => "mini",
            Preset::Desk => "desk",
            Preset::DeskDeep => "desk-deep",
            Preset::PaperMain => "paper-main",
            Preset::Remark => "remark",
        }
    }

    pub fn from_name(s: &str) -> Result<Self, StaircaseError> {
        Preset::all()
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| StaircaseError::UnknownPreset(s.to_string()))
    }

    /// Materialize the preset's parameters (m is derived from the height
    /// chain, so this walks the construction at working precision).
    pub fn params(self, ctx: &Ctx) -> StaircaseParams {
        match self {
            Preset::Mini => chain_params(
                ctx,
                &[4, 6, 8, 12],
                &[Rational::new(1, 2), Rational::new(1, 3), Rational::new(1, 4), Rational::new(1, 6)],
            ),
            Preset::Desk => chain_params(
                ctx,
                &[64, 256, 1024],
                &[Rational::new(1, 512), Rational::new(1, 8192), Rational::new(1, 64)],
            ),
            Preset::DeskDeep => chain_params(ctx, &[64; 6], &[Rational::new(1, 2); 6]),
            Preset::PaperMain => chain_params(
                ctx,
                &[16, 32, 64, 128],
                &[Rational::new(1, 2), Rational::new(1, 4), Rational::new(1, 8), Rational::new(1, 16)],
            ),
            Preset::Remark => {
                let p: Vec<u32> = (3..=12).collect();
                let eps: Vec<Rational> =
                    (3u64..=12).map(|n| Rational::new(1, n * n)).collect();
                chain_params(ctx, &p, &eps)
            }
        }
    }
}

/// Build m_n = ⌈ε_n·h_n⌉ along the height chain (h_0 = 1).
fn chain_params(ctx: &Ctx, p: &[u32], eps: &[Rational]) -> StaircaseParams {
    let mut m = Vec::with_capacity(p.len());
    let mut h = ctx.from_u64(1);
    for (&pn, &en) in p.iter().zip(eps) {
        let eh = ctx.mul(&ctx.from_ratio(*en.numer(), *en.denom()), &h);
        let mn = ctx.to_f64(&eh.ceil()) as u64;
        let mn = mn.max(1);
        m.push(mn);
        // h_{n+1} = h_n·p_n + Σ spacers = scale·(exp(ε_n) − 1), telescoped
        let num = u128::from(mn) * u128::from(pn) * u128::from(*en.denom()).pow(2);
        let den = u128::from(*en.numer()).pow(2);
        let scale = ctx.div(&ctx.from_u128(num), &ctx.from_u128(den));
        let grow = ctx.sub(&ctx.exp(&ctx.from_ratio(*en.numer(), *en.denom())), &ctx.from_u64(1));
        h = ctx.mul(&scale, &grow);
    }
    StaircaseParams::new(m.clone(), p.to_vec(), eps.to_vec(), Variant::Theorem)
        .expect("preset shapes are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> Ctx {
        Ctx::new(60)
    }

    fn small_params(variant: Variant) -> StaircaseParams {
        StaircaseParams::new(vec![4], vec![2], vec![Rational::new(1, 2)], variant).unwrap()
    }

    fn assert_close(ctx: &Ctx, got: &BigFloat, want: &str, tol: f64) {
        let w = ctx.parse_dec(want).unwrap();
        let d = ctx.to_f64(&ctx.sub(got, &w).abs());
        assert!(d < tol, "got {} want {want} (|diff| = {d:.3e})", ctx.format_dec(got));
    }

    #[test]
    fn omega_closed_form_values() {
        let ctx = ctx();
        let minus = small_params(Variant::TypeIMinusOne);
        assert!(minus.omega(&ctx, 0, 0).unwrap().is_zero());
        let theorem = small_params(Variant::Theorem);
        assert_eq!(ctx.to_f64(&theorem.omega(&ctx, 0, 0).unwrap()), 32.0);
        assert_close(
            &ctx,
            &minus.omega(&ctx, 0, 1).unwrap(),
            "9.08881333400772749034945817799796666676098768900681885496023",
            1e-55,
        );
    }

    #[test]
    fn omega_rejects_out_of_range_index() {
        let ctx = ctx();
        let params = small_params(Variant::Theorem);
        assert!(params.omega(&ctx, 0, 2).is_ok(), "extension to j = p_n is allowed");
        assert!(matches!(
            params.omega(&ctx, 0, 3),
            Err(StaircaseError::OmegaRange { j: 3, p: 2, .. })
        ));
    }

    #[test]
    fn spacer_row_matches_oracle() {
        let ctx = ctx();
        let params = small_params(Variant::Theorem);
        let row = params.spacers_from_omega(&ctx, 0, &ctx.from_u64(4)).unwrap();
        assert_eq!(row.len(), 2);
        assert_close(
            &ctx,
            &row[0],
            "5.08881333400772749034945817799796666676098768900681885496023",
            1e-55,
        );
        assert_close(
            &ctx,
            &row[1],
            "7.67026732839637320880736703205526762615984753371791751544230",
            1e-55,
        );
    }

    #[test]
    fn spacer_rows_are_variant_independent_bitwise() {
        let ctx = ctx();
        let h = ctx.from_ratio(9, 2);
        let a = small_params(Variant::Theorem).spacers_from_omega(&ctx, 0, &h).unwrap();
        let b = small_params(Variant::TypeIMinusOne).spacers_from_omega(&ctx, 0, &h).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(ctx.cmp(x, y), core::cmp::Ordering::Equal);
        }
    }

    #[test]
    fn negative_spacer_errors_name_condition_one() {
        let ctx = ctx();
        // m = 1, eps = 1/2, h = 4: eps·h = 2 > m, so the first increment
        // m/eps = 2 < h forces a negative spacer
        let params =
            StaircaseParams::new(vec![1], vec![2], vec![Rational::new(1, 2)], Variant::Theorem)
                .unwrap();
        let err = params.spacers_from_omega(&ctx, 0, &ctx.from_u64(4)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("condition (1)"), "diagnostic should name the condition: {msg}");
    }

    #[test]
    fn frequencies_telescope_to_omega_differences() {
        let ctx = ctx();
        for preset in [Preset::Mini, Preset::PaperMain] {
            let params = preset.params(&ctx);
            let hs = params.heights(&ctx, params.stages()).unwrap();
            for n in 0..params.stages() {
                let freqs = params.frequencies(&ctx, n, &hs[n]).unwrap();
                let w0 = params.omega(&ctx, n, 0).unwrap();
                for (j, f) in freqs.iter().enumerate() {
                    let direct = ctx.sub(&params.omega(&ctx, n, j as u32).unwrap(), &w0);
                    let d = ctx.to_f64(&ctx.sub(f, &direct).abs());
                    assert!(d < 1e-50, "{} n={n} j={j}: {d:.3e}", preset.name());
                }
            }
        }
    }

    #[test]
    fn omega_is_strictly_increasing_with_min_increment() {
        let ctx = ctx();
        let params = Preset::Mini.params(&ctx);
        for n in 0..params.stages() {
            let m_over_eps = ctx.from_ratio(
                params.m(n) * *params.eps(n).denom(),
                *params.eps(n).numer(),
            );
            for j in 0..params.p(n) {
                let inc = ctx.sub(
                    &params.omega(&ctx, n, j + 1).unwrap(),
                    &params.omega(&ctx, n, j).unwrap(),
                );
                assert!(!inc.is_negative() && !inc.is_zero());
                assert!(!ctx.sub(&inc, &m_over_eps).is_negative(), "increment >= m/eps");
            }
        }
    }

    #[test]
    fn preset_m_chains_match_frozen_oracles() {
        let ctx = ctx();
        let cases: [(Preset, &[u64]); 5] = [
            (Preset::Mini, &[1, 4, 22, 134]),
            (Preset::Desk, &[1, 5, 163_851]),
            (Preset::DeskDeep, &[1, 84, 6_976, 579_262, 48_099_787, 3_994_029_433]),
            (Preset::PaperMain, &[1, 11, 200, 6_818]),
            (Preset::Remark, &[1, 2, 6, 22, 99, 537, 3_422, 25_102, 208_496, 1_935_126]),
        ];
        for (preset, want) in cases {
            let params = preset.params(&ctx);
            let got: Vec<u64> = (0..params.stages()).map(|n| params.m(n)).collect();
            assert_eq!(got, want, "{}", preset.name());
        }
    }

    #[test]
    fn preset_heights_match_frozen_oracles() {
        let ctx = ctx();
        let params = Preset::Desk.params(&ctx);
        let hs = params.heights(&ctx, 3).unwrap();
        assert_close(
            &ctx,
            &hs[1],
            "32800.0208435098343118496006245035056852526916143272514279591",
            1e-45,
        );
        assert_close(
            &ctx,
            &hs[2],
            "10486400.0260424614146666202656707085998916845015533831326967",
            1e-42,
        );
        assert_close(
            &ctx,
            &hs[3],
            "10822469496.1288622923461116643892691106083449983395897885062",
            1e-39,
        );

        let params = Preset::DeskDeep.params(&ctx);
        let hs = params.heights(&ctx, 6).unwrap();
        assert_close(
            &ctx,
            &hs[6],
            "663299033341.304917858625905374312202102166075348045660164427",
            1e-37,
        );

        let params = Preset::Mini.params(&ctx);
        let hs = params.heights(&ctx, 4).unwrap();
        assert_close(
            &ctx,
            &hs[4],
            "10498.5915799665145079023322843358863694339988258459363302994",
            1e-45,
        );
    }

    #[test]
    fn desk_omega_respects_the_cap() {
        let ctx = ctx();
        let params = Preset::Desk.params(&ctx);
        let mut max = 0.0f64;
        for n in 0..params.stages() {
            let w = ctx.to_f64(&params.omega(&ctx, n, params.p(n)).unwrap());
            max = max.max(w.abs());
        }
        assert!(max <= 1.0e12, "desk omega_max = {max:.4e}");
        assert!((max / 6.980_633_742e11 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn desk_validate_reports_eps_nonmonotone() {
        let ctx = ctx();
        let report = Preset::Desk.params(&ctx).validate();
        let eps_row = report.conditions.iter().find(|c| c.name == "eps nonincreasing").unwrap();
        assert!(!eps_row.pass, "the desk eps schedule is deliberately nonmonotone");
        let p_row = report.conditions.iter().find(|c| c.name == "p nondecreasing").unwrap();
        assert!(p_row.pass);
    }

    #[test]
    fn to_spec_round_trips_heights() {
        let ctx = ctx();
        let params = Preset::Mini.params(&ctx);
        let spec = params.to_spec(&ctx, 4).unwrap();
        let hs_spec = spec.derive_heights(&ctx, 4).unwrap();
        let hs_params = params.heights(&ctx, 4).unwrap();
        for (a, b) in hs_spec.iter().zip(&hs_params) {
            let d = ctx.to_f64(&ctx.sub(&a.to_big(&ctx), b).abs());
            assert!(d < 1e-48, "{d:.3e}");
        }
    }

    #[test]
    fn prikhodko_check_examples() {
        let ctx = ctx();
        // p_n = h_n² with β = 2: upper bound holds with equality, lower holds
        let params = StaircaseParams::new(
            vec![1, 1],
            vec![4, 16],
            vec![Rational::new(1, 2), Rational::new(1, 2)],
            Variant::Theorem,
        )
        .unwrap();
        let heights = [ctx.from_u64(2), ctx.from_u64(4)];
        let report =
            params.prikhodko_subclass_check(&ctx, &heights, Rational::new(1, 8), Rational::new(2, 1));
        assert!(report.all_pass());

        // p_n = h_n fails the lower bound p ≥ h^{1+α}
        let params = StaircaseParams::new(
            vec![1],
            vec![4],
            vec![Rational::new(1, 2)],
            Variant::Theorem,
        )
        .unwrap();
        let heights = [ctx.from_u64(4)];
        let report =
            params.prikhodko_subclass_check(&ctx, &heights, Rational::new(1, 8), Rational::new(2, 1));
        assert!(!report.all_pass());
    }

    #[test]
    fn stage_frequency_cache_is_consistent() {
        let ctx = ctx();
        let params = Preset::Desk.params(&ctx);
        let sf = params.stage_frequencies(&ctx, 0).unwrap();
        assert_eq!(sf.omega_dd.len(), 64);
        assert!(sf.rel_dd[0].hi == 0.0);
        let w5 = ctx.sub(&params.omega(&ctx, 0, 5).unwrap(), &params.omega(&ctx, 0, 0).unwrap());
        assert!((sf.rel_dd[5].hi - ctx.to_f64(&w5)).abs() < 1e-9);
        assert!(sf.max_abs_omega > 1e7);
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::all() {
            assert_eq!(Preset::from_name(p.name()).unwrap(), p);
        }
        assert!(Preset::from_name("no-such-preset").is_err());
    }
}
