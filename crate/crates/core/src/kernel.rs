//! The reference measure μ_s: density, Fourier transform, mass, sampling,
//! and oscillatory quadrature.
//!
//! ```text
//! K_s(θ) = (s/2π)·(sin(sθ/2)/(sθ/2))²,   dμ_s = K_s(θ)dθ,   s ∈ (0,1]
//! ```
//!
//! μ_s is a probability measure whose Fourier transform is the triangle
//! max(1 − |t|/s, 0). Interval masses and tail integrals reduce to the sine
//! integral Si, evaluated here by a power series at 264 bits below 40 (the
//! f64 series loses everything to cancellation long before that) and by the
//! divergent asymptotic expansion above.
//!
//! Everything is deterministic: sampling is rejection from a two-part
//! envelope driven by a counter-based generator keyed on (seed, stream), and
//! quadrature sums panels in a fixed order.

use std::f64::consts::PI;

use astro_float::{BigFloat, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::prec::big_to_f64;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel scale s = {0} outside (0, 1]")]
    InvalidS(f64),
    #[error("interval has negligible measure (mass ~ {mass:.3e} <= 1e-6)")]
    NegligibleMass { mass: f64 },
    #[error("quadrature budget {budget} below the minimum of 16 nodes")]
    BudgetTooSmall { budget: usize },
    #[error("quadrature needs {needed} nodes, budget allows {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
}

/// Gauss-Legendre 4 on [-1, 1]: nodes ±√((3 ∓ 2√(6/5))/7), weights (18 ± √30)/36.
const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_26,
    0.339_981_043_584_856_26,
    0.861_136_311_594_052_6,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_85,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_85,
];

/// Panel width is π/(5·max frequency): ten panels per oscillation of the
/// fastest mode present, keeping the per-panel phase advance at π/5.
const PANELS_PER_HALF_PERIOD: f64 = 5.0;

/// The kernel K_s and its measure μ_s.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FejerKernel {
    s: f64,
}

impl FejerKernel {
    pub fn new(s: f64) -> Result<Self, KernelError> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(KernelError::InvalidS(s));
        }
        Ok(FejerKernel { s })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// K_s(θ), continuous at θ = 0 (sinc → 1).
    pub fn density(&self, theta: f64) -> f64 {
        let x = self.s * theta / 2.0;
        let sinc2 = if x.abs() < 1e-4 {
            1.0 - x * x / 3.0
        } else {
            let r = x.sin() / x;
            r * r
        };
        self.s / (2.0 * PI) * sinc2
    }

    /// ∫ e^{−itθ} dμ_s(θ) = max(1 − |t|/s, 0).
    pub fn ft_triangle(&self, t: f64) -> f64 {
        (1.0 - t.abs() / self.s).max(0.0)
    }

    /// μ_s([lo, hi]); infinite endpoints allowed.
    ///
    /// Uses the antiderivative ∫_0^x K_s = G(sx/2)/π with
    /// G(X) = Si(2X) − sin²(X)/X.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        ((self.g_scaled(hi) - self.g_scaled(lo)) / PI).clamp(0.0, 1.0)
    }

    /// μ_s((−∞, x]).
    pub fn cdf(&self, x: f64) -> f64 {
        (0.5 + self.g_scaled(x) / PI).clamp(0.0, 1.0)
    }

    /// G(s·x/2) with the limits ±π/2 at ±∞.
    fn g_scaled(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            PI / 2.0
        } else if x == f64::NEG_INFINITY {
            -PI / 2.0
        } else {
            g_aux(self.s * x / 2.0)
        }
    }

    /// ∫_{|θ| > Θ} cos(tθ) dμ_s(θ), in closed form via Si.
    ///
    /// Writing cos(tθ)K_s(θ) = (1/πs)[cos(tθ) − ½cos((t+s)θ) − ½cos((t−s)θ)]/θ²
    /// and integrating each cosine by parts over |θ| > Θ gives
    /// E(a) = ∫_{|θ|>Θ} cos(aθ)/θ² dθ = 2[cos(aΘ)/Θ − a(π/2 − Si(aΘ))].
    pub fn tail_cos(&self, t: f64, cutoff: f64) -> f64 {
        let t = t.abs();
        let e = |a: f64| {
            if a == 0.0 {
                2.0 / cutoff
            } else {
                2.0 * ((a * cutoff).cos() / cutoff - a * (PI / 2.0 - si(a * cutoff)))
            }
        };
        (e(t) - 0.5 * e(t + self.s) - 0.5 * e((t - self.s).abs())) / (PI * self.s)
    }

    /// Default truncation radius: tail mass ≤ 4/(πsΘ) ≈ 1.3·10⁻⁴ at Θ = 10⁴/s.
    pub fn default_cutoff(&self) -> f64 {
        1.0e4 / self.s
    }

    /// Node count of a rule over [−Θ, Θ] resolving `max_freq`; the
    /// budget-gating counterpart of [`Self::quadrature_for_frequency`].
    pub fn nodes_needed(&self, cutoff: f64, max_freq: f64) -> usize {
        4 * panel_count(2.0 * cutoff, max_freq.max(self.s))
    }

    /// Materialized rule over [−Θ, Θ] resolving the kernel's own oscillation.
    pub fn quadrature(&self, budget: usize, cutoff: f64) -> Result<QuadratureRule, KernelError> {
        self.quadrature_for_frequency(budget, cutoff, self.s)
    }

    /// Materialized rule over [−Θ, Θ] whose panels resolve phases up to
    /// `max_freq` (callers integrating e^{iωθ}-type factors pass their ω).
    ///
    /// `tail_bound` is the exact μ_s-mass outside [−Θ, Θ] (≤ the envelope
    /// bound 4/(πsΘ)), so Σ weights + tail_bound ≈ 1 to quadrature accuracy.
    pub fn quadrature_for_frequency(
        &self,
        budget: usize,
        cutoff: f64,
        max_freq: f64,
    ) -> Result<QuadratureRule, KernelError> {
        if budget < 16 {
            return Err(KernelError::BudgetTooSmall { budget });
        }
        let panels = panel_count(2.0 * cutoff, max_freq.max(self.s));
        let needed = 4 * panels;
        if needed > budget {
            return Err(KernelError::BudgetExceeded { needed, budget });
        }
        let width = 2.0 * cutoff / panels as f64;
        let half = width / 2.0;
        let mut nodes = Vec::with_capacity(needed);
        let mut weights = Vec::with_capacity(needed);
        for i in 0..panels {
            let center = -cutoff + (i as f64 + 0.5) * width;
            for (x, w) in GL4_NODES.iter().zip(&GL4_WEIGHTS) {
                let node = center + half * x;
                nodes.push(node);
                weights.push(half * w * self.density(node));
            }
        }
        let tail_bound = 1.0 - self.mass(-cutoff, cutoff);
        Ok(QuadratureRule { nodes, weights, tail_bound, cutoff })
    }

    /// ∫_{−Θ}^{Θ} g(θ) dμ_s(θ) by streaming panels (no materialization),
    /// with panels sized for `max_freq`. Fixed summation order.
    pub fn integrate_stream(&self, cutoff: f64, max_freq: f64, g: impl Fn(f64) -> f64) -> f64 {
        let panels = panel_count(2.0 * cutoff, max_freq.max(self.s));
        let width = 2.0 * cutoff / panels as f64;
        let half = width / 2.0;
        let mut acc = 0.0;
        for i in 0..panels {
            let center = -cutoff + (i as f64 + 0.5) * width;
            for (x, w) in GL4_NODES.iter().zip(&GL4_WEIGHTS) {
                let node = center + half * x;
                acc += half * w * self.density(node) * g(node);
            }
        }
        acc
    }

    /// ∫_{−Θ}^{Θ} g dμ_s for even g: streams [0, Θ] and doubles.
    pub fn integrate_even_stream(&self, cutoff: f64, max_freq: f64, g: impl Fn(f64) -> f64) -> f64 {
        let panels = panel_count(cutoff, max_freq.max(self.s));
        let width = cutoff / panels as f64;
        let half = width / 2.0;
        let mut acc = 0.0;
        for i in 0..panels {
            let center = (i as f64 + 0.5) * width;
            for (x, w) in GL4_NODES.iter().zip(&GL4_WEIGHTS) {
                let node = center + half * x;
                acc += half * w * self.density(node) * g(node);
            }
        }
        2.0 * acc
    }

    /// ∫ cos(tθ) dμ_s over all of ℝ: streamed quadrature on [−Θ, Θ] plus the
    /// closed-form tail. Agrees with [`Self::ft_triangle`] to quadrature accuracy.
    pub fn integrate_cos(&self, t: f64, cutoff: f64) -> f64 {
        let inner = self.integrate_even_stream(cutoff, t.abs() + self.s, |th| (t * th).cos());
        inner + self.tail_cos(t, cutoff)
    }

    /// `count` i.i.d. draws from μ_s (stream 0).
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        self.sample_stream(f64::NEG_INFINITY, f64::INFINITY, count, seed, 0)
            .expect("the full line has mass 1")
    }

    /// `count` i.i.d. draws from μ_s conditioned on [lo, hi] (stream 0).
    pub fn sample_restricted(
        &self,
        lo: f64,
        hi: f64,
        count: usize,
        seed: u64,
    ) -> Result<Vec<f64>, KernelError> {
        self.sample_stream(lo, hi, count, seed, 0)
    }

    /// Restricted sampling on an explicit stream: (seed, stream) fully
    /// determines the output, so workers can split one seed into disjoint
    /// deterministic substreams.
    pub fn sample_stream(
        &self,
        lo: f64,
        hi: f64,
        count: usize,
        seed: u64,
        stream: u64,
    ) -> Result<Vec<f64>, KernelError> {
        self.sample_stream_counted(lo, hi, count, seed, stream).map(|(xs, _)| xs)
    }

    /// Like [`Self::sample_stream`], additionally reporting the number of
    /// rejection attempts (for acceptance-rate diagnostics).
    pub fn sample_stream_counted(
        &self,
        lo: f64,
        hi: f64,
        count: usize,
        seed: u64,
        stream: u64,
    ) -> Result<(Vec<f64>, u64), KernelError> {
        let mass = self.mass(lo, hi);
        if mass <= 1e-6 {
            return Err(KernelError::NegligibleMass { mass });
        }
        let pieces = self.envelope_pieces(lo, hi);
        let total: f64 = pieces.iter().map(|p| p.mass).sum();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0u64;
        while out.len() < count {
            attempts += 1;
            // one uniform selects the piece and the position inside it
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = pieces.len() - 1;
            for (i, piece) in pieces.iter().enumerate() {
                if u < acc + piece.mass || i == pieces.len() - 1 {
                    chosen = i;
                    break;
                }
                acc += piece.mass;
            }
            let piece = &pieces[chosen];
            let v = ((u - acc) / piece.mass).clamp(0.0, 1.0 - 1e-16);
            let theta = piece.position(v);
            // accept with probability K_s(θ)/envelope(θ)
            if rng.gen::<f64>() * piece.envelope_at(self.s, theta) <= self.density(theta) {
                out.push(theta);
            }
        }
        Ok((out, attempts))
    }

    /// Expected rejection acceptance rate on [lo, hi]:
    /// μ_s([lo, hi]) / envelope-mass([lo, hi]).
    pub fn acceptance_rate(&self, lo: f64, hi: f64) -> f64 {
        let env: f64 = self.envelope_pieces(lo, hi).iter().map(|p| p.mass).sum();
        if env == 0.0 {
            0.0
        } else {
            self.mass(lo, hi) / env
        }
    }

    /// The dominating envelope, cut to [lo, hi]: a uniform cap s/2π on
    /// |θ| ≤ 2/s and quadratic tails 2/(πsθ²) beyond (each of mass 2/π on
    /// the full line). Both pieces dominate K_s pointwise.
    fn envelope_pieces(&self, lo: f64, hi: f64) -> Vec<EnvelopePiece> {
        let cap = 2.0 / self.s;
        let mut pieces = Vec::with_capacity(3);
        // left tail: [lo, hi] ∩ (−∞, −2/s]
        let (a, b) = (lo, hi.min(-cap));
        if a < b {
            let mass = 2.0 / (PI * self.s) * (inv_abs(b) - inv_abs(a));
            pieces.push(EnvelopePiece { kind: PieceKind::TailNeg, a, b, mass });
        }
        // cap: [lo, hi] ∩ [−2/s, 2/s]
        let (a, b) = (lo.max(-cap), hi.min(cap));
        if a < b {
            let mass = self.s / (2.0 * PI) * (b - a);
            pieces.push(EnvelopePiece { kind: PieceKind::Cap, a, b, mass });
        }
        // right tail: [lo, hi] ∩ [2/s, ∞)
        let (a, b) = (lo.max(cap), hi);
        if a < b {
            let mass = 2.0 / (PI * self.s) * (inv_abs(a) - inv_abs(b));
            pieces.push(EnvelopePiece { kind: PieceKind::TailPos, a, b, mass });
        }
        pieces
    }
}

/// 1/|x| with 1/∞ = 0 (envelope tail antiderivative).
fn inv_abs(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x.abs()
    }
}

fn panel_count(total_width: f64, freq: f64) -> usize {
    let width = PI / (PANELS_PER_HALF_PERIOD * freq);
    ((total_width / width).ceil() as usize).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PieceKind {
    TailNeg,
    Cap,
    TailPos,
}

#[derive(Clone, Copy, Debug)]
struct EnvelopePiece {
    kind: PieceKind,
    a: f64,
    b: f64,
    mass: f64,
}

impl EnvelopePiece {
    /// Inverse CDF of the envelope restricted to this piece, v ∈ [0, 1).
    fn position(&self, v: f64) -> f64 {
        match self.kind {
            PieceKind::Cap => self.a + v * (self.b - self.a),
            PieceKind::TailPos => 1.0 / (inv_abs(self.a) - v * (inv_abs(self.a) - inv_abs(self.b))),
            // mirror of TailPos on (−b, −a)
            PieceKind::TailNeg => {
                -1.0 / (inv_abs(self.b) - v * (inv_abs(self.b) - inv_abs(self.a)))
            }
        }
    }

    fn envelope_at(&self, s: f64, theta: f64) -> f64 {
        match self.kind {
            PieceKind::Cap => s / (2.0 * PI),
            PieceKind::TailPos | PieceKind::TailNeg => 2.0 / (PI * s * theta * theta),
        }
    }
}

/// Materialized Gauss-Legendre rule against μ_s on [−Θ, Θ].
///
/// Invariant: Σ weights + tail_bound ∈ [1 − 10⁻⁸, 1 + 10⁻⁸].
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Exact μ_s-mass outside the node range.
    pub tail_bound: f64,
    /// Truncation radius Θ the rule covers.
    pub cutoff: f64,
}

impl QuadratureRule {
    /// Σ w_i·g(θ_i) ≈ ∫_{−Θ}^{Θ} g dμ_s.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * g(*x)).sum()
    }

    /// Σ w_i ≈ μ_s([−Θ, Θ]).
    pub fn mass_in_range(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Sine integral Si(x) = ∫_0^x sin(u)/u du.
///
/// |x| ≤ 40: power series Σ (−1)^k x^{2k+1}/((2k+1)(2k+1)!) at 264 bits
/// (terms reach ~1.5·10^16 at x = 40, so f64 summation would lose all
/// significance; 264 bits keep ~60 digits of headroom).
/// |x| > 40: asymptotic expansion Si = π/2 − f(x)cos(x) − g(x)sin(x),
/// truncated at its smallest term (< 10⁻¹⁶ there).
pub fn si(x: f64) -> f64 {
    if x < 0.0 {
        -si(-x)
    } else if x == 0.0 {
        0.0
    } else if x <= 40.0 {
        si_series(x)
    } else {
        si_asymptotic(x)
    }
}

fn si_series(x: f64) -> f64 {
    const P: usize = 264;
    const RM: RoundingMode = RoundingMode::ToEven;
    let xb = BigFloat::from_f64(x, P);
    let x2 = xb.mul(&xb, P, RM);
    let mut term = xb.clone(); // x^{2k+1}/(2k+1)!
    let mut sum = xb; // k = 0 summand
    for k in 1..=220usize {
        let denom = BigFloat::from_u64((2 * k * (2 * k + 1)) as u64, P);
        term = term.mul(&x2, P, RM).div(&denom, P, RM);
        let summand = term.div(&BigFloat::from_u64((2 * k + 1) as u64, P), P, RM);
        sum = if k % 2 == 1 { sum.sub(&summand, P, RM) } else { sum.add(&summand, P, RM) };
        if big_to_f64(&summand).abs() < 1e-40 {
            break;
        }
    }
    big_to_f64(&sum)
}

fn si_asymptotic(x: f64) -> f64 {
    // f(x) = (1/x)·Σ(−1)^k(2k)!/x^{2k}, g(x) = (1/x²)·Σ(−1)^k(2k+1)!/x^{2k}
    let x2 = x * x;
    let mut f = 0.0;
    let mut g = 0.0;
    let mut tf = 1.0f64; // (2k)!/x^{2k}
    let mut tg = 1.0f64; // (2k+1)!/x^{2k}
    let mut sign = 1.0;
    let mut k = 0u32;
    loop {
        f += sign * tf;
        g += sign * tg;
        let nf = tf * f64::from((2 * k + 1) * (2 * k + 2)) / x2;
        // divergent expansion: stop at the smallest term
        if nf >= tf || nf < 1e-20 {
            break;
        }
        tf = nf;
        tg *= f64::from((2 * k + 2) * (2 * k + 3)) / x2;
        sign = -sign;
        k += 1;
    }
    PI / 2.0 - (f / x) * x.cos() - (g / x2) * x.sin()
}

/// G(x) = Si(2x) − sin²(x)/x (odd; antiderivative of the unit-scale kernel).
fn g_aux(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x < 0.0 {
        -g_aux(-x)
    } else {
        let sn = x.sin();
        si(2.0 * x) - sn * sn / x
    }
}
