//! Double-double arithmetic for phase reduction.
//!
//! Frequencies in this crate reach 10^12 and evaluation points 10^4, so the
//! phase θ·ω can be as large as ~10^16 while trig functions need it modulo 2π
//! to near machine precision. A plain f64 product has already lost the answer
//! at that magnitude. The fix is the classical error-free transformation
//! toolkit (Dekker/Veltkamp, no FMA required, hence bit-identical on every
//! target): carry the phase as an unevaluated f64 pair, subtract an integer
//! multiple of a double-double 2π, and only then collapse to f64.
//!
//! The reduction is exact-integer-multiple only while the nearest-integer
//! quotient is exactly representable; [`DD_PHASE_LIMIT`] is that envelope
//! with margin. Callers with |θ·ω| beyond it must use the extended-precision
//! path in [`crate::prec`].

/// Largest |x| for which [`reduce_two_pi`] still subtracts an exact multiple
/// of 2π (quotient < 2^53 with margin).
pub const DD_PHASE_LIMIT: f64 = 4.5e16;

/// High word of 2π (f64 nearest).
pub const TWO_PI_HI: f64 = 6.283185307179586;
/// Low word of 2π: 2π − TWO_PI_HI to f64.
pub const TWO_PI_LO: f64 = 2.449_293_598_294_706_4e-16;

const INV_TWO_PI: f64 = 0.159_154_943_091_895_35;

/// Unevaluated sum hi + lo with |lo| ≤ ulp(hi)/2 after renormalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (s, e) = quick_two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// The dd value of 2π.
    pub fn two_pi() -> Self {
        Dd { hi: TWO_PI_HI, lo: TWO_PI_LO }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            Dd { hi: -self.hi, lo: -self.lo }
        } else {
            self
        }
    }

    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        Dd::new(s, e + self.lo + other.lo)
    }

    pub fn add_f64(self, x: f64) -> Dd {
        let (s, e) = two_sum(self.hi, x);
        Dd::new(s, e + self.lo)
    }

    pub fn sub(self, other: Dd) -> Dd {
        self.add(Dd { hi: -other.hi, lo: -other.lo })
    }

    /// self · x with an exact hi product (Dekker).
    pub fn mul_f64(self, x: f64) -> Dd {
        let (p, e) = two_prod(self.hi, x);
        Dd::new(p, e + self.lo * x)
    }
}

/// Knuth two-sum: a + b = s + e exactly, any magnitudes.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Fast two-sum, requires |a| ≥ |b| (or a = 0).
#[inline]
pub fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Veltkamp split into two 26-bit halves: a = hi + lo exactly.
#[inline]
fn split(a: f64) -> (f64, f64) {
    // 2^27 + 1; valid for |a| < 2^996, far beyond anything reduced here
    let t = 134_217_729.0 * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

/// Dekker product: a·b = p + e exactly, without FMA.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ahi, alo) = split(a);
    let (bhi, blo) = split(b);
    let e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo;
    (p, e)
}

/// x mod 2π collapsed to f64, for |x| ≤ [`DD_PHASE_LIMIT`].
///
/// The quotient is rounded from the high word only, so the result lands in
/// roughly (−π−ulp, π+ulp]; absolute error is a few dd ulps of the inputs
/// (≲ 2·10⁻¹⁵ rad at the envelope edge), not of x.
pub fn reduce_two_pi(x: Dd) -> f64 {
    debug_assert!(x.hi.abs() <= DD_PHASE_LIMIT);
    let k = (x.hi * INV_TWO_PI).round();
    if k == 0.0 {
        return x.hi + x.lo;
    }
    let (p_hi, p_lo) = two_prod(k, TWO_PI_HI);
    let (s, e) = two_sum(x.hi, -p_hi);
    s + (e + x.lo - p_lo - k * TWO_PI_LO)
}

/// sin and cos of θ·ω where ω is held as a dd value.
#[inline]
pub fn phase_sin_cos(freq: Dd, theta: f64) -> (f64, f64) {
    let r = reduce_two_pi(freq.mul_f64(theta));
    r.sin_cos()
}

/// True when the dd fast path is valid for this frequency/point pair.
#[inline]
pub fn phase_in_envelope(freq_hi: f64, theta: f64) -> bool {
    (freq_hi * theta).abs() <= DD_PHASE_LIMIT
}
