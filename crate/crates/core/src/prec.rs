//! Extended-precision context and the scalar type used across the crate.
//!
//! Every contractual number is produced at a configured decimal precision
//! (default 60 digits). Internally the context carries 64 extra guard bits:
//! the telescoping identities cancel quantities of size 10^12, and without
//! guard bits a 60-digit target would leave only ~10^-48 of headroom where
//! the contract asks for 10^-50 residuals.
//!
//! [`Value`] is the scalar for flow specifications: exact rationals where the
//! construction is rational (integer-spacer test specs, tower oracle), big
//! floats everywhere else. Mixed arithmetic promotes to the float side.

use core::cell::RefCell;
use core::cmp::Ordering;

use astro_float::{BigFloat, Consts, Radix, RoundingMode, Sign, WORD_BIT_SIZE};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::dd::Dd;

/// Bits of headroom above the requested decimal precision.
const GUARD_BITS: usize = 64;

/// log2(10), rounded up at the 6th decimal; used to size the mantissa.
const LOG2_10: f64 = 3.321_929;

#[derive(Debug, Error)]
pub enum PrecError {
    #[error("unparseable numeric literal {0:?}")]
    Parse(String),
    #[error("precision exhausted: {0}")]
    Exhausted(String),
}

/// Extended-precision evaluation context.
///
/// Construction is cheap; the constant cache fills lazily. The cache sits in
/// a `RefCell`, so a context is not `Sync`: concurrent callers create one
/// context per thread (all operations are pure, so results agree).
pub struct Ctx {
    digits: u32,
    bits: usize,
    rm: RoundingMode,
    cc: RefCell<Consts>,
}

impl Ctx {
    /// Context with `digits` significant decimal digits (plus guard bits).
    pub fn new(digits: u32) -> Self {
        let digits = digits.max(1);
        let bits = (digits as f64 * LOG2_10).ceil() as usize + GUARD_BITS;
        Ctx {
            digits,
            bits,
            rm: RoundingMode::ToEven,
            cc: RefCell::new(Consts::new().expect("constant cache allocation")),
        }
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    // ---- constructors ------------------------------------------------

    pub fn from_u64(&self, x: u64) -> BigFloat {
        BigFloat::from_u64(x, self.bits)
    }

    pub fn from_i64(&self, x: i64) -> BigFloat {
        BigFloat::from_i64(x, self.bits)
    }

    pub fn from_u128(&self, x: u128) -> BigFloat {
        BigFloat::from_u128(x, self.bits)
    }

    pub fn from_f64(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.bits)
    }

    /// Exact rational a/b at working precision.
    pub fn from_ratio(&self, a: u64, b: u64) -> BigFloat {
        self.div(&self.from_u64(a), &self.from_u64(b))
    }

    pub fn from_bigint(&self, x: &BigInt) -> BigFloat {
        let v = self.parse_dec(&x.magnitude().to_string()).expect("integer literal");
        if x.is_negative() {
            v.neg()
        } else {
            v
        }
    }

    pub fn from_rational(&self, q: &BigRational) -> BigFloat {
        self.div(&self.from_bigint(q.numer()), &self.from_bigint(q.denom()))
    }

    pub fn parse_dec(&self, s: &str) -> Result<BigFloat, PrecError> {
        let v = BigFloat::parse(s, Radix::Dec, self.bits, self.rm, &mut self.cc.borrow_mut());
        if v.is_nan() {
            Err(PrecError::Parse(s.to_string()))
        } else {
            Ok(v)
        }
    }

    // ---- arithmetic ----------------------------------------------------

    pub fn add(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.bits, self.rm)
    }

    pub fn sub(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.bits, self.rm)
    }

    pub fn mul(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.bits, self.rm)
    }

    pub fn div(&self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.bits, self.rm)
    }

    pub fn mul_u64(&self, a: &BigFloat, k: u64) -> BigFloat {
        self.mul(a, &self.from_u64(k))
    }

    pub fn exp(&self, x: &BigFloat) -> BigFloat {
        x.exp(self.bits, self.rm, &mut self.cc.borrow_mut())
    }

    pub fn ln(&self, x: &BigFloat) -> BigFloat {
        x.ln(self.bits, self.rm, &mut self.cc.borrow_mut())
    }

    pub fn sin(&self, x: &BigFloat) -> BigFloat {
        x.sin(self.bits, self.rm, &mut self.cc.borrow_mut())
    }

    pub fn cos(&self, x: &BigFloat) -> BigFloat {
        x.cos(self.bits, self.rm, &mut self.cc.borrow_mut())
    }

    pub fn sqrt(&self, x: &BigFloat) -> BigFloat {
        x.sqrt(self.bits, self.rm)
    }

    pub fn powi(&self, x: &BigFloat, n: usize) -> BigFloat {
        x.powi(n, self.bits, self.rm)
    }

    pub fn pi(&self) -> BigFloat {
        self.cc.borrow_mut().pi(self.bits, self.rm)
    }

    pub fn two_pi(&self) -> BigFloat {
        self.mul_u64(&self.pi(), 2)
    }

    /// x reduced modulo 2π into roughly (−π, π], carried out with an extra
    /// 64 bits so the cancellation in x − k·2π costs no working precision.
    pub fn mod_two_pi(&self, x: &BigFloat) -> BigFloat {
        let p = self.bits + GUARD_BITS;
        let two_pi = {
            let mut cc = self.cc.borrow_mut();
            cc.pi(p + GUARD_BITS, self.rm).mul(&BigFloat::from_u64(2, p + GUARD_BITS), p + GUARD_BITS, self.rm)
        };
        let k = x.div(&two_pi, p, self.rm).round(0, self.rm).int();
        if k.is_zero() {
            return x.clone();
        }
        let mut r = x.sub(&k.mul(&two_pi, p + GUARD_BITS, self.rm), p, self.rm);
        r.set_precision(self.bits, self.rm).expect("precision shrink");
        r
    }

    // ---- comparisons -----------------------------------------------------

    /// Total order on finite values; panics on NaN (nothing here produces one).
    pub fn cmp(&self, a: &BigFloat, b: &BigFloat) -> Ordering {
        let d = a.cmp(b).expect("comparable values");
        d.cmp(&0)
    }

    pub fn lt(&self, a: &BigFloat, b: &BigFloat) -> bool {
        self.cmp(a, b) == Ordering::Less
    }

    pub fn le(&self, a: &BigFloat, b: &BigFloat) -> bool {
        self.cmp(a, b) != Ordering::Greater
    }

    // ---- exports ---------------------------------------------------------

    /// Nearest-or-close f64 (two top mantissa words, so the error is below
    /// one f64 ulp plus 2^-128 relative).
    pub fn to_f64(&self, x: &BigFloat) -> f64 {
        big_to_f64(x)
    }

    /// Double-double export: hi = f64(x), lo = f64(x − hi).
    pub fn to_dd(&self, x: &BigFloat) -> Dd {
        let hi = big_to_f64(x);
        let lo = big_to_f64(&x.sub(&self.from_f64(hi), self.bits, self.rm));
        Dd::new(hi, lo)
    }

    /// Decimal rendering at full working precision (diagnostics, JSON).
    pub fn format_dec(&self, x: &BigFloat) -> String {
        x.format(Radix::Dec, self.rm, &mut self.cc.borrow_mut())
            .unwrap_or_else(|_| "nan".to_string())
    }
}

pub(crate) fn big_to_f64(x: &BigFloat) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_inf_pos() {
        return f64::INFINITY;
    }
    if x.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    if x.is_zero() {
        return 0.0;
    }
    let (words, _n_bits, sign, exp, _inexact) = x.as_raw_parts().expect("finite value");
    let nw = words.len();
    let wbs = WORD_BIT_SIZE as i32;
    let take = (128 / WORD_BIT_SIZE).max(1).min(nw);
    let mut mant = 0.0f64;
    for i in 0..take {
        mant += libm::scalbn(words[nw - 1 - i] as f64, -wbs * (i as i32 + 1));
    }
    let v = libm::scalbn(mant, exp);
    if sign == Sign::Neg {
        -v
    } else {
        v
    }
}

/// Scalar of a flow specification: exact rational or extended-precision real.
#[derive(Clone, Debug)]
pub enum Value {
    Exact(BigRational),
    Approx(BigFloat),
}

impl Value {
    pub fn from_u64(x: u64) -> Self {
        Value::Exact(BigRational::from_integer(BigInt::from(x)))
    }

    pub fn zero() -> Self {
        Value::Exact(BigRational::zero())
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Value::Exact(_))
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Value::Exact(q) => Some(q),
            Value::Approx(_) => None,
        }
    }

    pub fn to_big(&self, ctx: &Ctx) -> BigFloat {
        match self {
            Value::Exact(q) => ctx.from_rational(q),
            Value::Approx(x) => x.clone(),
        }
    }

    pub fn to_f64(&self, ctx: &Ctx) -> f64 {
        big_to_f64(&self.to_big(ctx))
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Value::Exact(q) => q.is_negative(),
            Value::Approx(x) => x.is_negative() && !x.is_zero(),
        }
    }

    /// Exact + exact stays exact; anything else promotes to the float side.
    pub fn add(&self, other: &Value, ctx: &Ctx) -> Value {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => Value::Exact(a + b),
            _ => Value::Approx(ctx.add(&self.to_big(ctx), &other.to_big(ctx))),
        }
    }

    pub fn mul_u64(&self, k: u64, ctx: &Ctx) -> Value {
        match self {
            Value::Exact(q) => Value::Exact(q * BigRational::from_integer(BigInt::from(k))),
            Value::Approx(x) => Value::Approx(ctx.mul_u64(x, k)),
        }
    }

    pub fn cmp(&self, other: &Value, ctx: &Ctx) -> Ordering {
        match (self, other) {
            (Value::Exact(a), Value::Exact(b)) => a.cmp(b),
            _ => ctx.cmp(&self.to_big(ctx), &other.to_big(ctx)),
        }
    }
}
