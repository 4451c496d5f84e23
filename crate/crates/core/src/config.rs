//! Run configuration: one JSON document describing a flow specification and
//! the knobs shared by the command-line tools.
//!
//! Two spec sources coexist in the same file:
//! * explicit cutting-and-stacking data under `cuts`, `spacers`,
//!   `base_height`, and
//! * a staircase family under `staircase.*`: a named preset, raw parameter
//!   arrays `m`/`p`/`eps`, or a preset with arrays overriding it, plus
//!   `staircase.variant` selecting the ω form.
//!
//! Scalars that must stay exact (spacers, base height, ε) accept either a
//! JSON number or a rational string `"a/b"`. Strings parse to exact
//! rationals; numbers are taken at their exact binary value, so `0.5` is the
//! rational 1/2 but `0.1` is the dyadic 3602879701896397/2⁵⁵, so prefer
//! strings for non-dyadic fractions. Remaining keys: `precision_digits`
//! (extended-precision working digits, default 60), `kernel.s`
//! (reference-measure scale), and `quadrature.budget` / `quadrature.cutoff`
//! (node cap and truncation Θ for deterministic integration).

use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Deserialize;
use thiserror::Error;

use crate::flowspec::{FlowspecError, RankOneSpec};
use crate::prec::{Ctx, Value};
use crate::staircase::{Preset, Rational, StaircaseError, StaircaseParams, Variant};

/// Default working precision in decimal digits.
pub const DEFAULT_PRECISION_DIGITS: u32 = 60;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("key {key}: {message}")]
    Key { key: &'static str, message: String },
    #[error(transparent)]
    Spec(#[from] FlowspecError),
    #[error(transparent)]
    Staircase(#[from] StaircaseError),
}

fn key_err(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Key { key, message: message.into() }
}

/// A scalar that is either a JSON number or a rational string `"a/b"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

fn parse_rational(s: &str, key: &'static str) -> Result<BigRational, ConfigError> {
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s.trim(), "1"),
    };
    let n: BigInt = num
        .parse()
        .map_err(|_| key_err(key, format!("bad integer {num:?} in rational")))?;
    let d: BigInt = den
        .parse()
        .map_err(|_| key_err(key, format!("bad integer {den:?} in rational")))?;
    if d.is_zero() {
        return Err(key_err(key, "zero denominator"));
    }
    Ok(BigRational::new(n, d))
}

impl Scalar {
    /// Exact value: strings as written, numbers at their binary value.
    fn to_value(&self, key: &'static str) -> Result<Value, ConfigError> {
        match self {
            Scalar::Number(x) => {
                let q = BigRational::from_float(*x)
                    .ok_or_else(|| key_err(key, format!("{x} is not finite")))?;
                Ok(Value::Exact(q))
            }
            Scalar::Text(s) => Ok(Value::Exact(parse_rational(s, key)?)),
        }
    }

    fn to_f64(&self, key: &'static str) -> Result<f64, ConfigError> {
        match self {
            Scalar::Number(x) => Ok(*x),
            Scalar::Text(s) => {
                let q = parse_rational(s, key)?;
                q.to_f64().ok_or_else(|| key_err(key, "rational out of double range"))
            }
        }
    }

    /// Positive rational with u64 parts, for ε sequences.
    fn to_ratio(&self, key: &'static str) -> Result<Rational, ConfigError> {
        let value = self.to_value(key)?;
        let q = value.as_exact().expect("to_value is always exact");
        if !q.is_positive() {
            return Err(key_err(key, format!("{q} is not positive")));
        }
        let numer = q.numer().to_u64();
        let denom = q.denom().to_u64();
        match (numer, denom) {
            (Some(a), Some(b)) => Ok(Rational::new(a, b)),
            _ => Err(key_err(key, format!("{q} does not fit u64/u64"))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// Scale s of the reference measure μ_s.
    #[serde(default)]
    pub s: Option<Scalar>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    /// Node-count cap for deterministic integration.
    #[serde(default)]
    pub budget: Option<usize>,
    /// Truncation Θ of the integration domain [−Θ, Θ].
    #[serde(default)]
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaircaseSection {
    /// Named parameter set; see [`Preset`].
    #[serde(default)]
    pub preset: Option<String>,
    /// ω form override: "theorem" or "type-i".
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub m: Option<Vec<u64>>,
    #[serde(default)]
    pub p: Option<Vec<u32>>,
    #[serde(default)]
    pub eps: Option<Vec<Scalar>>,
}

impl StaircaseSection {
    fn is_empty(&self) -> bool {
        self.preset.is_none()
            && self.variant.is_none()
            && self.m.is_none()
            && self.p.is_none()
            && self.eps.is_none()
    }
}

/// Parsed configuration tree. All sections optional; accessors apply
/// defaults and cross-key validation.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub cuts: Option<Vec<u32>>,
    #[serde(default)]
    pub spacers: Option<Vec<Vec<Scalar>>>,
    #[serde(default)]
    pub base_height: Option<Scalar>,
    #[serde(default)]
    pub precision_digits: Option<u32>,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub staircase: StaircaseSection,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Config, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Working precision in decimal digits (default 60).
    pub fn precision(&self) -> u32 {
        self.precision_digits.unwrap_or(DEFAULT_PRECISION_DIGITS)
    }

    pub fn kernel_s(&self) -> Result<Option<f64>, ConfigError> {
        self.kernel.s.as_ref().map(|s| s.to_f64("kernel.s")).transpose()
    }

    /// Explicit cutting-and-stacking spec, when `cuts` is present.
    ///
    /// `spacers` must accompany `cuts`; `base_height` defaults to 1.
    pub fn explicit_spec(&self) -> Result<Option<RankOneSpec>, ConfigError> {
        let cuts = match &self.cuts {
            Some(c) => c.clone(),
            None => {
                if self.spacers.is_some() || self.base_height.is_some() {
                    return Err(key_err("cuts", "required when spacers/base_height are given"));
                }
                return Ok(None);
            }
        };
        let rows = self
            .spacers
            .as_ref()
            .ok_or_else(|| key_err("spacers", "required when cuts is given"))?;
        let spacers = rows
            .iter()
            .map(|row| row.iter().map(|s| s.to_value("spacers")).collect())
            .collect::<Result<Vec<Vec<Value>>, _>>()?;
        let base = match &self.base_height {
            Some(s) => s.to_value("base_height")?,
            None => Value::from_u64(1),
        };
        Ok(Some(RankOneSpec::new(cuts, spacers, base)?))
    }

    /// Staircase parameters from `staircase.*`, when the section is present.
    ///
    /// A preset seeds the sequences; any of `m`/`p`/`eps` replaces its
    /// sequence wholesale (all present arrays must share one length, and a
    /// non-overridden preset sequence must already have that length). With
    /// no preset, all three arrays are required.
    pub fn staircase_params(&self, ctx: &Ctx) -> Result<Option<StaircaseParams>, ConfigError> {
        let section = &self.staircase;
        if section.is_empty() {
            return Ok(None);
        }
        let base = section
            .preset
            .as_deref()
            .map(Preset::from_name)
            .transpose()?
            .map(|preset| preset.params(ctx));

        let eps_override = section
            .eps
            .as_ref()
            .map(|v| v.iter().map(|s| s.to_ratio("staircase.eps")).collect())
            .transpose()?;

        let (m, p, eps) = match &base {
            Some(params) => {
                let stages = params.stages();
                let m = section.m.clone().unwrap_or_else(|| (0..stages).map(|n| params.m(n)).collect());
                let p = section.p.clone().unwrap_or_else(|| (0..stages).map(|n| params.p(n)).collect());
                let eps: Vec<Rational> =
                    eps_override.unwrap_or_else(|| (0..stages).map(|n| params.eps(n)).collect());
                (m, p, eps)
            }
            None => {
                let m = section
                    .m
                    .clone()
                    .ok_or_else(|| key_err("staircase.m", "required without a preset"))?;
                let p = section
                    .p
                    .clone()
                    .ok_or_else(|| key_err("staircase.p", "required without a preset"))?;
                let eps = eps_override
                    .ok_or_else(|| key_err("staircase.eps", "required without a preset"))?;
                (m, p, eps)
            }
        };
        if m.len() != p.len() || m.len() != eps.len() {
            return Err(key_err(
                "staircase",
                format!(
                    "sequence lengths disagree: m has {}, p has {}, eps has {}",
                    m.len(),
                    p.len(),
                    eps.len()
                ),
            ));
        }

        let variant = match section.variant.as_deref() {
            None => base.as_ref().map(StaircaseParams::variant).unwrap_or(Variant::Theorem),
            Some(name) => Variant::from_name(name)
                .ok_or_else(|| key_err("staircase.variant", format!("unknown variant {name:?}")))?,
        };
        Ok(Some(StaircaseParams::new(m, p, eps, variant)?))
    }

    /// The flow specification this config describes: explicit data wins,
    /// else the staircase section materialized over all its stages.
    pub fn spec(&self, ctx: &Ctx) -> Result<Option<RankOneSpec>, ConfigError> {
        if let Some(spec) = self.explicit_spec()? {
            return Ok(Some(spec));
        }
        match self.staircase_params(ctx)? {
            Some(params) => {
                let stages = params.stages();
                Ok(Some(params.to_spec(ctx, stages)?))
            }
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = Config::from_json("{}").unwrap();
        assert_eq!(cfg.precision(), 60);
        assert!(cfg.kernel_s().unwrap().is_none());
        assert!(cfg.explicit_spec().unwrap().is_none());
        let ctx = Ctx::new(60);
        assert!(cfg.staircase_params(&ctx).unwrap().is_none());
        assert!(cfg.spec(&ctx).unwrap().is_none());
    }

    #[test]
    fn explicit_spec_parses_rational_strings() {
        let cfg = Config::from_json(
            r#"{
                "cuts": [2, 3],
                "spacers": [[1, 1], [0, "1/2", 2]],
                "base_height": "3/2",
                "precision_digits": 80
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.precision(), 80);
        let spec = cfg.explicit_spec().unwrap().unwrap();
        assert!(spec.is_exact());
        assert_eq!(spec.cuts(), &[2, 3]);
        let row = spec.spacer_row(1).unwrap();
        let half = row[1].as_exact().unwrap();
        assert_eq!(*half, BigRational::new(BigInt::from(1), BigInt::from(2)));
        let base = spec.base_height().as_exact().unwrap();
        assert_eq!(*base, BigRational::new(BigInt::from(3), BigInt::from(2)));
    }

    #[test]
    fn numbers_keep_their_binary_value() {
        let cfg = Config::from_json(
            r#"{"cuts": [1], "spacers": [[0.5]], "base_height": 1}"#,
        )
        .unwrap();
        let spec = cfg.explicit_spec().unwrap().unwrap();
        let v = spec.spacer_row(0).unwrap()[0].as_exact().unwrap().clone();
        assert_eq!(v, BigRational::new(BigInt::from(1), BigInt::from(2)));
    }

    #[test]
    fn preset_with_variant_override() {
        let ctx = Ctx::new(60);
        let cfg = Config::from_json(
            r#"{"staircase": {"preset": "mini", "variant": "type-i-minus-one"}}"#,
        )
        .unwrap();
        let params = cfg.staircase_params(&ctx).unwrap().unwrap();
        assert_eq!(params.stages(), 4);
        assert_eq!(params.p(0), 4);
        assert_eq!(params.variant(), Variant::TypeIMinusOne);
        // spec materializes over all stages
        let spec = cfg.spec(&ctx).unwrap().unwrap();
        assert_eq!(spec.stages(), 4);
    }

    #[test]
    fn raw_arrays_without_preset() {
        let ctx = Ctx::new(60);
        let cfg = Config::from_json(
            r#"{"staircase": {"m": [4], "p": [2], "eps": ["1/2"]}}"#,
        )
        .unwrap();
        let params = cfg.staircase_params(&ctx).unwrap().unwrap();
        assert_eq!(params.m(0), 4);
        assert_eq!(params.eps(0), Rational::new(1, 2));
        assert_eq!(params.variant(), Variant::Theorem);
    }

    #[test]
    fn preset_with_partial_override_must_match_length() {
        let ctx = Ctx::new(60);
        let cfg = Config::from_json(
            r#"{"staircase": {"preset": "mini", "m": [1, 2]}}"#,
        )
        .unwrap();
        let err = cfg.staircase_params(&ctx).unwrap_err();
        assert!(matches!(err, ConfigError::Key { key: "staircase", .. }), "{err}");
        let cfg = Config::from_json(
            r#"{"staircase": {"preset": "mini", "m": [1, 2, 3, 4]}}"#,
        )
        .unwrap();
        let params = cfg.staircase_params(&ctx).unwrap().unwrap();
        assert_eq!(params.m(3), 4);
        assert_eq!(params.p(3), 12);
    }

    #[test]
    fn diagnostics_carry_position_and_key() {
        let err = Config::from_json("{\n  \"cuts\": [2,\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
        let err = Config::from_json(r#"{"unknown_key": 1}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));

        let cfg = Config::from_json(r#"{"cuts": [1], "spacers": [["1/0"]]}"#).unwrap();
        let err = cfg.explicit_spec().unwrap_err();
        assert!(matches!(err, ConfigError::Key { key: "spacers", .. }), "{err}");
        let cfg = Config::from_json(r#"{"cuts": [1]}"#).unwrap();
        let err = cfg.explicit_spec().unwrap_err();
        assert!(matches!(err, ConfigError::Key { key: "spacers", .. }));
        let cfg = Config::from_json(r#"{"spacers": [[1]]}"#).unwrap();
        let err = cfg.explicit_spec().unwrap_err();
        assert!(matches!(err, ConfigError::Key { key: "cuts", .. }));
    }

    #[test]
    fn kernel_and_quadrature_sections() {
        let cfg = Config::from_json(
            r#"{"kernel": {"s": "1/4"}, "quadrature": {"budget": 100000, "cutoff": 2000.0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.kernel_s().unwrap(), Some(0.25));
        assert_eq!(cfg.quadrature.budget, Some(100_000));
        assert_eq!(cfg.quadrature.cutoff, Some(2000.0));
    }

    #[test]
    fn bad_staircase_inputs_are_typed() {
        let ctx = Ctx::new(60);
        for (text, needle) in [
            (r#"{"staircase": {"preset": "nope"}}"#, "preset"),
            (r#"{"staircase": {"m": [1], "p": [2], "eps": ["0/3"]}}"#, "positive"),
            (r#"{"staircase": {"m": [1], "p": [2]}}"#, "eps"),
            (r#"{"staircase": {"variant": "fancy", "preset": "mini"}}"#, "variant"),
        ] {
            let cfg = Config::from_json(text).unwrap();
            let err = cfg.staircase_params(&ctx).unwrap_err();
            assert!(format!("{err}").contains(needle), "{text} -> {err}");
        }
    }
}
