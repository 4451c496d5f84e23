//! The central-limit experiment for staircase stage sums and the Θ product
//! machinery behind it.
//!
//! The statistic is
//!
//! ```text
//! S_n(t) = √(2/p_n) Σ_{j<p_n} cos(ω_n(j)·t),
//! ```
//!
//! whose law under t ~ μ_s restricted to a positive-mass interval approaches
//! the standard normal as the stage grows. The companion product
//!
//! ```text
//! Θ_n(x,t) = ∏_{j<p_n} (1 − i·x·√(2/p_n)·cos(ω_n(j)t))
//! ```
//!
//! satisfies |Θ_n| ≤ e^{x²} pointwise and expands into a cosine series over
//! signed frequency words; the expansion is exponential in p_n and therefore
//! capped at small stages.
//!
//! Phase handling matches the Riesz evaluators: double-double products with
//! error-free mod-2π reduction inside the envelope, extended precision
//! beyond it.

use serde::Serialize;
use thiserror::Error;

use crate::dd::{self, Dd};
use crate::kernel::{FejerKernel, KernelError};
use crate::prec::Ctx;
use crate::staircase::{StaircaseError, StaircaseParams, StageFrequencies};

/// theta_expand enumerates (3^p − 1)/2 words; p_n above this is refused.
pub const THETA_EXPANSION_LIMIT: u32 = 10;

#[derive(Debug, Error)]
pub enum CltError {
    #[error(transparent)]
    Staircase(#[from] StaircaseError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("empirical distribution needs at least one sample")]
    EmptySample,
    #[error("theta expansion needs p_n <= {limit}, stage has {p}")]
    ExpansionTooLarge { p: u32, limit: u32 },
}

/// Sorted sample values of a real statistic.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn from_samples(mut values: Vec<f64>) -> Result<Self, CltError> {
        if values.is_empty() {
            return Err(CltError::EmptySample);
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("statistic values are finite"));
        Ok(EmpiricalDistribution { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.count() as f64
    }

    pub fn second_moment(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.count() as f64
    }

    /// Counts per equal-width bin over [lo, hi); values outside are dropped.
    pub fn histogram(&self, lo: f64, hi: f64, bins: usize) -> Vec<u64> {
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in &self.values {
            if v >= lo && v < hi {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        counts
    }
}

/// Standard normal CDF via the C-library erf (sub-ulp rational
/// approximation, so the CDF error is far below the 10⁻⁸ contract).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// sup_x |F_emp(x) − Φ(x)|.
pub fn ks_normal(ed: &EmpiricalDistribution) -> f64 {
    let n = ed.count() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in ed.values().iter().enumerate() {
        let phi = normal_cdf(x);
        d = d.max(phi - i as f64 / n).max((i + 1) as f64 / n - phi);
    }
    d
}

/// Cached stage-n evaluator for S_n, |P_n|, and Θ_n.
pub struct CltStatistic {
    freqs: StageFrequencies,
    p: usize,
    /// √(2/p_n).
    scale: f64,
    /// Fallback context for phases outside the dd envelope.
    hp: Ctx,
}

impl CltStatistic {
    pub fn new(params: &StaircaseParams, ctx: &Ctx, n: usize) -> Result<Self, CltError> {
        let freqs = params.stage_frequencies(ctx, n)?;
        let p = freqs.omega_dd.len();
        Ok(CltStatistic {
            freqs,
            p,
            scale: (2.0 / p as f64).sqrt(),
            hp: Ctx::new(ctx.digits()),
        })
    }

    pub fn stage_size(&self) -> usize {
        self.p
    }

    fn phase(&self, j: usize, t: f64) -> (f64, f64) {
        let w = self.freqs.omega_dd[j];
        if dd::phase_in_envelope(w.hi, t) {
            dd::phase_sin_cos(w, t)
        } else {
            let prod = self.hp.mul(&self.freqs.omega_big[j], &self.hp.from_f64(t));
            self.hp.to_f64(&self.hp.mod_two_pi(&prod)).sin_cos()
        }
    }

    /// S_n(t) = √(2/p_n) Σ cos(ω_n(j)t). Bounded by √2·√p_n in modulus.
    pub fn eval(&self, t: f64) -> f64 {
        let sum: f64 = (0..self.p).map(|j| self.phase(j, t).1).sum();
        self.scale * sum
    }

    /// |P_n(t)| = |Σ e^{iω_n(j)t}|/√p_n. Rotation-invariant, so the relative
    /// frequencies ω_n(j) − ω_n(0) give the same modulus, and it dominates
    /// the statistic: |S_n(t)| = √(2/p)·|Re Σe^{iωt}| ≤ √2·|P_n(t)|.
    pub fn pm_abs(&self, t: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for j in 0..self.p {
            let (s, c) = self.phase(j, t);
            re += c;
            im += s;
        }
        re.hypot(im) / (self.p as f64).sqrt()
    }

    /// Θ_n(x,t) as (re, im).
    pub fn theta(&self, x: f64, t: f64) -> (f64, f64) {
        let c = x * self.scale;
        let (mut re, mut im) = (1.0, 0.0);
        for j in 0..self.p {
            let b = -c * self.phase(j, t).1;
            // (re + i·im)·(1 + i·b)
            let nre = re - im * b;
            let nim = im + re * b;
            re = nre;
            im = nim;
        }
        (re, im)
    }
}

/// One-shot S_n(t).
pub fn clt_statistic(
    params: &StaircaseParams,
    ctx: &Ctx,
    n: usize,
    t: f64,
) -> Result<f64, CltError> {
    Ok(CltStatistic::new(params, ctx, n)?.eval(t))
}

/// One-shot Θ_n(x,t).
pub fn theta_eval(
    params: &StaircaseParams,
    ctx: &Ctx,
    n: usize,
    x: f64,
    t: f64,
) -> Result<(f64, f64), CltError> {
    Ok(CltStatistic::new(params, ctx, n)?.theta(x, t))
}

/// Outcome of sampling S_n over t ~ μ_s restricted to an interval.
#[derive(Clone, Debug, Serialize)]
pub struct CltExperiment {
    /// Drawn times, in draw order.
    pub times: Vec<f64>,
    /// S_n at each drawn time, aligned with `times`.
    pub statistics: Vec<f64>,
    pub distribution: EmpiricalDistribution,
    /// sup-distance of the empirical law to the standard normal.
    pub ks: f64,
    /// Mean of S_n² over the samples (tends to 1).
    pub second_moment: f64,
    pub interval: (f64, f64),
}

/// Sample S_n(t) for t ~ μ_s|_A and compare the law to the standard normal.
pub fn clt_experiment(
    params: &StaircaseParams,
    ctx: &Ctx,
    n: usize,
    kernel: &FejerKernel,
    interval: (f64, f64),
    sample_count: usize,
    seed: u64,
) -> Result<CltExperiment, CltError> {
    let stat = CltStatistic::new(params, ctx, n)?;
    let times = kernel.sample_restricted(interval.0, interval.1, sample_count, seed)?;
    let statistics: Vec<f64> = times.iter().map(|&t| stat.eval(t)).collect();
    let distribution = EmpiricalDistribution::from_samples(statistics.clone())?;
    let ks = ks_normal(&distribution);
    let second_moment = distribution.second_moment();
    Ok(CltExperiment { times, statistics, distribution, ks, second_moment, interval })
}

/// A signed frequency word: indices q_1 < … < q_r with signs η, frequency
/// w = Σ η_j ω_n(q_j), and its coefficient ρ_w in the Θ expansion.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaWord {
    pub indices: Vec<u32>,
    /// ±1 per index; the first sign is +1 (w and −w index one cosine).
    pub signs: Vec<i8>,
    pub frequency: f64,
    /// ρ_w = (−i)^r · (x√(2/p))^r / 2^{r−1} as (re, im).
    pub rho: (f64, f64),
}

/// Θ_n(x,·) = 1 + Σ_w ρ_w cos(w·t) over all (3^p − 1)/2 canonical words.
#[derive(Clone, Debug, Serialize)]
pub struct ThetaExpansion {
    pub x: f64,
    pub words: Vec<ThetaWord>,
    #[serde(skip)]
    freq_dd: Vec<Dd>,
}

impl ThetaExpansion {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Reconstruct Θ_n(x,t) from the expansion.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (mut re, mut im) = (1.0, 0.0);
        for (word, w) in self.words.iter().zip(&self.freq_dd) {
            // cos is even, so the envelope check on |w| covers −w
            let cos = if dd::phase_in_envelope(w.hi, t) {
                dd::phase_sin_cos(*w, t).1
            } else {
                (w.hi * t).rem_euclid(2.0 * std::f64::consts::PI).cos()
            };
            re += word.rho.0 * cos;
            im += word.rho.1 * cos;
        }
        (re, im)
    }

    /// Exact coefficient modulus for a length-r word: each cosine splits as
    /// (e^{iwt}+e^{−iwt})/2, so |ρ_w| = (|x|√(2/p))^r/2^{r−1}
    /// = 2^{1−r/2}·|x|^r·p^{−r/2}.
    pub fn coefficient_bound(r: u32, x: f64, p: u32) -> f64 {
        2f64.powf(1.0 - r as f64 / 2.0) * x.abs().powi(r as i32)
            / (f64::from(p)).powf(r as f64 / 2.0)
    }
}

/// Expand Θ_n(x,·) into its cosine series. Exponential in p_n, hence the
/// stage-size cap.
pub fn theta_expand(
    params: &StaircaseParams,
    ctx: &Ctx,
    n: usize,
    x: f64,
) -> Result<ThetaExpansion, CltError> {
    let p = params.p(n);
    if p > THETA_EXPANSION_LIMIT {
        return Err(CltError::ExpansionTooLarge { p, limit: THETA_EXPANSION_LIMIT });
    }
    let freqs = params.stage_frequencies(ctx, n)?;
    let c = x * (2.0 / f64::from(p)).sqrt();
    let mut words = Vec::new();
    let mut freq_dd = Vec::new();
    for mask in 1u32..(1 << p) {
        let indices: Vec<u32> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let r = indices.len() as u32;
        let scale = c.powi(r as i32) / 2f64.powi(r as i32 - 1);
        let rho = match r % 4 {
            0 => (scale, 0.0),
            1 => (0.0, -scale),
            2 => (-scale, 0.0),
            _ => (0.0, scale),
        };
        // canonical signs: the first index carries +1
        for sign_mask in 0u32..(1 << (r - 1)) {
            let signs: Vec<i8> = (0..r)
                .map(|i| if i > 0 && sign_mask & (1 << (i - 1)) != 0 { -1 } else { 1 })
                .collect();
            let mut w = Dd::ZERO;
            for (idx, sg) in indices.iter().zip(&signs) {
                let omega = freqs.omega_dd[*idx as usize];
                w = if *sg > 0 { w.add(omega) } else { w.sub(omega) };
            }
            words.push(ThetaWord {
                indices: indices.clone(),
                signs,
                frequency: w.to_f64(),
                rho,
            });
            freq_dd.push(w);
        }
    }
    Ok(ThetaExpansion { x, words, freq_dd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use crate::staircase::{Preset, Rational, Variant};

    fn ctx() -> Ctx {
        Ctx::new(60)
    }

    fn k1() -> FejerKernel {
        FejerKernel::new(1.0).unwrap()
    }

    fn single_stage(p: u32) -> StaircaseParams {
        StaircaseParams::new(vec![1], vec![p], vec![Rational::new(1, 2)], Variant::Theorem)
            .unwrap()
    }

    #[test]
    fn statistic_at_zero_is_sqrt_2p() {
        let ctx = ctx();
        let desk = Preset::Desk.params(&ctx);
        for (n, p) in [(0usize, 64.0f64), (1, 256.0), (2, 1024.0)] {
            let s = clt_statistic(&desk, &ctx, n, 0.0).unwrap();
            let want = (2.0f64).sqrt() * p.sqrt();
            assert!((s / want - 1.0).abs() < 1e-14, "n={n}: {s} vs {want}");
        }
    }

    #[test]
    fn statistic_matches_frozen_oracles() {
        // references are 100-digit summations at the exact binary value of
        // the f64 literal 1.37, matching the f64 argument contract
        let ctx = ctx();
        let desk = Preset::Desk.params(&ctx);
        let s = clt_statistic(&desk, &ctx, 0, 1.37).unwrap();
        assert!((s - (-0.150_315_394_330_698_74)).abs() < 1e-10, "desk n=0: {s}");
        let s = clt_statistic(&desk, &ctx, 2, 1.37).unwrap();
        assert!((s - 1.390_792_159_481_437_7).abs() < 1e-10, "desk n=2: {s}");

        let mini = Preset::Mini.params(&ctx);
        let s = clt_statistic(&mini, &ctx, 1, 1.37).unwrap();
        assert!((s - 0.338_083_932_573_442_04).abs() < 1e-10, "mini theorem: {s}");
        let mini_t1 = mini.with_variant(Variant::TypeIMinusOne);
        let s = clt_statistic(&mini_t1, &ctx, 1, 1.37).unwrap();
        assert!((s - (-0.356_987_850_794_937_54)).abs() < 1e-10, "mini type-one: {s}");
    }

    #[test]
    fn statistic_is_bounded_and_dominated_by_pm() {
        let ctx = ctx();
        let desk = Preset::Desk.params(&ctx);
        let stat = CltStatistic::new(&desk, &ctx, 1).unwrap();
        let cap = (2.0f64 * 256.0).sqrt();
        for i in 0..200 {
            let t = -3.0 + 0.031 * f64::from(i);
            let s = stat.eval(t);
            assert!(s.abs() <= cap * (1.0 + 1e-12));
            let pm = stat.pm_abs(t);
            assert!(
                s.abs() <= (2.0f64).sqrt() * pm + 1e-9,
                "t={t}: |S|={} vs √2|P|={}",
                s.abs(),
                (2.0f64).sqrt() * pm
            );
        }
    }

    #[test]
    fn pm_modulus_is_rotation_invariant() {
        let ctx = ctx();
        let desk = Preset::Desk.params(&ctx);
        let stat = CltStatistic::new(&desk, &ctx, 1).unwrap();
        let freqs = desk.stage_frequencies(&ctx, 1).unwrap();
        for &t in &[0.3, 1.37, 2.9] {
            // recompute |P| from the relative frequencies ω(j) − ω(0)
            let (mut re, mut im) = (0.0, 0.0);
            for w in &freqs.rel_dd {
                let (s, c) = dd::phase_sin_cos(*w, t);
                re += c;
                im += s;
            }
            let rel = re.hypot(im) / 16.0;
            let abs = stat.pm_abs(t);
            assert!((rel - abs).abs() < 1e-10, "t={t}: {rel} vs {abs}");
        }
    }

    #[test]
    fn degenerate_single_frequency_stage_is_not_gaussian() {
        let ctx = ctx();
        let params = single_stage(1);
        let exp = clt_experiment(&params, &ctx, 0, &k1(), (1.0, 2.0), 4_000, 9).unwrap();
        // √2·cos(ωt) has an arcsine-type law on [−√2, √2]
        assert!(exp.ks > 0.05, "KS {} suspiciously Gaussian", exp.ks);
        let cap = (2.0f64).sqrt();
        assert!(exp.statistics.iter().all(|s| s.abs() <= cap + 1e-12));
    }

    #[test]
    fn desk_first_stage_experiment_sanity() {
        let ctx = ctx();
        let desk = Preset::Desk.params(&ctx);
        let exp = clt_experiment(&desk, &ctx, 0, &k1(), (1.0, 2.0), 2_000, 11).unwrap();
        assert_eq!(exp.times.len(), 2_000);
        assert_eq!(exp.distribution.count(), 2_000);
        assert!(exp.times.iter().all(|t| (1.0..=2.0).contains(t)));
        assert!(exp.ks > 0.1 && exp.ks < 0.35, "KS {}", exp.ks);
        let tol = 5.0 / (2_000.0f64).sqrt();
        assert!((exp.second_moment - 1.0).abs() < tol, "E S² = {}", exp.second_moment);
    }

    #[test]
    fn experiment_rejects_negligible_interval() {
        let ctx = ctx();
        let desk = Preset::Desk.params(&ctx);
        assert!(matches!(
            clt_experiment(&desk, &ctx, 0, &k1(), (5_000.0, 5_001.0), 2_000, 1),
            Err(CltError::Kernel(KernelError::NegligibleMass { .. }))
        ));
    }

    #[test]
    fn ks_of_exact_quantiles_is_half_spacing() {
        let n = 100usize;
        let values: Vec<f64> = (1..=n)
            .map(|i| {
                let target = (i as f64 - 0.5) / n as f64;
                // invert Φ by bisection
                let (mut lo, mut hi) = (-10.0f64, 10.0f64);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if normal_cdf(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        let ed = EmpiricalDistribution::from_samples(values).unwrap();
        assert!((ks_normal(&ed) - 1.0 / (2.0 * n as f64)).abs() < 1e-9);
    }

    #[test]
    fn ks_of_constant_zero_is_one_half() {
        let ed = EmpiricalDistribution::from_samples(vec![0.0]).unwrap();
        assert_eq!(ks_normal(&ed), 0.5);
    }

    #[test]
    fn ks_of_true_normal_draws_obeys_kolmogorov_bound() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let n = 100_000usize;
        let values: Vec<f64> = (0..n / 2)
            .flat_map(|_| {
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen();
                let r = (-2.0 * u1.ln()).sqrt();
                let a = 2.0 * std::f64::consts::PI * u2;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        let ed = EmpiricalDistribution::from_samples(values).unwrap();
        // 99% Kolmogorov quantile
        assert!(ks_normal(&ed) <= 1.95 / (n as f64).sqrt());
    }

    #[test]
    fn theta_trivial_cases() {
        let ctx = ctx();
        let desk = Preset::Desk.params(&ctx);
        let (re, im) = theta_eval(&desk, &ctx, 1, 0.0, 0.73).unwrap();
        assert_eq!((re, im), (1.0, 0.0));

        // p = 1, t = 0: Θ = 1 − i√2·x
        let params = single_stage(1);
        let x = 0.8;
        let (re, im) = theta_eval(&params, &ctx, 0, x, 0.0).unwrap();
        assert!((re - 1.0).abs() < 1e-15);
        assert!((im + x * (2.0f64).sqrt()).abs() < 1e-15);
        let modulus = re.hypot(im);
        assert!((modulus - (1.0 + 2.0 * x * x).sqrt()).abs() < 1e-14);
        assert!(modulus <= (x * x).exp());
    }

    #[test]
    fn theta_modulus_bound_on_sweep() {
        let ctx = ctx();
        let desk = Preset::Desk.params(&ctx);
        let stat = CltStatistic::new(&desk, &ctx, 2).unwrap();
        let cap = 1.0f64.exp();
        for i in 0..200 {
            let t = 0.025 * f64::from(i);
            let (re, im) = stat.theta(1.0, t);
            assert!(re.hypot(im) <= cap * (1.0 + 1e-12), "t={t}");
        }
    }

    #[test]
    fn theta_expansion_counts_coefficients_and_reconstructs() {
        let ctx = ctx();
        let mini = Preset::Mini.params(&ctx);
        let exp = theta_expand(&mini, &ctx, 0, 1.0).unwrap();
        // (3^4 − 1)/2 canonical words for p = 4
        assert_eq!(exp.len(), 40);
        let stat = CltStatistic::new(&mini, &ctx, 0).unwrap();
        for word in &exp.words {
            match word.indices.len() {
                1 => {
                    assert_eq!(word.rho.0, 0.0);
                    assert!((word.rho.1 + (0.5f64).sqrt()).abs() < 1e-15);
                }
                2 => {
                    assert!((word.rho.0 + 0.25).abs() < 1e-15);
                    assert_eq!(word.rho.1, 0.0);
                }
                3 => assert!((word.rho.1 - 0.088_388_347_648_318_44).abs() < 1e-15),
                _ => {
                    assert!((word.rho.0 - 0.03125).abs() < 1e-15);
                    assert_eq!(word.rho.1, 0.0);
                }
            }
        }
        for i in 0..50 {
            let t = -2.0 + 0.08 * f64::from(i);
            let (re, im) = exp.eval(t);
            let (wre, wim) = stat.theta(1.0, t);
            assert!(
                (re - wre).hypot(im - wim) < 1e-12,
                "t={t}: ({re},{im}) vs ({wre},{wim})"
            );
        }

        let zero = theta_expand(&mini, &ctx, 0, 0.0).unwrap();
        assert!(zero.words.iter().all(|w| w.rho == (0.0, 0.0)));
    }

    #[test]
    fn theta_coefficients_meet_exact_bound() {
        let ctx = ctx();
        let params = single_stage(3);
        for &x in &[0.37, 1.0, 2.4] {
            let exp = theta_expand(&params, &ctx, 0, x).unwrap();
            assert_eq!(exp.len(), 13);
            for word in &exp.words {
                let r = word.indices.len() as u32;
                let bound = ThetaExpansion::coefficient_bound(r, x, 3);
                let modulus = word.rho.0.hypot(word.rho.1);
                assert!(modulus <= bound * (1.0 + 1e-9), "r={r}: {modulus} vs {bound}");
                assert!(modulus >= bound * (1.0 - 1e-9), "modulus should be exact");
            }
        }
    }

    #[test]
    fn theta_expansion_refuses_large_stages() {
        let ctx = ctx();
        let params = single_stage(11);
        assert!(matches!(
            theta_expand(&params, &ctx, 0, 1.0),
            Err(CltError::ExpansionTooLarge { p: 11, limit: 10 })
        ));
    }
}
