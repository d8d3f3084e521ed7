//! Average-case variance model and canonical-norm bounds for BGV noise.
//!
//! A noise polynomial is tracked as a list of [`NoiseTerm`]s, one per
//! (power of `s`, power of `e`) pair, each carrying the coefficient variance
//! of that component. Products combine terms pairwise with the correction
//! `F(ι1, ι2)·F(K1, K2)` that accounts for the shared secret and public-key
//! error; the reference circuit collapses to `(2 + ε)·n·V_ms²`.
//!
//! The fresh variance follows the critical-quantity convention
//! `t²(1/12 + n·Ve·Vu + Ve + n·Ve·Vs)` with no `1/q²` prefactor.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::ring::SamplerKind;

/// `ε = 6/100² + 6/100`.
pub const EPSILON: f64 = 6.0 / 10_000.0 + 6.0 / 100.0;
pub const DEFAULT_ALPHA: f64 = 1.0 / 100.0;
pub const DEFAULT_D: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseContext {
    pub n: usize,
    pub t: u64,
    /// Error variance σ².
    pub ve: f64,
    /// Secret variance.
    pub vs: f64,
    /// Encryption-randomness variance.
    pub vu: f64,
    pub d: f64,
    pub alpha: f64,
}

impl NoiseContext {
    pub fn new(n: usize, t: u64, sigma: f64, secret: SamplerKind, d: f64, alpha: f64) -> Result<Self> {
        let vs = secret.variance(n, 0.0);
        let ctx = Self { n, t, ve: sigma * sigma, vs, vu: vs, d, alpha };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Ternary secrets, σ = 3.19, D = 8, α = 1/100.
    pub fn standard(n: usize, t: u64) -> Self {
        Self { n, t, ve: 3.19 * 3.19, vs: 2.0 / 3.0, vu: 2.0 / 3.0, d: DEFAULT_D, alpha: DEFAULT_ALPHA }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n > 0
            && self.t > 1
            && self.ve > 0.0
            && self.vs > 0.0
            && self.vu > 0.0
            && self.d > 0.0
            && self.alpha > 0.0
            && self.alpha <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("noise context has non-positive entries or α > 1: {self:?}")))
        }
    }

    fn t2(&self) -> f64 {
        (self.t as f64).powi(2)
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `V_ms = t²·n·Vs/12`, the variance of the dominant `δ1·s/p` term.
    pub fn v_ms_fixed_point(&self) -> f64 {
        self.t2() * self.nf() * self.vs / 12.0
    }

    /// Additive modulus-switching variance `t²/12·(1 + n·Vs)`.
    pub fn ms_additive(&self) -> f64 {
        self.t2() / 12.0 * (1.0 + self.nf() * self.vs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Zero,
    Clean,
    Add,
    Const,
    ModSwitch,
    /// Closed form `(2 + ε)·n·V_ms²` for post-ms inputs in the Gaussian regime.
    MultCollapsed,
    /// Term-wise product bound with the `F_s·F_e` corrections.
    MultTermwise,
    KeySwitch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseTerm {
    pub s_degree: u32,
    pub e_degree: u32,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub variance: f64,
    pub log2_variance: f64,
    /// Highest power of the public-key error `e` carried.
    pub e_degree: u32,
    /// Highest power of the secret `s` carried.
    pub s_degree: u32,
    pub rule: Rule,
    /// Set by a modulus switch whose input satisfied `V/p² ≤ α·V_ms`.
    pub gaussian_regime: bool,
    /// `α·V_ms / (ratio²·V)` at a modulus switch; at least 1 when the condition holds.
    pub eq11_margin: Option<f64>,
    pub terms: Vec<NoiseTerm>,
}

impl NoiseEstimate {
    fn from_terms(terms: Vec<NoiseTerm>, rule: Rule) -> Self {
        let terms = merge_terms(terms);
        let variance: f64 = terms.iter().map(|t| t.variance).sum();
        let e_degree = terms.iter().map(|t| t.e_degree).max().unwrap_or(0);
        let s_degree = terms.iter().map(|t| t.s_degree).max().unwrap_or(0);
        Self {
            variance,
            log2_variance: variance.log2(),
            e_degree,
            s_degree,
            rule,
            gaussian_regime: false,
            eq11_margin: None,
            terms,
        }
    }

    pub fn zero() -> Self {
        Self::from_terms(Vec::new(), Rule::Zero)
    }

    /// Adds an independent additive contribution without changing the rule or degree tags.
    pub fn absorb(&self, extra: &NoiseEstimate) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&extra.terms);
        let mut out = Self::from_terms(terms, self.rule);
        out.e_degree = self.e_degree;
        out.s_degree = self.s_degree;
        out.gaussian_regime = self.gaussian_regime;
        out.eq11_margin = self.eq11_margin;
        out
    }

    /// Returns a copy with the variance multiplied by `factor`, e.g. for negative controls.
    pub fn scaled(&self, factor: f64) -> Self {
        let terms = self.terms.iter().map(|t| NoiseTerm { variance: t.variance * factor, ..*t }).collect();
        let mut out = Self::from_terms(terms, self.rule);
        out.e_degree = self.e_degree;
        out.s_degree = self.s_degree;
        out.gaussian_regime = self.gaussian_regime;
        out.eq11_margin = self.eq11_margin;
        out
    }
}

fn merge_terms(mut terms: Vec<NoiseTerm>) -> Vec<NoiseTerm> {
    terms.sort_by_key(|t| (t.s_degree, t.e_degree));
    let mut out: Vec<NoiseTerm> = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some(last) if last.s_degree == t.s_degree && last.e_degree == t.e_degree => last.variance += t.variance,
            _ => out.push(t),
        }
    }
    out
}

/// Fresh-encryption variance; components `m + t·e0` (ι=0, K=0), `t·e·u` (ι=0, K=1), `t·e1·s` (ι=1, K=0).
pub fn v_clean(ctx: &NoiseContext) -> NoiseEstimate {
    let t2 = ctx.t2();
    let n = ctx.nf();
    NoiseEstimate::from_terms(
        vec![
            NoiseTerm { s_degree: 0, e_degree: 0, variance: t2 * (1.0 / 12.0 + ctx.ve) },
            NoiseTerm { s_degree: 0, e_degree: 1, variance: t2 * n * ctx.ve * ctx.vu },
            NoiseTerm { s_degree: 1, e_degree: 0, variance: t2 * n * ctx.ve * ctx.vs },
        ],
        Rule::Clean,
    )
}

pub fn v_add(a: &NoiseEstimate, b: &NoiseEstimate) -> NoiseEstimate {
    let mut terms = a.terms.clone();
    terms.extend_from_slice(&b.terms);
    let mut out = NoiseEstimate::from_terms(terms, Rule::Add);
    out.e_degree = a.e_degree.max(b.e_degree);
    out.s_degree = a.s_degree.max(b.s_degree);
    out
}

/// Multiplier `(t² − 1)·n/12` for a constant drawn uniformly from `Z_t`.
pub fn const_factor(ctx: &NoiseContext) -> f64 {
    (ctx.t2() - 1.0) * ctx.nf() / 12.0
}

pub fn v_const(v: &NoiseEstimate, ctx: &NoiseContext) -> NoiseEstimate {
    let f = const_factor(ctx);
    let terms = v.terms.iter().map(|t| NoiseTerm { variance: t.variance * f, ..*t }).collect();
    let mut out = NoiseEstimate::from_terms(terms, Rule::Const);
    out.e_degree = v.e_degree;
    out.s_degree = v.s_degree;
    out
}

/// Modulus switch by `ratio = q_ℓ'/q_ℓ`: `ratio²·V + t²/12·(1 + n·Vs)`.
pub fn v_ms(v: &NoiseEstimate, ratio: f64, ctx: &NoiseContext) -> NoiseEstimate {
    assert!(ratio > 0.0 && ratio < 1.0, "modulus-switch ratio {ratio} outside (0, 1)");
    let r2 = ratio * ratio;
    let t2 = ctx.t2();
    let mut terms: Vec<NoiseTerm> = v.terms.iter().map(|t| NoiseTerm { variance: t.variance * r2, ..*t }).collect();
    terms.push(NoiseTerm { s_degree: 0, e_degree: 0, variance: t2 / 12.0 });
    terms.push(NoiseTerm { s_degree: 1, e_degree: 0, variance: t2 * ctx.nf() * ctx.vs / 12.0 });
    let mut out = NoiseEstimate::from_terms(terms, Rule::ModSwitch);
    let carried = r2 * v.variance;
    let v_ms = ctx.v_ms_fixed_point();
    let margin = ctx.alpha * v_ms / carried;
    out.eq11_margin = Some(margin);
    // the planner sizes primes exactly at the boundary, so allow rounding slack
    if margin >= 1.0 - 1e-9 {
        out.gaussian_regime = true;
        out.e_degree = 0;
        out.s_degree = 1;
        let sec6 = carried + v_ms;
        debug_assert!(
            (out.variance - sec6).abs() <= out.variance * (1.5 / (ctx.nf() * ctx.vs)),
            "additive ms forms disagree in the dominant regime"
        );
    } else {
        out.e_degree = v.e_degree;
        out.s_degree = v.s_degree.max(1);
    }
    out
}

/// `F(i1, i2) = (i1 + i2)! / (i1!·i2!)`.
pub fn correction_f(i1: u32, i2: u32) -> f64 {
    let (lo, hi) = if i1 < i2 { (i1, i2) } else { (i2, i1) };
    let mut acc = 1.0f64;
    for k in 1..=lo {
        acc = acc * (hi + k) as f64 / k as f64;
    }
    acc.round()
}

/// Product of two critical quantities.
pub fn v_mult(a: &NoiseEstimate, b: &NoiseEstimate, ctx: &NoiseContext) -> NoiseEstimate {
    let collapsed = a.rule == Rule::ModSwitch && b.rule == Rule::ModSwitch && a.gaussian_regime && b.gaussian_regime;
    if collapsed {
        let v = (2.0 + EPSILON) * ctx.nf() * ctx.v_ms_fixed_point().powi(2);
        let mut out = NoiseEstimate::from_terms(
            vec![NoiseTerm { s_degree: a.s_degree + b.s_degree, e_degree: a.e_degree + b.e_degree, variance: v }],
            Rule::MultCollapsed,
        );
        out.s_degree = a.s_degree + b.s_degree;
        out.e_degree = a.e_degree + b.e_degree;
        return out;
    }
    v_mult_termwise(a, b, ctx)
}

/// The general term-wise bound, regardless of regime.
pub fn v_mult_termwise(a: &NoiseEstimate, b: &NoiseEstimate, ctx: &NoiseContext) -> NoiseEstimate {
    let n = ctx.nf();
    let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
    for x in &a.terms {
        for y in &b.terms {
            terms.push(NoiseTerm {
                s_degree: x.s_degree + y.s_degree,
                e_degree: x.e_degree + y.e_degree,
                variance: n
                    * x.variance
                    * y.variance
                    * correction_f(x.s_degree, y.s_degree)
                    * correction_f(x.e_degree, y.e_degree),
            });
        }
    }
    let mut out = NoiseEstimate::from_terms(terms, Rule::MultTermwise);
    out.s_degree = a.s_degree + b.s_degree;
    out.e_degree = a.e_degree + b.e_degree;
    out
}

/// Additive GHS key-switching variance for ciphertext modulus `q` and extension modulus `Q`.
///
/// The `e'` contribution is `(q/Q)²·t²·n·Ve·q²/12`, which equals `t²·n·Ve/12` for `Q = q²`.
pub fn v_keyswitch_ghs(ctx: &NoiseContext, log2_q: f64, log2_big_q: f64) -> f64 {
    let shrink = (2.0 * (2.0 * log2_q - log2_big_q)).exp2();
    ctx.t2() / 12.0 * (ctx.nf() * ctx.ve * shrink + 1.0 + ctx.nf() * ctx.vs)
}

pub fn keyswitch_estimate(ctx: &NoiseContext, log2_q: f64, log2_big_q: f64) -> NoiseEstimate {
    let total = v_keyswitch_ghs(ctx, log2_q, log2_big_q);
    let s_part = ctx.t2() * ctx.nf() * ctx.vs / 12.0;
    NoiseEstimate::from_terms(
        vec![
            NoiseTerm { s_degree: 0, e_degree: 0, variance: total - s_part },
            NoiseTerm { s_degree: 1, e_degree: 0, variance: s_part },
        ],
        Rule::KeySwitch,
    )
}

/// `ln erfc(z)` without underflow for large `z`.
pub fn ln_erfc(z: f64) -> f64 {
    if z < 20.0 {
        erfc(z).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / (2.0 * z2) + 3.0 / (4.0 * z2 * z2) - 15.0 / (8.0 * z2 * z2 * z2);
        -z2 - z.ln() - 0.5 * std::f64::consts::PI.ln() + series.ln()
    }
}

/// `log2` of `n·erfc(q / (2·√(2V)))`, the probability that some coefficient reaches `q/2`; clamped to ≤ 0.
pub fn failure_log2_probability(variance: f64, log2_modulus: f64, n: usize) -> f64 {
    if variance <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let log2_z = log2_modulus - 1.0 - 0.5 * (2.0 * variance).log2();
    if log2_z > 500.0 {
        return f64::NEG_INFINITY;
    }
    let z = log2_z.exp2();
    let lg = (n as f64).log2() + ln_erfc(z) / std::f64::consts::LN_2;
    lg.min(0.0)
}

/// Same as [`failure_log2_probability`] but as a plain probability.
pub fn failure_probability(variance: f64, log2_modulus: f64, n: usize) -> f64 {
    failure_log2_probability(variance, log2_modulus, n).exp2()
}

/// Canonical-norm bound, stored as `log2` of the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalEstimate {
    pub log2_bound: f64,
}

impl CanonicalEstimate {
    pub fn bound(&self) -> f64 {
        self.log2_bound.exp2()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalOp {
    Enc,
    ModSwitch { log2_p: f64 },
    Mult,
    Add,
    Const,
}

impl std::str::FromStr for CanonicalOp {
    type Err = Error;

    /// Parses `enc`, `mult`, `add`, `const` or `ms:<log2 p>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enc" => Ok(Self::Enc),
            "mult" => Ok(Self::Mult),
            "add" => Ok(Self::Add),
            "const" => Ok(Self::Const),
            _ => match s.strip_prefix("ms:").map(str::parse::<f64>) {
                Some(Ok(log2_p)) => Ok(Self::ModSwitch { log2_p }),
                _ => Err(Error::InvalidParams(format!("unknown canonical op tag {s:?}"))),
            },
        }
    }
}

fn log2_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (1.0 + (lo - hi).exp2()).log2()
}

/// `log2` of the additive modulus-switching canonical term `D·t·√(n(1/12 + n·Vs))`.
pub fn canonical_ms_additive_log2(ctx: &NoiseContext) -> f64 {
    let n = ctx.nf();
    (ctx.d * ctx.t as f64).log2() + 0.5 * (n * (1.0 / 12.0 + n * ctx.vs)).log2()
}

pub fn canonical_enc_log2(ctx: &NoiseContext) -> f64 {
    let n = ctx.nf();
    (ctx.d * ctx.t as f64).log2() + 0.5 * (n * (1.0 / 12.0 + 2.0 * n * ctx.ve * ctx.vs + ctx.ve)).log2()
}

/// Propagates canonical-norm bounds through one operation.
pub fn canonical_track(
    op: &CanonicalOp,
    inputs: &[CanonicalEstimate],
    ctx: &NoiseContext,
) -> Result<CanonicalEstimate> {
    let want = match op {
        CanonicalOp::Enc => 0,
        CanonicalOp::ModSwitch { .. } | CanonicalOp::Const => 1,
        CanonicalOp::Mult | CanonicalOp::Add => 2,
    };
    if inputs.len() != want {
        return Err(Error::InvalidParams(format!("{op:?} takes {want} inputs, got {}", inputs.len())));
    }
    let log2_bound = match *op {
        CanonicalOp::Enc => canonical_enc_log2(ctx),
        CanonicalOp::ModSwitch { log2_p } => log2_add(inputs[0].log2_bound - log2_p, canonical_ms_additive_log2(ctx)),
        CanonicalOp::Mult => inputs[0].log2_bound + inputs[1].log2_bound,
        CanonicalOp::Add => log2_add(inputs[0].log2_bound, inputs[1].log2_bound),
        CanonicalOp::Const => inputs[0].log2_bound + (ctx.d * ctx.t as f64).log2() + 0.5 * (ctx.nf() / 12.0).log2(),
    };
    Ok(CanonicalEstimate { log2_bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: u64 = 65537;

    #[test]
    fn fresh_variance_tracks_table() {
        for (k, want) in [(13, 48.76), (14, 49.76), (15, 50.76)] {
            let v = v_clean(&NoiseContext::standard(1 << k, T));
            assert!((v.log2_variance - want).abs() < 0.01, "n=2^{k}: {}", v.log2_variance);
            assert_eq!((v.e_degree, v.s_degree), (1, 1));
        }
    }

    #[test]
    fn fresh_variance_limit_without_error() {
        let mut ctx = NoiseContext::standard(1 << 13, T);
        ctx.ve = 1e-300;
        let v = v_clean(&ctx);
        let expect = (T as f64).powi(2) / 12.0;
        assert!((v.variance / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn add_and_const_rules() {
        let ctx = NoiseContext::standard(8, 3);
        let v = v_clean(&ctx);
        assert_eq!(v_add(&v, &NoiseEstimate::zero()).variance, v.variance);
        assert!((v_add(&v, &v).variance - 2.0 * v.variance).abs() < 1e-9);
        assert!((const_factor(&ctx) - 16.0 / 3.0).abs() < 1e-12);
        let big = const_factor(&NoiseContext::standard(1 << 13, T)).log2();
        assert!((big - 41.415).abs() < 0.001, "{big}");
    }

    #[test]
    fn ms_in_dominant_regime() {
        for (k, want) in [(13, 40.83), (15, 42.83)] {
            let ctx = NoiseContext::standard(1 << k, T);
            let v = v_ms(&v_clean(&ctx), 2f64.powi(-60), &ctx);
            assert!((v.log2_variance - want).abs() < 0.01, "n=2^{k}: {}", v.log2_variance);
            assert!(v.gaussian_regime);
            assert_eq!((v.e_degree, v.s_degree), (0, 1));
        }
        let ctx = NoiseContext::standard(1 << 13, T);
        let tiny = v_ms(&v_clean(&ctx), 1e-200, &ctx);
        assert!((tiny.variance / ctx.ms_additive() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correction_factor_values() {
        assert_eq!(correction_f(1, 1), 2.0);
        assert_eq!(correction_f(0, 7), 1.0);
        assert_eq!(correction_f(2, 2), 6.0);
        assert_eq!(correction_f(2, 1), 3.0);
        assert_eq!(correction_f(4, 4), 70.0);
    }

    #[test]
    fn collapsed_product_and_termwise_bound() {
        for (k, want) in [(13, 95.70), (15, 101.70)] {
            let ctx = NoiseContext::standard(1 << k, T);
            let ms = v_ms(&v_clean(&ctx), 2f64.powi(-60), &ctx);
            let m = v_mult(&ms, &ms, &ctx);
            assert_eq!(m.rule, Rule::MultCollapsed);
            assert!((m.log2_variance - want).abs() < 0.01, "{}", m.log2_variance);
            assert_eq!(m.s_degree, 2);
        }
        let ctx = NoiseContext::standard(1 << 12, T);
        let f = v_clean(&ctx);
        let raw = v_mult(&f, &f, &ctx);
        assert_eq!(raw.rule, Rule::MultTermwise);
        assert!(raw.variance <= 4.0 * ctx.n as f64 * f.variance * f.variance);
        assert_eq!((raw.e_degree, raw.s_degree), (2, 2));
    }

    #[test]
    fn keyswitch_term_is_negligible() {
        let ctx = NoiseContext::standard(1 << 13, T);
        let ks = v_keyswitch_ghs(&ctx, 150.0, 300.0);
        assert!((ks.log2() - 44.85).abs() < 0.01, "{}", ks.log2());
        let ms = v_ms(&v_clean(&ctx), 2f64.powi(-60), &ctx);
        let m = v_mult(&ms, &ms, &ctx);
        assert!(ks / m.variance < 2f64.powi(-40));
        let doubled = NoiseContext { ve: ctx.ve * 2.0, ..ctx };
        let grow = v_keyswitch_ghs(&doubled, 150.0, 300.0) - ks;
        let base = ctx.t2() / 12.0 * ctx.nf() * ctx.ve;
        assert!((grow / base - 1.0).abs() < 1e-9);
    }

    #[test]
    fn failure_probability_reference_points() {
        let n = 1usize << 13;
        let ctx = NoiseContext::standard(n, T);
        let v = 1.01 * ctx.v_ms_fixed_point();
        for (d, want) in [(6.0f64, -42.0), (8.0, -83.0)] {
            let log2_q = (2.0 * d * (2.0 * v).sqrt()).log2();
            let lp = failure_log2_probability(v, log2_q, n);
            assert!((lp - want).abs() < 0.5, "D={d}: {lp}");
        }
        assert!(failure_log2_probability(1e-30, 60.0, n) < -1e60, "vanishing variance");
        assert_eq!(failure_log2_probability(0.0, 60.0, n), f64::NEG_INFINITY);
        assert!(failure_log2_probability(1e30, 10.0, n) == 0.0);
    }

    #[test]
    fn canonical_rows() {
        let ctx = NoiseContext::standard(1 << 13, T);
        let enc = canonical_track(&CanonicalOp::Enc, &[], &ctx).unwrap();
        assert!((enc.log2_bound - (30.88 + 3.0)).abs() < 0.01, "{}", enc.log2_bound);
        let b = CanonicalEstimate { log2_bound: 20.0 };
        assert_eq!(canonical_track(&CanonicalOp::Mult, &[b, b], &ctx).unwrap().log2_bound, 40.0);
        assert!(canonical_track(&CanonicalOp::Mult, &[b], &ctx).is_err());
        assert!("bogus".parse::<CanonicalOp>().is_err());
        assert_eq!("ms:30".parse::<CanonicalOp>().unwrap(), CanonicalOp::ModSwitch { log2_p: 30.0 });
    }

    #[test]
    fn canonical_product_exceeds_average_case() {
        for k in 3..16 {
            let ctx = NoiseContext::standard(1 << k, T);
            let v_ms = ctx.v_ms_fixed_point();
            let canonical = (ctx.d * ctx.d * ctx.nf() * v_ms).log2();
            let average = (2.0 * ctx.d * ctx.nf().sqrt() * v_ms * 2f64.sqrt()).log2();
            assert!(canonical > average);
        }
    }
}
