//! Modulus-chain planning for the product-tree circuit.
//!
//! [`plan`] computes a lower bound in bits for every chain slot (bottom
//! prime `p_0`, intermediate primes `p_1..p_M`, top prime `p_{M+1}`), then
//! realizes each slot with the smallest admissible prime above its bound.
//! Average-case sizing uses the variance model; worst-case sizing uses
//! canonical-norm bounds over the same chain shape.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arith::{gcd, is_prime, next_prime_congruent, MAX_PRIME_BITS};
use crate::bgv::{Bgv, ModulusChain, SchemeParams};
use crate::circuit::{execute, predict, CircuitSpec, ExecConfig, MsPolicy, NodePrediction};
use crate::error::{Error, Result};
use crate::noise::{
    canonical_enc_log2, canonical_ms_additive_log2, v_clean, NoiseContext, DEFAULT_ALPHA, DEFAULT_D, EPSILON,
};
use crate::ring::sampler::DEFAULT_SIGMA;
use crate::ring::SamplerKind;
use crate::stats::{compare_table, summarize, ComparisonTable, SampleMeta, SampleSet};

/// Published `log2 q` of OpenFHE's depth-3 chains for `n = 2^12..2^15`.
pub const OPENFHE_DEPTH3: [f64; 4] = [147.3, 151.8, 156.3, 161.6];
/// Published `log2 q` of OpenFHE's depth-6 chains for `n = 2^12..2^15`.
pub const OPENFHE_DEPTH6: [f64; 4] = [249.3, 256.8, 264.3, 272.6];
/// Reference average-case totals for depth 3, `n = 2^12..2^15`.
pub const REFERENCE_DEPTH3: [f64; 4] = [121.0, 124.5, 128.0, 131.5];
/// Reference average-case totals for depth 6, `n = 2^12..2^15`.
pub const REFERENCE_DEPTH6: [f64; 4] = [210.3, 216.8, 223.3, 229.8];
/// Reference intermediate-prime bounds with `h = n/2` secrets, `n = 2^12..2^15`.
pub const REFERENCE_RATIO_BITS: [f64; 4] = [29.55, 30.55, 31.55, 32.55];
/// Typical HElib ratio between adjacent level moduli, in bits.
pub const HELIB_RATIO_BITS: f64 = 54.0;
/// Largest tolerated realized-minus-theoretical total.
pub const MAX_REALIZATION_GAP_BITS: f64 = 2.0;
/// Prime size used for chains without modulus switching.
pub const WIDE_PRIME_BITS: u32 = 60;

/// Index of `n` in the `2^12..2^15` reference grid.
pub fn reference_index(n: usize) -> Option<usize> {
    match n {
        4096 => Some(0),
        8192 => Some(1),
        16384 => Some(2),
        32768 => Some(3),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizingMode {
    #[default]
    AverageCase,
    WorstCaseCanonical,
}

/// Congruences imposed on realized chain primes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimeCongruence {
    /// Any prime coprime to `t`.
    None,
    /// `p ≡ 1 (mod 2n)`.
    Ntt,
    /// `p ≡ 1 (mod 2n)` and `p ≡ 1 (mod t)`.
    #[default]
    NttAndPlaintext,
}

impl PrimeCongruence {
    /// Modulus `m` of the combined congruence `p ≡ 1 (mod m)`.
    pub fn step(self, n: usize, t: u64) -> u64 {
        let two_n = 2 * n as u64;
        match self {
            PrimeCongruence::None => 1,
            PrimeCongruence::Ntt => two_n,
            PrimeCongruence::NttAndPlaintext => two_n / gcd(two_n, t) * t,
        }
    }
}

impl std::str::FromStr for PrimeCongruence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "ntt" => Ok(Self::Ntt),
            "ntt+t" | "ntt_and_plaintext" => Ok(Self::NttAndPlaintext),
            _ => Err(Error::InvalidParams(format!("unknown congruence {s:?}; use none, ntt or ntt+t"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRequest {
    pub n: usize,
    pub t: u64,
    /// Multiplicative depth `M`.
    #[serde(rename = "M")]
    pub depth: usize,
    #[serde(rename = "D")]
    pub d: f64,
    pub alpha: f64,
    pub secret: SamplerKind,
    pub error: SamplerKind,
    #[serde(default)]
    pub sizing_mode: SizingMode,
    #[serde(default)]
    pub congruence: PrimeCongruence,
}

impl ParamRequest {
    /// `t = 65537`, ternary secrets, σ = 3.19, `D = 8`, `α = 1/100`.
    pub fn standard(n: usize, depth: usize) -> Self {
        Self {
            n,
            t: 65537,
            depth,
            d: DEFAULT_D,
            alpha: DEFAULT_ALPHA,
            secret: SamplerKind::Ternary,
            error: SamplerKind::DiscreteGaussian { sigma: DEFAULT_SIGMA },
            sizing_mode: SizingMode::AverageCase,
            congruence: PrimeCongruence::NttAndPlaintext,
        }
    }

    pub fn with_mode(mut self, mode: SizingMode) -> Self {
        self.sizing_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() || self.n < 8 {
            return Err(Error::InvalidParams(format!("n = {} must be a power of two ≥ 8", self.n)));
        }
        if !is_prime(self.t) || self.t % (2 * self.n as u64) != 1 {
            return Err(Error::InvalidParams(format!("t = {} must be a prime ≡ 1 mod 2n = {}", self.t, 2 * self.n)));
        }
        if !(self.d.is_finite() && self.d >= 4.0) {
            return Err(Error::InvalidParams(format!("D = {} must be at least 4", self.d)));
        }
        self.noise_context().map(|_| ())
    }

    pub fn noise_context(&self) -> Result<NoiseContext> {
        let sigma = match self.error {
            SamplerKind::DiscreteGaussian { sigma } => sigma,
            other => {
                return Err(Error::InvalidParams(format!("error must be discrete Gaussian, got {}", other.label())))
            }
        };
        self.secret.validate(self.n)?;
        NoiseContext::new(self.n, self.t, sigma, self.secret, self.d, self.alpha)
    }

    pub fn scheme_params(&self, chain: ModulusChain) -> SchemeParams {
        SchemeParams {
            n: self.n,
            t: self.t,
            chain,
            secret: self.secret,
            error: self.error,
            d: self.d,
            alpha: self.alpha,
        }
    }
}

/// `log2` of the intermediate-prime bound `√((2+ε)·n·V_ms/α)`.
pub fn intermediate_prime_log2(ctx: &NoiseContext) -> f64 {
    0.5 * ((2.0 + EPSILON) * ctx.n as f64 * ctx.v_ms_fixed_point() / ctx.alpha).log2()
}

/// `log2` of the bottom-modulus bound `2D·√(2·(101/100)·V_ms)`.
pub fn bottom_prime_log2(ctx: &NoiseContext) -> f64 {
    (2.0 * ctx.d).log2() + 0.5 * (2.0 * 1.01 * ctx.v_ms_fixed_point()).log2()
}

/// `log2` of the top-prime bound `√(V_clean/(α·V_ms))`.
pub fn top_prime_log2(ctx: &NoiseContext) -> f64 {
    0.5 * (v_clean(ctx).variance / (ctx.alpha * ctx.v_ms_fixed_point())).log2()
}

/// Per-slot lower bounds in bits, bottom first, for a depth-`M` product tree.
pub fn theoretical_bits(ctx: &NoiseContext, depth: usize, mode: SizingMode) -> Vec<f64> {
    let (bottom, mid, top, level_floor) = match mode {
        SizingMode::AverageCase => {
            let v_mult = (2.0 + EPSILON) * ctx.n as f64 * ctx.v_ms_fixed_point().powi(2);
            let floor = (2.0 * ctx.d).log2() + 0.5 * (2.0 * v_mult).log2();
            (bottom_prime_log2(ctx), intermediate_prime_log2(ctx), top_prime_log2(ctx), floor)
        }
        SizingMode::WorstCaseCanonical => {
            // post-ms bound B·(1+√α) when the input ratio meets the √α rule
            let half_log_alpha = 0.5 * ctx.alpha.log2();
            let b_ms = canonical_ms_additive_log2(ctx);
            let b_post = b_ms + (1.0 + ctx.alpha.sqrt()).log2();
            let b_mult = 2.0 * b_post;
            // never below the Gaussian-regime top prime
            let top = (canonical_enc_log2(ctx) - b_ms - half_log_alpha).max(top_prime_log2(ctx));
            (1.0 + b_post, b_mult - b_ms - half_log_alpha, top, 1.0 + b_mult)
        }
    };
    let mut bits = vec![bottom];
    bits.extend(std::iter::repeat_n(mid, depth));
    bits.push(top);
    // levels 1..=M carry multiplication outputs
    let mut acc = bottom;
    for slot in bits.iter_mut().take(depth + 1).skip(1) {
        acc += *slot;
        if acc < level_floor {
            *slot += level_floor - acc;
            acc = level_floor;
        }
    }
    bits
}

/// Smallest prime `≥ min_value` with `p ≡ 1 (mod step)`, coprime to `t` and not excluded.
///
/// The search stops at `max(2·min_value, min_value + 4096·step)`.
pub fn prime_search(min_value: u64, step: u64, t: u64, excluded: &[u64]) -> Result<u64> {
    if min_value < 3 {
        return Err(Error::PrimeSearch(format!("minimum {min_value} below 3")));
    }
    let limit = (1u64 << MAX_PRIME_BITS) - 1;
    let ceiling = min_value.saturating_mul(2).max(min_value.saturating_add(step.saturating_mul(4096))).min(limit);
    next_prime_congruent(min_value, step, ceiling, |p| gcd(p, t) == 1 && !excluded.contains(&p))
        .ok_or_else(|| Error::PrimeSearch(format!("no prime ≡ 1 mod {step} in [{min_value}, {ceiling}]")))
}

fn min_value_for_bits(bits: f64) -> Result<u64> {
    if bits >= MAX_PRIME_BITS as f64 {
        return Err(Error::PrimeSearch(format!("slot needs {bits:.2} bits, above the {MAX_PRIME_BITS}-bit limit")));
    }
    Ok((bits.exp2().ceil() as u64).max(3))
}

/// Realizes slot bounds as distinct primes under `congruence`.
pub fn realize(bits: &[f64], n: usize, t: u64, congruence: PrimeCongruence) -> Result<Vec<u64>> {
    let step = congruence.step(n, t);
    let mut primes: Vec<u64> = Vec::with_capacity(bits.len());
    for &b in bits {
        let p = prime_search(min_value_for_bits(b)?, step, t, &primes)?;
        primes.push(p);
    }
    Ok(primes)
}

fn as_strings<S: serde::Serializer>(v: &[u64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(u64::to_string))
}

fn from_strings<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<u64>, D::Error> {
    Vec::<String>::deserialize(d)?.iter().map(|s| s.parse().map_err(serde::de::Error::custom)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub label: String,
    pub log2_q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPlan {
    pub request: ParamRequest,
    /// Lower bounds in bits, bottom slot first.
    pub theoretical_bits: Vec<f64>,
    pub theoretical_total: f64,
    #[serde(serialize_with = "as_strings", deserialize_with = "from_strings")]
    pub realized_primes: Vec<u64>,
    pub total_log2_q: f64,
    pub realization_gap: f64,
    /// Model walk of the reference circuit over the realized chain.
    pub predictions: Vec<NodePrediction>,
    /// Largest per-node `log2` failure probability.
    pub predicted_failure_log2: f64,
    pub references: Vec<ReferenceValue>,
    pub alarms: Vec<String>,
}

impl ParamPlan {
    pub fn chain(&self) -> Result<ModulusChain> {
        ModulusChain::new(self.realized_primes.clone())
    }

    pub fn scheme_params(&self) -> Result<SchemeParams> {
        Ok(self.request.scheme_params(self.chain()?))
    }

    pub fn alarm(&self) -> bool {
        !self.alarms.is_empty()
    }

    /// Copy of the plan with `p_0` replaced by a prime about `bits` smaller, under no congruence.
    pub fn shrunk_bottom(&self, bits: f64) -> Result<ParamPlan> {
        let target = (self.realized_primes[0] as f64).log2() - bits;
        let p0 = prime_search(min_value_for_bits(target)?, 1, self.request.t, &self.realized_primes)?;
        let mut primes = self.realized_primes.clone();
        primes[0] = p0;
        let mut out = finish_plan(self.request.clone(), self.theoretical_bits.clone(), primes)?;
        out.alarms.push(format!("bottom prime shrunk by {bits} bits"));
        Ok(out)
    }
}

/// Bound below which the failure probability must stay: `n·e^{-D²/2}` in `log2`.
pub fn soundness_log2(ctx: &NoiseContext) -> f64 {
    -ctx.d * ctx.d * std::f64::consts::LOG2_E / 2.0 + (ctx.n as f64).log2()
}

fn references(req: &ParamRequest) -> Vec<ReferenceValue> {
    let mut out = Vec::new();
    if let Some(i) = reference_index(req.n) {
        let pick = |d3: &[f64; 4], d6: &[f64; 4]| match req.depth {
            3 => Some(d3[i]),
            6 => Some(d6[i]),
            _ => None,
        };
        if let Some(v) = pick(&OPENFHE_DEPTH3, &OPENFHE_DEPTH6) {
            out.push(ReferenceValue { label: "openfhe".into(), log2_q: v });
        }
        if let Some(v) = pick(&REFERENCE_DEPTH3, &REFERENCE_DEPTH6) {
            out.push(ReferenceValue { label: "reference_average_case".into(), log2_q: v });
        }
    }
    out
}

fn finish_plan(req: ParamRequest, bits: Vec<f64>, primes: Vec<u64>) -> Result<ParamPlan> {
    let ctx = req.noise_context()?;
    let chain_log2: Vec<f64> = primes.iter().map(|&p| (p as f64).log2()).collect();
    let theoretical_total: f64 = bits.iter().sum();
    let total_log2_q: f64 = chain_log2.iter().sum();
    let prediction = predict(&CircuitSpec::product_tree(req.depth), &ctx, &chain_log2)?;
    let predicted_failure_log2 = prediction.nodes.iter().map(|p| p.failure_log2_prob).fold(f64::NEG_INFINITY, f64::max);
    let realization_gap = total_log2_q - theoretical_total;
    let mut alarms = Vec::new();
    if realization_gap > MAX_REALIZATION_GAP_BITS {
        alarms.push(format!(
            "realization gap {realization_gap:.2} bits exceeds {MAX_REALIZATION_GAP_BITS} (congruence {:?})",
            req.congruence
        ));
    }
    for id in &prediction.eq11_violations {
        alarms.push(format!("Gaussianity condition violated at {id}"));
    }
    if predicted_failure_log2 > soundness_log2(&ctx) {
        alarms.push(format!("predicted failure 2^{predicted_failure_log2:.1} above 2^{:.1}", soundness_log2(&ctx)));
    }
    Ok(ParamPlan {
        references: references(&req),
        request: req,
        theoretical_bits: bits,
        theoretical_total,
        realized_primes: primes,
        total_log2_q,
        realization_gap,
        predictions: prediction.nodes,
        predicted_failure_log2,
        alarms,
    })
}

/// Sizes and realizes a chain of `M + 2` primes for the depth-`M` product tree.
pub fn plan(req: &ParamRequest) -> Result<ParamPlan> {
    req.validate()?;
    let ctx = req.noise_context()?;
    let bits = theoretical_bits(&ctx, req.depth, req.sizing_mode);
    let primes = realize(&bits, req.n, req.t, req.congruence)?;
    finish_plan(req.clone(), bits, primes)
}

/// Single-level chain of 60-bit primes wide enough for the tree without modulus switching.
pub fn no_ms_chain(req: &ParamRequest) -> Result<ModulusChain> {
    req.validate()?;
    let ctx = req.noise_context()?;
    let spec = CircuitSpec::product_tree(req.depth).with_ms_policy(MsPolicy::None).with_final_ms(false);
    let step = req.congruence.step(req.n, req.t);
    let mut primes: Vec<u64> = Vec::new();
    loop {
        let log2_q: f64 = primes.iter().map(|&p| (p as f64).log2()).sum();
        if !primes.is_empty() {
            let pred = predict(&spec, &ctx, &[log2_q])?;
            let worst = pred.nodes.iter().map(|p| p.estimate.log2_variance).fold(f64::NEG_INFINITY, f64::max);
            if log2_q >= (2.0 * ctx.d).log2() + 0.5 * (1.0 + worst) {
                return ModulusChain::new(primes);
            }
        }
        let p = prime_search(1u64 << WIDE_PRIME_BITS, step, req.t, &primes)?;
        primes.push(p);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub label: String,
    pub log2_q: f64,
    /// `log2_q` minus the average-case theoretical total.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub n: usize,
    pub log2_ratio: f64,
    pub reference: Option<f64>,
    pub helib: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub request: ParamRequest,
    pub rows: Vec<ModeRow>,
}

impl ModeComparison {
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<26} {:>10} {:>9}\n", "sizing", "log2 q", "delta");
        for r in &self.rows {
            s.push_str(&format!("{:<26} {:>10.2} {:>+9.2}\n", r.label, r.log2_q, r.delta));
        }
        s
    }
}

/// Average-case against worst-case sizing and the pinned reference totals.
pub fn compare_modes(req: &ParamRequest) -> Result<ModeComparison> {
    req.validate()?;
    let ctx = req.noise_context()?;
    let avg: f64 = theoretical_bits(&ctx, req.depth, SizingMode::AverageCase).iter().sum();
    let worst: f64 = theoretical_bits(&ctx, req.depth, SizingMode::WorstCaseCanonical).iter().sum();
    let mut rows = vec![
        ModeRow { label: "average_case".into(), log2_q: avg, delta: 0.0 },
        ModeRow { label: "worst_case_canonical".into(), log2_q: worst, delta: worst - avg },
    ];
    match plan(&ParamRequest { sizing_mode: SizingMode::AverageCase, ..req.clone() }) {
        Ok(p) => rows.push(ModeRow {
            label: "average_case_realized".into(),
            log2_q: p.total_log2_q,
            delta: p.total_log2_q - avg,
        }),
        Err(Error::PrimeSearch(_)) => {}
        Err(e) => return Err(e),
    }
    for r in references(req) {
        rows.push(ModeRow { delta: r.log2_q - avg, label: r.label, log2_q: r.log2_q });
    }
    Ok(ModeComparison { request: req.clone(), rows })
}

/// Intermediate-prime bound with `h = n/2` secrets for each `n`, beside the HElib ratio.
pub fn ratio_table(ns: &[usize], t: u64, alpha: f64) -> Result<Vec<RatioRow>> {
    if ns.is_empty() {
        return Err(Error::InvalidParams("empty ring-dimension grid".into()));
    }
    ns.iter()
        .map(|&n| {
            let ctx = NoiseContext::new(n, t, DEFAULT_SIGMA, SamplerKind::TernaryHw { h: n / 2 }, DEFAULT_D, alpha)?;
            Ok(RatioRow {
                n,
                log2_ratio: intermediate_prime_log2(&ctx),
                reference: reference_index(n).map(|i| REFERENCE_RATIO_BITS[i]),
                helib: HELIB_RATIO_BITS,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eq11Margin {
    pub node: String,
    /// `α·V_ms / (V_in/p²)`; at least one when the condition holds.
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub fingerprint: String,
    pub seed: u64,
    pub trials: usize,
    pub failures: usize,
    pub predicted_failure_log2: f64,
    pub table: ComparisonTable,
    pub margins: Vec<Eq11Margin>,
}

/// Runs the reference circuit under the plan's chain and compares with its predictions.
pub fn validate_plan(plan: &ParamPlan, trials: usize, seed: u64) -> Result<ValidationReport> {
    let params = plan.scheme_params()?;
    let fingerprint = params.fingerprint();
    let bgv = Bgv::new(params)?.with_lab_mode(true);
    let spec = CircuitSpec::product_tree(plan.request.depth);
    let samples = execute(&spec, &bgv, &ExecConfig::new(trials, seed))?;
    let mut model = BTreeMap::new();
    let mut empirical = BTreeMap::new();
    for probe in &samples.probes {
        let pred = plan
            .predictions
            .iter()
            .find(|p| &p.id == probe)
            .ok_or_else(|| Error::ProbeMismatch(format!("plan has no prediction for {probe}")))?;
        model.insert(probe.clone(), pred.estimate.clone());
        let meta = SampleMeta { probe: probe.clone(), trials, fingerprint: fingerprint.clone() };
        empirical.insert(probe.clone(), summarize(&SampleSet::new(samples.column(probe)?, meta))?);
    }
    let margins = plan
        .predictions
        .iter()
        .filter(|p| p.estimate.rule == crate::noise::Rule::ModSwitch)
        .map(|p| Eq11Margin { node: p.id.clone(), margin: p.estimate.eq11_margin })
        .collect();
    Ok(ValidationReport {
        fingerprint,
        seed,
        trials,
        failures: samples.failures(),
        predicted_failure_log2: plan.predicted_failure_log2,
        table: compare_table(&model, &empirical)?,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(n: usize, depth: usize, mode: SizingMode) -> f64 {
        let req = ParamRequest::standard(n, depth);
        theoretical_bits(&req.noise_context().unwrap(), depth, mode).iter().sum()
    }

    #[test]
    fn slot_bounds_at_8192() {
        let ctx = ParamRequest::standard(8192, 3).noise_context().unwrap();
        let bits = theoretical_bits(&ctx, 3, SizingMode::AverageCase);
        let want = [24.92, 30.76, 30.76, 30.76, 7.29];
        for (b, w) in bits.iter().zip(want) {
            assert!((b - w).abs() < 0.01, "{bits:?}");
        }
    }

    #[test]
    fn totals_track_reference_grid() {
        for (i, n) in [4096, 8192, 16384, 32768].into_iter().enumerate() {
            let t3 = total(n, 3, SizingMode::AverageCase);
            let t6 = total(n, 6, SizingMode::AverageCase);
            assert!((t3 - REFERENCE_DEPTH3[i]).abs() < 1.0, "depth 3, n={n}: {t3}");
            assert!((t6 - REFERENCE_DEPTH6[i]).abs() < 1.0, "depth 6, n={n}: {t6}");
        }
    }

    #[test]
    fn worst_case_dominates() {
        for n in [4096, 8192, 16384, 32768] {
            for m in 0..=6 {
                let (a, w) = (total(n, m, SizingMode::AverageCase), total(n, m, SizingMode::WorstCaseCanonical));
                assert!(w > a, "n={n} M={m}: {w} vs {a}");
            }
        }
    }

    #[test]
    fn ratio_rows() {
        let rows = ratio_table(&[4096, 8192, 16384, 32768], 65537, DEFAULT_ALPHA).unwrap();
        for r in rows {
            assert!((r.log2_ratio - r.reference.unwrap()).abs() < 0.1, "n={}: {}", r.n, r.log2_ratio);
        }
        assert!(ratio_table(&[], 65537, DEFAULT_ALPHA).is_err());
    }

    #[test]
    fn prime_search_cases() {
        assert_eq!(prime_search(3, 1, 65537, &[]).unwrap(), 3);
        assert_eq!(prime_search(3, 1, 65537, &[3]).unwrap(), 5);
        let step = PrimeCongruence::NttAndPlaintext.step(8192, 65537);
        let p = prime_search(1 << 30, step, 65537, &[]).unwrap();
        assert!(is_prime(p) && p % 16384 == 1 && p % 65537 == 1 && p >= 1 << 30);
        let q = prime_search(1 << 30, step, 65537, &[p]).unwrap();
        assert!(q > p && q % step == 1);
        assert!(prime_search(2, 1, 65537, &[]).is_err());
    }

    #[test]
    fn realized_plan_meets_bounds() {
        let p = plan(&ParamRequest::standard(8192, 3)).unwrap();
        assert_eq!(p.realized_primes.len(), 5);
        for (&prime, &b) in p.realized_primes.iter().zip(&p.theoretical_bits) {
            assert!((prime as f64).log2() >= b);
        }
        assert!(p.realization_gap > MAX_REALIZATION_GAP_BITS, "congruent primes cannot be this small");
        assert!(p.alarm());
        assert!(p.predicted_failure_log2 < soundness_log2(&ParamRequest::standard(8192, 3).noise_context().unwrap()));
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains(&format!("\"{}\"", p.realized_primes[0])), "primes serialize as strings");
        assert_eq!(serde_json::from_str::<ParamPlan>(&json).unwrap().realized_primes, p.realized_primes);
    }

    #[test]
    fn loose_congruence_has_small_gap() {
        let req = ParamRequest { congruence: PrimeCongruence::None, ..ParamRequest::standard(8192, 3) };
        let p = plan(&req).unwrap();
        assert!(p.realization_gap < 0.1, "gap {}", p.realization_gap);
        assert!(!p.alarm(), "{:?}", p.alarms);
    }

    #[test]
    fn no_ms_chain_covers_growth() {
        let chain = no_ms_chain(&ParamRequest::standard(4096, 3)).unwrap();
        assert!(chain.len() >= 5, "three unswitched products need a few hundred bits, got {}", chain.len());
    }
}
