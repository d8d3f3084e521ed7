//! Normality battery, moment oracles and model-vs-experiment tables.
//!
//! The Kolmogorov–Smirnov test runs against a normal with the sample's own
//! mean and variance (strictly a Lilliefors setting, reported as plain KS).
//! Anderson–Darling uses the unadjusted `A²` against the pinned 15% critical
//! value 0.576.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{ln_erfc, NoiseEstimate};
use crate::ring::{Sampler, SamplerKind, SamplerSpec};

pub const AD_CRITICAL_15PCT: f64 = 0.576;
pub const KS_ALPHA: f64 = 0.05;
pub const KURTOSIS_BAND: (f64, f64) = (2.8, 3.2);
pub const MIN_SAMPLES: usize = 30;
/// Underestimation tolerance in bits for [`compare_table`].
pub const UNDERESTIMATE_BITS: f64 = 0.1;
/// Largest allowed overestimate in bits.
pub const OVERESTIMATE_BITS: f64 = 1.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub probe: String,
    pub trials: usize,
    pub fingerprint: String,
}

/// Extracted critical-quantity coefficients for one probe.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub values: Vec<BigInt>,
    pub meta: SampleMeta,
}

impl SampleSet {
    pub fn new(values: Vec<BigInt>, meta: SampleMeta) -> Self {
        Self { values, meta }
    }

    /// Values as `f64` after dividing by `2^shift`, with `shift` chosen so squares cannot overflow.
    pub fn scaled_f64(&self) -> (Vec<f64>, u64) {
        let bits = self.values.iter().map(|v| v.bits()).max().unwrap_or(0);
        let shift = bits.saturating_sub(400);
        let xs = self.values.iter().map(|v| (v >> shift).to_f64().expect("shifted value fits f64")).collect();
        (xs, shift)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub count: usize,
    pub mean: f64,
    pub sample_variance: f64,
    pub log2_variance: f64,
    pub skewness: f64,
    /// Bias-corrected Pearson kurtosis; 3 for a normal.
    pub kurtosis: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub ad_statistic: f64,
    pub ad_critical_15pct: f64,
    pub verdict: bool,
}

/// `ln Φ(z)` without underflow in either tail.
fn ln_phi(z: f64) -> f64 {
    ln_erfc(-z / std::f64::consts::SQRT_2) - std::f64::consts::LN_2
}

fn phi(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Asymptotic Kolmogorov survival function `Q_KS(λ)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-λ form converges fast where the alternating series does not
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Runs the battery on real-valued samples; `log2_offset` is added to the reported log2 variance.
pub fn summarize_f64(xs: &[f64], log2_offset: f64) -> Result<GaussianityReport> {
    let n = xs.len();
    if n < MIN_SAMPLES {
        return Err(Error::SampleTooSmall { count: n, min: MIN_SAMPLES });
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let m2: f64 = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    let var = m2 / (nf - 1.0);
    let sd = var.sqrt();
    let mut z: Vec<f64> = xs.iter().map(|&x| (x - mean) / sd).collect();
    // higher moments on standardized values so huge inputs cannot overflow
    let scale = (nf - 1.0) / nf;
    let m3p: f64 = z.iter().map(|v| v * v * v).sum::<f64>() / nf;
    let m4p: f64 = z.iter().map(|v| (v * v) * (v * v)).sum::<f64>() / nf;
    let skewness = m3p / scale.powf(1.5);
    let g2 = m4p / (scale * scale) - 3.0;
    let kurtosis = (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) * ((nf + 1.0) * g2 + 6.0) + 3.0;

    z.sort_by(|a, b| a.total_cmp(b));
    let mut d = 0.0f64;
    for (i, &zi) in z.iter().enumerate() {
        let f = phi(zi);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sqrt_n = nf.sqrt();
    let ks_pvalue = kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);

    let mut s = 0.0;
    for i in 0..n {
        let w = (2 * i + 1) as f64;
        s += w * (ln_phi(z[i]) + ln_phi(-z[n - 1 - i]));
    }
    let ad = -nf - s / nf;

    let variance_scaled = var;
    let log2_variance = variance_scaled.log2() + log2_offset;
    let verdict =
        ks_pvalue > KS_ALPHA && ad < AD_CRITICAL_15PCT && (KURTOSIS_BAND.0..=KURTOSIS_BAND.1).contains(&kurtosis);
    Ok(GaussianityReport {
        count: n,
        mean: mean * (log2_offset / 2.0).exp2(),
        sample_variance: log2_variance.exp2(),
        log2_variance,
        skewness,
        kurtosis,
        ks_statistic: d,
        ks_pvalue,
        ad_statistic: ad,
        ad_critical_15pct: AD_CRITICAL_15PCT,
        verdict,
    })
}

pub fn summarize(s: &SampleSet) -> Result<GaussianityReport> {
    let (xs, shift) = s.scaled_f64();
    summarize_f64(&xs, 2.0 * shift as f64)
}

/// Monte Carlo estimate of `E[a^k|_0]` and `E[(a^k|_0)²]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean_of_coeff: f64,
    pub mean_of_square: f64,
    /// Standard error of `mean_of_square`.
    pub square_std_error: f64,
}

fn negacyclic_i128(a: &[i128], b: &[i128]) -> Vec<i128> {
    let n = a.len();
    let mut out = vec![0i128; n];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            let k = i + j;
            if k < n {
                out[k] += x * y;
            } else {
                out[k - n] -= x * y;
            }
        }
    }
    out
}

/// Samples `a` from `spec` each trial and powers it exactly in `Z[x]/(x^n+1)`.
pub fn moment_oracle(spec: &SamplerSpec, n: usize, k: u32, trials: usize) -> Result<MomentEstimate> {
    if k == 0 || !n.is_power_of_two() || trials < 2 {
        return Err(Error::InvalidParams(format!(
            "moment oracle needs k ≥ 1, power-of-two n, 2+ trials (k={k}, n={n})"
        )));
    }
    if matches!(spec.kind, SamplerKind::Uniform) {
        return Err(Error::InvalidParams("moment oracle needs a small-coefficient distribution".into()));
    }
    spec.kind.validate(n)?;
    let mut sampler = Sampler::new(spec.seed);
    let (mut s1, mut s2, mut s4) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let a: Vec<i128> = sampler.small(&spec.kind, n).into_iter().map(i128::from).collect();
        let mut p = a.clone();
        for _ in 1..k {
            p = negacyclic_i128(&p, &a);
        }
        let x = p[0] as f64;
        s1 += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    let tf = trials as f64;
    let mean_sq = s2 / tf;
    let var_sq = (s4 / tf - mean_sq * mean_sq).max(0.0) * tf / (tf - 1.0);
    Ok(MomentEstimate { mean_of_coeff: s1 / tf, mean_of_square: mean_sq, square_std_error: (var_sq / tf).sqrt() })
}

/// `k!·n^{k−1}·V^k`.
pub fn power_moment_prediction(n: usize, k: u32, variance: f64) -> f64 {
    let fact: f64 = (1..=k).map(f64::from).product();
    fact * (n as f64).powi(k as i32 - 1) * variance.powi(k as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub probe: String,
    pub model_log2: f64,
    pub empirical_log2: f64,
    /// `model − empirical` in bits.
    pub delta: f64,
    pub underestimate: bool,
    pub within_band: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn alarm(&self) -> bool {
        self.rows.iter().any(|r| r.underestimate)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<16} {:>10} {:>10} {:>8}  flag", "probe", "model", "empirical", "delta").unwrap();
        for r in &self.rows {
            let flag = if r.underestimate {
                "UNDERESTIMATE"
            } else if !r.within_band {
                "loose"
            } else {
                "ok"
            };
            writeln!(s, "{:<16} {:>10.2} {:>10.2} {:>+8.2}  {flag}", r.probe, r.model_log2, r.empirical_log2, r.delta)
                .unwrap();
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Joins model and empirical log2-variances by probe id.
pub fn compare_table(
    model: &BTreeMap<String, NoiseEstimate>,
    empirical: &BTreeMap<String, GaussianityReport>,
) -> Result<ComparisonTable> {
    if model.len() != empirical.len() || model.keys().any(|k| !empirical.contains_key(k)) {
        let m: Vec<&String> = model.keys().collect();
        let e: Vec<&String> = empirical.keys().collect();
        return Err(Error::ProbeMismatch(format!("model probes {m:?} vs empirical {e:?}")));
    }
    let rows = model
        .iter()
        .map(|(probe, est)| {
            let emp = empirical[probe].log2_variance;
            let delta = est.log2_variance - emp;
            ComparisonRow {
                probe: probe.clone(),
                model_log2: est.log2_variance,
                empirical_log2: emp,
                delta,
                underestimate: delta < -UNDERESTIMATE_BITS,
                within_band: (-UNDERESTIMATE_BITS..=OVERESTIMATE_BITS).contains(&delta),
            }
        })
        .collect();
    Ok(ComparisonTable { rows })
}

/// Index of one coefficient of `b_μ(ι)`: `μ` is the power of `e`, `ι` the power of `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NoiseIndex {
    pub e_power: u32,
    pub s_power: u32,
    pub coeff: usize,
}

impl NoiseIndex {
    pub fn new(e_power: u32, s_power: u32, coeff: usize) -> Self {
        Self { e_power, s_power, coeff }
    }
}

/// Fresh critical quantity split as `Σ b_μ(ι)·e^μ·s^ι`.
///
/// `b_0(0) = m + t·e_0`, `b_1(0) = t·u`, `b_0(1) = t·e_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreshDecomposition {
    pub components: BTreeMap<(u32, u32), Vec<i64>>,
}

impl FreshDecomposition {
    pub fn from_trace(m: &[i64], trace: &crate::bgv::EncryptionTrace, t: u64) -> Self {
        let t = t as i64;
        let mut components = BTreeMap::new();
        components.insert((0, 0), m.iter().zip(&trace.e0).map(|(&a, &e)| a + t * e).collect());
        components.insert((1, 0), trace.u.iter().map(|&u| t * u).collect());
        components.insert((0, 1), trace.e1.iter().map(|&e| t * e).collect());
        Self { components }
    }

    pub fn get(&self, idx: NoiseIndex) -> Option<i64> {
        self.components.get(&(idx.e_power, idx.s_power)).and_then(|v| v.get(idx.coeff)).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub left: NoiseIndex,
    pub right: NoiseIndex,
    pub covariance: f64,
    pub std_error: f64,
}

impl CovarianceEstimate {
    /// `|cov| / se`; zero covariance passes when this is at most 3.
    pub fn z_score(&self) -> f64 {
        if self.std_error == 0.0 {
            if self.covariance == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.covariance.abs() / self.std_error
        }
    }
}

/// Sample covariances with standard errors for the requested index pairs.
pub fn covariance_probe(
    samples: &[FreshDecomposition],
    pairs: &[(NoiseIndex, NoiseIndex)],
) -> Result<Vec<CovarianceEstimate>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::SampleTooSmall { count: samples.len(), min: MIN_SAMPLES });
    }
    let nf = samples.len() as f64;
    pairs
        .iter()
        .map(|&(l, r)| {
            let pick = |idx: NoiseIndex| -> Result<Vec<f64>> {
                samples
                    .iter()
                    .map(|s| {
                        s.get(idx)
                            .map(|v| v as f64)
                            .ok_or_else(|| Error::ProbeMismatch(format!("no component {idx:?}")))
                    })
                    .collect()
            };
            let x = pick(l)?;
            let y = pick(r)?;
            let mx = x.iter().sum::<f64>() / nf;
            let my = y.iter().sum::<f64>() / nf;
            let prods: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).collect();
            let cov = prods.iter().sum::<f64>() / (nf - 1.0);
            let mp = prods.iter().sum::<f64>() / nf;
            let var_p = prods.iter().map(|p| (p - mp).powi(2)).sum::<f64>() / (nf - 1.0);
            Ok(CovarianceEstimate { left: l, right: r, covariance: cov, std_error: (var_p / nf).sqrt() })
        })
        .collect()
}

/// Exact `log2 |x|` for big integers, `-inf` at zero.
pub fn log2_abs(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = bits.saturating_sub(60);
    ((x.abs() >> shift).to_f64().expect("fits")).log2() + shift as f64
}
