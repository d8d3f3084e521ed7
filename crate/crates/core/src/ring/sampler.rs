//! Seeded samplers for the distributions the scheme draws from.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{RingElement, RingParams};
use crate::error::{Error, Result};

/// Default standard deviation of the error distribution.
pub const DEFAULT_SIGMA: f64 = 3.19;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    /// Uniform over `Z_q` for the ring modulus in use.
    Uniform,
    Ternary,
    TernaryHw {
        h: usize,
    },
    DiscreteGaussian {
        sigma: f64,
    },
}

impl SamplerKind {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            SamplerKind::TernaryHw { h } if h == 0 || h > n => {
                Err(Error::InvalidParams(format!("hamming weight {h} outside (0, {n}]")))
            }
            SamplerKind::DiscreteGaussian { sigma } if !(sigma.is_finite() && sigma > 0.0) => {
                Err(Error::InvalidParams(format!("sigma must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    /// Per-coefficient variance; `modulus_sq` is only used by the uniform kind.
    pub fn variance(&self, n: usize, modulus_sq: f64) -> f64 {
        match *self {
            SamplerKind::Uniform => modulus_sq / 12.0,
            SamplerKind::Ternary => 2.0 / 3.0,
            SamplerKind::TernaryHw { h } => h as f64 / n as f64,
            SamplerKind::DiscreteGaussian { sigma } => sigma * sigma,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SamplerKind::Uniform => "uniform".into(),
            SamplerKind::Ternary => "ternary".into(),
            SamplerKind::TernaryHw { h } => format!("ternary_hw({h})"),
            SamplerKind::DiscreteGaussian { sigma } => format!("discrete_gaussian({sigma})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(kind: SamplerKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

/// ChaCha-backed sampler; one instance per worker or trial, never shared.
#[derive(Clone, Debug)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream `stream` under the same seed, used for per-trial reproducibility.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn ternary(&mut self, n: usize) -> Vec<i64> {
        (0..n).map(|_| self.rng.random_range(-1i64..=1)).collect()
    }

    pub fn ternary_hw(&mut self, n: usize, h: usize) -> Vec<i64> {
        let mut out = vec![0i64; n];
        for pos in index::sample(&mut self.rng, n, h) {
            out[pos] = if self.rng.random::<bool>() { 1 } else { -1 };
        }
        out
    }

    /// Discrete Gaussian `ρ_σ(x) ∝ exp(−x²/2σ²)` over the integers, by cumulative-table inversion.
    pub fn gaussian(&mut self, n: usize, sigma: f64) -> Vec<i64> {
        let (lo, cdt) = gaussian_table(sigma);
        (0..n)
            .map(|_| {
                let u = self.rng.next_u64();
                lo + cdt.partition_point(|&c| c <= u) as i64
            })
            .collect()
    }

    /// Standard normal draw, for synthetic tests.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Small signed coefficients for every kind except `Uniform`.
    pub fn small(&mut self, kind: &SamplerKind, n: usize) -> Vec<i64> {
        match *kind {
            SamplerKind::Ternary => self.ternary(n),
            SamplerKind::TernaryHw { h } => self.ternary_hw(n, h),
            SamplerKind::DiscreteGaussian { sigma } => self.gaussian(n, sigma),
            SamplerKind::Uniform => panic!("uniform sampling needs a modulus"),
        }
    }

    /// Uniform integer in `[0, bound)`.
    pub fn uniform_below(&mut self, bound: &BigUint) -> BigUint {
        assert!(!bound.is_zero());
        if bound.is_one() {
            return BigUint::zero();
        }
        let bits = (bound - 1u32).bits();
        let words = bits.div_ceil(32) as usize;
        let top_mask = if bits.is_multiple_of(32) { u32::MAX } else { (1u32 << (bits % 32)) - 1 };
        loop {
            let mut digits: Vec<u32> = (0..words).map(|_| self.rng.next_u32()).collect();
            if let Some(last) = digits.last_mut() {
                *last &= top_mask;
            }
            let x = BigUint::from_slice(&digits);
            if &x < bound {
                return x;
            }
        }
    }

    /// Uniform integer in `[0, t)` as a centered `i64`.
    pub fn uniform_centered(&mut self, t: u64) -> i64 {
        let r = self.rng.random_range(0..t);
        if 2 * r >= t {
            r as i64 - t as i64
        } else {
            r as i64
        }
    }
}

/// Tail cut in standard deviations; the mass beyond is below 2^-100.
const TAIL_CUT: f64 = 13.0;

/// Lowest support point and the inclusive CDF scaled to `2^64`.
fn gaussian_table(sigma: f64) -> (i64, Vec<u64>) {
    let half = (TAIL_CUT * sigma).ceil() as i64;
    let weights: Vec<f64> = (-half..=half).map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut cdt: Vec<u64> = weights
        .iter()
        .map(|w| {
            acc += w;
            (acc / total * 18_446_744_073_709_551_616.0) as u64
        })
        .collect();
    *cdt.last_mut().expect("nonempty support") = u64::MAX;
    (-half, cdt)
}

/// Draws an element of `params` per `spec`; discrete Gaussian values are centered mod q.
pub fn sample(spec: &SamplerSpec, params: &RingParams) -> Result<RingElement> {
    spec.kind.validate(params.n())?;
    let mut s = Sampler::new(spec.seed);
    let n = params.n();
    let coeffs: Vec<BigInt> = match spec.kind {
        SamplerKind::Uniform => {
            let q = params.modulus().magnitude().clone();
            (0..n).map(|_| BigInt::from(s.uniform_below(&q))).collect()
        }
        kind => s.small(&kind, n).into_iter().map(BigInt::from).collect(),
    };
    RingElement::new(params.clone(), coeffs)
}
