//! Exact arithmetic in `R_q = Z_q[x]/(x^n + 1)`.
//!
//! [`RingElement`] is the arbitrary-precision surface; the scheme itself runs
//! on [`rns::RnsPoly`]. All coefficients use the centered range `[-q/2, q/2)`.

pub mod crt;
pub mod ntt;
pub mod rns;
pub mod sampler;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use rns::ConvEngine;

pub use sampler::{sample, Sampler, SamplerKind, SamplerSpec};

/// Centered representative of `x` modulo `q`, in `[-q/2, q/2)`.
pub fn center(x: &BigInt, q: &BigInt) -> BigInt {
    let r = x.mod_floor(q);
    if &r * 2u32 >= *q {
        r - q
    } else {
        r
    }
}

/// O(n²) negacyclic product reduced to the centered range; the correctness oracle.
pub fn schoolbook_negacyclic(a: &[BigInt], b: &[BigInt], q: &BigInt) -> Vec<BigInt> {
    let n = a.len();
    let mut acc = vec![BigInt::zero(); n];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            let prod = ai * bj;
            let k = i + j;
            if k < n {
                acc[k] += prod;
            } else {
                acc[k - n] -= prod;
            }
        }
    }
    acc.iter().map(|c| center(c, q)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingParams {
    n: usize,
    modulus: BigInt,
}

impl RingParams {
    pub fn new(n: usize, modulus: impl Into<BigInt>) -> Result<Self> {
        let modulus = modulus.into();
        if !n.is_power_of_two() || n < 8 {
            return Err(Error::InvalidParams(format!("ring dimension {n} must be a power of two ≥ 8")));
        }
        if modulus < BigInt::from(2) {
            return Err(Error::InvalidParams(format!("modulus {modulus} must be at least 2")));
        }
        Ok(Self { n, modulus })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> &BigInt {
        &self.modulus
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingElement {
    params: RingParams,
    coeffs: Vec<BigInt>,
}

impl RingElement {
    /// Builds an element, reducing every coefficient into the centered range.
    pub fn new(params: RingParams, coeffs: Vec<BigInt>) -> Result<Self> {
        if coeffs.len() != params.n {
            return Err(Error::InvalidParams(format!("expected {} coefficients, got {}", params.n, coeffs.len())));
        }
        let coeffs = coeffs.iter().map(|c| center(c, &params.modulus)).collect();
        Ok(Self { params, coeffs })
    }

    pub fn from_i64(params: RingParams, coeffs: &[i64]) -> Result<Self> {
        Self::new(params, coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn zero(params: &RingParams) -> Self {
        Self { params: params.clone(), coeffs: vec![BigInt::zero(); params.n] }
    }

    pub fn one(params: &RingParams) -> Self {
        Self::monomial(params, 0)
    }

    /// `x^k`, with `k < 2n` so that `x^n = -1` is honoured.
    pub fn monomial(params: &RingParams, k: usize) -> Self {
        let mut e = Self::zero(params);
        let n = params.n;
        let (idx, sign) = if (k / n).is_multiple_of(2) { (k % n, 1) } else { (k % n, -1) };
        e.coeffs[idx] = center(&BigInt::from(sign), &params.modulus);
        e
    }

    pub fn params(&self) -> &RingParams {
        &self.params
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<BigInt> {
        self.coeffs
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.params != other.params {
            return Err(Error::ParamMismatch(format!(
                "(n={}, q={}) vs (n={}, q={})",
                self.params.n, self.params.modulus, other.params.n, other.params.modulus
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let q = &self.params.modulus;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| center(&(a + b), q)).collect();
        Ok(Self { params: self.params.clone(), coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let q = &self.params.modulus;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| center(&(a - b), q)).collect();
        Ok(Self { params: self.params.clone(), coeffs })
    }

    pub fn neg(&self) -> Self {
        let q = &self.params.modulus;
        Self { params: self.params.clone(), coeffs: self.coeffs.iter().map(|a| center(&(-a), q)).collect() }
    }

    pub fn scalar_mul(&self, k: &BigInt) -> Self {
        let q = &self.params.modulus;
        Self { params: self.params.clone(), coeffs: self.coeffs.iter().map(|a| center(&(a * k), q)).collect() }
    }

    /// Negacyclic product through the multi-prime NTT backend.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let bits = self.params.modulus.bits().max(1);
        let engine = ConvEngine::shared(self.params.n, ConvEngine::primes_for(self.params.n, bits));
        let q = &self.params.modulus;
        let coeffs = engine.mul_bigint(&self.coeffs, &other.coeffs).iter().map(|c| center(c, q)).collect();
        Ok(Self { params: self.params.clone(), coeffs })
    }

    /// Negacyclic product by the O(n²) schoolbook definition.
    pub fn mul_schoolbook(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let coeffs = schoolbook_negacyclic(&self.coeffs, &other.coeffs, &self.params.modulus);
        Ok(Self { params: self.params.clone(), coeffs })
    }

    /// Reinterprets the centered coefficients modulo `new_modulus`.
    pub fn centered_reduce(&self, new_modulus: &BigInt) -> Result<Self> {
        let params = RingParams::new(self.params.n, new_modulus.clone())?;
        Self::new(params, self.coeffs.clone())
    }

    /// Largest absolute coefficient.
    pub fn inf_norm(&self) -> BigInt {
        self.coeffs.iter().map(|c| c.abs()).max().unwrap_or_else(BigInt::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// JSON array of decimal-string coefficients.
    pub fn to_json(&self) -> String {
        let strs: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        serde_json::to_string(&strs).expect("string vector serializes")
    }

    pub fn from_json(params: RingParams, json: &str) -> Result<Self> {
        let strs: Vec<String> = serde_json::from_str(json)?;
        let coeffs = strs
            .iter()
            .map(|s| s.parse::<BigInt>().map_err(|e| Error::Format(format!("coefficient {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(params, coeffs)
    }
}
