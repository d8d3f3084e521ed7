//! The BGV scheme over a residue-number modulus chain.
//!
//! [`Bgv`] holds every precomputed table for one parameter set: per-level
//! bases, the GHS extension basis `q_ℓ·P`, and the exact scale-down
//! operators used by both modulus switching and key switching.
//!
//! Chain primes are normally chosen `≡ 1 (mod t)` so that modulus switching
//! leaves the plaintext untouched. Other chains still work: every ciphertext
//! carries a plaintext scale in `Z_t^*` that modulus switching multiplies by
//! `(q_ℓ'/q_ℓ) mod t` and decryption divides out.

pub mod container;
mod keys;
mod ops;

use std::sync::Arc;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::arith::{gcd, inv_mod, is_prime, next_prime_congruent, prev_prime_congruent, MulConst, Zp, MAX_PRIME_BITS};
use crate::error::{Error, Result};
use crate::noise::{NoiseContext, DEFAULT_ALPHA, DEFAULT_D};
use crate::ring::crt::BasisExtender;
use crate::ring::rns::{Basis, PrimeModulus, RnsPoly};
use crate::ring::SamplerKind;

pub use container::{read_ciphertext, read_secret_key, write_ciphertext, write_secret_key, MAGIC, VERSION};
pub use keys::KeyMaterial;
pub use ops::{Ciphertext, EncryptionTrace, Lineage};

/// Ordered chain `p_0, …, p_{L-1}` with level moduli `q_ℓ = p_0 ⋯ p_ℓ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModulusChain {
    primes: Vec<u64>,
}

impl ModulusChain {
    pub fn new(primes: Vec<u64>) -> Result<Self> {
        if primes.is_empty() {
            return Err(Error::InvalidParams("empty modulus chain".into()));
        }
        for (i, &p) in primes.iter().enumerate() {
            if !is_prime(p) || p >= 1u64 << MAX_PRIME_BITS {
                return Err(Error::InvalidParams(format!("chain entry {p} is not a prime below 2^{MAX_PRIME_BITS}")));
            }
            if primes[..i].contains(&p) {
                return Err(Error::InvalidParams(format!("chain prime {p} repeated")));
            }
        }
        Ok(Self { primes })
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn top_level(&self) -> usize {
        self.primes.len() - 1
    }

    pub fn level_product(&self, level: usize) -> BigInt {
        self.primes[..=level].iter().fold(BigInt::from(1u8), |acc, &p| acc * p)
    }

    pub fn log2_level(&self, level: usize) -> f64 {
        self.primes[..=level].iter().map(|&p| (p as f64).log2()).sum()
    }
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub n: usize,
    pub t: u64,
    pub chain: ModulusChain,
    pub secret: SamplerKind,
    pub error: SamplerKind,
    /// Failure-bound parameter `D`.
    pub d: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl SchemeParams {
    /// Ternary secrets and σ = 3.19 errors.
    pub fn standard(n: usize, t: u64, chain: ModulusChain) -> Self {
        Self {
            n,
            t,
            chain,
            secret: SamplerKind::Ternary,
            error: SamplerKind::DiscreteGaussian { sigma: crate::ring::sampler::DEFAULT_SIGMA },
            d: DEFAULT_D,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if !n.is_power_of_two() || n < 8 {
            return Err(Error::InvalidParams(format!("ring dimension {n} must be a power of two ≥ 8")));
        }
        if !is_prime(self.t) || self.t % (2 * n as u64) != 1 {
            return Err(Error::InvalidParams(format!("t = {} must be a prime ≡ 1 mod 2n = {}", self.t, 2 * n)));
        }
        for &p in self.chain.primes() {
            if gcd(p, self.t) != 1 {
                return Err(Error::InvalidParams(format!("chain prime {p} shares a factor with t")));
            }
        }
        match self.secret {
            SamplerKind::Ternary | SamplerKind::TernaryHw { .. } => self.secret.validate(n)?,
            other => return Err(Error::InvalidParams(format!("secret must be ternary, got {}", other.label()))),
        }
        match self.error {
            SamplerKind::DiscreteGaussian { .. } => self.error.validate(n)?,
            other => {
                return Err(Error::InvalidParams(format!("error must be discrete Gaussian, got {}", other.label())))
            }
        }
        if !(self.d.is_finite() && self.d > 0.0) || !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParams(format!("need D > 0 and 0 < α ≤ 1, got D={} α={}", self.d, self.alpha)));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        match self.error {
            SamplerKind::DiscreteGaussian { sigma } => sigma,
            _ => unreachable!("validated params carry a Gaussian error"),
        }
    }

    pub fn noise_context(&self) -> Result<NoiseContext> {
        NoiseContext::new(self.n, self.t, self.sigma(), self.secret, self.d, self.alpha)
    }

    /// Short stable identifier: dimensions plus an FNV-1a hash of the JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("params serialize");
        let hash = json.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        format!("n{}-t{}-L{}-{hash:016x}", self.n, self.t, self.chain.len())
    }
}

/// Exact division by the product `P` of some basis primes after adding `δ = t·[−c·t^{-1}]_P`.
#[derive(Debug)]
struct ScaleDown {
    keep: Arc<Basis>,
    keep_pos: Vec<usize>,
    drop_pos: Vec<usize>,
    drop_zps: Vec<Zp>,
    /// `−t^{-1} mod p` per dropped prime.
    neg_tinv: Vec<MulConst>,
    /// Set when more than one prime is dropped.
    ext: Option<BasisExtender>,
    /// Single dropped prime `p` reduced modulo each kept prime.
    drop_mod_keep: Vec<u64>,
    /// `P^{-1}` and `t·P^{-1}` modulo each kept prime.
    pinv_keep: Vec<MulConst>,
    tpinv_keep: Vec<MulConst>,
    /// `P mod t`.
    p_mod_t: u64,
}

impl ScaleDown {
    fn new(source: &Basis, keep: Arc<Basis>, t: u64) -> Result<Self> {
        let src = source.primes();
        let keep_primes = keep.primes();
        let keep_pos: Vec<usize> =
            keep_primes.iter().map(|p| src.iter().position(|q| q == p).expect("kept prime in source")).collect();
        let drop_pos: Vec<usize> = (0..src.len()).filter(|i| !keep_pos.contains(i)).collect();
        if drop_pos.is_empty() {
            return Err(Error::ModSwitch("nothing to drop".into()));
        }
        let drop_primes: Vec<u64> = drop_pos.iter().map(|&i| src[i]).collect();
        let neg_tinv = drop_primes
            .iter()
            .map(|&p| {
                inv_mod(t % p, p)
                    .map(|v| Zp::new(p).constant((p - v) % p))
                    .ok_or_else(|| Error::ModSwitch(format!("t is not invertible modulo {p}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let ext = (drop_primes.len() > 1).then(|| BasisExtender::new(&drop_primes, &keep_primes));
        let pinv = keep_primes
            .iter()
            .map(|&q| {
                let z = Zp::new(q);
                let prod = drop_primes.iter().fold(1u64, |acc, &p| z.mul(acc, p % q));
                z.inv(prod).ok_or_else(|| Error::ModSwitch(format!("dropped factor not invertible mod {q}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let zt = Zp::new(t);
        let p_mod_t = drop_primes.iter().fold(1u64, |acc, &p| zt.mul(acc, p % t));
        let keep_zps: Vec<Zp> = keep_primes.iter().map(|&q| Zp::new(q)).collect();
        Ok(Self {
            pinv_keep: keep_zps.iter().zip(&pinv).map(|(z, &v)| z.constant(v)).collect(),
            tpinv_keep: keep_zps.iter().zip(&pinv).map(|(z, &v)| z.constant(z.mul(v, t % z.modulus()))).collect(),
            drop_mod_keep: keep_primes.iter().map(|&q| drop_primes[0] % q).collect(),
            drop_zps: drop_primes.iter().map(|&p| Zp::new(p)).collect(),
            keep,
            keep_pos,
            drop_pos,
            neg_tinv,
            ext,
            p_mod_t,
        })
    }

    /// `(c + δ)/P` over the kept primes.
    fn apply(&self, c: &RnsPoly) -> Result<RnsPoly> {
        let n = c.n();
        let limbs = c.limbs();
        let y_drop: Vec<Vec<u64>> = self
            .drop_pos
            .iter()
            .zip(&self.drop_zps)
            .zip(&self.neg_tinv)
            .map(|((&pos, z), &k)| limbs[pos].iter().map(|&r| z.mul_const(r, k)).collect())
            .collect();
        let moduli = self.keep.moduli();
        let mut y_keep = vec![vec![0u64; n]; moduli.len()];
        match &self.ext {
            Some(ext) => {
                let mut residues = vec![0u64; y_drop.len()];
                let mut digits = vec![0u64; y_drop.len()];
                let mut out = vec![0u64; moduli.len()];
                for i in 0..n {
                    for (r, y) in residues.iter_mut().zip(&y_drop) {
                        *r = y[i];
                    }
                    ext.extend(&residues, &mut digits, &mut out);
                    for (yk, &v) in y_keep.iter_mut().zip(&out) {
                        yk[i] = v;
                    }
                }
            }
            None => {
                let half = self.drop_zps[0].modulus() / 2;
                for ((yk, m), &p_mod) in y_keep.iter_mut().zip(moduli).zip(&self.drop_mod_keep) {
                    let z = m.zp();
                    let one = z.constant(1);
                    for (dst, &y) in yk.iter_mut().zip(&y_drop[0]) {
                        // centered lift: subtract p when y lies in the upper half
                        let r = z.mul_const(y, one);
                        *dst = z.sub(r, p_mod & 0u64.wrapping_sub((y > half) as u64));
                    }
                }
            }
        }
        let out = self
            .keep_pos
            .iter()
            .zip(moduli)
            .zip(&y_keep)
            .enumerate()
            .map(|(j, ((&pos, m), yk))| {
                let z = m.zp();
                let (pinv, tpinv) = (self.pinv_keep[j], self.tpinv_keep[j]);
                limbs[pos].iter().zip(yk).map(|(&x, &y)| z.add(z.mul_const(x, pinv), z.mul_const(y, tpinv))).collect()
            })
            .collect();
        Ok(RnsPoly::from_limbs(&self.keep, out))
    }
}

#[derive(Debug)]
struct Level {
    basis: Arc<Basis>,
    ext: Arc<Basis>,
    to_t: BasisExtender,
    to_aux: BasisExtender,
    ghs_down: ScaleDown,
    ms_down: Option<ScaleDown>,
    log2_q: f64,
    log2_ext: f64,
}

/// A configured BGV instance. Immutable and shareable across threads.
#[derive(Debug)]
pub struct Bgv {
    params: SchemeParams,
    ctx: NoiseContext,
    aux: Vec<u64>,
    levels: Vec<Level>,
    top_ext: Arc<Basis>,
    plain: Arc<Basis>,
    lab_mode: bool,
}

/// Auxiliary GHS primes with product `P` just above `q` (overshoot ≤ a few parts in 2^20).
fn choose_aux_primes(n: usize, t: u64, chain: &[u64], log2_q: f64) -> Result<Vec<u64>> {
    let step = 2 * n as u64;
    let count = ((log2_q + 1.0) / 60.0).ceil().max(1.0) as usize;
    let bits = (log2_q / count as f64).ceil() as u32;
    let mut aux: Vec<u64> = Vec::with_capacity(count);
    let accept = |p: u64, aux: &[u64]| !chain.contains(&p) && !aux.contains(&p) && gcd(p, t) == 1;
    let mut below = 1u64 << bits.min(60);
    for _ in 1..count {
        let p = prev_prime_congruent(below, step, |p| accept(p, &aux))
            .ok_or_else(|| Error::PrimeSearch(format!("no auxiliary prime below 2^{bits}")))?;
        aux.push(p);
        below = p;
    }
    let q = chain.iter().fold(BigInt::from(1u8), |acc, &p| acc * p);
    let partial = aux.iter().fold(BigInt::from(1u8), |acc, &p| acc * p);
    let need: BigInt = (&q + &partial - 1u8) / &partial;
    let need = u64::try_from(&need).map_err(|_| Error::PrimeSearch("auxiliary remainder exceeds 64 bits".into()))?;
    let last = next_prime_congruent(need.max(3), step, (1u64 << MAX_PRIME_BITS) - 1, |p| accept(p, &aux))
        .ok_or_else(|| Error::PrimeSearch(format!("no auxiliary prime above {need}")))?;
    aux.push(last);
    Ok(aux)
}

impl Bgv {
    pub fn new(params: SchemeParams) -> Result<Self> {
        params.validate()?;
        let ctx = params.noise_context()?;
        let n = params.n;
        let t = params.t;
        let chain = params.chain.primes().to_vec();
        let aux = choose_aux_primes(n, t, &chain, params.chain.log2_level(params.chain.top_level()))?;
        let chain_mods: Vec<Arc<PrimeModulus>> = chain.iter().map(|&p| Arc::new(PrimeModulus::new(n, p))).collect();
        let aux_mods: Vec<Arc<PrimeModulus>> = aux.iter().map(|&p| Arc::new(PrimeModulus::new(n, p))).collect();
        let log2_p: f64 = aux.iter().map(|&p| (p as f64).log2()).sum();
        let mut levels: Vec<Level> = Vec::with_capacity(chain.len());
        for l in 0..chain.len() {
            let basis = Basis::new(n, chain_mods[..=l].to_vec());
            let ext = Basis::new(n, chain_mods[..=l].iter().chain(&aux_mods).cloned().collect());
            let ms_down = match l {
                0 => None,
                _ => Some(ScaleDown::new(&basis, levels[l - 1].basis.clone(), t)?),
            };
            let log2_q = params.chain.log2_level(l);
            levels.push(Level {
                to_t: BasisExtender::new(&chain[..=l], &[t]),
                to_aux: BasisExtender::new(&chain[..=l], &aux),
                ghs_down: ScaleDown::new(&ext, basis.clone(), t)?,
                ms_down,
                log2_q,
                log2_ext: log2_q + log2_p,
                basis,
                ext,
            });
        }
        let top_ext = levels.last().expect("nonempty chain").ext.clone();
        Ok(Self { plain: Basis::from_primes(n, &[t]), params, ctx, aux, levels, top_ext, lab_mode: false })
    }

    /// Enables secret-dependent instrumentation such as critical-quantity extraction.
    pub fn with_lab_mode(mut self, on: bool) -> Self {
        self.lab_mode = on;
        self
    }

    pub fn lab_mode(&self) -> bool {
        self.lab_mode
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn noise_context(&self) -> &NoiseContext {
        &self.ctx
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn t(&self) -> u64 {
        self.params.t
    }

    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    /// Auxiliary key-switching primes; their product is `P`.
    pub fn aux_primes(&self) -> &[u64] {
        &self.aux
    }

    pub fn level_basis(&self, level: usize) -> &Arc<Basis> {
        &self.levels[level].basis
    }

    pub fn log2_q(&self, level: usize) -> f64 {
        self.levels[level].log2_q
    }

    /// `log2(q_ℓ·P)`, the key-switching modulus at `level`.
    pub fn log2_ext(&self, level: usize) -> f64 {
        self.levels[level].log2_ext
    }

    pub fn aux_product(&self) -> BigInt {
        self.aux.iter().fold(BigInt::from(1u8), |acc, &p| acc * p)
    }

    /// Negacyclic product in `Z_t[x]/(x^n+1)`, centered; the plaintext-side reference.
    pub fn plaintext_mul(&self, a: &[i64], b: &[i64]) -> Vec<i64> {
        let pa = RnsPoly::from_signed(&self.plain, a);
        let pb = RnsPoly::from_signed(&self.plain, b);
        let zt = self.plain.moduli()[0].zp();
        pa.mul(&pb).limb(0).iter().map(|&x| zt.center(x)).collect()
    }

    pub fn plaintext_add(&self, a: &[i64], b: &[i64]) -> Vec<i64> {
        let zt = self.plain.moduli()[0].zp();
        a.iter().zip(b).map(|(&x, &y)| zt.center(zt.add(zt.reduce_i64(x), zt.reduce_i64(y)))).collect()
    }

    fn check_lab(&self) -> Result<()> {
        if self.lab_mode {
            Ok(())
        } else {
            Err(Error::LabModeDisabled)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_chain(n: usize, t: u64, count: usize, bits: u32) -> ModulusChain {
        let step = 2 * n as u64 * t;
        let mut primes = Vec::new();
        let mut start = 1u64 << bits;
        while primes.len() < count {
            let p = next_prime_congruent(start, step, u64::MAX >> 2, |p| !primes.contains(&p)).unwrap();
            primes.push(p);
            start = p + 1;
        }
        ModulusChain::new(primes).unwrap()
    }

    #[test]
    fn chain_rejects_bad_entries() {
        assert!(ModulusChain::new(vec![]).is_err());
        assert!(ModulusChain::new(vec![97, 97]).is_err());
        assert!(ModulusChain::new(vec![91]).is_err());
        let c = ModulusChain::new(vec![97, 193]).unwrap();
        assert_eq!(c.level_product(1), BigInt::from(97 * 193));
    }

    #[test]
    fn params_validation() {
        let chain = toy_chain(8, 17, 3, 20);
        assert!(SchemeParams::standard(8, 17, chain.clone()).validate().is_ok());
        assert!(SchemeParams::standard(8, 19, chain.clone()).validate().is_err());
        let mut p = SchemeParams::standard(8, 17, chain);
        p.secret = SamplerKind::DiscreteGaussian { sigma: 3.0 };
        assert!(p.validate().is_err());
    }

    #[test]
    fn aux_product_is_just_above_q() {
        let chain = toy_chain(16, 97, 5, 28);
        let bgv = Bgv::new(SchemeParams::standard(16, 97, chain.clone())).unwrap();
        let q = chain.level_product(chain.top_level());
        let p = bgv.aux_product();
        assert!(p >= q, "P must cover q");
        let ratio = bgv.log2_ext(chain.top_level()) - 2.0 * chain.log2_level(chain.top_level());
        assert!((0.0..0.01).contains(&ratio), "P overshoots q by 2^{ratio}");
        for &a in bgv.aux_primes() {
            assert_eq!(a % 32, 1);
            assert!(!chain.primes().contains(&a));
        }
    }
}
