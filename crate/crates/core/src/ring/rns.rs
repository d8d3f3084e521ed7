//! Residue-number (double-CRT) polynomials.
//!
//! A polynomial in `Z_q[x]/(x^n+1)` with `q = p_0 ⋯ p_k` is stored as one
//! residue vector per prime. Products go through a negacyclic NTT when the
//! prime is `≡ 1 (mod 2n)`; other primes fall back to an exact integer
//! convolution over internal 61-bit NTT primes followed by reduction.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use rand::Rng;

use super::crt::{BasisExtender, CrtBasis};
use super::ntt::NttTable;
use crate::arith::{is_prime, Zp};

/// Largest ring dimension the internal convolution primes support.
pub const MAX_CONV_N: usize = 1 << 16;

fn conv_prime_list(count: usize) -> Vec<u64> {
    static PRIMES: OnceLock<Mutex<Vec<u64>>> = OnceLock::new();
    let cell = PRIMES.get_or_init(|| Mutex::new(Vec::new()));
    let mut list = cell.lock().expect("conv prime cache poisoned");
    let step = 2 * MAX_CONV_N as u64;
    let mut k = list.last().map_or(((1u64 << 61) - 1) / step, |&p| (p - 1) / step - 1);
    while list.len() < count {
        let p = k * step + 1;
        if is_prime(p) {
            list.push(p);
        }
        k -= 1;
    }
    list[..count].to_vec()
}

/// Exact signed negacyclic convolution through `count` internal primes.
#[derive(Debug)]
pub struct ConvEngine {
    tables: Vec<NttTable>,
    zps: Vec<Zp>,
    crt: CrtBasis,
}

impl ConvEngine {
    /// Shared engine able to represent any convolution result of absolute value below `2^(61·count - 1)`.
    pub fn shared(n: usize, count: usize) -> Arc<ConvEngine> {
        type Cache = Mutex<HashMap<(usize, usize), Arc<ConvEngine>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("conv engine cache poisoned");
        map.entry((n, count))
            .or_insert_with(|| {
                let primes = conv_prime_list(count);
                Arc::new(ConvEngine {
                    tables: primes
                        .iter()
                        .map(|&p| NttTable::new(n, p).expect("conv primes are NTT friendly"))
                        .collect(),
                    zps: primes.iter().map(|&p| Zp::new(p)).collect(),
                    crt: CrtBasis::new(&primes),
                })
            })
            .clone()
    }

    /// Number of 61-bit primes needed for products of two operands bounded by `2^bits` in absolute value.
    pub fn primes_for(n: usize, operand_bits: u64) -> usize {
        let bound_bits = 2 * operand_bits + n.trailing_zeros() as u64 + 2;
        bound_bits.div_ceil(60) as usize
    }

    pub fn count(&self) -> usize {
        self.tables.len()
    }

    fn forward_signed(&self, a: &[i64]) -> Vec<Vec<u64>> {
        self.tables
            .iter()
            .zip(&self.zps)
            .map(|(tab, z)| {
                let mut v: Vec<u64> = a.iter().map(|&x| z.reduce_i64(x)).collect();
                tab.forward(&mut v);
                v
            })
            .collect()
    }

    fn forward_bigint(&self, a: &[BigInt]) -> Vec<Vec<u64>> {
        self.tables
            .iter()
            .zip(&self.zps)
            .map(|(tab, z)| {
                let m = BigInt::from(z.modulus());
                let mut v: Vec<u64> = a.iter().map(|x| u64::try_from(x.mod_floor(&m)).expect("residue fits")).collect();
                tab.forward(&mut v);
                v
            })
            .collect()
    }

    fn pointwise(&self, a: &mut [Vec<u64>], b: &[Vec<u64>]) {
        for ((tab, x), y) in self.tables.iter().zip(a.iter_mut()).zip(b) {
            tab.pointwise_assign(x, y);
        }
    }

    fn inverse(&self, mut a: Vec<Vec<u64>>) -> Vec<Vec<u64>> {
        for (tab, v) in self.tables.iter().zip(a.iter_mut()) {
            tab.inverse(v);
        }
        a
    }

    /// Exact negacyclic product of integer vectors.
    pub fn mul_bigint(&self, a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
        let mut fa = self.forward_bigint(a);
        let fb = self.forward_bigint(b);
        self.pointwise(&mut fa, &fb);
        let limbs = self.inverse(fa);
        let mut residues = vec![0u64; limbs.len()];
        (0..a.len())
            .map(|i| {
                for (r, l) in residues.iter_mut().zip(&limbs) {
                    *r = l[i];
                }
                self.crt.reconstruct_centered(&residues)
            })
            .collect()
    }
}

/// How products modulo one prime are computed.
#[derive(Debug)]
enum Engine {
    Ntt(NttTable),
    Conv { engine: Arc<ConvEngine>, extender: BasisExtender },
}

/// One prime of a residue basis together with its multiplication engine.
#[derive(Debug)]
pub struct PrimeModulus {
    zp: Zp,
    engine: Engine,
}

impl PrimeModulus {
    pub fn new(n: usize, p: u64) -> Self {
        let zp = Zp::new(p);
        let engine = match NttTable::new(n, p) {
            Some(tab) => Engine::Ntt(tab),
            None => {
                assert!(n <= MAX_CONV_N, "ring dimension {n} exceeds convolution support");
                let bits = 64 - p.leading_zeros() as u64;
                let engine = ConvEngine::shared(n, ConvEngine::primes_for(n, bits));
                let from: Vec<u64> = engine.crt.primes().collect();
                let extender = BasisExtender::new(&from, &[p]);
                Engine::Conv { engine, extender }
            }
        };
        Self { zp, engine }
    }

    #[inline(always)]
    pub fn zp(&self) -> &Zp {
        &self.zp
    }

    pub fn value(&self) -> u64 {
        self.zp.modulus()
    }

    pub fn is_ntt_friendly(&self) -> bool {
        matches!(self.engine, Engine::Ntt(_))
    }

    fn forward(&self, a: &[u64]) -> Transformed {
        match &self.engine {
            Engine::Ntt(tab) => {
                let mut v = a.to_vec();
                tab.forward(&mut v);
                Transformed::Ntt(v)
            }
            Engine::Conv { engine, .. } => {
                let centered: Vec<i64> = a.iter().map(|&x| self.zp.center(x)).collect();
                Transformed::Conv(engine.forward_signed(&centered))
            }
        }
    }

    fn pointwise(&self, a: &mut Transformed, b: &Transformed) {
        match (&self.engine, a, b) {
            (Engine::Ntt(tab), Transformed::Ntt(x), Transformed::Ntt(y)) => tab.pointwise_assign(x, y),
            (Engine::Conv { engine, .. }, Transformed::Conv(x), Transformed::Conv(y)) => engine.pointwise(x, y),
            _ => panic!("transform kind mismatch for prime {}", self.value()),
        }
    }

    /// Sum of two transformed operands; convolution engines leave headroom for one addition of products.
    fn add_transformed(&self, a: &mut Transformed, b: &Transformed) {
        match (&self.engine, a, b) {
            (Engine::Ntt(_), Transformed::Ntt(x), Transformed::Ntt(y)) => {
                for (u, &v) in x.iter_mut().zip(y) {
                    *u = self.zp.add(*u, v);
                }
            }
            (Engine::Conv { engine, .. }, Transformed::Conv(x), Transformed::Conv(y)) => {
                for ((xs, ys), z) in x.iter_mut().zip(y).zip(&engine.zps) {
                    for (u, &v) in xs.iter_mut().zip(ys) {
                        *u = z.add(*u, v);
                    }
                }
            }
            _ => panic!("transform kind mismatch for prime {}", self.value()),
        }
    }

    fn inverse(&self, a: Transformed) -> Vec<u64> {
        match (&self.engine, a) {
            (Engine::Ntt(tab), Transformed::Ntt(mut v)) => {
                tab.inverse(&mut v);
                v
            }
            (Engine::Conv { engine, extender }, Transformed::Conv(limbs)) => {
                let limbs = engine.inverse(limbs);
                let n = limbs[0].len();
                let mut residues = vec![0u64; limbs.len()];
                let mut digits = vec![0u64; limbs.len()];
                let mut out = [0u64];
                (0..n)
                    .map(|i| {
                        for (r, l) in residues.iter_mut().zip(&limbs) {
                            *r = l[i];
                        }
                        extender.extend(&residues, &mut digits, &mut out);
                        out[0]
                    })
                    .collect()
            }
            _ => panic!("transform kind mismatch for prime {}", self.value()),
        }
    }
}

/// Transformed representation of one residue vector.
#[derive(Clone, Debug)]
pub enum Transformed {
    Ntt(Vec<u64>),
    Conv(Vec<Vec<u64>>),
}

/// An ordered list of distinct primes sharing a ring dimension.
#[derive(Debug)]
pub struct Basis {
    n: usize,
    moduli: Vec<Arc<PrimeModulus>>,
}

impl Basis {
    pub fn new(n: usize, moduli: Vec<Arc<PrimeModulus>>) -> Arc<Self> {
        Arc::new(Self { n, moduli })
    }

    pub fn from_primes(n: usize, primes: &[u64]) -> Arc<Self> {
        Self::new(n, primes.iter().map(|&p| Arc::new(PrimeModulus::new(n, p))).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    pub fn moduli(&self) -> &[Arc<PrimeModulus>] {
        &self.moduli
    }

    pub fn primes(&self) -> Vec<u64> {
        self.moduli.iter().map(|m| m.value()).collect()
    }

    pub fn same_primes(&self, other: &Basis) -> bool {
        self.n == other.n
            && self.moduli.len() == other.moduli.len()
            && self.moduli.iter().zip(&other.moduli).all(|(a, b)| a.value() == b.value())
    }

    fn position(&self, p: u64) -> Option<usize> {
        self.moduli.iter().position(|m| m.value() == p)
    }

    pub fn product(&self) -> BigInt {
        self.moduli.iter().map(|m| BigInt::from(m.value())).product()
    }

    pub fn log2_product(&self) -> f64 {
        self.moduli.iter().map(|m| (m.value() as f64).log2()).sum()
    }
}

/// Polynomial in coefficient form, one residue vector per basis prime.
#[derive(Clone, Debug)]
pub struct RnsPoly {
    basis: Arc<Basis>,
    limbs: Vec<Vec<u64>>,
}

/// Polynomial in transformed form, ready for pointwise products.
#[derive(Clone, Debug)]
pub struct RnsTransformed {
    basis: Arc<Basis>,
    limbs: Vec<Transformed>,
}

impl RnsPoly {
    pub fn zero(basis: &Arc<Basis>) -> Self {
        Self { basis: basis.clone(), limbs: vec![vec![0; basis.n]; basis.len()] }
    }

    pub fn from_limbs(basis: &Arc<Basis>, limbs: Vec<Vec<u64>>) -> Self {
        assert_eq!(limbs.len(), basis.len());
        assert!(limbs.iter().all(|l| l.len() == basis.n));
        Self { basis: basis.clone(), limbs }
    }

    pub fn from_signed(basis: &Arc<Basis>, coeffs: &[i64]) -> Self {
        assert_eq!(coeffs.len(), basis.n);
        let limbs = basis.moduli.iter().map(|m| coeffs.iter().map(|&c| m.zp.reduce_i64(c)).collect()).collect();
        Self { basis: basis.clone(), limbs }
    }

    pub fn from_bigint(basis: &Arc<Basis>, coeffs: &[BigInt]) -> Self {
        assert_eq!(coeffs.len(), basis.n);
        let limbs = basis
            .moduli
            .iter()
            .map(|m| {
                let p = BigInt::from(m.value());
                coeffs.iter().map(|c| u64::try_from(c.mod_floor(&p)).expect("residue fits")).collect()
            })
            .collect();
        Self { basis: basis.clone(), limbs }
    }

    /// Uniform element of `Z_q[x]/(x^n+1)`: independent uniform residues per prime.
    pub fn sample_uniform<R: Rng + ?Sized>(basis: &Arc<Basis>, rng: &mut R) -> Self {
        let limbs =
            basis.moduli.iter().map(|m| (0..basis.n).map(|_| rng.random_range(0..m.value())).collect()).collect();
        Self { basis: basis.clone(), limbs }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn limbs(&self) -> &[Vec<u64>] {
        &self.limbs
    }

    pub fn limb(&self, i: usize) -> &[u64] {
        &self.limbs[i]
    }

    pub fn into_limbs(self) -> Vec<Vec<u64>> {
        self.limbs
    }

    pub fn n(&self) -> usize {
        self.basis.n
    }

    fn check(&self, other: &Self) {
        assert!(self.basis.same_primes(&other.basis), "RNS basis mismatch");
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.check(other);
        for ((l, r), m) in self.limbs.iter_mut().zip(&other.limbs).zip(&self.basis.moduli) {
            for (x, &y) in l.iter_mut().zip(r) {
                *x = m.zp.add(*x, y);
            }
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check(other);
        let mut out = self.clone();
        for ((l, r), m) in out.limbs.iter_mut().zip(&other.limbs).zip(&self.basis.moduli) {
            for (x, &y) in l.iter_mut().zip(r) {
                *x = m.zp.sub(*x, y);
            }
        }
        out
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for (l, m) in out.limbs.iter_mut().zip(&self.basis.moduli) {
            for x in l.iter_mut() {
                *x = m.zp.neg(*x);
            }
        }
        out
    }

    /// Adds `scale · e` for a small signed vector `e`.
    pub fn add_scaled_signed(&mut self, scale: u64, e: &[i64]) {
        for (l, m) in self.limbs.iter_mut().zip(&self.basis.moduli) {
            let z = m.zp;
            let s = z.constant(scale);
            for (x, &c) in l.iter_mut().zip(e) {
                let y = z.mul_const(c.unsigned_abs(), s);
                *x = if c < 0 { z.sub(*x, y) } else { z.add(*x, y) };
            }
        }
    }

    /// Multiplies every residue by the integer `k`.
    pub fn mul_scalar(&self, k: &BigInt) -> Self {
        let mut out = self.clone();
        for (l, m) in out.limbs.iter_mut().zip(&self.basis.moduli) {
            let kp = u64::try_from(k.mod_floor(&BigInt::from(m.value()))).expect("residue fits");
            for x in l.iter_mut() {
                *x = m.zp.mul(*x, kp);
            }
        }
        out
    }

    pub fn forward(&self) -> RnsTransformed {
        RnsTransformed {
            basis: self.basis.clone(),
            limbs: self.limbs.iter().zip(&self.basis.moduli).map(|(l, m)| m.forward(l)).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.check(other);
        self.forward().mul(&other.forward()).inverse()
    }

    /// Keeps only the residues of the primes in `sub`, which must be a subset of this basis.
    pub fn restrict(&self, sub: &Arc<Basis>) -> Self {
        let limbs = sub
            .moduli
            .iter()
            .map(|m| {
                let i = self.basis.position(m.value()).expect("prime missing from basis");
                self.limbs[i].clone()
            })
            .collect();
        Self { basis: sub.clone(), limbs }
    }

    /// Centered integer coefficient `i`.
    pub fn coeff_centered(&self, crt: &CrtBasis, i: usize) -> BigInt {
        let residues: Vec<u64> = self.limbs.iter().map(|l| l[i]).collect();
        crt.reconstruct_centered(&residues)
    }

    pub fn to_centered(&self) -> Vec<BigInt> {
        let crt = CrtBasis::new(&self.basis.primes());
        (0..self.n()).map(|i| self.coeff_centered(&crt, i)).collect()
    }
}

impl RnsTransformed {
    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.mul_assign(other);
        out
    }

    pub fn mul_assign(&mut self, other: &Self) {
        assert!(self.basis.same_primes(&other.basis), "RNS basis mismatch");
        for ((a, b), m) in self.limbs.iter_mut().zip(&other.limbs).zip(&self.basis.moduli) {
            m.pointwise(a, b);
        }
    }

    /// Adds another transformed polynomial; valid for sums of at most two products.
    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.basis.same_primes(&other.basis), "RNS basis mismatch");
        for ((a, b), m) in self.limbs.iter_mut().zip(&other.limbs).zip(&self.basis.moduli) {
            m.add_transformed(a, b);
        }
    }

    pub fn inverse(self) -> RnsPoly {
        let basis = self.basis.clone();
        let limbs = self.limbs.into_iter().zip(&basis.moduli).map(|(l, m)| m.inverse(l)).collect();
        RnsPoly { basis, limbs }
    }

    /// Keeps only the limbs of the primes in `sub`.
    pub fn restrict(&self, sub: &Arc<Basis>) -> Self {
        let limbs = sub
            .moduli
            .iter()
            .map(|m| {
                let i = self.basis.position(m.value()).expect("prime missing from basis");
                self.limbs[i].clone()
            })
            .collect();
        Self { basis: sub.clone(), limbs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::schoolbook_negacyclic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixed_basis_product_matches_schoolbook() {
        let n = 16;
        // 65537 is NTT friendly for n = 16, 1000003 is not
        let basis = Basis::from_primes(n, &[65537, 1_000_003, 97]);
        assert!(basis.moduli()[0].is_ntt_friendly());
        assert!(!basis.moduli()[1].is_ntt_friendly());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = basis.product();
        for _ in 0..20 {
            let a = RnsPoly::sample_uniform(&basis, &mut rng);
            let b = RnsPoly::sample_uniform(&basis, &mut rng);
            let got = a.mul(&b).to_centered();
            let want = schoolbook_negacyclic(&a.to_centered(), &b.to_centered(), &q);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn conv_engine_handles_wide_operands() {
        let n = 8;
        let e = ConvEngine::shared(n, ConvEngine::primes_for(n, 100));
        let big: BigInt = BigInt::from(1u8) << 99usize;
        let mut a = vec![BigInt::from(0); n];
        let mut b = vec![BigInt::from(0); n];
        a[n - 1] = big.clone();
        b[1] = -big.clone();
        let c = e.mul_bigint(&a, &b);
        assert_eq!(c[0], &big * &big);
    }
}
