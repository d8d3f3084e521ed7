//! Ciphertexts and homomorphic operations.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{Bgv, KeyMaterial, ScaleDown};
use crate::arith::Zp;
use crate::error::{Error, Result};
use crate::noise::{keyswitch_estimate, v_add, v_clean, v_const, v_ms, v_mult, NoiseEstimate};
use crate::ring::crt::CrtBasis;
use crate::ring::rns::RnsPoly;
use crate::ring::{RingElement, RingParams, Sampler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lineage {
    Fresh,
    PostAdd,
    PostConst,
    PostMult,
    PostMs,
    /// Raw tensor product, three components, not yet relinearized.
    Tensor,
}

/// A ciphertext at level `ℓ` together with its predicted noise.
///
/// `parts` has two components, or three straight out of [`Bgv::tensor`].
#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub(super) parts: Vec<RnsPoly>,
    pub(super) level: usize,
    pub(super) scale: u64,
    pub(super) lineage: Lineage,
    pub(super) noise: NoiseEstimate,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn parts(&self) -> &[RnsPoly] {
        &self.parts
    }

    /// Plaintext scale in `Z_t^*`; decryption yields `scale·m`, which is divided out.
    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn lineage(&self) -> Lineage {
        self.lineage
    }

    /// Advisory model prediction; never used to make decisions.
    pub fn noise(&self) -> &NoiseEstimate {
        &self.noise
    }

    pub fn predicted_variance(&self) -> f64 {
        self.noise.variance
    }

    pub(super) fn from_parts(parts: Vec<RnsPoly>, level: usize, scale: u64, noise: NoiseEstimate) -> Self {
        Self { parts, level, scale, lineage: Lineage::Fresh, noise }
    }
}

/// Randomness drawn by one encryption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptionTrace {
    pub u: Vec<i64>,
    pub e0: Vec<i64>,
    pub e1: Vec<i64>,
}

impl Bgv {
    fn check_plaintext(&self, m: &[i64]) -> Result<()> {
        if m.len() != self.n() {
            return Err(Error::InvalidParams(format!("plaintext has {} coefficients, expected {}", m.len(), self.n())));
        }
        let t = self.t() as i64;
        if let Some(bad) = m.iter().find(|&&c| 2 * c < -t || 2 * c >= t) {
            return Err(Error::PlaintextOutOfRange(bad.to_string()));
        }
        Ok(())
    }

    fn plaintext_params(&self) -> RingParams {
        RingParams::new(self.n(), self.t()).expect("validated dimension")
    }

    /// Encrypts centered plaintext coefficients at the top level.
    pub fn encrypt_coeffs(&self, m: &[i64], key: &KeyMaterial, sampler: &mut Sampler) -> Result<Ciphertext> {
        self.encrypt_traced(m, key, sampler).map(|(c, _)| c)
    }

    /// Encryption that also returns the sampled `u, e_0, e_1`.
    pub fn encrypt_traced(
        &self,
        m: &[i64],
        key: &KeyMaterial,
        sampler: &mut Sampler,
    ) -> Result<(Ciphertext, EncryptionTrace)> {
        self.check_plaintext(m)?;
        let n = self.n();
        let t = self.t();
        let level = self.top_level();
        let basis = &self.levels[level].basis;
        let u = sampler.small(&self.params.secret, n);
        let e0 = sampler.small(&self.params.error, n);
        let e1 = sampler.small(&self.params.error, n);
        let u_hat = RnsPoly::from_signed(basis, &u).forward();
        let mut c0 = key.pk_b.mul(&u_hat).inverse();
        c0.add_scaled_signed(t, &e0);
        c0.add_scaled_signed(1, m);
        let mut c1 = key.pk_a.mul(&u_hat).inverse();
        c1.add_scaled_signed(t, &e1);
        let ct = Ciphertext::from_parts(vec![c0, c1], level, 1, v_clean(&self.ctx));
        Ok((ct, EncryptionTrace { u, e0, e1 }))
    }

    pub fn encrypt(&self, m: &RingElement, key: &KeyMaterial, sampler: &mut Sampler) -> Result<Ciphertext> {
        if m.params() != &self.plaintext_params() {
            return Err(Error::ParamMismatch(format!("plaintext must live in Z_{}[x]/(x^{}+1)", self.t(), self.n())));
        }
        let coeffs: Vec<i64> = m.coeffs().iter().map(|c| i64::try_from(c).expect("centered mod t")).collect();
        self.encrypt_coeffs(&coeffs, key, sampler)
    }

    /// `c_0 + c_1·s (+ c_2·s²)` over the level basis, still in residue form.
    fn phase(&self, c: &Ciphertext, key: &KeyMaterial) -> RnsPoly {
        let s = &key.s_hat[c.level];
        let c1s = c.parts[1].forward().mul(s);
        if c.parts.len() == 3 {
            let mut s2 = s.clone();
            s2.mul_assign(s);
            let mut t2 = c.parts[2].forward();
            t2.mul_assign(&s2);
            let x = c1s.inverse().add(&t2.inverse());
            return c.parts[0].add(&x);
        }
        c.parts[0].add(&c1s.inverse())
    }

    /// `[[c_0 + c_1·s]_{q_ℓ}]_t` with the plaintext scale removed, as centered coefficients.
    pub fn decrypt_coeffs(&self, c: &Ciphertext, key: &KeyMaterial) -> Vec<i64> {
        let phase = self.phase(c, key);
        let lvl = &self.levels[c.level];
        let zt = Zp::new(self.t());
        let unscale = zt.inv(c.scale).expect("scale is a unit mod t");
        let k = phase.basis().len();
        let mut residues = vec![0u64; k];
        let mut digits = vec![0u64; k];
        let mut out = [0u64];
        (0..self.n())
            .map(|i| {
                for (r, l) in residues.iter_mut().zip(phase.limbs()) {
                    *r = l[i];
                }
                lvl.to_t.extend(&residues, &mut digits, &mut out);
                zt.center(zt.mul(out[0], unscale))
            })
            .collect()
    }

    pub fn decrypt(&self, c: &Ciphertext, key: &KeyMaterial) -> RingElement {
        let coeffs = self.decrypt_coeffs(c, key).into_iter().map(BigInt::from).collect();
        RingElement::new(self.plaintext_params(), coeffs).expect("n coefficients")
    }

    /// Decryption of a three-component ciphertext, `[[d_0 + d_1·s + d_2·s²]_{q_ℓ}]_t`.
    pub fn decrypt3(&self, d: &Ciphertext, key: &KeyMaterial) -> Result<Vec<i64>> {
        if d.parts.len() != 3 {
            return Err(Error::InvalidParams(format!("expected 3 components, got {}", d.parts.len())));
        }
        Ok(self.decrypt_coeffs(d, key))
    }

    /// The critical quantity `ν = [c_0 + c_1·s (+ c_2·s²)]_{q_ℓ}`, centered.
    pub fn critical_quantity(&self, c: &Ciphertext, key: &KeyMaterial) -> Result<Vec<BigInt>> {
        self.check_lab()?;
        Ok(self.phase(c, key).to_centered())
    }

    /// `ν|_0` alone, in `O(n·k)` without a transform.
    pub fn critical_coeff0(&self, c: &Ciphertext, key: &KeyMaterial) -> Result<BigInt> {
        self.check_lab()?;
        if c.parts.len() != 2 {
            return Ok(self.phase(c, key).coeff_centered(self.levels[c.level].to_t.source(), 0));
        }
        let s = &key.s;
        let n = self.n();
        let basis = &self.levels[c.level].basis;
        let residues: Vec<u64> = basis
            .moduli()
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let c0 = c.parts[0].limb(j);
                let c1 = c.parts[1].limb(j);
                // (c1·s)|_0 = c1_0·s_0 − Σ_{k≥1} c1_k·s_{n−k}
                let mut acc: i128 = c1[0] as i128 * s[0] as i128;
                for k in 1..n {
                    acc -= c1[k] as i128 * s[n - k] as i128;
                }
                let z = m.zp();
                z.add(c0[0], z.reduce_i128(acc))
            })
            .collect();
        Ok(self.levels[c.level].to_t.source().reconstruct_centered(&residues))
    }

    /// `log2(q_ℓ) − log2(‖ν‖_∞) − 1`.
    pub fn noise_budget(&self, c: &Ciphertext, key: &KeyMaterial) -> Result<f64> {
        let nu = self.critical_quantity(c, key)?;
        let max = nu.iter().map(|x| x.abs()).max().unwrap_or_else(BigInt::zero);
        let log2_norm = if max.is_zero() { 0.0 } else { bigint_log2(&max) };
        Ok(self.levels[c.level].log2_q - log2_norm - 1.0)
    }

    fn same_level(&self, a: &Ciphertext, b: &Ciphertext) -> Result<()> {
        if a.level != b.level {
            return Err(Error::LevelMismatch { left: a.level, right: b.level });
        }
        if a.scale != b.scale {
            return Err(Error::ScaleMismatch { left: a.scale, right: b.scale });
        }
        Ok(())
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.same_level(a, b)?;
        if a.parts.len() != b.parts.len() {
            return Err(Error::InvalidParams("component count mismatch".into()));
        }
        let parts = a.parts.iter().zip(&b.parts).map(|(x, y)| x.add(y)).collect();
        Ok(Ciphertext {
            parts,
            level: a.level,
            scale: a.scale,
            lineage: Lineage::PostAdd,
            noise: v_add(&a.noise, &b.noise),
        })
    }

    /// Multiplies by a plaintext constant `k` with centered coefficients mod t.
    pub fn const_mul(&self, k: &[i64], c: &Ciphertext) -> Result<Ciphertext> {
        self.check_plaintext(k)?;
        let basis = &self.levels[c.level].basis;
        let k_hat = RnsPoly::from_signed(basis, k).forward();
        let parts = c.parts.iter().map(|p| p.forward().mul(&k_hat).inverse()).collect();
        Ok(Ciphertext {
            parts,
            level: c.level,
            scale: c.scale,
            lineage: Lineage::PostConst,
            noise: v_const(&c.noise, &self.ctx),
        })
    }

    /// `(c_0·c_0', c_0·c_1' + c_1·c_0', c_1·c_1')` without relinearization.
    pub fn tensor(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        if a.level != b.level {
            return Err(Error::LevelMismatch { left: a.level, right: b.level });
        }
        if a.parts.len() != 2 || b.parts.len() != 2 {
            return Err(Error::InvalidParams("tensor needs two-component inputs".into()));
        }
        let a0 = a.parts[0].forward();
        let a1 = a.parts[1].forward();
        let b0 = b.parts[0].forward();
        let b1 = b.parts[1].forward();
        let d0 = a0.mul(&b0).inverse();
        let mut d1 = a0.mul(&b1);
        d1.add_assign(&a1.mul(&b0));
        let d1 = d1.inverse();
        let d2 = a1.mul(&b1).inverse();
        let zt = Zp::new(self.t());
        Ok(Ciphertext {
            parts: vec![d0, d1, d2],
            level: a.level,
            scale: zt.mul(a.scale, b.scale),
            lineage: Lineage::Tensor,
            noise: v_mult(&a.noise, &b.noise, &self.ctx),
        })
    }

    /// GHS relinearization in the extended modulus `q_ℓ·P`, followed by an exact scale-down by `P`.
    pub fn key_switch_ghs(&self, d: &Ciphertext, key: &KeyMaterial) -> Result<Ciphertext> {
        if d.parts.len() != 3 {
            return Err(Error::InvalidParams(format!("key switching expects 3 components, got {}", d.parts.len())));
        }
        let lvl = &self.levels[d.level];
        let d2_ext = self.extend_to_aux(&d.parts[2], d.level);
        let d2_hat = d2_ext.forward();
        let (ek0, ek1) = &key.ek[d.level];
        let p = self.aux_product();
        let mut out = Vec::with_capacity(2);
        for (i, ek) in [ek0, ek1].into_iter().enumerate() {
            let u = d2_hat.mul(ek).inverse();
            let lifted = self.lift_times_p(&d.parts[i], d.level, &p);
            out.push(lvl.ghs_down.apply(&u.add(&lifted))?);
        }
        let ks = keyswitch_estimate(&self.ctx, lvl.log2_q, lvl.log2_ext);
        Ok(Ciphertext {
            parts: out,
            level: d.level,
            scale: d.scale,
            lineage: Lineage::PostMult,
            noise: d.noise.absorb(&ks),
        })
    }

    /// Tensor product followed by GHS relinearization.
    pub fn multiply(&self, a: &Ciphertext, b: &Ciphertext, key: &KeyMaterial) -> Result<Ciphertext> {
        let d = self.tensor(a, b)?;
        self.key_switch_ghs(&d, key)
    }

    /// Modulus switch from `q_ℓ` down to `q_target`.
    pub fn mod_switch(&self, c: &Ciphertext, target: usize) -> Result<Ciphertext> {
        if target >= c.level {
            return Err(Error::ModSwitch(format!("target level {target} is not below {}", c.level)));
        }
        let ad_hoc;
        let down: &ScaleDown = if target + 1 == c.level {
            self.levels[c.level].ms_down.as_ref().expect("level ≥ 1 has a switch")
        } else {
            ad_hoc = ScaleDown::new(&self.levels[c.level].basis, self.levels[target].basis.clone(), self.t())?;
            &ad_hoc
        };
        let parts = c.parts.iter().map(|p| down.apply(p)).collect::<Result<Vec<_>>>()?;
        let zt = Zp::new(self.t());
        let scale = zt.mul(c.scale, zt.inv(down.p_mod_t).expect("dropped primes are units mod t"));
        let ratio = (self.levels[target].log2_q - self.levels[c.level].log2_q).exp2();
        Ok(Ciphertext {
            parts,
            level: target,
            scale,
            lineage: Lineage::PostMs,
            noise: v_ms(&c.noise, ratio, &self.ctx),
        })
    }

    /// Multiplies the plaintext scale by `k`, used to align scales before adding.
    pub fn rescale_plaintext(&self, c: &Ciphertext, k: u64) -> Result<Ciphertext> {
        let zt = Zp::new(self.t());
        let kk = k % self.t();
        if zt.inv(kk).is_none() {
            return Err(Error::InvalidParams("scale factor must be a unit mod t".into()));
        }
        let kc = zt.center(kk);
        let mut out = c.clone();
        out.parts = c.parts.iter().map(|p| p.mul_scalar(&BigInt::from(kc))).collect();
        // the phase now encodes k·scale·m
        out.scale = zt.mul(c.scale, kk);
        Ok(out)
    }

    fn extend_to_aux(&self, x: &RnsPoly, level: usize) -> RnsPoly {
        let lvl = &self.levels[level];
        let k = x.basis().len();
        let a = self.aux.len();
        let mut aux_limbs = vec![vec![0u64; self.n()]; a];
        let mut residues = vec![0u64; k];
        let mut digits = vec![0u64; k];
        let mut out = vec![0u64; a];
        for i in 0..self.n() {
            for (r, l) in residues.iter_mut().zip(x.limbs()) {
                *r = l[i];
            }
            lvl.to_aux.extend(&residues, &mut digits, &mut out);
            for (limb, &v) in aux_limbs.iter_mut().zip(&out) {
                limb[i] = v;
            }
        }
        let mut limbs = x.limbs().to_vec();
        limbs.extend(aux_limbs);
        RnsPoly::from_limbs(&lvl.ext, limbs)
    }

    /// `P·x` over `q_ℓ·P`: zero on the auxiliary primes.
    fn lift_times_p(&self, x: &RnsPoly, level: usize, p: &BigInt) -> RnsPoly {
        let lvl = &self.levels[level];
        let scaled = x.mul_scalar(p);
        let mut limbs = scaled.into_limbs();
        limbs.extend(std::iter::repeat_n(vec![0u64; self.n()], self.aux.len()));
        RnsPoly::from_limbs(&lvl.ext, limbs)
    }

    /// CRT helper for the level basis.
    pub fn level_crt(&self, level: usize) -> &CrtBasis {
        self.levels[level].to_t.source()
    }
}

fn bigint_log2(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        let shift = bits.saturating_sub(60);
        let top: f64 = u64::try_from(x.abs() >> shift).expect("fits") as f64;
        top.log2() + shift as f64
    } else {
        bits as f64
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy_chain;
    use super::super::SchemeParams;
    use super::*;
    use crate::ring::schoolbook_negacyclic;

    const T: u64 = 97;

    fn scheme(n: usize, levels: usize) -> Bgv {
        Bgv::new(SchemeParams::standard(n, T, toy_chain(n, T, levels, 30))).unwrap().with_lab_mode(true)
    }

    fn random_plain(s: &mut Sampler, n: usize) -> Vec<i64> {
        (0..n).map(|_| s.uniform_centered(T)).collect()
    }

    fn big(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    fn ring_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
        // exact integer negacyclic product, modulus large enough to never wrap
        let huge = BigInt::from(1u8) << 400usize;
        schoolbook_negacyclic(a, b, &huge)
    }

    fn add_vec(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    fn scaled(a: &[BigInt], k: i64) -> Vec<BigInt> {
        a.iter().map(|x| x * k).collect()
    }

    #[test]
    fn round_trip_and_homomorphism() {
        let bgv = scheme(16, 4);
        let mut s = Sampler::new(11);
        let key = bgv.keygen(&mut s);
        for _ in 0..50 {
            let m1 = random_plain(&mut s, 16);
            let m2 = random_plain(&mut s, 16);
            let c1 = bgv.encrypt_coeffs(&m1, &key, &mut s).unwrap();
            let c2 = bgv.encrypt_coeffs(&m2, &key, &mut s).unwrap();
            assert_eq!(bgv.decrypt_coeffs(&c1, &key), m1, "round trip");
            let sum = bgv.add(&c1, &c2).unwrap();
            assert_eq!(bgv.decrypt_coeffs(&sum, &key), bgv.plaintext_add(&m1, &m2), "addition");
            let prod = bgv.multiply(&c1, &c2, &key).unwrap();
            assert_eq!(bgv.decrypt_coeffs(&prod, &key), bgv.plaintext_mul(&m1, &m2), "multiplication");
            let k = random_plain(&mut s, 16);
            let kc = bgv.const_mul(&k, &c1).unwrap();
            assert_eq!(bgv.decrypt_coeffs(&kc, &key), bgv.plaintext_mul(&k, &m1), "constant");
            let ms = bgv.mod_switch(&prod, 2).unwrap();
            assert_eq!(bgv.decrypt_coeffs(&ms, &key), bgv.plaintext_mul(&m1, &m2), "after ms");
        }
    }

    #[test]
    fn multiply_by_one_and_monomial() {
        let bgv = scheme(8, 3);
        let mut s = Sampler::new(12);
        let key = bgv.keygen(&mut s);
        let m = random_plain(&mut s, 8);
        let mut one = vec![0i64; 8];
        one[0] = 1;
        let c = bgv.encrypt_coeffs(&m, &key, &mut s).unwrap();
        let c1 = bgv.encrypt_coeffs(&one, &key, &mut s).unwrap();
        assert_eq!(bgv.decrypt_coeffs(&bgv.multiply(&c, &c1, &key).unwrap(), &key), m);
        let mut x = vec![0i64; 8];
        x[1] = 1;
        let shifted = bgv.decrypt_coeffs(&bgv.const_mul(&x, &c).unwrap(), &key);
        assert_eq!(shifted, bgv.plaintext_mul(&x, &m));
        assert_eq!(bgv.decrypt_coeffs(&bgv.const_mul(&one, &c).unwrap(), &key), m);
    }

    #[test]
    fn relinearization_matches_three_component_decryption() {
        let bgv = scheme(16, 3);
        let mut s = Sampler::new(13);
        let key = bgv.keygen(&mut s);
        for _ in 0..20 {
            let a = bgv.encrypt_coeffs(&random_plain(&mut s, 16), &key, &mut s).unwrap();
            let b = bgv.encrypt_coeffs(&random_plain(&mut s, 16), &key, &mut s).unwrap();
            let d = bgv.tensor(&a, &b).unwrap();
            let ks = bgv.key_switch_ghs(&d, &key).unwrap();
            assert_eq!(bgv.decrypt_coeffs(&ks, &key), bgv.decrypt3(&d, &key).unwrap());
        }
    }

    #[test]
    fn fresh_critical_quantity_from_logged_randomness() {
        for n in [8usize, 16] {
            let bgv = scheme(n, 3);
            let mut s = Sampler::new(14 + n as u64);
            let key = bgv.keygen(&mut s);
            let m = random_plain(&mut s, n);
            let (c, tr) = bgv.encrypt_traced(&m, &key, &mut s).unwrap();
            let nu = bgv.critical_quantity(&c, &key).unwrap();
            // ν = m + t(e·u + e_1·s + e_0)
            let eu = ring_mul(&big(key.public_error()), &big(&tr.u));
            let e1s = ring_mul(&big(&tr.e1), &big(key.secret()));
            let inner = add_vec(&add_vec(&eu, &e1s), &big(&tr.e0));
            let expect = add_vec(&big(&m), &scaled(&inner, T as i64));
            assert_eq!(nu, expect, "n = {n}");
            assert_eq!(bgv.critical_coeff0(&c, &key).unwrap(), expect[0]);
        }
    }

    #[test]
    fn add_const_and_tensor_critical_quantities() {
        let bgv = scheme(8, 3);
        let mut s = Sampler::new(20);
        let key = bgv.keygen(&mut s);
        let a = bgv.encrypt_coeffs(&random_plain(&mut s, 8), &key, &mut s).unwrap();
        let b = bgv.encrypt_coeffs(&random_plain(&mut s, 8), &key, &mut s).unwrap();
        let na = bgv.critical_quantity(&a, &key).unwrap();
        let nb = bgv.critical_quantity(&b, &key).unwrap();
        let sum = bgv.critical_quantity(&bgv.add(&a, &b).unwrap(), &key).unwrap();
        assert_eq!(sum, add_vec(&na, &nb));
        let k = random_plain(&mut s, 8);
        let kc = bgv.critical_quantity(&bgv.const_mul(&k, &a).unwrap(), &key).unwrap();
        assert_eq!(kc, ring_mul(&big(&k), &na));
        let d = bgv.critical_quantity(&bgv.tensor(&a, &b).unwrap(), &key).unwrap();
        assert_eq!(d, ring_mul(&na, &nb), "ν_mul = ν·ν' before wrap-around");
    }

    #[test]
    fn mod_switch_critical_quantity_identity() {
        let bgv = scheme(8, 3);
        let mut s = Sampler::new(21);
        let key = bgv.keygen(&mut s);
        let c = bgv.encrypt_coeffs(&random_plain(&mut s, 8), &key, &mut s).unwrap();
        let p = bgv.params().chain.primes()[2] as i64;
        let nu = bgv.critical_quantity(&c, &key).unwrap();
        let ms = bgv.mod_switch(&c, 1).unwrap();
        let nu2 = bgv.critical_quantity(&ms, &key).unwrap();
        // p·ν' − ν = δ_0 + δ_1·s with δ_i ≡ 0 mod t and ‖δ_i‖ ≤ t·p/2
        let diff: Vec<BigInt> = nu2.iter().zip(&nu).map(|(a, b)| a * p - b).collect();
        let t = BigInt::from(T);
        let bound = BigInt::from(T as i64 * p / 2 * 9);
        for d in &diff {
            assert!((d % &t).is_zero(), "δ must vanish mod t");
            assert!(d.abs() <= bound);
        }
        let direct = bgv.critical_quantity(&bgv.mod_switch(&c, 0).unwrap(), &key).unwrap();
        assert_eq!(direct.len(), 8);
    }

    #[test]
    fn injected_overflow_breaks_decryption() {
        let bgv = scheme(8, 2);
        let mut s = Sampler::new(22);
        let key = bgv.keygen(&mut s);
        let m = random_plain(&mut s, 8);
        let mut c = bgv.encrypt_coeffs(&m, &key, &mut s).unwrap();
        let q = bgv.params().chain.level_product(1);
        let mut bump = vec![BigInt::zero(); 8];
        // a multiple of t is invisible to decryption unless it pushes ν past q/2
        let t = BigInt::from(T);
        bump[0] = (&q / 2u8 / &t + 1u8) * &t;
        c.parts[0] = c.parts[0].add(&RnsPoly::from_bigint(c.parts[0].basis(), &bump));
        assert_ne!(bgv.decrypt_coeffs(&c, &key), m);
    }

    #[test]
    fn lab_mode_gates_extraction() {
        let bgv = Bgv::new(SchemeParams::standard(8, T, toy_chain(8, T, 2, 30))).unwrap();
        let mut s = Sampler::new(23);
        let key = bgv.keygen(&mut s);
        let c = bgv.encrypt_coeffs(&random_plain(&mut s, 8), &key, &mut s).unwrap();
        assert!(matches!(bgv.critical_quantity(&c, &key), Err(Error::LabModeDisabled)));
        assert!(bgv.encrypt_coeffs(&[50; 8], &key, &mut s).is_err(), "coefficient 50 is not centered mod 97");
    }

    #[test]
    fn level_and_scale_mismatch() {
        let bgv = scheme(8, 3);
        let mut s = Sampler::new(24);
        let key = bgv.keygen(&mut s);
        let c = bgv.encrypt_coeffs(&random_plain(&mut s, 8), &key, &mut s).unwrap();
        let low = bgv.mod_switch(&c, 1).unwrap();
        assert!(matches!(bgv.add(&c, &low), Err(Error::LevelMismatch { .. })));
        assert!(bgv.mod_switch(&low, 2).is_err());
    }

    #[test]
    fn chains_without_plaintext_congruence_track_scale() {
        let n = 16;
        let mut primes = Vec::new();
        let mut start = 1u64 << 30;
        while primes.len() < 3 {
            let p = crate::arith::next_prime_congruent(start, 2 * n as u64, u64::MAX >> 2, |p| p % T != 1).unwrap();
            primes.push(p);
            start = p + 1;
        }
        let chain = super::super::ModulusChain::new(primes).unwrap();
        let bgv = Bgv::new(SchemeParams::standard(n, T, chain)).unwrap();
        let mut s = Sampler::new(25);
        let key = bgv.keygen(&mut s);
        let m1 = random_plain(&mut s, n);
        let m2 = random_plain(&mut s, n);
        let c1 = bgv.mod_switch(&bgv.encrypt_coeffs(&m1, &key, &mut s).unwrap(), 1).unwrap();
        let c2 = bgv.mod_switch(&bgv.encrypt_coeffs(&m2, &key, &mut s).unwrap(), 1).unwrap();
        assert_ne!(c1.scale(), 1);
        let prod = bgv.mod_switch(&bgv.multiply(&c1, &c2, &key).unwrap(), 0).unwrap();
        assert_eq!(bgv.decrypt_coeffs(&prod, &key), bgv.plaintext_mul(&m1, &m2));
    }
}
