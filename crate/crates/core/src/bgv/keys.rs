//! Key generation: secret, public key and the GHS relinearization key.

use num_bigint::BigInt;

use super::Bgv;
use crate::ring::rns::{RnsPoly, RnsTransformed};
use crate::ring::Sampler;

/// Secret, public and key-switching keys, with the sampled errors kept for instrumentation.
#[derive(Clone, Debug)]
pub struct KeyMaterial {
    pub(super) s: Vec<i64>,
    /// `ŝ` restricted to each level basis.
    pub(super) s_hat: Vec<RnsTransformed>,
    pub(super) pk_b: RnsTransformed,
    pub(super) pk_a: RnsTransformed,
    /// `(ek_0, ek_1)` restricted to each extension basis `q_ℓ·P`.
    pub(super) ek: Vec<(RnsTransformed, RnsTransformed)>,
    pk_a_coeffs: RnsPoly,
    pk_b_coeffs: RnsPoly,
    ek_coeffs: (RnsPoly, RnsPoly),
    pk_error: Vec<i64>,
    ks_error: Vec<i64>,
}

impl KeyMaterial {
    pub fn secret(&self) -> &[i64] {
        &self.s
    }

    /// Public key `(b, a)` over `q_{L-1}`.
    pub fn public_key(&self) -> (&RnsPoly, &RnsPoly) {
        (&self.pk_b_coeffs, &self.pk_a_coeffs)
    }

    /// GHS key `(ek_0, ek_1)` over `q_{L-1}·P`.
    pub fn switching_key(&self) -> (&RnsPoly, &RnsPoly) {
        (&self.ek_coeffs.0, &self.ek_coeffs.1)
    }

    /// Public-key error `e` with `b = −a·s + t·e`.
    pub fn public_error(&self) -> &[i64] {
        &self.pk_error
    }

    /// Key-switching error `e'`.
    pub fn switching_error(&self) -> &[i64] {
        &self.ks_error
    }
}

impl Bgv {
    /// Draws a fresh key set from `sampler`.
    pub fn keygen(&self, sampler: &mut Sampler) -> KeyMaterial {
        let n = self.n();
        let t = self.t();
        let top = &self.levels[self.top_level()].basis;
        let ext = &self.top_ext;
        let s = sampler.small(&self.params.secret, n);
        let e = sampler.small(&self.params.error, n);
        let a = RnsPoly::sample_uniform(top, sampler.rng());
        let s_ext = RnsPoly::from_signed(ext, &s).forward();
        let s_top = s_ext.restrict(top);
        let pk_a = a.forward();
        let mut b = pk_a.mul(&s_top).inverse().neg();
        b.add_scaled_signed(t, &e);
        let pk_b = b.forward();

        let e_ks = sampler.small(&self.params.error, n);
        let a_ks = RnsPoly::sample_uniform(ext, sampler.rng());
        let ek1_hat = a_ks.forward();
        let s2 = s_ext.mul(&s_ext).inverse();
        let mut ek0 = ek1_hat.mul(&s_ext).inverse().neg();
        ek0.add_scaled_signed(t, &e_ks);
        ek0.add_assign(&s2.mul_scalar(&self.aux_product()));
        let ek0_hat = ek0.forward();

        let s_hat = self.levels.iter().map(|l| s_top.restrict(&l.basis)).collect();
        let ek = self.levels.iter().map(|l| (ek0_hat.restrict(&l.ext), ek1_hat.restrict(&l.ext))).collect();
        KeyMaterial {
            s,
            s_hat,
            pk_b,
            pk_a,
            ek,
            pk_a_coeffs: a,
            pk_b_coeffs: b,
            ek_coeffs: (ek0, a_ks),
            pk_error: e,
            ks_error: e_ks,
        }
    }

    /// `P = Q/q_{L-1}` as used in the switching key.
    pub fn switching_factor(&self) -> BigInt {
        self.aux_product()
    }
}
