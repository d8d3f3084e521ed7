//! Negacyclic number-theoretic transform over a prime `p ≡ 1 (mod 2n)`.
//!
//! Forward transform is Cooley–Tukey with the twist by ψ merged into the
//! butterflies; the inverse is Gentleman–Sande. Outputs are in bit-reversed
//! order, which is irrelevant for pointwise products.

use crate::arith::{primitive_root_of_unity, Zp};

#[derive(Clone, Debug)]
pub struct NttTable {
    n: usize,
    zp: Zp,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

#[inline(always)]
fn shoup(w: u64, p: u64) -> u64 {
    (((w as u128) << 64) / p as u128) as u64
}

/// `x·w mod p` up to one extra `p`: the result lies in `[0, 2p)` for any `x`.
#[inline(always)]
fn mul_shoup_lazy(x: u64, w: u64, ws: u64, p: u64) -> u64 {
    let q = ((x as u128 * ws as u128) >> 64) as u64;
    x.wrapping_mul(w).wrapping_sub(q.wrapping_mul(p))
}

/// `x mod m` for `x < 2m` and `m ≤ 2^63`; the borrow of `x − m` lands in the top bit.
#[inline(always)]
fn reduce_once(x: u64, p: u64) -> u64 {
    let r = x.wrapping_sub(p);
    r.wrapping_add(p & (r >> 63).wrapping_neg())
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

impl NttTable {
    /// Returns `None` when `p` does not admit a primitive `2n`-th root of unity.
    pub fn new(n: usize, p: u64) -> Option<Self> {
        if !n.is_power_of_two() || !(p - 1).is_multiple_of(2 * n as u64) {
            return None;
        }
        let zp = Zp::new(p);
        let psi = primitive_root_of_unity(2 * n as u64, p)?;
        let psi_inv = zp.inv(psi)?;
        let bits = n.trailing_zeros();
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = zp.mul(pw, psi);
            pw_inv = zp.mul(pw_inv, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| shoup(w, p)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| shoup(w, p)).collect();
        let n_inv = zp.inv(n as u64)?;
        Some(Self {
            n,
            zp,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: shoup(n_inv, p),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> u64 {
        self.zp.modulus()
    }

    /// In-place forward transform; lazy butterflies keep values below `4p` until the last pass.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let p = self.zp.modulus();
        let two_p = 2 * p;
        let n = self.n;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let w = self.psi_rev[m + i];
                let ws = self.psi_rev_shoup[m + i];
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                    let x = reduce_once(*u, two_p);
                    let y = mul_shoup_lazy(*v, w, ws, p);
                    *u = x + y;
                    *v = x + two_p - y;
                }
            }
            m <<= 1;
        }
        for x in a.iter_mut() {
            *x = reduce_once(reduce_once(*x, two_p), p);
        }
    }

    /// In-place inverse transform, including the `1/n` scaling.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let p = self.zp.modulus();
        let two_p = 2 * p;
        let n = self.n;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.psi_inv_rev[h + i];
                let ws = self.psi_inv_rev_shoup[h + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                    let x = *u;
                    let y = *v;
                    *u = reduce_once(x + y, two_p);
                    *v = mul_shoup_lazy(x + two_p - y, w, ws, p);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = reduce_once(mul_shoup_lazy(*x, self.n_inv, self.n_inv_shoup, p), p);
        }
    }

    /// Pointwise product of two transformed vectors, written into `a`.
    pub fn pointwise_assign(&self, a: &mut [u64], b: &[u64]) {
        for (x, &y) in a.iter_mut().zip(b) {
            *x = self.zp.mul(*x, y);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schoolbook(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u128; n];
        let pp = p as u128;
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                let prod = x as u128 * y as u128 % pp;
                let k = i + j;
                if k < n {
                    out[k] = (out[k] + prod) % pp;
                } else {
                    out[k - n] = (out[k - n] + pp - prod) % pp;
                }
            }
        }
        out.into_iter().map(|x| x as u64).collect()
    }

    #[test]
    fn round_trip_and_negacyclic_product() {
        let big = (1u64 << 44..).map(|k| (k << 17) + 1).find(|&p| crate::arith::is_prime(p)).unwrap();
        for &(n, p) in &[(8usize, 97u64), (16, 65537), (64, 7681), (32, big)] {
            let Some(tab) = NttTable::new(n, p) else {
                panic!("no table for n={n} p={p}");
            };
            let mut seed = 12345u64;
            let mut next = || {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
                (seed >> 11) % p
            };
            let a: Vec<u64> = (0..n).map(|_| next()).collect();
            let b: Vec<u64> = (0..n).map(|_| next()).collect();
            let mut fa = a.clone();
            tab.forward(&mut fa);
            let mut back = fa.clone();
            tab.inverse(&mut back);
            assert_eq!(back, a);
            let mut fb = b.clone();
            tab.forward(&mut fb);
            tab.pointwise_assign(&mut fa, &fb);
            tab.inverse(&mut fa);
            assert_eq!(fa, schoolbook(&a, &b, p), "n={n} p={p}");
        }
    }

    #[test]
    fn rejects_unfriendly_prime() {
        assert!(NttTable::new(16, 103).is_none());
    }
}
