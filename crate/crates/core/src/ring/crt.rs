//! Chinese remaindering over word-size primes via Garner's mixed radix form.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

use crate::arith::{inv_mod, MulConst, Zp};

/// Garner constants for a fixed list of pairwise coprime primes.
#[derive(Clone, Debug)]
pub struct CrtBasis {
    zps: Vec<Zp>,
    /// `inv[i][j] = p_j^{-1} mod p_i` for `j < i`.
    inv: Vec<Vec<MulConst>>,
    /// The constant one per prime, used to reduce foreign digits.
    one: Vec<MulConst>,
    /// Mixed-radix digits of `ceil(q/2)`.
    half_digits: Vec<u64>,
    /// `prefix[i] = p_0 ⋯ p_{i-1}`.
    prefix: Vec<BigUint>,
    product: BigUint,
}

impl CrtBasis {
    pub fn new(primes: &[u64]) -> Self {
        assert!(!primes.is_empty(), "empty CRT basis");
        let zps: Vec<Zp> = primes.iter().map(|&p| Zp::new(p)).collect();
        let inv = (0..primes.len())
            .map(|i| {
                (0..i)
                    .map(|j| {
                        zps[i].constant(inv_mod(primes[j] % primes[i], primes[i]).expect("primes must be coprime"))
                    })
                    .collect()
            })
            .collect();
        let mut prefix = Vec::with_capacity(primes.len());
        let mut acc = BigUint::one();
        for &p in primes {
            prefix.push(acc.clone());
            acc *= p;
        }
        let half: BigUint = (&acc + 1u32) >> 1;
        let one = zps.iter().map(|z| z.constant(1)).collect();
        let mut basis = Self { zps, inv, one, half_digits: Vec::new(), prefix, product: acc };
        basis.half_digits = basis.digits_of(&half);
        basis
    }

    pub fn len(&self) -> usize {
        self.zps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zps.is_empty()
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.zps.iter().map(|z| z.modulus())
    }

    pub fn product(&self) -> &BigUint {
        &self.product
    }

    fn digits_of(&self, x: &BigUint) -> Vec<u64> {
        let residues: Vec<u64> = self
            .zps
            .iter()
            .map(|z| {
                let r = x % z.modulus();
                r.to_u64_digits().first().copied().unwrap_or(0)
            })
            .collect();
        let mut out = vec![0; residues.len()];
        self.mixed_radix(&residues, &mut out);
        out
    }

    /// Mixed-radix digits `v` with `x = v_0 + v_1 p_0 + v_2 p_0 p_1 + ⋯`.
    #[inline]
    pub fn mixed_radix(&self, residues: &[u64], out: &mut [u64]) {
        for i in 0..self.zps.len() {
            let z = &self.zps[i];
            let mut acc = residues[i];
            for (j, &v) in out[..i].iter().enumerate() {
                // acc + p - (v_j mod p), left unreduced for the constant product
                let vj = z.mul_const(v, self.one[i]);
                acc = z.mul_const(acc + z.modulus() - vj, self.inv[i][j]);
            }
            out[i] = acc;
        }
    }

    /// True when the reconstructed value lies in `[ceil(q/2), q)`, i.e. is negative once centered.
    #[inline]
    pub fn is_upper_half(&self, digits: &[u64]) -> bool {
        for i in (0..digits.len()).rev() {
            if digits[i] != self.half_digits[i] {
                return digits[i] > self.half_digits[i];
            }
        }
        true
    }

    /// Centered integer in `[-q/2, q/2)` with the given residues.
    pub fn reconstruct_centered(&self, residues: &[u64]) -> BigInt {
        let mut digits = vec![0; self.len()];
        self.mixed_radix(residues, &mut digits);
        let mut acc = BigUint::zero();
        for (d, pre) in digits.iter().zip(&self.prefix) {
            acc += pre * *d;
        }
        if self.is_upper_half(&digits) {
            BigInt::from(acc) - BigInt::from(self.product.clone())
        } else {
            BigInt::from(acc)
        }
    }
}

/// Reduces centered values given in one basis modulo a list of other primes.
#[derive(Clone, Debug)]
pub struct BasisExtender {
    from: CrtBasis,
    targets: Vec<Zp>,
    /// `prefix_mod[k][i] = (p_0 ⋯ p_{i-1}) mod m_k`.
    prefix_mod: Vec<Vec<MulConst>>,
    product_mod: Vec<u64>,
}

impl BasisExtender {
    pub fn new(from: &[u64], targets: &[u64]) -> Self {
        let from_basis = CrtBasis::new(from);
        let targets: Vec<Zp> = targets.iter().map(|&m| Zp::new(m)).collect();
        let prefix_mod = targets
            .iter()
            .map(|z| {
                let mut acc = 1 % z.modulus();
                from.iter()
                    .map(|&p| {
                        let cur = z.constant(acc);
                        acc = z.mul(acc, p % z.modulus());
                        cur
                    })
                    .collect()
            })
            .collect();
        let product_mod =
            targets.iter().map(|z| from.iter().fold(1 % z.modulus(), |acc, &p| z.mul(acc, p % z.modulus()))).collect();
        Self { from: from_basis, targets, prefix_mod, product_mod }
    }

    pub fn source(&self) -> &CrtBasis {
        &self.from
    }

    /// Writes `[x]_{m_k}` for the centered `x` with the given residues into `out`.
    #[inline]
    pub fn extend(&self, residues: &[u64], digits: &mut [u64], out: &mut [u64]) {
        self.from.mixed_radix(residues, digits);
        let upper = self.from.is_upper_half(digits);
        for (k, z) in self.targets.iter().enumerate() {
            let mut acc = 0u64;
            for (i, &d) in digits.iter().enumerate() {
                acc = z.add(acc, z.mul_const(d, self.prefix_mod[k][i]));
            }
            if upper {
                acc = z.sub(acc, self.product_mod[k]);
            }
            out[k] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_integer::Integer;

    #[test]
    fn reconstruct_matches_direct_value() {
        let primes = [97u64, 193, 257, 65537];
        let basis = CrtBasis::new(&primes);
        let q: BigInt = primes.iter().map(|&p| BigInt::from(p)).product();
        for x in [-1i64, 0, 1, 12345, -987654, 157_000_000_000 / 2] {
            let xb = BigInt::from(x);
            let residues: Vec<u64> =
                primes.iter().map(|&p| xb.mod_floor(&BigInt::from(p)).try_into().unwrap()).collect();
            let rec = basis.reconstruct_centered(&residues);
            let expected = {
                let r = xb.mod_floor(&q);
                if &r * 2 >= q {
                    r - &q
                } else {
                    r
                }
            };
            assert_eq!(rec, expected);
        }
    }

    #[test]
    fn extension_reduces_centered_value() {
        let ext = BasisExtender::new(&[97, 193], &[7, 65537]);
        let mut digits = [0; 2];
        let mut out = [0; 2];
        // -5 in Z_{97*193}
        let q = 97 * 193;
        let v = q - 5;
        ext.extend(&[v % 97, v % 193], &mut digits, &mut out);
        assert_eq!(out, [2, 65532]);
    }
}
