//! Word-size modular arithmetic and primality testing.

/// Largest prime size accepted by the residue-number backend.
pub const MAX_PRIME_BITS: u32 = 62;

/// A constant multiplier with its Shoup quotient `⌊w·2^64/p⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MulConst {
    w: u64,
    ws: u64,
}

impl MulConst {
    pub fn value(&self) -> u64 {
        self.w
    }
}

/// A prime modulus below 2^62 with a precomputed Barrett constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Zp {
    p: u64,
    ratio: u128,
    one: MulConst,
}

impl Zp {
    pub fn new(p: u64) -> Self {
        assert!((2..(1u64 << MAX_PRIME_BITS)).contains(&p), "modulus {p} out of range");
        let one = MulConst { w: 1 % p, ws: ((1u128 << 64) / p as u128) as u64 };
        Self { p, ratio: u128::MAX / p as u128, one }
    }

    #[inline(always)]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    /// Reduces any `x < 2^124`.
    #[inline(always)]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x0 = x as u64 as u128;
        let x1 = x >> 64;
        let r0 = self.ratio as u64 as u128;
        let r1 = self.ratio >> 64;
        let t0 = x0 * r0;
        let t1 = x1 * r0;
        let t2 = x0 * r1;
        let mid = (t0 >> 64) + (t1 & 0xffff_ffff_ffff_ffff) + (t2 & 0xffff_ffff_ffff_ffff);
        let hi = x1 * r1 + (t1 >> 64) + (t2 >> 64) + (mid >> 64);
        let mut r = x.wrapping_sub(hi.wrapping_mul(self.p as u128)) as u64;
        // The quotient estimate is short by at most two.
        r = r.min(r.wrapping_sub(self.p));
        r.min(r.wrapping_sub(self.p))
    }

    #[inline(always)]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        let r = self.mul_const(x.unsigned_abs(), self.one);
        if x < 0 {
            self.neg(r)
        } else {
            r
        }
    }

    #[inline(always)]
    pub fn reduce_i128(&self, x: i128) -> u64 {
        if x >= 0 {
            (x as u128 % self.p as u128) as u64
        } else {
            let r = ((-x) as u128 % self.p as u128) as u64;
            if r == 0 {
                0
            } else {
                self.p - r
            }
        }
    }

    #[inline(always)]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        s.min(s.wrapping_sub(self.p))
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        let d = a.wrapping_sub(b);
        d.min(d.wrapping_add(self.p))
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        let r = self.p - a;
        r.min(r.wrapping_sub(self.p))
    }

    /// Precomputes `w` for repeated multiplication by a constant.
    pub fn constant(&self, w: u64) -> MulConst {
        let w = w % self.p;
        MulConst { w, ws: (((w as u128) << 64) / self.p as u128) as u64 }
    }

    /// `x·c mod p` for any `x < 2^64`.
    #[inline(always)]
    pub fn mul_const(&self, x: u64, c: MulConst) -> u64 {
        let q = ((x as u128 * c.ws as u128) >> 64) as u64;
        let r = x.wrapping_mul(c.w).wrapping_sub(q.wrapping_mul(self.p));
        r.min(r.wrapping_sub(self.p))
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.p;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse, `None` when `a` shares a factor with the modulus.
    pub fn inv(&self, a: u64) -> Option<u64> {
        inv_mod(a % self.p, self.p)
    }

    /// Maps a residue to the centered interval `[-p/2, p/2)`.
    #[inline(always)]
    pub fn center(&self, a: u64) -> i64 {
        if 2 * a >= self.p {
            a as i64 - self.p as i64
        } else {
            a as i64
        }
    }
}

/// Extended-Euclid inverse of `a` modulo `m`.
pub fn inv_mod(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin for the full `u64` range.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime in `[start, ceiling]` with `p ≡ 1 (mod step)` that `accept` allows.
pub fn next_prime_congruent(start: u64, step: u64, ceiling: u64, accept: impl Fn(u64) -> bool) -> Option<u64> {
    let step = step.max(1);
    let start = start.max(2);
    // first candidate ≥ start with candidate ≡ 1 mod step
    let mut c = start.checked_add((step + 1 - start % step) % step)?;
    if step == 1 {
        c = start;
    }
    while c <= ceiling {
        if is_prime(c) && accept(c) {
            return Some(c);
        }
        c = c.checked_add(step)?;
    }
    None
}

/// Largest prime below `below` with `p ≡ 1 (mod step)` that `accept` allows.
pub fn prev_prime_congruent(below: u64, step: u64, accept: impl Fn(u64) -> bool) -> Option<u64> {
    let step = step.max(1);
    if below <= 2 {
        return None;
    }
    let mut c = below - 1;
    c -= (c + step - 1) % step;
    loop {
        if c < 2 {
            return None;
        }
        if is_prime(c) && accept(c) {
            return Some(c);
        }
        c = c.checked_sub(step)?;
    }
}

/// Finds a primitive `order`-th root of unity modulo prime `p`; `order` must be a power of two dividing `p - 1`.
pub fn primitive_root_of_unity(order: u64, p: u64) -> Option<u64> {
    if order == 0 || !(p - 1).is_multiple_of(order) || !order.is_power_of_two() {
        return None;
    }
    let zp = Zp::new(p);
    let cofactor = (p - 1) / order;
    for g in 2..p {
        let w = zp.pow(g, cofactor);
        // order is a power of two, so w is primitive iff w^(order/2) = -1
        if order == 1 {
            return Some(w);
        }
        if zp.pow(w, order / 2) == p - 1 {
            return Some(w);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_multiplication_matches_barrett() {
        let z = Zp::new((1u64 << 61) - 1);
        for (x, w) in [(u64::MAX, 12345u64), (0, 7), ((1 << 61) - 2, (1 << 61) - 2), (987654321987, 3)] {
            assert_eq!(z.mul_const(x, z.constant(w)), z.mul(z.reduce_u128(x as u128), w), "x={x} w={w}");
        }
    }

    #[test]
    fn barrett_matches_u128_remainder() {
        let primes = [3u64, 97, 65537, (1 << 31) - 1, 4611686018427387847];
        let mut x: u128 = 0x1234_5678_9abc_def0_1122_3344;
        for &p in &primes {
            let z = Zp::new(p);
            for _ in 0..1000 {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = (x >> 64) as u64 % p;
                let b = x as u64 % p;
                assert_eq!(z.mul(a, b), ((a as u128 * b as u128) % p as u128) as u64);
            }
        }
    }

    #[test]
    fn primality_small_range() {
        let sieve: Vec<bool> =
            (0..2000u64).map(|k| k >= 2 && (2..k).take_while(|d| d * d <= k).all(|d| k % d != 0)).collect();
        for k in 0..2000u64 {
            assert_eq!(is_prime(k), sieve[k as usize], "k = {k}");
        }
        assert!(is_prime(65537));
        assert!(!is_prime(3_215_031_751));
        assert!(is_prime(18446744073709551557));
    }

    #[test]
    fn congruent_prime_search() {
        assert_eq!(next_prime_congruent(3, 1, 100, |_| true), Some(3));
        assert_eq!(next_prime_congruent(98, 16, 1000, |_| true), Some(113));
        assert_eq!(next_prime_congruent(98, 16, 1000, |p| p != 113), Some(193));
        assert_eq!(next_prime_congruent(98, 16, 112, |_| true), None);
        assert_eq!(prev_prime_congruent(113, 16, |_| true), Some(97));
        assert_eq!(prev_prime_congruent(98, 16, |_| true), Some(97));
        assert_eq!(prev_prime_congruent(17, 16, |_| true), None);
    }

    #[test]
    fn roots_of_unity() {
        let p = 65537;
        let w = primitive_root_of_unity(16, p).unwrap();
        let z = Zp::new(p);
        assert_eq!(z.pow(w, 16), 1);
        assert_eq!(z.pow(w, 8), p - 1);
    }

    #[test]
    fn centered_residue_convention() {
        let z = Zp::new(5);
        assert_eq!(z.center(3), -2);
        assert_eq!(z.center(2), 2);
        assert_eq!(inv_mod(3, 7), Some(5));
        assert_eq!(inv_mod(6, 9), None);
    }
}
