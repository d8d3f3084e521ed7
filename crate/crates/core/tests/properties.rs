//! Property tests over the ring, the noise model and the planner.

use bgvlab::noise::{correction_f, failure_log2_probability, NoiseContext};
use bgvlab::params::{plan, soundness_log2, theoretical_bits, ParamRequest, PrimeCongruence, SizingMode};
use bgvlab::ring::{RingElement, RingParams};
use num_bigint::BigInt;
use num_integer::Integer;
use proptest::prelude::*;

/// Negacyclic product from the definition, reduced into `[-q/2, q/2)`.
fn oracle_product(a: &[i64], b: &[i64], q: i64) -> Vec<BigInt> {
    let n = a.len();
    let mut acc = vec![BigInt::from(0); n];
    for i in 0..n {
        for j in 0..n {
            let prod = BigInt::from(a[i]) * b[j];
            if i + j < n {
                acc[i + j] += prod;
            } else {
                acc[i + j - n] -= prod;
            }
        }
    }
    acc.into_iter().map(|x| oracle_center(x, q)).collect()
}

fn oracle_center(x: BigInt, q: i64) -> BigInt {
    let q = BigInt::from(q);
    let r = x.mod_floor(&q);
    if BigInt::from(2) * &r >= q {
        r - q
    } else {
        r
    }
}

fn ring_case() -> impl Strategy<Value = (usize, i64, Vec<i64>, Vec<i64>)> {
    (3u32..=6, 2i64..(1 << 40)).prop_flat_map(|(log_n, q)| {
        let n = 1usize << log_n;
        let coeff = -q / 2..(q - q / 2);
        (Just(n), Just(q), prop::collection::vec(coeff.clone(), n), prop::collection::vec(coeff, n))
    })
}

fn total_bits(n: usize, depth: usize, d: f64, mode: SizingMode) -> f64 {
    let ctx = NoiseContext { d, ..NoiseContext::standard(n, 65537) };
    theoretical_bits(&ctx, depth, mode).iter().sum()
}

fn request(log_n: u32, depth: usize, d: f64) -> ParamRequest {
    ParamRequest { d, congruence: PrimeCongruence::None, ..ParamRequest::standard(1 << log_n, depth) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ring_ops_match_the_oracle((n, q, a, b) in ring_case()) {
        let params = RingParams::new(n, q).unwrap();
        let x = RingElement::from_i64(params.clone(), &a).unwrap();
        let y = RingElement::from_i64(params, &b).unwrap();
        let sum: Vec<BigInt> = a.iter().zip(&b).map(|(&u, &v)| oracle_center(BigInt::from(u) + v, q)).collect();
        prop_assert_eq!(x.add(&y).unwrap().into_coeffs(), sum, "add");
        let diff: Vec<BigInt> = a.iter().zip(&b).map(|(&u, &v)| oracle_center(BigInt::from(u) - v, q)).collect();
        prop_assert_eq!(x.sub(&y).unwrap().into_coeffs(), diff, "sub");
        let prod = oracle_product(&a, &b, q);
        prop_assert_eq!(x.mul(&y).unwrap().into_coeffs(), prod.clone(), "fast product");
        prop_assert_eq!(x.mul_schoolbook(&y).unwrap().into_coeffs(), prod, "schoolbook product");
    }

    #[test]
    fn correction_factor_is_symmetric_and_monotone(a in 0u32..12, b in 0u32..12) {
        prop_assert_eq!(correction_f(a, b), correction_f(b, a));
        prop_assert_eq!(correction_f(a, 0), 1.0);
        prop_assert!(correction_f(a + 1, b) >= correction_f(a, b));
        prop_assert!(correction_f(a, b + 1) >= correction_f(a, b));
    }

    #[test]
    fn failure_probability_is_monotone(
        log2_v in 10.0f64..120.0,
        log2_q in 20.0f64..200.0,
        step in 0.01f64..5.0,
        log_n in 3u32..16,
    ) {
        let n = 1usize << log_n;
        let v = log2_v.exp2();
        let base = failure_log2_probability(v, log2_q, n);
        prop_assert!(failure_log2_probability(v, log2_q + step, n) <= base, "larger modulus, smaller failure");
        prop_assert!(failure_log2_probability(v * step.exp2(), log2_q, n) >= base, "larger variance, larger failure");
        prop_assert!(base <= 0.0);
    }

    #[test]
    fn totals_are_monotone(log_n in 12u32..=15, depth in 0usize..8, d in 4.0f64..12.0, bump in 0.01f64..2.0) {
        let n = 1usize << log_n;
        for mode in [SizingMode::AverageCase, SizingMode::WorstCaseCanonical] {
            let base = total_bits(n, depth, d, mode);
            prop_assert!(total_bits(n, depth + 1, d, mode) >= base, "{:?} in M", mode);
            prop_assert!(total_bits(2 * n, depth, d, mode) >= base, "{:?} in n", mode);
            prop_assert!(total_bits(n, depth, d + bump, mode) >= base, "{:?} in D", mode);
        }
    }

    #[test]
    fn worst_case_dominates_average_case(log_n in 12u32..=15, depth in 0usize..10, d in 4.0f64..12.0) {
        let n = 1usize << log_n;
        let (avg, worst) = (total_bits(n, depth, d, SizingMode::AverageCase), total_bits(n, depth, d, SizingMode::WorstCaseCanonical));
        prop_assert!(worst > avg, "worst {} vs average {}", worst, avg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plans_are_sound_and_tightly_realized(log_n in 12u32..=15, depth in 0usize..7, d in 4.0f64..10.0) {
        let req = request(log_n, depth, d);
        let p = plan(&req).unwrap();
        let ctx = req.noise_context().unwrap();
        prop_assert!(p.predicted_failure_log2 <= soundness_log2(&ctx), "{} above bound {}", p.predicted_failure_log2, soundness_log2(&ctx));
        prop_assert!(p.realization_gap <= 2.0, "gap {}", p.realization_gap);
        prop_assert_eq!(p.realized_primes.len(), depth + 2);
        for (prime, bound) in p.realized_primes.iter().zip(&p.theoretical_bits) {
            prop_assert!((*prime as f64).log2() >= *bound, "prime {} below {} bits", prime, bound);
        }
        let total: f64 = p.realized_primes.iter().map(|&q| (q as f64).log2()).sum();
        prop_assert!((total - p.total_log2_q).abs() < 1e-9);
        let mut sorted = p.realized_primes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), p.realized_primes.len(), "primes are distinct");
    }

    #[test]
    fn realized_totals_are_monotone(log_n in 12u32..=14, depth in 0usize..6, d in 4.0f64..10.0) {
        let total = |log_n, depth, d| plan(&request(log_n, depth, d)).unwrap().total_log2_q;
        let base = total(log_n, depth, d);
        prop_assert!(total(log_n, depth + 1, d) >= base, "in M");
        prop_assert!(total(log_n + 1, depth, d) >= base, "in n");
        prop_assert!(total(log_n, depth, d + 0.5) >= base, "in D");
    }
}
