//! Oracles shared by the integration tests. Kept independent of the library
//! code paths they check.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn binomial(n: u64, k: u64) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// Generalized Laguerre polynomial from its explicit sum, in exact arithmetic.
pub fn laguerre_exact(n: u64, alpha: u64, x: &BigRational) -> BigRational {
    let mut sum = BigRational::zero();
    let mut power = BigRational::one();
    for k in 0..=n {
        let term = BigRational::new(binomial(n + alpha, n - k), factorial(k)) * &power;
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        power *= x;
    }
    sum
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite rational")
}

/// ⟨m|D(b)|n⟩ for real b with b² = x given as a rational.
pub fn displacement_element(m: u64, n: u64, b: f64, x: &BigRational) -> f64 {
    let (hi, lo) = if m >= n { (m, n) } else { (n, m) };
    let ratio = BigRational::new(factorial(lo), factorial(hi));
    let lag = to_f64(&laguerre_exact(lo, hi - lo, x));
    let sign = if m < n && (hi - lo) % 2 == 1 { -1.0 } else { 1.0 };
    sign * to_f64(&ratio).sqrt() * b.powi((hi - lo) as i32) * (-b * b / 2.0).exp() * lag
}

/// Golden-section minimum of a unimodal function on [a, b].
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > 1e-13 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    (a + b) / 2.0
}

/// Largest relative change between two equal-length vectors.
pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) / y).abs()).fold(0.0, f64::max)
}
