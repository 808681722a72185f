//! Exact binomial tail probabilities and the Clopper–Pearson style bounds
//! obtained by inverting them.
//!
//! The point mass is evaluated with Loader's saddle-point expansion so that
//! the tail sums keep ~1e-15 relative accuracy even for `n` in the millions.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Hard cap on bisection steps when inverting a tail.
pub const MAX_BISECTION_STEPS: usize = 60;

/// `(k, n, δ)` for a bound query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BoundQuery<T> {
    pub k: u64,
    pub n: u64,
    pub delta: T,
}

impl<T: Scalar> BoundQuery<T> {
    pub fn new(k: u64, n: u64, delta: T) -> Self {
        assert!(k <= n, "binomial count k={k} exceeds n={n}");
        Self { k, n, delta }
    }

    pub fn upper(&self) -> T {
        u_binom(self.k, self.n, self.delta)
    }

    pub fn lower(&self) -> T {
        l_binom(self.k, self.n, self.delta)
    }
}

// ln(k!) - (k + 1/2) ln k + k - ln sqrt(2 pi), k = 0..=15
const STIRLERR_TABLE: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258_22,
    0.041_340_695_955_409_294_09,
    0.027_677_925_684_998_339_15,
    0.020_790_672_103_765_093_11,
    0.016_644_691_189_821_192_16,
    0.013_876_128_823_070_747_99,
    0.011_896_709_945_891_770_10,
    0.010_411_265_261_972_096_50,
    0.009_255_462_182_712_732_918,
    0.008_330_563_433_362_871_256,
    0.007_573_675_487_951_840_795,
    0.006_942_840_107_209_529_866,
    0.006_408_994_188_004_207_068,
    0.005_951_370_112_758_847_736,
    0.005_554_733_551_962_801_371,
];

/// Error of Stirling's approximation to `ln n!`.
fn stirlerr<T: Scalar>(n: u64) -> T {
    if n <= 15 {
        return T::lit(STIRLERR_TABLE[n as usize]);
    }
    let s0 = T::lit(1.0 / 12.0);
    let s1 = T::lit(1.0 / 360.0);
    let s2 = T::lit(1.0 / 1260.0);
    let s3 = T::lit(1.0 / 1680.0);
    let s4 = T::lit(1.0 / 1188.0);
    let x = T::from_count(n);
    let nn = x * x;
    if n > 500 {
        (s0 - s1 / nn) / x
    } else if n > 80 {
        (s0 - (s1 - s2 / nn) / nn) / x
    } else if n > 35 {
        (s0 - (s1 - (s2 - s3 / nn) / nn) / nn) / x
    } else {
        (s0 - (s1 - (s2 - (s3 - s4 / nn) / nn) / nn) / nn) / x
    }
}

/// Deviance term `x ln(x/np) + np - x`, computed without cancellation.
fn bd0<T: Scalar>(x: T, np: T) -> T {
    let diff = x - np;
    if diff.abs() < T::lit(0.1) * (x + np) {
        let mut v = diff / (x + np);
        let mut s = diff * v;
        let mut ej = T::lit(2.0) * x * v;
        v = v * v;
        for j in 1..1000u64 {
            ej = ej * v;
            let s1 = s + ej / T::from_count(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `P(X = k)` for `X ~ Binom(n, theta)`.
pub fn binom_pmf<T: Scalar>(k: u64, n: u64, theta: T) -> T {
    assert!(k <= n, "binomial count k={k} exceeds n={n}");
    let p = theta;
    let q = T::one() - theta;
    if p <= T::zero() {
        return if k == 0 { T::one() } else { T::zero() };
    }
    if q <= T::zero() {
        return if k == n { T::one() } else { T::zero() };
    }
    let nt = T::from_count(n);
    if k == 0 {
        if n == 0 {
            return T::one();
        }
        let lc = if p < T::lit(0.1) {
            -bd0(nt, nt * q) - nt * p
        } else {
            nt * (-p).ln_1p()
        };
        return lc.exp();
    }
    if k == n {
        let lc = if q < T::lit(0.1) {
            -bd0(nt, nt * p) - nt * q
        } else {
            nt * p.ln()
        };
        return lc.exp();
    }
    let kt = T::from_count(k);
    let rest = T::from_count(n - k);
    let lc = stirlerr::<T>(n) - stirlerr::<T>(k) - stirlerr::<T>(n - k) - bd0(kt, nt * p) - bd0(rest, nt * q);
    let lf = T::lit(std::f64::consts::TAU.ln()) + kt.ln() + (-kt / nt).ln_1p();
    (lc - T::lit(0.5) * lf).exp()
}

/// Sum of `P(X = i)` for `i <= k`, walking down from `k` until terms vanish.
fn lower_tail_sum<T: Scalar>(k: u64, n: u64, p: T, q: T) -> T {
    let mut term = binom_pmf(k, n, p);
    let mut sum = term;
    let ratio = q / p;
    let mut i = k;
    while i > 0 && term > T::zero() {
        term = term * T::from_count(i) / T::from_count(n - i + 1) * ratio;
        i -= 1;
        sum = sum + term;
        if term <= sum * T::epsilon() * T::lit(0.25) {
            break;
        }
    }
    sum
}

/// Sum of `P(X = i)` for `i > k`, walking up from `k + 1`.
fn upper_tail_sum<T: Scalar>(k: u64, n: u64, p: T, q: T) -> T {
    if k >= n {
        return T::zero();
    }
    let mut i = k + 1;
    let mut term = binom_pmf(i, n, p);
    let mut sum = term;
    let ratio = p / q;
    while i < n && term > T::zero() {
        term = term * T::from_count(n - i) / T::from_count(i + 1) * ratio;
        i += 1;
        sum = sum + term;
        if term <= sum * T::epsilon() * T::lit(0.25) {
            break;
        }
    }
    sum
}

/// Binomial CDF `F(k; n, θ) = P(X ≤ k)`.
///
/// Sums whichever tail is lighter, so the result is accurate in absolute
/// terms to a few ulps of 1.
pub fn binom_cdf<T: Scalar>(k: u64, n: u64, theta: T) -> T {
    assert!(k <= n, "binomial count k={k} exceeds n={n}");
    if k == n || theta <= T::zero() {
        return T::one();
    }
    if theta >= T::one() {
        return T::zero();
    }
    let q = T::one() - theta;
    if T::from_count(k) <= T::from_count(n) * theta {
        lower_tail_sum(k, n, theta, q).min(T::one())
    } else {
        (T::one() - upper_tail_sum(k, n, theta, q)).max(T::zero())
    }
}

/// Survival function `P(X > k)`.
pub fn binom_sf<T: Scalar>(k: u64, n: u64, theta: T) -> T {
    assert!(k <= n, "binomial count k={k} exceeds n={n}");
    if k == n || theta <= T::zero() {
        return T::zero();
    }
    if theta >= T::one() {
        return T::one();
    }
    let q = T::one() - theta;
    if T::from_count(k) <= T::from_count(n) * theta {
        (T::one() - lower_tail_sum(k, n, theta, q)).max(T::zero())
    } else {
        upper_tail_sum(k, n, theta, q).min(T::one())
    }
}

/// `U_Binom(k; n, δ) = inf{θ ∈ [0,1] : F(k; n, θ) ≤ δ} ∪ {1}`.
///
/// Returned value always satisfies `F(k; n, U) ≤ δ` (the bisection keeps the
/// feasible end); `n = 0` and `k = n` give the vacuous bound 1.
pub fn u_binom<T: Scalar>(k: u64, n: u64, delta: T) -> T {
    assert!(k <= n, "binomial count k={k} exceeds n={n}");
    if n == 0 || k == n {
        return T::one();
    }
    let (mut lo, mut hi) = (T::zero(), T::one());
    let two = T::lit(2.0);
    let tol = T::bisection_tol();
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if binom_cdf(k, n, mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `L_Binom(k; n, δ) = sup{θ ∈ [0,1] : P(X ≥ k; n, θ) ≤ δ} ∪ {0}`.
///
/// A lower confidence bound on a Bernoulli mean from `k` successes in `n`
/// trials: `P{R ≥ L} ≥ 1 − δ`. `k = 0` and `n = 0` give 0.
pub fn l_binom<T: Scalar>(k: u64, n: u64, delta: T) -> T {
    assert!(k <= n, "binomial count k={k} exceeds n={n}");
    if n == 0 || k == 0 {
        return T::zero();
    }
    let (mut lo, mut hi) = (T::zero(), T::one());
    let two = T::lit(2.0);
    let tol = T::bisection_tol();
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if binom_sf(k - 1, n, mid) <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
