use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use super::ExtendedReal;
use crate::error::{invalid, Result};
use crate::rng::Stream;

/// Law of a nonnegative integer-valued counting variable `tau`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Counting {
    Poisson {
        lambda: f64,
    },
    /// Geometric on `{1, 2, ...}` with `P(tau = k) = p (1 - p)^(k - 1)`.
    Geometric1 {
        p: f64,
    },
    /// `P(tau = k) ∝ k^-s` on `{1, 2, ...}`; infinite mean for `s <= 2`.
    Zeta(ZetaLaw),
    Deterministic {
        n: u64,
    },
}

impl Counting {
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("poisson needs lambda > 0, got {lambda}")));
        }
        Ok(Counting::Poisson { lambda })
    }

    pub fn geometric1(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(invalid(format!("geometric needs p in (0,1], got {p}")));
        }
        Ok(Counting::Geometric1 { p })
    }

    pub fn zeta(s: f64) -> Result<Self> {
        Ok(Counting::Zeta(ZetaLaw::new(s)?))
    }

    pub fn deterministic(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("deterministic count must be positive"));
        }
        Ok(Counting::Deterministic { n })
    }

    /// `P(tau = k)`; rejects negative `k`.
    pub fn pmf(&self, k: i64) -> Result<f64> {
        if k < 0 {
            return Err(invalid(format!("counting pmf needs k >= 0, got {k}")));
        }
        Ok(self.pmf_u(k as u64))
    }

    pub(crate) fn pmf_u(&self, k: u64) -> f64 {
        match self {
            Counting::Poisson { lambda } => {
                let kf = k as f64;
                (kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)).exp()
            }
            Counting::Geometric1 { p } => {
                if k == 0 {
                    0.0
                } else if *p == 1.0 {
                    if k == 1 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    p * (1.0 - p).powf((k - 1) as f64)
                }
            }
            Counting::Zeta(z) => z.pmf(k),
            Counting::Deterministic { n } => {
                if k == *n {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(tau > k)`.
    pub fn tail(&self, k: u64) -> f64 {
        match self {
            Counting::Poisson { lambda } => gamma_lr(k as f64 + 1.0, *lambda),
            Counting::Geometric1 { p } => (1.0 - p).powf(k as f64),
            Counting::Zeta(z) => z.tail(k),
            Counting::Deterministic { n } => {
                if k < *n {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn mean(&self) -> ExtendedReal {
        match self {
            Counting::Poisson { lambda } => ExtendedReal::Finite(*lambda),
            Counting::Geometric1 { p } => ExtendedReal::Finite(1.0 / p),
            Counting::Zeta(z) => z.mean(),
            Counting::Deterministic { n } => ExtendedReal::Finite(*n as f64),
        }
    }

    /// True when `E z^tau < inf` for some `z > 1`.
    pub fn is_light_tailed(&self) -> bool {
        !matches!(self, Counting::Zeta(_))
    }

    /// `sum_{n <= big_n} n P(tau = n)`.
    pub fn partial_mean(&self, big_n: u64) -> f64 {
        (1..=big_n).map(|n| n as f64 * self.pmf_u(n)).sum()
    }

    pub fn sample(&self, stream: &mut Stream) -> u64 {
        match self {
            Counting::Deterministic { n } => *n,
            Counting::Geometric1 { p } => {
                let v = stream.uniform();
                let k = (v.ln() / (-p).ln_1p()).floor();
                if k >= MAX_COUNT as f64 {
                    MAX_COUNT
                } else {
                    k as u64 + 1
                }
            }
            Counting::Poisson { lambda } => poisson_inverse(*lambda, stream.uniform()),
            Counting::Zeta(z) => z.inv_tail(stream.uniform()),
        }
    }

    pub fn sample_n(&self, stream: &mut Stream, count: usize) -> Vec<u64> {
        (0..count).map(|_| self.sample(stream)).collect()
    }
}

/// Draws are clamped here; reaching it has probability below 1e-9 for every
/// supported law.
pub const MAX_COUNT: u64 = 1 << 62;

fn poisson_inverse(lambda: f64, u: f64) -> u64 {
    if lambda <= 30.0 {
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while cdf < u && k < 10_000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
        }
        return k;
    }
    // start at the mode and walk; cdf(m) = Q(m + 1, lambda)
    let m = lambda.floor() as u64;
    let pmf = |k: u64| {
        let kf = k as f64;
        (kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)).exp()
    };
    let mut k = m;
    let mut cdf = gamma_ur(m as f64 + 1.0, lambda);
    if cdf >= u {
        while k > 0 && cdf - pmf(k) >= u {
            cdf -= pmf(k);
            k -= 1;
        }
    } else {
        while cdf < u {
            k += 1;
            cdf += pmf(k);
        }
    }
    k
}

/// Zeta law with a cached cumulative tail table for inversion sampling.
#[derive(Clone, Debug, Serialize)]
pub struct ZetaLaw {
    s: f64,
    #[serde(skip)]
    norm: f64,
    /// `table[k] = P(tau > k)` for `k = 0..=ZETA_TABLE`.
    #[serde(skip)]
    table: Arc<Vec<f64>>,
}

impl PartialEq for ZetaLaw {
    fn eq(&self, other: &Self) -> bool {
        self.s == other.s
    }
}

const ZETA_TABLE: usize = 4096;

/// `B_{2j} / (2j)!` for j = 1..6.
const EM_COEFFS: [f64; 6] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
];

impl ZetaLaw {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 1.0 && s <= 2.0) {
            return Err(invalid(format!("zeta exponent must lie in (1,2], got {s}")));
        }
        let norm = hurwitz_tail(s, 1);
        let mut table = vec![0.0; ZETA_TABLE + 1];
        table[ZETA_TABLE] = hurwitz_tail(s, ZETA_TABLE as u64 + 1) / norm;
        for k in (0..ZETA_TABLE).rev() {
            table[k] = table[k + 1] + ((k + 1) as f64).powf(-s) / norm;
        }
        Ok(Self {
            s,
            norm,
            table: Arc::new(table),
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Normalizing constant `zeta(s)`.
    pub fn normalizer(&self) -> f64 {
        self.norm
    }

    fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            (k as f64).powf(-self.s) / self.norm
        }
    }

    fn tail(&self, k: u64) -> f64 {
        if (k as usize) <= ZETA_TABLE {
            self.table[k as usize]
        } else {
            hurwitz_tail(self.s, k + 1) / self.norm
        }
    }

    fn mean(&self) -> ExtendedReal {
        // s is restricted to (1, 2], where sum k^(1-s) diverges
        ExtendedReal::Infinite
    }

    /// Smallest `k` with `P(tau > k) <= v`.
    fn inv_tail(&self, v: f64) -> u64 {
        let i = self.table.partition_point(|&t| t > v);
        if i <= ZETA_TABLE {
            return i as u64;
        }
        let (mut lo, mut hi) = (ZETA_TABLE as u64, ZETA_TABLE as u64 * 2);
        while self.tail(hi) > v {
            if hi >= MAX_COUNT {
                return MAX_COUNT;
            }
            lo = hi;
            hi = hi.saturating_mul(2).min(MAX_COUNT);
        }
        // invariant: tail(lo) > v >= tail(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.tail(mid) > v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// `sum_{k >= n} k^-s` for `n >= 1`, by direct summation up to 32 and an
/// Euler–Maclaurin remainder beyond.
pub(crate) fn hurwitz_tail(s: f64, n: u64) -> f64 {
    const CUT: u64 = 32;
    let mut head = 0.0;
    let mut m = n;
    while m < CUT {
        head += (m as f64).powf(-s);
        m += 1;
    }
    let mf = m as f64;
    let mut rem = mf.powf(1.0 - s) / (s - 1.0) + 0.5 * mf.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2) times m^{-s-2j+1}
    let mut rising = s;
    let mut power = mf.powf(-s - 1.0);
    for (j, c) in EM_COEFFS.iter().enumerate() {
        rem += c * rising * power;
        let a = s + (2 * j + 1) as f64;
        rising *= a * (a + 1.0);
        power /= mf * mf;
    }
    // sum smallest terms first
    rem + head
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_and_mean_examples() {
        let g = Counting::geometric1(0.5).unwrap();
        assert_eq!(g.pmf(2).unwrap(), 0.25);
        assert_eq!(g.mean(), ExtendedReal::Finite(2.0));
        assert_eq!(Counting::zeta(1.5).unwrap().mean(), ExtendedReal::Infinite);
        assert!(g.pmf(-1).is_err());
    }

    #[test]
    fn zeta_normalizer_matches_reference() {
        // zeta(2) = pi^2 / 6; zeta(1.5) reference value to 16 digits
        let z2 = ZetaLaw::new(2.0).unwrap();
        assert!((z2.normalizer() - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        let z = ZetaLaw::new(1.5).unwrap();
        assert!((z.normalizer() - 2.612_375_348_685_488).abs() < 1e-12);
    }

    #[test]
    fn tails_sum_to_one() {
        for c in [
            Counting::poisson(3.0).unwrap(),
            Counting::geometric1(0.3).unwrap(),
            Counting::zeta(1.7).unwrap(),
            Counting::deterministic(4).unwrap(),
        ] {
            let head: f64 = (0..200).map(|k| c.pmf_u(k)).sum();
            assert!((head + c.tail(199) - 1.0).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn zeta_tail_continuous_across_table_edge() {
        let z = ZetaLaw::new(1.5).unwrap();
        let k = ZETA_TABLE as u64;
        let direct = hurwitz_tail(1.5, k + 1) / z.normalizer();
        assert!((z.tail(k) - direct).abs() < 1e-14);
        assert!((z.tail(k) - z.tail(k + 1) - z.pmf(k + 1)).abs() < 1e-15);
    }

    #[test]
    fn zeta_inversion_is_generalized_inverse() {
        let z = ZetaLaw::new(1.5).unwrap();
        for &v in &[0.9, 0.5, 0.1, 1e-3, 1e-5, 1e-8] {
            let k = z.inv_tail(v);
            assert!(z.tail(k) <= v);
            assert!(k == 1 || z.tail(k - 1) > v, "v={v} k={k}");
        }
    }

    #[test]
    fn zeta_empirical_tail() {
        let c = Counting::zeta(1.5).unwrap();
        let mut s = Stream::new(5, 0);
        let n = 200_000;
        let draws = c.sample_n(&mut s, n);
        for big_k in [10u64, 100] {
            let p = c.tail(big_k);
            let hat = draws.iter().filter(|&&t| t > big_k).count() as f64 / n as f64;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hat - p).abs() <= 4.0 * sd, "K={big_k}: {hat} vs {p}");
        }
    }

    #[test]
    fn poisson_sampler_mean_and_mode_walk() {
        for lambda in [2.0, 45.0] {
            let c = Counting::poisson(lambda).unwrap();
            let mut s = Stream::new(9, 1);
            let n = 100_000;
            let mean = c.sample_n(&mut s, n).iter().sum::<u64>() as f64 / n as f64;
            assert!((mean - lambda).abs() < 4.0 * (lambda / n as f64).sqrt());
        }
    }

    #[test]
    fn geometric_sampler_tail() {
        let c = Counting::geometric1(0.5).unwrap();
        let mut s = Stream::new(2, 2);
        let n = 100_000;
        let draws = c.sample_n(&mut s, n);
        assert!(draws.iter().all(|&t| t >= 1));
        let hat = draws.iter().filter(|&&t| t >= 3).count() as f64 / n as f64;
        assert!((hat - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }
}
