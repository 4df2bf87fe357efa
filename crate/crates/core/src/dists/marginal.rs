use serde::Serialize;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma, gamma_ur};

use super::{ExtendedReal, TailClass};
use crate::error::{invalid, Result};
use crate::quad;
use crate::rng::Stream;

/// A one-dimensional law on the real line.
///
/// Every law exposes its right tail `P(X > x)`, the left-closed tail
/// `P(X >= x)`, an upper quantile, the integrated tail and a mean that may be
/// infinite. Laws are immutable once built; use the checked constructors.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    /// Pareto with tail `(x / scale)^-alpha` on `[scale, inf)`.
    Pareto {
        alpha: f64,
        scale: f64,
    },
    /// Weibull with shape in (0, 1): tail `exp(-(x / scale)^shape)`.
    Weibull {
        shape: f64,
        scale: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Exponential {
        rate: f64,
    },
    /// Heavy-tailed mixture that is not long-tailed, see [`Example11`].
    Example11(Example11),
    /// Law of `base + shift`.
    Shifted {
        base: Box<Marginal>,
        shift: f64,
    },
    /// Finitely many atoms.
    Atoms(AtomicLaw),
    /// Integrated-tail law `F_I` with tail `min(1, int_x^inf Fbar(t) dt)`.
    IntegratedTail {
        base: Box<Marginal>,
    },
    /// Window law `F_h` with tail `min(1, int_x^{x+h} Fbar(t) dt)` for
    /// `x >= 0` and tail 1 below zero.
    Window {
        base: Box<Marginal>,
        h: f64,
    },
}

impl Marginal {
    pub fn pareto(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!(
                "pareto needs alpha > 0 and scale > 0, got ({alpha}, {scale})"
            )));
        }
        Ok(Marginal::Pareto { alpha, scale })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape < 1.0 && scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!(
                "weibull needs shape in (0,1) and scale > 0, got ({shape}, {scale})"
            )));
        }
        Ok(Marginal::Weibull { shape, scale })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu.is_finite() && sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!(
                "lognormal needs finite mu and sigma > 0, got ({mu}, {sigma})"
            )));
        }
        Ok(Marginal::Lognormal { mu, sigma })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid(format!("exponential needs rate > 0, got {rate}")));
        }
        Ok(Marginal::Exponential { rate })
    }

    pub fn example11(q: f64, sigma_atoms: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Marginal::Example11(Example11::new(q, sigma_atoms)?))
    }

    pub fn shifted(base: Marginal, shift: f64) -> Result<Self> {
        if !shift.is_finite() {
            return Err(invalid("shift must be finite"));
        }
        Ok(Marginal::Shifted {
            base: Box::new(base),
            shift,
        })
    }

    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Ok(Marginal::Atoms(AtomicLaw::new(atoms)?))
    }

    pub fn integrated_tail_law(base: Marginal) -> Result<Self> {
        if !base.positive_mean().is_finite() {
            return Err(crate::Error::Precondition(
                "integrated-tail law needs a finite positive-part mean".into(),
            ));
        }
        Ok(Marginal::IntegratedTail {
            base: Box::new(base),
        })
    }

    pub fn window(base: Marginal, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("window width must be positive, got {h}")));
        }
        if !base.positive_mean().is_finite() {
            return Err(crate::Error::Precondition(
                "window law needs a finite positive-part mean".into(),
            ));
        }
        Ok(Marginal::Window {
            base: Box::new(base),
            h,
        })
    }

    /// `P(X > x)`.
    pub fn tail(&self, x: f64) -> f64 {
        match self {
            Marginal::Pareto { alpha, scale } => {
                if x < *scale {
                    1.0
                } else {
                    (x / scale).powf(-alpha)
                }
            }
            Marginal::Weibull { shape, scale } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-(x / scale).powf(*shape)).exp()
                }
            }
            Marginal::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    normal_upper((x.ln() - mu) / sigma)
                }
            }
            Marginal::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Marginal::Example11(e) => e.tail(x),
            Marginal::Shifted { base, shift } => base.tail(x - shift),
            Marginal::Atoms(a) => a.tail(x),
            Marginal::IntegratedTail { base } => base.integrated_tail(x).as_f64().min(1.0),
            Marginal::Window { base, h } => {
                if x < 0.0 {
                    1.0
                } else {
                    window_mass(base, x, *h).min(1.0)
                }
            }
        }
    }

    /// `P(X >= x)`; differs from [`Marginal::tail`] only at atoms.
    pub fn tail_left(&self, x: f64) -> f64 {
        match self {
            Marginal::Example11(e) => e.tail_left(x),
            Marginal::Shifted { base, shift } => base.tail_left(x - shift),
            Marginal::Atoms(a) => a.tail_left(x),
            Marginal::Window { base, h } => {
                if x <= 0.0 {
                    1.0
                } else {
                    window_mass(base, x, *h).min(1.0)
                }
            }
            _ => self.tail(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    /// Generalized inverse `inf { x : F(x) >= u }` for `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid(format!(
                "quantile level must lie in (0,1), got {u}"
            )));
        }
        Ok(self.quantile_unchecked(u))
    }

    #[inline]
    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        self.inv_tail(1.0 - u)
    }

    /// Smallest `x` with `P(X > x) <= v`, for `v` in (0, 1).
    pub fn inv_tail(&self, v: f64) -> f64 {
        match self {
            Marginal::Pareto { alpha, scale } => scale * v.powf(-1.0 / alpha),
            Marginal::Weibull { shape, scale } => scale * (-v.ln()).powf(1.0 / shape),
            Marginal::Lognormal { mu, sigma } => {
                (mu + sigma * std::f64::consts::SQRT_2 * erfc_inv(2.0 * v)).exp()
            }
            Marginal::Exponential { rate } => -v.ln() / rate,
            Marginal::Example11(e) => e.inv_tail(v),
            Marginal::Shifted { base, shift } => base.inv_tail(v) + shift,
            Marginal::Atoms(a) => a.inv_tail(v),
            Marginal::IntegratedTail { .. } | Marginal::Window { .. } => self.inv_tail_numeric(v),
        }
    }

    fn inv_tail_numeric(&self, v: f64) -> f64 {
        let mut lo = self.support_lower() - 1.0;
        let mut width = lo.abs().max(1.0);
        let mut hi = lo + width;
        let mut guard = 0;
        while self.tail(hi) > v && guard < 2000 {
            lo = hi;
            width *= 2.0;
            hi = lo + width;
            guard += 1;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.tail(mid) > v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// One draw by inverse transform on a uniform from `stream`.
    #[inline]
    pub fn sample(&self, stream: &mut Stream) -> f64 {
        self.quantile_unchecked(stream.uniform())
    }

    pub fn sample_n(&self, stream: &mut Stream, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample(stream)).collect()
    }

    /// Analytic mean; `Infinite` when the positive part is not integrable.
    pub fn mean(&self) -> ExtendedReal {
        match self {
            Marginal::Pareto { alpha, scale } => {
                if *alpha > 1.0 {
                    ExtendedReal::Finite(alpha * scale / (alpha - 1.0))
                } else {
                    ExtendedReal::Infinite
                }
            }
            Marginal::Weibull { shape, scale } => {
                ExtendedReal::Finite(scale * gamma(1.0 + 1.0 / shape))
            }
            Marginal::Lognormal { mu, sigma } => {
                ExtendedReal::Finite((mu + 0.5 * sigma * sigma).exp())
            }
            Marginal::Exponential { rate } => ExtendedReal::Finite(1.0 / rate),
            Marginal::Example11(_) => ExtendedReal::Infinite,
            Marginal::Shifted { base, shift } => base.mean().map(|m| m + shift),
            Marginal::Atoms(a) => ExtendedReal::Finite(a.mean()),
            Marginal::IntegratedTail { .. } | Marginal::Window { .. } => {
                let lower = self.support_lower();
                self.integrated_tail(lower).map(|i| lower + i)
            }
        }
    }

    /// Mean of the positive part, `int_0^inf Fbar(t) dt`.
    pub fn positive_mean(&self) -> ExtendedReal {
        self.integrated_tail(0.0)
    }

    /// `int_x^inf Fbar(t) dt`.
    pub fn integrated_tail(&self, x: f64) -> ExtendedReal {
        match self {
            Marginal::Pareto { alpha, scale } => {
                if *alpha <= 1.0 {
                    ExtendedReal::Infinite
                } else if x < *scale {
                    ExtendedReal::Finite((scale - x) + scale / (alpha - 1.0))
                } else {
                    ExtendedReal::Finite(x * (x / scale).powf(-alpha) / (alpha - 1.0))
                }
            }
            Marginal::Exponential { rate } => ExtendedReal::Finite(if x < 0.0 {
                -x + 1.0 / rate
            } else {
                (-rate * x).exp() / rate
            }),
            Marginal::Weibull { shape, scale } => {
                if x <= 0.0 {
                    ExtendedReal::Finite(-x + scale * gamma(1.0 + 1.0 / shape))
                } else {
                    let a = 1.0 / shape;
                    let z = (x / scale).powf(*shape);
                    ExtendedReal::Finite(scale / shape * gamma(a) * gamma_ur(a, z))
                }
            }
            Marginal::Lognormal { mu, sigma } => {
                let m = (mu + 0.5 * sigma * sigma).exp();
                if x <= 0.0 {
                    ExtendedReal::Finite(-x + m)
                } else {
                    let z = (x.ln() - mu) / sigma;
                    let v = m * normal_upper(z - sigma) - x * normal_upper(z);
                    ExtendedReal::Finite(v.max(0.0))
                }
            }
            Marginal::Example11(_) => ExtendedReal::Infinite,
            Marginal::Shifted { base, shift } => base.integrated_tail(x - shift),
            Marginal::Atoms(a) => ExtendedReal::Finite(
                a.locs
                    .iter()
                    .zip(&a.masses)
                    .map(|(l, m)| m * (l - x).max(0.0))
                    .sum(),
            ),
            Marginal::IntegratedTail { .. } | Marginal::Window { .. } => {
                self.integrated_tail_numeric(x)
            }
        }
    }

    fn integrated_tail_numeric(&self, x: f64) -> ExtendedReal {
        let index = match self.tail_index() {
            Some(i) if i <= 1.0 => return ExtendedReal::Infinite,
            other => other,
        };
        let lower = self.support_lower();
        let mut total = 0.0;
        let mut a = x;
        if x < lower {
            total += lower - x;
            a = lower;
        }
        let mut width = a.abs().max(1.0);
        for _ in 0..400 {
            let b = a + width;
            let piece = quad::integrate(
                |t| self.tail(t),
                a,
                b,
                1e-13 * (total.max(1e-300) + width * self.tail(a)),
            );
            total += piece;
            let tb = self.tail(b);
            let remainder = match index {
                Some(i) => b * tb / (i - 1.0),
                None => width * tb,
            };
            if remainder <= 1e-12 * total || tb == 0.0 {
                return ExtendedReal::Finite(total + remainder);
            }
            a = b;
            width *= 2.0;
        }
        ExtendedReal::Infinite
    }

    /// Infimum of the support.
    pub fn support_lower(&self) -> f64 {
        match self {
            Marginal::Pareto { scale, .. } => *scale,
            Marginal::Weibull { .. }
            | Marginal::Lognormal { .. }
            | Marginal::Exponential { .. } => 0.0,
            Marginal::Example11(e) => e.sigma.locs[0],
            Marginal::Shifted { base, shift } => base.support_lower() + shift,
            Marginal::Atoms(a) => a.locs[0],
            Marginal::Window { .. } => 0.0,
            Marginal::IntegratedTail { base } => {
                // tail is min(1, I(x)); find where I drops below 1
                let i = |t: f64| base.integrated_tail(t).as_f64();
                let mut lo = base.support_lower() - 1.0;
                let mut step = 1.0;
                while i(lo) < 1.0 {
                    lo -= step;
                    step *= 2.0;
                }
                let mut hi = lo + 1.0;
                while i(hi) >= 1.0 {
                    hi += step;
                    step *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if i(mid) >= 1.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
        }
    }

    /// Power-law index of the right tail, `None` when the tail decays faster
    /// than every power.
    pub fn tail_index(&self) -> Option<f64> {
        match self {
            Marginal::Pareto { alpha, .. } => Some(*alpha),
            Marginal::Example11(_) => Some(1.0),
            Marginal::Shifted { base, .. } | Marginal::Window { base, .. } => base.tail_index(),
            Marginal::IntegratedTail { base } => base.tail_index().map(|a| a - 1.0),
            _ => None,
        }
    }

    /// True when the law is purely atomic.
    pub fn is_atomic(&self) -> bool {
        match self {
            Marginal::Example11(_) | Marginal::Atoms(_) => true,
            Marginal::Shifted { base, .. } => base.is_atomic(),
            _ => false,
        }
    }

    /// For atomic laws: the atoms at or below `cutoff`, sorted, together with
    /// the mass lying strictly above `cutoff`.
    pub fn atoms_upto(&self, cutoff: f64) -> Option<(Vec<(f64, f64)>, f64)> {
        match self {
            Marginal::Atoms(a) => {
                let k = a.locs.partition_point(|&l| l <= cutoff);
                let atoms = a.locs[..k]
                    .iter()
                    .copied()
                    .zip(a.masses[..k].iter().copied())
                    .collect();
                Some((atoms, a.suffix[k]))
            }
            Marginal::Example11(e) => Some(e.atoms_upto(cutoff)),
            Marginal::Shifted { base, shift } => {
                base.atoms_upto(cutoff - shift).map(|(atoms, rest)| {
                    (
                        atoms.into_iter().map(|(l, m)| (l + shift, m)).collect(),
                        rest,
                    )
                })
            }
            _ => None,
        }
    }

    /// Classes this family is known to belong to. Declared, not checked.
    pub fn declared_classes(&self) -> Vec<TailClass> {
        use TailClass::*;
        match self {
            Marginal::Pareto { alpha, .. } => {
                if *alpha > 1.0 {
                    vec![L, D, S, SStar, StrongSubexp, HeavyK]
                } else {
                    vec![L, D, S, StrongSubexp, HeavyK]
                }
            }
            Marginal::Weibull { .. } | Marginal::Lognormal { .. } => {
                vec![L, S, SStar, StrongSubexp, HeavyK]
            }
            Marginal::Exponential { .. } | Marginal::Atoms(_) => vec![],
            Marginal::Example11(_) => vec![HeavyK],
            Marginal::Shifted { base, .. } => base.declared_classes(),
            Marginal::IntegratedTail { base } => {
                let b = base.declared_classes();
                if b.contains(&SStar) {
                    let mut out = vec![L, S, HeavyK];
                    if b.contains(&D) {
                        out.insert(1, D);
                    }
                    out
                } else {
                    vec![]
                }
            }
            Marginal::Window { base, .. } => base
                .declared_classes()
                .into_iter()
                .filter(|c| matches!(c, L | D | S | HeavyK))
                .collect(),
        }
    }
}

/// `int_x^{x+h} Fbar(t) dt` for the base law of a window transform.
fn window_mass(base: &Marginal, x: f64, h: f64) -> f64 {
    let lo = base.integrated_tail(x).as_f64();
    let hi = base.integrated_tail(x + h).as_f64();
    let diff = lo - hi;
    if diff > 1e-6 * lo {
        diff
    } else {
        quad::integrate(|t| base.tail(t), x, x + h, 1e-12 * h * base.tail(x + h))
    }
}

/// Standard normal upper tail.
fn normal_upper(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// A finite discrete law.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomicLaw {
    locs: Vec<f64>,
    masses: Vec<f64>,
    #[serde(skip)]
    suffix: Vec<f64>,
}

impl AtomicLaw {
    /// Sorts atoms, merges equal locations, and checks the masses sum to 1.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("atomic law needs at least one atom"));
        }
        for &(l, m) in &atoms {
            if !l.is_finite() || !(m >= 0.0) || !m.is_finite() {
                return Err(invalid(format!("bad atom ({l}, {m})")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("atom masses sum to {total}, expected 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut locs: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut masses: Vec<f64> = Vec::with_capacity(atoms.len());
        for (l, m) in atoms {
            if locs.last() == Some(&l) {
                *masses.last_mut().unwrap() += m;
            } else {
                locs.push(l);
                masses.push(m);
            }
        }
        let mut suffix = vec![0.0; masses.len() + 1];
        for i in (0..masses.len()).rev() {
            suffix[i] = suffix[i + 1] + masses[i];
        }
        Ok(Self {
            locs,
            masses,
            suffix,
        })
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locs.iter().copied().zip(self.masses.iter().copied())
    }

    pub fn tail(&self, x: f64) -> f64 {
        self.suffix[self.locs.partition_point(|&l| l <= x)]
    }

    pub fn tail_left(&self, x: f64) -> f64 {
        self.suffix[self.locs.partition_point(|&l| l < x)]
    }

    fn inv_tail(&self, v: f64) -> f64 {
        // tail just at atom i is suffix[i + 1]
        let i = self.suffix[1..].partition_point(|&s| s > v);
        self.locs[i.min(self.locs.len() - 1)]
    }

    fn mean(&self) -> f64 {
        self.atoms().map(|(l, m)| l * m).sum()
    }
}

/// `F = q * rho + (1 - q) * sigma` where `rho` puts mass `2^-(n+1)` on
/// `2^(n+1) - 1` for `n >= 0`, and `sigma` is a finite law on `[-3, 0)` with
/// positive mass in `(-3, -2]`.
///
/// `sigma` is stored as a probability law; its weight inside `F` is `1 - q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Example11 {
    q: f64,
    sigma: AtomicLaw,
}

/// Largest `n` for which the positive atoms are represented.
const RHO_MAX_INDEX: i32 = 1020;

impl Example11 {
    pub fn new(q: f64, sigma_atoms: Vec<(f64, f64)>) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid(format!(
                "example11 weight q must lie in (0,1), got {q}"
            )));
        }
        if sigma_atoms.iter().any(|&(l, _)| !(-3.0..0.0).contains(&l)) {
            return Err(invalid("example11 sigma atoms must lie in [-3, 0)"));
        }
        let sigma = AtomicLaw::new(sigma_atoms)?;
        // sigma(-2) - sigma(-3) > 0
        let delta = sigma.tail(-3.0) - sigma.tail(-2.0);
        if !(delta > 0.0) {
            return Err(invalid("example11 sigma needs positive mass in (-3, -2]"));
        }
        Ok(Self { q, sigma })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn sigma(&self) -> &AtomicLaw {
        &self.sigma
    }

    /// Location `2^(n+1) - 1` of the n-th positive atom.
    pub fn rho_atom(n: i32) -> f64 {
        2f64.powi(n + 1) - 1.0
    }

    /// First index `n` with `t_n > x` (`strict`) or `t_n >= x`.
    fn rho_first_above(x: f64, strict: bool) -> i32 {
        if x < 1.0 {
            return 0;
        }
        let mut n = ((x + 1.0).log2().floor() as i32 - 2).max(0);
        while n <= RHO_MAX_INDEX {
            let t = Self::rho_atom(n);
            if (strict && t > x) || (!strict && t >= x) {
                return n;
            }
            n += 1;
        }
        RHO_MAX_INDEX + 1
    }

    /// `P(rho > x) = 2^-N` with `N` the first atom index beyond `x`.
    pub fn rho_tail(x: f64) -> f64 {
        2f64.powi(-Self::rho_first_above(x, true))
    }

    pub fn tail(&self, x: f64) -> f64 {
        self.q * Self::rho_tail(x) + (1.0 - self.q) * self.sigma.tail(x)
    }

    pub fn tail_left(&self, x: f64) -> f64 {
        self.q * 2f64.powi(-Self::rho_first_above(x, false))
            + (1.0 - self.q) * self.sigma.tail_left(x)
    }

    fn inv_tail(&self, v: f64) -> f64 {
        for (i, l) in self.sigma.locs.iter().enumerate() {
            if self.q + (1.0 - self.q) * self.sigma.suffix[i + 1] <= v {
                return *l;
            }
        }
        // tail at t_n is q 2^-(n+1)
        let mut n = (((self.q / v).log2().ceil() as i32) - 2).max(0);
        while n < RHO_MAX_INDEX && self.q * 2f64.powi(-(n + 1)) > v {
            n += 1;
        }
        while n > 0 && self.q * 2f64.powi(-n) <= v {
            n -= 1;
        }
        Self::rho_atom(n)
    }

    fn atoms_upto(&self, cutoff: f64) -> (Vec<(f64, f64)>, f64) {
        let mut atoms: Vec<(f64, f64)> = self
            .sigma
            .atoms()
            .filter(|&(l, _)| l <= cutoff)
            .map(|(l, m)| (l, (1.0 - self.q) * m))
            .collect();
        let mut n = 0;
        while n <= RHO_MAX_INDEX && Self::rho_atom(n) <= cutoff {
            atoms.push((Self::rho_atom(n), self.q * 2f64.powi(-(n + 1))));
            n += 1;
        }
        let rest = self.tail(cutoff);
        (atoms, rest)
    }
}

impl Default for Example11 {
    fn default() -> Self {
        Example11::new(0.5, vec![(-2.5, 0.5), (-0.5, 0.5)]).expect("default example11 is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn tail_examples() {
        assert_eq!(Marginal::pareto(1.0, 1.0).unwrap().tail(2.0), 0.5);
        let e = Marginal::Example11(Example11::default());
        assert_eq!(e.tail(3.0), 0.125);
        assert_eq!(Marginal::exponential(1.0).unwrap().tail(0.0), 1.0);
    }

    #[test]
    fn example11_tail_matches_atom_summation() {
        let e = Example11::default();
        for &x in &[
            -3.0, -2.5, -1.0, -0.5, 0.0, 1.0, 2.9, 3.0, 7.0, 100.0, 2047.0,
        ] {
            let direct: f64 = (0..200)
                .map(|n| (Example11::rho_atom(n), 0.5 * 2f64.powi(-(n + 1))))
                .chain([(-2.5, 0.25), (-0.5, 0.25)])
                .filter(|&(l, _)| l > x)
                .map(|(_, m)| m)
                .sum();
            assert!(close(e.tail(x), direct, 1e-15), "x={x}");
        }
    }

    #[test]
    fn example11_not_long_tailed_at_atoms() {
        let e = Marginal::Example11(Example11::default());
        for n in 1..30 {
            let t = Example11::rho_atom(n);
            assert_eq!(e.tail(t) / e.tail(t - 1.0), 0.5, "n={n}");
        }
    }

    #[test]
    fn example11_heavy_tail_witness() {
        // sum_n e^{a t_n} 2^{-(n+1)}: successive log-terms grow without bound
        for &a in &[1e-3, 1e-2, 0.1, 1.0] {
            let log_term =
                |n: i32| a * Example11::rho_atom(n) - (n + 1) as f64 * std::f64::consts::LN_2;
            let mut partial_log_max = f64::NEG_INFINITY;
            for n in 0..64 {
                partial_log_max = partial_log_max.max(log_term(n));
            }
            assert!(partial_log_max > 100.0, "a={a}");
            // term ratio exceeds 1 eventually and keeps growing
            assert!(log_term(63) - log_term(62) > log_term(40) - log_term(39));
        }
    }

    #[test]
    fn example11_validation() {
        assert!(Example11::new(0.0, vec![(-2.5, 1.0)]).is_err());
        assert!(Example11::new(0.5, vec![(-1.0, 1.0)]).is_err());
        assert!(Example11::new(0.5, vec![(-3.5, 1.0)]).is_err());
        assert!(Example11::new(0.5, vec![(-2.5, 0.4)]).is_err());
        assert!(Example11::new(0.5, vec![(-2.0, 1.0)]).is_ok());
    }

    #[test]
    fn quantile_examples() {
        let p = Marginal::pareto(1.0, 1.0).unwrap();
        assert!(close(p.quantile(0.75).unwrap(), 4.0, 1e-14));
        let a = Marginal::atoms(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(a.quantile(0.5).unwrap(), 0.0);
        assert_eq!(a.quantile(0.50001).unwrap(), 1.0);
        let e = Marginal::exponential(1.0).unwrap();
        assert!(close(e.quantile(1.0 - (-2f64).exp()).unwrap(), 2.0, 1e-12));
        assert!(p.quantile(0.0).is_err());
        assert!(p.quantile(1.0).is_err());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            Marginal::pareto(2.0, 1.0).unwrap().mean(),
            ExtendedReal::Finite(2.0)
        );
        assert_eq!(
            Marginal::pareto(0.5, 1.0).unwrap().mean(),
            ExtendedReal::Infinite
        );
        let s = Marginal::shifted(Marginal::exponential(1.0).unwrap(), -3.0).unwrap();
        assert_eq!(s.mean(), ExtendedReal::Finite(-2.0));
        assert_eq!(
            Marginal::Example11(Example11::default()).mean(),
            ExtendedReal::Infinite
        );
    }

    #[test]
    fn positive_mean_matches_quadrature() {
        let laws = [
            Marginal::pareto(2.5, 1.0).unwrap(),
            Marginal::weibull(0.5, 1.0).unwrap(),
            Marginal::lognormal(0.0, 1.0).unwrap(),
            Marginal::shifted(Marginal::pareto(2.0, 1.0).unwrap(), -3.0).unwrap(),
        ];
        for d in &laws {
            let m = d.positive_mean().finite().unwrap();
            // oracle: quadrature of the tail on [0, T] plus a coarse remainder bound
            let q =
                quad::integrate_pieces(|t| d.tail(t), 0.0, 2e4, &[1.0, 10.0, 100.0, 1000.0], 1e-10);
            assert!((m - q).abs() < 2e-3 * m, "{d:?}: {m} vs {q}");
        }
        let w = Marginal::weibull(0.5, 1.0).unwrap();
        assert!(close(w.positive_mean().finite().unwrap(), 2.0, 1e-12));
    }

    #[test]
    fn integrated_tail_law_examples() {
        let fi = Marginal::integrated_tail_law(Marginal::exponential(1.0).unwrap()).unwrap();
        for &x in &[0.0, 0.5, 3.0, 10.0] {
            assert!(close(fi.tail(x), (-x).exp(), 1e-12));
        }
        let fp = Marginal::integrated_tail_law(Marginal::pareto(2.0, 1.0).unwrap()).unwrap();
        for &x in &[0.5, 1.0, 2.0, 50.0] {
            assert!(close(fp.tail(x), (1.0 / x).min(1.0), 1e-12), "x={x}");
        }
        assert!(close(fp.support_lower(), 1.0, 1e-9));
        assert!(Marginal::integrated_tail_law(Marginal::pareto(0.9, 1.0).unwrap()).is_err());
    }

    #[test]
    fn window_tail() {
        let w = Marginal::window(Marginal::pareto(2.0, 1.0).unwrap(), 1.0).unwrap();
        assert!(close(w.tail(10.0), 0.1 - 1.0 / 11.0, 1e-12));
        assert_eq!(w.tail(-1.0), 1.0);
    }

    #[test]
    fn lognormal_quantile_inverts_tail() {
        let d = Marginal::lognormal(0.3, 1.2).unwrap();
        for &v in &[0.9, 0.5, 1e-3, 1e-9] {
            let x = d.inv_tail(v);
            assert!(close(d.tail(x), v, 1e-9), "v={v}");
        }
    }

    #[test]
    fn empirical_tail_of_pareto_draws() {
        let d = Marginal::pareto(1.0, 1.0).unwrap();
        let mut s = Stream::new(11, 0);
        let n = 1_000_000;
        let draws = d.sample_n(&mut s, n);
        let hits = draws.iter().filter(|&&x| x > 10.0).count() as f64 / n as f64;
        let sd = (0.1f64 * 0.9 / n as f64).sqrt();
        assert!((hits - 0.1).abs() <= 3.0 * sd, "{hits}");
        assert!(d.sample_n(&mut s, 0).is_empty());
        let again = d.sample_n(&mut Stream::new(11, 0), 16);
        assert_eq!(&draws[..16], &again[..]);
    }
}
