//! Exact and bracketing convolution oracles for independent sums.

use serde::Serialize;

use crate::dists::{Example11, Marginal};
use crate::error::{invalid, Error, Result};

/// Finite discrete measure with strictly increasing locations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeMeasure {
    atoms: Vec<(f64, f64)>,
    total: f64,
    /// Mass dropped by pruning during construction or convolution.
    pruned: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvOptions {
    /// Atoms closer than this are merged.
    pub merge_tol: f64,
    pub atom_cap: usize,
    /// Atoms lighter than this are dropped and their mass recorded.
    pub prune_below: f64,
}

impl Default for ConvOptions {
    fn default() -> Self {
        Self {
            merge_tol: 1e-12,
            atom_cap: 1 << 22,
            prune_below: 0.0,
        }
    }
}

impl LatticeMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::build(atoms, &ConvOptions::default(), 0.0)
    }

    pub fn dirac(x: f64) -> Self {
        Self {
            atoms: vec![(x, 1.0)],
            total: 1.0,
            pruned: 0.0,
        }
    }

    fn build(mut atoms: Vec<(f64, f64)>, opts: &ConvOptions, mut pruned: f64) -> Result<Self> {
        if atoms.iter().any(|&(l, m)| !l.is_finite() || !(m >= 0.0)) {
            return Err(invalid(
                "lattice atoms need finite locations and nonnegative masses",
            ));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (l, m) in atoms {
            match out.last_mut() {
                Some(last) if l - last.0 <= opts.merge_tol => last.1 += m,
                _ => out.push((l, m)),
            }
        }
        if opts.prune_below > 0.0 {
            out.retain(|&(_, m)| {
                if m < opts.prune_below {
                    pruned += m;
                    false
                } else {
                    true
                }
            });
        }
        if out.len() > opts.atom_cap {
            return Err(Error::Resource(format!(
                "convolution produced {} atoms, cap is {}",
                out.len(),
                opts.atom_cap
            )));
        }
        let total = out.iter().map(|a| a.1).sum();
        Ok(Self {
            atoms: out,
            total,
            pruned,
        })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn pruned(&self) -> f64 {
        self.pruned
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Mass strictly above `x`.
    pub fn tail(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 <= x);
        self.atoms[k..].iter().map(|a| a.1).sum()
    }
}

/// Exact product-sum convolution with default options.
pub fn convolve_atoms(a: &LatticeMeasure, b: &LatticeMeasure) -> Result<LatticeMeasure> {
    convolve_atoms_with(a, b, &ConvOptions::default())
}

pub fn convolve_atoms_with(
    a: &LatticeMeasure,
    b: &LatticeMeasure,
    opts: &ConvOptions,
) -> Result<LatticeMeasure> {
    let size = a.len().saturating_mul(b.len());
    if size > opts.atom_cap.saturating_mul(4) {
        return Err(Error::Resource(format!(
            "convolution of {} by {} atoms exceeds the working cap",
            a.len(),
            b.len()
        )));
    }
    let mut prod = Vec::with_capacity(size);
    for &(la, ma) in &a.atoms {
        for &(lb, mb) in &b.atoms {
            prod.push((la + lb, ma * mb));
        }
    }
    let carried = a.pruned * (b.total + b.pruned) + a.total * b.pruned;
    LatticeMeasure::build(prod, opts, carried)
}

/// Two-sided bound on `P(X_1 + ... + X_n > x)` for i.i.d. summands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBracket {
    pub x: f64,
    pub lower: f64,
    pub upper: f64,
    /// Lattice step, `None` on the exact atomic path.
    pub step: Option<f64>,
}

impl TailBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64, slack: f64) -> bool {
        p >= self.lower - slack && p <= self.upper + slack
    }
}

/// Largest dyadic step `h <= scale / 8` with `Fbar(x - h) / Fbar(x) - 1 <= 1e-3`.
pub fn auto_step(d: &Marginal, n: usize, x: f64) -> f64 {
    let lower = d.support_lower();
    let span = (x - (n as f64 - 1.0) * lower).abs().max(1.0);
    let mut h = 2f64.powi(span.log2().floor() as i32 - 3);
    let base = d.tail(x);
    let cap = if n > 2 {
        MAX_QUADRATIC / 2
    } else {
        MAX_LATTICE / 2
    };
    for _ in 0..60 {
        let points = span / h;
        if points > cap as f64 / 2.0 {
            break;
        }
        if base > 0.0 && d.tail(x - h) / base - 1.0 <= 1e-3 && points >= 256.0 {
            break;
        }
        h *= 0.5;
    }
    h
}

/// Lattice length limit for the envelope path.
const MAX_LATTICE: usize = 1 << 21;
/// Lattice length limit when `n > 2` forces quadratic convolution.
const MAX_QUADRATIC: usize = 1 << 14;

/// Bracket for `P(S_n > x)` with `S_n` a sum of `n` independent copies of `d`.
///
/// Atomic laws take the exact path (degenerate bracket). Continuous laws are
/// rounded up (resp. down) to the lattice `h Z`; the rounded-up sum dominates
/// `S_n` pathwise and gives the upper bound, the rounded-down sum the lower.
pub fn nfold_tail_bracket(
    d: &Marginal,
    n: usize,
    x: f64,
    grid_step: Option<f64>,
) -> Result<TailBracket> {
    if n < 1 {
        return Err(invalid("n-fold convolution needs n >= 1"));
    }
    if !x.is_finite() {
        return Err(invalid("threshold must be finite"));
    }
    if n == 1 {
        let t = d.tail(x);
        return Ok(TailBracket {
            x,
            lower: t,
            upper: t,
            step: None,
        });
    }
    if d.is_atomic() {
        let p = exact_atomic_tail(d, n, x)?;
        return Ok(TailBracket {
            x,
            lower: p,
            upper: p,
            step: None,
        });
    }
    if !d.support_lower().is_finite() {
        return Err(Error::Precondition(
            "lattice envelopes need a finite support lower bound".into(),
        ));
    }
    let h = match grid_step {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(invalid(format!("grid step must be positive, got {h}"))),
        None => auto_step(d, n, x),
    };
    let upper = envelope_tail(d, n, x, h, Envelope::Up)?;
    let lower = envelope_tail(d, n, x, h, Envelope::Down)?;
    Ok(TailBracket {
        x,
        lower: lower.min(upper),
        upper: upper.max(lower).min(1.0),
        step: Some(h),
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Envelope {
    /// `ceil(X / h) h >= X`.
    Up,
    /// `floor(X / h) h <= X`.
    Down,
}

struct Lattice<'a> {
    d: &'a Marginal,
    h: f64,
    kind: Envelope,
    k_lo: i64,
}

impl Lattice<'_> {
    /// `P(X_E = k h)`.
    fn mass(&self, k: i64) -> f64 {
        let h = self.h;
        match self.kind {
            Envelope::Up => self.d.tail((k - 1) as f64 * h) - self.d.tail(k as f64 * h),
            Envelope::Down => self.d.tail_left(k as f64 * h) - self.d.tail_left((k + 1) as f64 * h),
        }
    }

    /// `P(X_E > k h)`.
    fn tail_idx(&self, k: i64) -> f64 {
        if k < self.k_lo {
            return 1.0;
        }
        match self.kind {
            Envelope::Up => self.d.tail(k as f64 * self.h),
            Envelope::Down => self.d.tail_left((k + 1) as f64 * self.h),
        }
    }

    /// `P(X_E > z)` for real `z`.
    fn tail_at(&self, z: f64) -> f64 {
        self.tail_idx((z / self.h).floor() as i64)
    }
}

fn envelope_tail(d: &Marginal, n: usize, x: f64, h: f64, kind: Envelope) -> Result<f64> {
    let lower = d.support_lower();
    let k_lo = match kind {
        Envelope::Up => (lower / h).ceil() as i64,
        Envelope::Down => (lower / h).floor() as i64,
    };
    let lat = Lattice { d, h, kind, k_lo };
    let xf = (x / h).floor() as i64;
    let n = n as i64;
    // largest index kept exactly after j summands; above it the sum exceeds
    // x whatever the remaining n - j summands are
    let keep = |j: i64| xf - (n - j) * k_lo + 1;
    let width = keep(1) - k_lo + 1;
    if width > MAX_LATTICE as i64 || (n > 2 && width > MAX_QUADRATIC as i64) {
        return Err(Error::Resource(format!(
            "lattice of {width} points is too large; use a coarser step"
        )));
    }
    if width <= 0 {
        return Ok(1.0);
    }
    // pmf of one summand on [k_lo, keep(1)], remainder lumped
    let single: Vec<f64> = (k_lo..=keep(1)).map(|k| lat.mass(k)).collect();
    let mut over = lat.tail_idx(keep(1));
    let mut pmf = single.clone();
    let mut start = k_lo;
    for j in 2..n {
        let hi = keep(j);
        let new_start = start + k_lo;
        let len = (hi - new_start + 1).max(0) as usize;
        let mut next = vec![0.0; len];
        let mut spill = 0.0;
        for (a, &pa) in pmf.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (b, &pb) in single.iter().enumerate() {
                let idx = a + b;
                if idx < len {
                    next[idx] += pa * pb;
                } else {
                    spill += pa * pb;
                }
            }
        }
        // paths already over stay over; a new summand above keep(1) pushes
        // any partial sum over
        over = over + (1.0 - over) * lat.tail_idx(keep(1)) + spill;
        pmf = next;
        start = new_start;
    }
    // last summand
    let mut acc = over;
    for (i, &p) in pmf.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let s = start + i as i64;
        acc += p * lat.tail_at(x - s as f64 * h);
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// `P(S_n > x)` for an atomic law, exact up to rounding.
fn exact_atomic_tail(d: &Marginal, n: usize, x: f64) -> Result<f64> {
    let lower = d.support_lower();
    let m = n as f64;
    // a partial sum of j terms above x - (n - j) lower exceeds x for sure
    let cutoff = |j: f64| x - (m - j) * lower;
    let (atoms, rest) = d
        .atoms_upto(cutoff(1.0))
        .ok_or_else(|| Error::Precondition("exact path needs an atomic law".into()))?;
    let single = LatticeMeasure::new(atoms)?;
    let mut partial = single.clone();
    let mut over = rest;
    for j in 2..n {
        let conv = convolve_atoms(&partial, &single)?;
        let c = cutoff(j as f64);
        let k = conv.atoms.partition_point(|a| a.0 <= c);
        let spill: f64 = conv.atoms[k..].iter().map(|a| a.1).sum();
        // a newest term above cutoff(1) pushes any partial sum over
        over = over + partial.total * (1.0 - single.total) + spill;
        partial = LatticeMeasure {
            atoms: conv.atoms[..k].to_vec(),
            total: conv.total - spill,
            pruned: 0.0,
        };
    }
    let mut acc = over;
    for &(s, p) in &partial.atoms {
        acc += p * d.tail(x - s);
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// One point of a ratio curve with its running minimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioPoint {
    pub x: f64,
    pub ratio: f64,
    pub running_min: f64,
}

/// Exact `Fbar^{*2}(x) / Fbar(x)` at each point, with running minimum.
pub fn example11_ratio_curve(e: &Example11, x_points: &[f64]) -> Result<Vec<RatioPoint>> {
    let d = Marginal::Example11(e.clone());
    let mut out = Vec::with_capacity(x_points.len());
    let mut running = f64::INFINITY;
    for &x in x_points {
        if !(x.is_finite() && x < 2f64.powi(60)) {
            return Err(invalid(format!("point {x} is outside the supported range")));
        }
        let num = exact_atomic_tail(&d, 2, x)?;
        let ratio = num / d.tail(x);
        running = running.min(ratio);
        out.push(RatioPoint {
            x,
            ratio,
            running_min: running,
        });
    }
    Ok(out)
}

/// Every point in `[lo, hi]` where `Fbar` or `Fbar^{*2}` jumps, plus `lo`.
/// Both are right-continuous step functions, so evaluating here covers every
/// value they take on the interval.
pub fn example11_breakpoints(e: &Example11, lo: f64, hi: f64) -> Vec<f64> {
    let d = Marginal::Example11(e.clone());
    let (atoms, _) = d.atoms_upto(hi - d.support_lower()).unwrap_or_default();
    let locs: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let mut pts = vec![lo];
    for (i, &a) in locs.iter().enumerate() {
        if a >= lo && a <= hi {
            pts.push(a);
        }
        for &b in &locs[i..] {
            let s = a + b;
            if s >= lo && s <= hi {
                pts.push(s);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(atoms: &[(f64, f64)]) -> LatticeMeasure {
        LatticeMeasure::new(atoms.to_vec()).unwrap()
    }

    #[test]
    fn convolution_examples() {
        let b = m(&[(0.0, 0.5), (1.0, 0.5)]);
        assert_eq!(convolve_atoms(&LatticeMeasure::dirac(0.0), &b).unwrap(), b);
        let bb = convolve_atoms(&b, &b).unwrap();
        assert_eq!(bb.atoms(), &[(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)]);
    }

    #[test]
    fn example11_truncated_self_convolution() {
        let atoms: Vec<(f64, f64)> = (0..12)
            .map(|n| (Example11::rho_atom(n), 2f64.powi(-(n + 1))))
            .collect();
        let a = m(&atoms);
        let c = convolve_atoms(&a, &a).unwrap();
        let mut brute = 0.0;
        for &(x, p) in &atoms {
            for &(y, q) in &atoms {
                if x + y > 63.0 {
                    brute += p * q;
                }
            }
        }
        assert!((c.tail(63.0) - brute).abs() < 1e-16);
        assert!((c.total() - a.total() * a.total()).abs() < 1e-15);
    }

    #[test]
    fn atom_cap_is_enforced() {
        let a = m(&(0..100)
            .map(|k| (k as f64 * 0.37, 0.01))
            .collect::<Vec<_>>());
        let opts = ConvOptions {
            atom_cap: 50,
            ..Default::default()
        };
        assert!(matches!(
            convolve_atoms_with(&a, &a, &opts),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn exponential_pair_bracket() {
        let d = Marginal::exponential(1.0).unwrap();
        let b = nfold_tail_bracket(&d, 2, 9.0, None).unwrap();
        let truth = 10.0 * (-9f64).exp();
        assert!(b.lower <= truth && truth <= b.upper, "{b:?}");
        assert!(b.width() < 0.01 * truth);
    }

    #[test]
    fn gamma3_bracket() {
        let d = Marginal::exponential(1.0).unwrap();
        let x = 6.0f64;
        let truth = (-x).exp() * (1.0 + x + x * x / 2.0);
        let b = nfold_tail_bracket(&d, 3, x, Some(0.01)).unwrap();
        assert!(b.lower <= truth && truth <= b.upper, "{b:?} vs {truth}");
    }

    #[test]
    fn refinement_never_widens() {
        let d = Marginal::pareto(1.5, 1.0).unwrap();
        let mut prev = nfold_tail_bracket(&d, 2, 50.0, Some(0.5)).unwrap();
        for h in [0.25, 0.125, 0.0625] {
            let b = nfold_tail_bracket(&d, 2, 50.0, Some(h)).unwrap();
            assert!(b.lower >= prev.lower - 1e-15 && b.upper <= prev.upper + 1e-15);
            prev = b;
        }
    }

    #[test]
    fn pareto_pair_ratio_tends_to_two() {
        let d = Marginal::pareto(1.0, 1.0).unwrap();
        let x = 1e5;
        let b = nfold_tail_bracket(&d, 2, x, None).unwrap();
        let r = b.midpoint() / (2.0 * d.tail(x));
        assert!((r - 1.0).abs() < 1e-3, "{r}");
    }

    #[test]
    fn example11_exact_and_brute_force_agree() {
        let e = Example11::default();
        let d = Marginal::Example11(e.clone());
        let b = nfold_tail_bracket(&d, 2, 3.0, None).unwrap();
        assert_eq!(b.width(), 0.0);
        let (atoms, _) = d.atoms_upto(1e6).unwrap();
        let mut brute = 0.0;
        for &(x, p) in &atoms {
            for &(y, q) in &atoms {
                if x + y > 3.0 {
                    brute += p * q;
                }
            }
        }
        brute += 1.0 - atoms.iter().map(|a| a.1).sum::<f64>().powi(2);
        assert!((b.lower - brute).abs() < 1e-14);
        let three = nfold_tail_bracket(&d, 3, 10.0, None).unwrap();
        let mut brute3 = 0.0;
        let small: Vec<_> = d.atoms_upto(40.0).unwrap().0;
        for &(x, p) in &small {
            for &(y, q) in &small {
                brute3 += p * q * d.tail(10.0 - x - y);
            }
        }
        // pairs with a coordinate above 40 always exceed 10 - (-3)
        brute3 += 1.0 - small.iter().map(|a| a.1).sum::<f64>().powi(2);
        assert!(
            (three.lower - brute3).abs() < 1e-12,
            "{} vs {brute3}",
            three.lower
        );
    }

    #[test]
    fn example11_running_minimum_is_frozen() {
        let e = Example11::default();
        let pts = example11_breakpoints(&e, 1.0, 2047.0);
        let curve = example11_ratio_curve(&e, &pts).unwrap();
        let last = curve.last().unwrap();
        assert_eq!(last.running_min, 1.25);
        let at = curve.iter().find(|p| p.ratio == 1.25).unwrap();
        assert_eq!(at.x, 2.5);
        for (x, r) in [
            (1.0, 1.75),
            (3.0, 2.5),
            (7.0, 2.75),
            (63.0, 2.96875),
            (2046.0, 1.74951171875),
            (2047.0, 2.9990234375),
        ] {
            let p = example11_ratio_curve(&e, &[x]).unwrap()[0];
            assert!((p.ratio - r).abs() < 1e-14, "x={x}: {}", p.ratio);
        }
    }

    #[test]
    fn ratio_flat_between_breakpoints() {
        let e = Example11::default();
        let c = example11_ratio_curve(&e, &[100.0, 100.3, 100.9]).unwrap();
        assert_eq!(c[0].ratio, c[1].ratio);
        assert_eq!(c[1].ratio, c[2].ratio);
    }
}
