//! Numerical membership diagnostics for the heavy-tail classes and the
//! pairwise dependence assumptions H1/H2.
//!
//! Limits cannot be verified on a finite grid. Every report therefore
//! carries the raw statistics and a graded verdict computed from them by a
//! pure rule, so a report can be re-judged with a different tolerance.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::conv::nfold_tail_bracket;
use crate::copulas::DependentModel;
use crate::dists::{Marginal, TailClass};
use crate::error::{invalid, Error, Result};
use crate::quad;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// What a report probes: a tail class or a dependence assumption.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagTarget {
    Class(TailClass),
    H1,
    H2,
}

impl fmt::Display for DiagTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagTarget::Class(c) => c.fmt(f),
            DiagTarget::H1 => f.write_str("H1"),
            DiagTarget::H2 => f.write_str("H2"),
        }
    }
}

impl Serialize for DiagTarget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One probed statistic. `series` distinguishes curves within a report
/// (the window width `h`, or the ray slope for H2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbePoint {
    pub x: f64,
    pub ratio: f64,
    pub series: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub target: DiagTarget,
    pub probe_grid: Vec<f64>,
    pub statistics: Vec<ProbePoint>,
    pub verdict: Verdict,
    pub tolerance: f64,
}

pub const DEFAULT_TOLERANCE: f64 = 0.05;

/// Fraction of the grid (from the end) that the verdict looks at.
const TAIL_FRACTION: f64 = 0.25;

fn tail_segment(values: &[f64]) -> &[f64] {
    let k = ((values.len() as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, values.len());
    &values[values.len() - k..]
}

/// Verdict for `ratio -> target`.
///
/// Consistent: every point of the last quarter lies in the band
/// `|r - target| <= tol * |target|` (or `<= tol` for a zero target) and the
/// deviation does not grow along the segment. Inconsistent: at least half
/// of the segment lies outside the band and the deviation is not strictly
/// shrinking (a monotone approach may just be slow). Otherwise inconclusive.
pub fn limit_verdict(ratios: &[f64], target: f64, tol: f64) -> Verdict {
    if ratios.is_empty() {
        return Verdict::Inconclusive;
    }
    let band = if target == 0.0 {
        tol
    } else {
        tol * target.abs()
    };
    let seg = tail_segment(ratios);
    let dev: Vec<f64> = seg.iter().map(|r| (r - target).abs()).collect();
    let outside = dev.iter().filter(|&&d| !(d <= band)).count();
    if outside == 0 {
        let drifting_away = dev.last().unwrap() > &(dev[0] + 0.25 * band);
        if drifting_away {
            Verdict::Inconclusive
        } else {
            Verdict::Consistent
        }
    } else if 2 * outside >= seg.len() && !(dev.len() >= 2 && dev.windows(2).all(|w| w[1] < w[0])) {
        Verdict::Inconsistent
    } else {
        Verdict::Inconclusive
    }
}

/// Verdict for `limsup ratio < inf` judged on the second half of the grid.
///
/// Consistent when the ratio at the end exceeds the ratio at the midpoint by
/// at most the factor `1 + tol`; inconsistent when it grows by more than
/// `1 + 4 tol` and increases monotonically over that half.
pub fn bounded_verdict(ratios: &[f64], tol: f64) -> Verdict {
    if ratios.len() < 2 {
        return Verdict::Inconclusive;
    }
    let half = &ratios[ratios.len() / 2..];
    let growth = half.last().unwrap() / half[0];
    if !growth.is_finite() {
        return Verdict::Inconclusive;
    }
    let monotone = half.windows(2).all(|w| w[1] >= w[0]);
    if growth <= 1.0 + tol {
        Verdict::Consistent
    } else if growth > 1.0 + 4.0 * tol && monotone {
        Verdict::Inconsistent
    } else {
        Verdict::Inconclusive
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("probe grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
        return Err(invalid("probe grid must be finite and strictly increasing"));
    }
    Ok(())
}

fn report(
    target: DiagTarget,
    grid: &[f64],
    stats: Vec<ProbePoint>,
    verdict: Verdict,
    tol: f64,
) -> ClassReport {
    ClassReport {
        target,
        probe_grid: grid.to_vec(),
        statistics: stats,
        verdict,
        tolerance: tol,
    }
}

fn single_series(grid: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<Vec<ProbePoint>> {
    grid.iter()
        .map(|&x| {
            Ok(ProbePoint {
                x,
                ratio: f(x)?,
                series: None,
            })
        })
        .collect()
}

fn ratios(stats: &[ProbePoint]) -> Vec<f64> {
    stats.iter().map(|p| p.ratio).collect()
}

/// Geometric grid of `points` values from `quantile(u_lo)` to `quantile(u_hi)`.
pub fn quantile_grid(d: &Marginal, u_lo: f64, u_hi: f64, points: usize) -> Result<Vec<f64>> {
    let a = d.quantile(u_lo)?;
    let b = d.quantile(u_hi)?;
    geometric_grid(a, b, points)
}

pub fn geometric_grid(a: f64, b: f64, points: usize) -> Result<Vec<f64>> {
    if !(a > 0.0 && b > a) || points < 2 {
        return Err(invalid(format!(
            "geometric grid needs 0 < a < b and 2+ points, got ({a}, {b}, {points})"
        )));
    }
    let r = (b / a).ln() / (points - 1) as f64;
    let mut g: Vec<f64> = (0..points).map(|i| a * (r * i as f64).exp()).collect();
    g[points - 1] = b;
    Ok(g)
}

/// Default probe grid for class diagnostics: deep into the tail, since
/// everything here is closed-form or deterministic.
///
/// For atomic laws the points sit just below atoms, where a long-tail or
/// subexponential failure shows up; a geometric grid would land between
/// atoms and see flat tails.
pub fn default_class_grid(d: &Marginal) -> Result<Vec<f64>> {
    let lo = d.quantile(0.5)?.max(1.0);
    let hi = d.quantile(1.0 - 1e-10)?;
    if let Some((atoms, _)) = d.atoms_upto(hi) {
        let mut below = Vec::new();
        for w in atoms.windows(2) {
            let (prev, a) = (w[0].0, w[1].0);
            if a > lo {
                below.push(a - 0.5 * (a - prev).min(1.0));
            }
        }
        if below.len() >= 8 {
            let stride = below.len().div_ceil(CLASS_GRID_POINTS);
            let mut pts: Vec<f64> = below.iter().rev().step_by(stride).copied().collect();
            pts.reverse();
            return Ok(pts);
        }
    }
    geometric_grid(lo, hi.max(lo * 2.0), CLASS_GRID_POINTS)
}

const CLASS_GRID_POINTS: usize = 32;

/// `Fbar(x + y) / Fbar(x)`, target 1.
pub fn diag_long_tail(d: &Marginal, y: f64, grid: &[f64], tol: f64) -> Result<ClassReport> {
    if !(y > 0.0) {
        return Err(invalid("long-tail shift y must be positive"));
    }
    check_grid(grid)?;
    let stats = single_series(grid, |x| Ok(d.tail(x + y) / d.tail(x)))?;
    let v = limit_verdict(&ratios(&stats), 1.0, tol);
    Ok(report(DiagTarget::Class(TailClass::L), grid, stats, v, tol))
}

/// `Fbar(x y) / Fbar(x)` for `y` in (0, 1), judged bounded or not.
pub fn diag_dominated(d: &Marginal, y: f64, grid: &[f64], tol: f64) -> Result<ClassReport> {
    if !(y > 0.0 && y < 1.0) {
        return Err(invalid("dominated-variation factor y must lie in (0,1)"));
    }
    check_grid(grid)?;
    let stats = single_series(grid, |x| Ok(d.tail(x * y) / d.tail(x)))?;
    let v = bounded_verdict(&ratios(&stats), tol);
    Ok(report(DiagTarget::Class(TailClass::D), grid, stats, v, tol))
}

/// `Fbar^{*2}(x) / Fbar(x)` from the convolution oracle, target 2.
///
/// With `positive_part` the law is replaced by `F^+`, i.e. the law of
/// `max(X, 0)`; otherwise the convolution of `F` itself is used.
pub fn diag_subexponential(
    d: &Marginal,
    grid: &[f64],
    tol: f64,
    positive_part: bool,
) -> Result<ClassReport> {
    check_grid(grid)?;
    let stats = single_series(grid, |x| {
        let num = if positive_part && d.support_lower() < 0.0 {
            positive_part_pair_tail(d, x)?
        } else {
            nfold_tail_bracket(d, 2, x, None)?.midpoint()
        };
        Ok(num / d.tail(x))
    })?;
    let v = limit_verdict(&ratios(&stats), 2.0, tol);
    Ok(report(DiagTarget::Class(TailClass::S), grid, stats, v, tol))
}

/// `P(X_1^+ + X_2^+ > x)` for `x > 0`, split on the signs of the summands:
/// `2 F(0) Fbar(x) + Fbar(0)^2 P(Y_1 + Y_2 > x)` with `Y` distributed as
/// `X` given `X > 0`.
fn positive_part_pair_tail(d: &Marginal, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(invalid("positive-part probe needs x > 0"));
    }
    let below = 1.0 - d.tail(0.0);
    let pos = conditioned_positive(d)?;
    let both = nfold_tail_bracket(&pos, 2, x, None)?.midpoint() * d.tail(0.0).powi(2);
    Ok(2.0 * below * d.tail(x) + both)
}

/// Law of `X` given `X > 0`, only available for atomic laws.
fn conditioned_positive(d: &Marginal) -> Result<Marginal> {
    let (atoms, _) = d.atoms_upto(f64::MAX).ok_or_else(|| {
        Error::Precondition("positive-part convolution is implemented for atomic laws".into())
    })?;
    let p = d.tail(0.0);
    Marginal::atoms(
        atoms
            .into_iter()
            .filter(|a| a.0 > 0.0)
            .map(|(l, m)| (l, m / p))
            .collect(),
    )
}

/// `int_0^x Fbar(x - y) Fbar(y) dy / (2 m_{F+} Fbar(x))`, target 1.
pub fn diag_sstar(d: &Marginal, grid: &[f64], tol: f64) -> Result<ClassReport> {
    check_grid(grid)?;
    let m = d
        .positive_mean()
        .finite()
        .ok_or_else(|| Error::Precondition("S* diagnostic needs a finite mean".into()))?;
    let stats = single_series(grid, |x| {
        let denom = 2.0 * m * d.tail(x);
        Ok(sstar_integral(d, x, denom) / denom)
    })?;
    let v = limit_verdict(&ratios(&stats), 1.0, tol);
    Ok(report(
        DiagTarget::Class(TailClass::SStar),
        grid,
        stats,
        v,
        tol,
    ))
}

/// `int_0^x Fbar(x - y) Fbar(y) dy` as twice the integral over `[0, x/2]`.
pub fn sstar_integral(d: &Marginal, x: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * x;
    let mut breaks = Vec::new();
    let lower = d.support_lower();
    if lower > 0.0 && lower < half {
        breaks.push(lower);
    }
    if x - lower > 0.0 && x - lower < half {
        breaks.push(x - lower);
    }
    let mut b = 1.0;
    while b < half {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.sort_by(f64::total_cmp);
    let tol = 1e-10 * scale;
    2.0 * quad::integrate_pieces(|y| d.tail(x - y) * d.tail(y), 0.0, half, &breaks, tol)
}

/// Tail of the window law `F_h` at `x`: `min(1, int_x^{x+h} Fbar(t) dt)`.
pub fn fh_tail(d: &Marginal, h: f64, x: f64) -> Result<f64> {
    if !(h >= 1.0 && h.is_finite()) {
        return Err(invalid(format!(
            "window width must satisfy h >= 1, got {h}"
        )));
    }
    if !(x > 0.0) {
        return Err(invalid(format!("window tail needs x > 0, got {x}")));
    }
    Ok(Marginal::window(d.clone(), h)?.tail(x))
}

/// `Fbar_h^{*2}(x) / Fbar_h(x)` for every `h` in `h_grid`, target 2.
/// Consistent only when every `h` curve is.
pub fn diag_strong_subexponential(
    d: &Marginal,
    h_grid: &[f64],
    x_grid: &[f64],
    tol: f64,
) -> Result<ClassReport> {
    check_grid(x_grid)?;
    if h_grid.is_empty() || h_grid.iter().any(|&h| !(h >= 1.0)) {
        return Err(invalid("window widths must satisfy h >= 1"));
    }
    let mut stats = Vec::new();
    let mut verdicts = Vec::new();
    for &h in h_grid {
        let w = Marginal::window(d.clone(), h)?;
        let mut series = Vec::with_capacity(x_grid.len());
        for &x in x_grid {
            let r = nfold_tail_bracket(&w, 2, x, None)?.midpoint() / w.tail(x);
            series.push(r);
            stats.push(ProbePoint {
                x,
                ratio: r,
                series: Some(h),
            });
        }
        verdicts.push(limit_verdict(&series, 2.0, tol));
    }
    let v = combine(&verdicts);
    Ok(report(
        DiagTarget::Class(TailClass::StrongSubexp),
        x_grid,
        stats,
        v,
        tol,
    ))
}

fn combine(verdicts: &[Verdict]) -> Verdict {
    if verdicts.contains(&Verdict::Inconsistent) {
        Verdict::Inconsistent
    } else if verdicts.iter().all(|&v| v == Verdict::Consistent) {
        Verdict::Consistent
    } else {
        Verdict::Inconclusive
    }
}

/// The integrated-tail law `F_I`.
pub fn diag_integrated_tail(d: &Marginal) -> Result<Marginal> {
    Marginal::integrated_tail_law(d.clone())
}

fn check_pair(model: &DependentModel, pair: (usize, usize)) -> Result<()> {
    let n = model.dim();
    if pair.0 >= n || pair.1 >= n || pair.0 == pair.1 {
        return Err(invalid(format!(
            "pair {pair:?} is not a valid pair of coordinates"
        )));
    }
    Ok(())
}

/// `P(X_i > x, X_j > x) / (Fbar_i(x) + Fbar_j(x))` along the diagonal, target 0.
pub fn diag_h1(
    model: &DependentModel,
    pair: (usize, usize),
    grid: &[f64],
    tol: f64,
) -> Result<ClassReport> {
    check_pair(model, pair)?;
    check_grid(grid)?;
    let (i, j) = pair;
    let sub = model.copula.sub(&[i, j])?;
    let stats = single_series(grid, |x| {
        let vi = model.marginals[i].tail(x);
        let vj = model.marginals[j].tail(x);
        Ok(sub.joint_exceedance(&[vi, vj]) / (vi + vj))
    })?;
    let v = limit_verdict(&ratios(&stats), 0.0, tol);
    Ok(report(DiagTarget::H1, grid, stats, v, tol))
}

/// Ray slopes used by [`diag_h2`]: `x_i = c x_j`.
pub const H2_RAYS: [f64; 3] = [0.5, 1.0, 2.0];

/// `P(|X_i| > x_i | X_j > x_j)` along the rays `x_i = c x_j`, target 0.
pub fn diag_h2(
    model: &DependentModel,
    pair: (usize, usize),
    grid: &[f64],
    tol: f64,
) -> Result<ClassReport> {
    check_pair(model, pair)?;
    check_grid(grid)?;
    let (i, j) = pair;
    let sub = model.copula.sub(&[i, j])?;
    let (fi, fj) = (&model.marginals[i], &model.marginals[j]);
    let mut stats = Vec::new();
    let mut verdicts = Vec::new();
    for &c in &H2_RAYS {
        let mut series = Vec::with_capacity(grid.len());
        for &xj in grid {
            let xi = c * xj;
            let vj = fj.tail(xj);
            let up = sub.joint_exceedance(&[fi.tail(xi), vj]);
            // P(X_i < -x_i) = 1 - P(X_i >= -x_i)
            let below = 1.0 - fi.tail_left(-xi);
            let down = if below > 0.0 {
                sub.lower_upper_pair(0, 1, below, vj)
            } else {
                0.0
            };
            let r = (up + down) / vj;
            series.push(r);
            stats.push(ProbePoint {
                x: xj,
                ratio: r,
                series: Some(c),
            });
        }
        verdicts.push(limit_verdict(&series, 0.0, tol));
    }
    Ok(report(DiagTarget::H2, grid, stats, combine(&verdicts), tol))
}
