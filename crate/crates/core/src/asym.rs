//! Tail-ratio experiments: an estimated (or exact) tail probability divided
//! by a closed-form asymptotic denominator, over a threshold grid, with a
//! verdict on whether the curve is consistent with the predicted limit.
//!
//! Verdicts are evidence, not proof: they only look at a finite grid and are
//! computed by pure functions of the curve points, limit and tolerance.

pub mod presets;

use serde::{Deserialize, Serialize};

use crate::classdiag::{geometric_grid, Verdict};
use crate::copulas::{Copula, DependentModel};
use crate::dists::{Counting, ExtendedReal, Marginal};
use crate::error::{invalid, Error, Result};
use crate::mc::{estimate_tail_with, Evaluator, Quantity, QuantityKind, TailEstimate};

/// Default relative tolerance for curve verdicts.
pub const DEFAULT_CURVE_TOLERANCE: f64 = 0.1;
/// Half-width of the per-point confidence interval in standard errors.
pub const CI_SIGMAS: f64 = 3.0;
/// Largest acceptable relative standard error at the grid end.
pub const MAX_REL_STDERR: f64 = 0.25;
/// Default bound for divergence experiments.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 10.0;
/// Partial-mean certificates stop searching after this many terms.
pub const CERTIFICATE_SEARCH_LIMIT: u64 = 100_000_000;

/// `sum_k F_k(x)` over the marginals.
pub fn denom_sum_tails(marginals: &[Marginal], x: f64) -> f64 {
    marginals.iter().map(|m| m.tail(x)).sum()
}

/// `n F(x)`.
pub fn denom_n_tail(f: &Marginal, n: usize, x: f64) -> f64 {
    n as f64 * f.tail(x)
}

/// `E tau F(x)`; infinite when the counting law has infinite mean.
pub fn denom_mean_tau_tail(f: &Marginal, tau: &Counting, x: f64) -> ExtendedReal {
    tau.mean().map(|m| m * f.tail(x))
}

/// `sum_k F_k(x (1+r)^k)` with `k` counted from 1.
pub fn denom_discounted(marginals: &[Marginal], r: f64, x: f64) -> Result<f64> {
    if !(r > -1.0 && r.is_finite()) {
        return Err(invalid(format!("rate must exceed -1, got {r}")));
    }
    let g = 1.0 + r;
    Ok(marginals
        .iter()
        .enumerate()
        .map(|(k, m)| m.tail(x * g.powi(k as i32 + 1)))
        .sum())
}

/// Which closed-form denominator an experiment divides by.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenominatorSpec {
    /// `sum_k F_k(x)` over the model marginals.
    SumTails,
    /// `n F(x)` with `n` the quantity's term count and `F` the first marginal.
    NTail,
    /// `E tau F(x)`.
    MeanTauTail,
    /// `sum_k F_k(x (1+r)^k)`.
    Discounted { rate: f64 },
    /// `F(x)` of the first marginal.
    Tail,
    /// Tail of an explicitly given law, e.g. a claim size before shifting.
    LawTail { law: Marginal },
}

impl DenominatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DenominatorSpec::SumTails => "sum_tails",
            DenominatorSpec::NTail => "n_tail",
            DenominatorSpec::MeanTauTail => "mean_tau_tail",
            DenominatorSpec::Discounted { .. } => "discounted",
            DenominatorSpec::Tail => "tail",
            DenominatorSpec::LawTail { .. } => "law_tail",
        }
    }

    pub fn evaluate(&self, model: &DependentModel, q: &Quantity, x: f64) -> Result<ExtendedReal> {
        let first = &model.marginals[0];
        Ok(match self {
            DenominatorSpec::SumTails => ExtendedReal::Finite(denom_sum_tails(&model.marginals, x)),
            DenominatorSpec::NTail => {
                let n = q.n.ok_or_else(|| {
                    Error::Configuration("n_tail denominator needs a fixed-n quantity".into())
                })?;
                ExtendedReal::Finite(denom_n_tail(first, n, x))
            }
            DenominatorSpec::MeanTauTail => {
                let tau = model.tau.as_ref().ok_or_else(|| {
                    Error::Configuration("mean_tau_tail denominator needs a counting law".into())
                })?;
                denom_mean_tau_tail(first, tau, x)
            }
            DenominatorSpec::Discounted { rate } => {
                ExtendedReal::Finite(denom_discounted(&model.marginals, *rate, x)?)
            }
            DenominatorSpec::Tail => ExtendedReal::Finite(first.tail(x)),
            DenominatorSpec::LawTail { law } => ExtendedReal::Finite(law.tail(x)),
        })
    }
}

/// The predicted behaviour of the ratio as `x` grows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Limit {
    Lim {
        value: f64,
    },
    Liminf {
        value: f64,
    },
    /// The ratio grows without bound; checked against `bound`.
    Divergence {
        bound: f64,
    },
}

impl Limit {
    pub fn predicted(&self) -> ExtendedReal {
        match *self {
            Limit::Lim { value } | Limit::Liminf { value } => ExtendedReal::Finite(value),
            Limit::Divergence { .. } => ExtendedReal::Infinite,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Limit::Lim { .. } => "lim",
            Limit::Liminf { .. } => "liminf",
            Limit::Divergence { .. } => "divergence",
        }
    }
}

/// Everything needed to produce one ratio curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub model: DependentModel,
    pub quantity: Quantity,
    pub denominator: DenominatorSpec,
    pub limit: Limit,
    pub grid: Vec<f64>,
    pub tolerance: f64,
    /// Discount rate applied to term `k` as `(1 + r)^-k`.
    pub discount: Option<f64>,
    /// Use closed-form numerators; an error when none is available.
    pub exact: bool,
    /// Set by presets whose model was chosen to meet the hypotheses.
    pub hypotheses_verified: bool,
}

impl ExperimentSpec {
    /// A custom experiment on the default grid of the model.
    pub fn new(
        id: impl Into<String>,
        model: DependentModel,
        kind: QuantityKind,
        denominator: DenominatorSpec,
        limit: Limit,
    ) -> Result<Self> {
        let grid = default_grid(&model.marginals[0])?;
        let quantity = Quantity::for_model(kind, &model);
        Ok(Self {
            id: id.into(),
            model,
            quantity,
            denominator,
            limit,
            grid,
            tolerance: DEFAULT_CURVE_TOLERANCE,
            discount: None,
            exact: false,
            hypotheses_verified: false,
        })
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_exact(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }

    pub fn with_discount(mut self, rate: f64) -> Self {
        self.discount = Some(rate);
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub(crate) fn verified(mut self) -> Self {
        self.hypotheses_verified = true;
        self
    }

    fn evaluator(&self) -> Result<Evaluator<'_>> {
        let ev = Evaluator::new(&self.model, &self.quantity)?;
        match self.discount {
            Some(r) => ev.with_discount(r),
            None => Ok(ev),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.quantity.validate(&self.model)?;
        if self.grid.is_empty() || self.grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::Configuration(
                "grid must be non-empty and finite".into(),
            ));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Configuration(format!(
                "tolerance must lie in (0,1), got {}",
                self.tolerance
            )));
        }
        match self.limit {
            Limit::Lim { value } | Limit::Liminf { value }
                if !(value.is_finite() && value >= 0.0) =>
            {
                return Err(Error::Configuration(format!(
                    "limit must be finite and nonnegative, got {value}"
                )));
            }
            Limit::Divergence { bound } if !(bound.is_finite() && bound > 0.0) => {
                return Err(Error::Configuration(format!(
                    "divergence bound must be positive, got {bound}"
                )));
            }
            _ => {}
        }
        if let Some(r) = self.discount {
            if !(r > -1.0 && r.is_finite()) {
                return Err(Error::Configuration(format!(
                    "discount rate must exceed -1, got {r}"
                )));
            }
        }
        Ok(())
    }

    /// Hypothesis problems that do not stop the experiment from running.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let tau_infinite = self
            .model
            .tau
            .as_ref()
            .is_some_and(|t| !t.mean().is_finite());
        if tau_infinite && !matches!(self.limit, Limit::Divergence { .. }) {
            out.push(format!(
                "{}: E tau is infinite but the experiment expects a finite {}; use a divergence limit",
                self.id,
                self.limit.name()
            ));
        }
        if matches!(self.model.copula, Copula::Comonotone { .. }) && self.model.dim() > 1 {
            out.push(format!(
                "{}: comonotone dependence violates the pairwise tail-independence assumptions",
                self.id
            ));
        }
        if !self.hypotheses_verified {
            out.push(format!(
                "{}: hypotheses unverified (custom configuration)",
                self.id
            ));
        }
        out
    }
}

/// Default threshold grid: 24 geometric points from the 0.9 quantile to the
/// `1 - 1e-4` quantile. Ranges reaching zero or below are shifted so that the
/// spacing is geometric in `x - x_0 + 1`.
pub fn default_grid(f: &Marginal) -> Result<Vec<f64>> {
    let lo = f.quantile(0.9)?;
    let hi = f.quantile(1.0 - 1e-4)?;
    offset_geometric_grid(lo, hi, 24)
}

fn offset_geometric_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if lo > 0.0 {
        return geometric_grid(lo, hi, points);
    }
    let c = 1.0 - lo;
    Ok(geometric_grid(lo + c, hi + c, points)?
        .into_iter()
        .map(|x| x - c)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub numerator: f64,
    pub stderr: f64,
    /// Monte Carlo hit count; absent for exact numerators.
    pub hits: Option<u64>,
    pub denominator: f64,
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub running_min: f64,
}

/// `N` with `sum_{n<=N} n P(tau = n) > bound`: a finite witness that the
/// mean exceeds the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceCertificate {
    pub bound: f64,
    pub terms: u64,
    pub partial_mean: f64,
}

/// Smallest `N` whose partial mean exceeds `bound`, searched up to
/// [`CERTIFICATE_SEARCH_LIMIT`].
pub fn partial_mean_certificate(tau: &Counting, bound: f64) -> Option<DivergenceCertificate> {
    let mut acc = 0.0;
    for n in 1..=CERTIFICATE_SEARCH_LIMIT {
        acc += n as f64 * tau.pmf_u(n);
        if acc > bound {
            return Some(DivergenceCertificate {
                bound,
                terms: n,
                partial_mean: acc,
            });
        }
        if tau.tail(n) == 0.0 {
            break;
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioCurve {
    pub experiment_id: String,
    pub quantity: Quantity,
    pub denominator: DenominatorSpec,
    pub limit: Limit,
    pub tolerance: f64,
    pub points: Vec<CurvePoint>,
    pub running_min: f64,
    pub predicted_limit: ExtendedReal,
    pub verdict: Verdict,
    pub note: Option<String>,
    pub samples: u64,
    pub seed: u64,
    pub exact: bool,
    pub hypotheses_verified: bool,
    pub certificate: Option<DivergenceCertificate>,
}

impl RatioCurve {
    pub fn last(&self) -> &CurvePoint {
        self.points.last().expect("curves have at least one point")
    }
}

/// Closed-form numerator `P(Q > x)` where one exists: the maximum of a fixed
/// vector under any copula, and sums/running maxima of identical comonotone
/// coordinates.
pub fn exact_numerator(spec: &ExperimentSpec, x: f64) -> Option<f64> {
    let m = &spec.model;
    let n = spec.quantity.n?;
    let g = 1.0 + spec.discount.unwrap_or(0.0);
    match spec.quantity.kind {
        QuantityKind::MaxN => {
            let v: Vec<f64> = m
                .marginals
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    if spec.discount.is_some() {
                        f.tail(x * g.powi(k as i32 + 1))
                    } else {
                        f.tail(x)
                    }
                })
                .collect();
            Some(m.copula.max_exceedance(&v))
        }
        QuantityKind::SumN | QuantityKind::RunMaxN
            if spec.discount.is_none()
                && matches!(m.copula, Copula::Comonotone { .. })
                && m.identical_marginals() =>
        {
            let f = &m.marginals[0];
            // S_k = k X: the running maximum is n X for X >= 0 and X otherwise
            if spec.quantity.kind == QuantityKind::RunMaxN && x < 0.0 {
                Some(f.tail(x))
            } else {
                Some(f.tail(x / n as f64))
            }
        }
        _ => None,
    }
}

/// Runs one experiment: numerator by Monte Carlo (or closed form when
/// `spec.exact`), exact denominator, verdict.
pub fn run_experiment(
    spec: &ExperimentSpec,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<RatioCurve> {
    spec.validate()?;
    let denominators = spec
        .grid
        .iter()
        .map(|&x| spec.denominator.evaluate(&spec.model, &spec.quantity, x))
        .collect::<Result<Vec<_>>>()?;
    if denominators.iter().any(|d| !d.is_finite()) {
        return Err(Error::Precondition(format!(
            "{}: the {} denominator is infinite (E tau = infinity); divide by a finite tail and use a divergence limit",
            spec.id,
            spec.denominator.name()
        )));
    }
    let numerators: Vec<(f64, f64, Option<u64>)> = if spec.exact {
        spec.grid
            .iter()
            .map(|&x| {
                exact_numerator(spec, x)
                    .map(|p| (p, 0.0, None))
                    .ok_or_else(|| {
                        Error::Configuration(format!(
                            "{}: no closed-form numerator for {}",
                            spec.id, spec.quantity.kind
                        ))
                    })
            })
            .collect::<Result<_>>()?
    } else {
        let est = estimate_tail_with(spec.evaluator()?, &spec.grid, samples, seed, workers)?;
        est.iter()
            .map(|e: &TailEstimate| (e.p_hat, e.stderr, Some(e.hits)))
            .collect()
    };

    let mut points = Vec::with_capacity(spec.grid.len());
    let mut run_min = f64::INFINITY;
    for ((&x, d), (p, se, hits)) in spec.grid.iter().zip(&denominators).zip(numerators) {
        let d = d.as_f64();
        let (ratio, half) = if d > 0.0 {
            (p / d, CI_SIGMAS * se / d)
        } else {
            (f64::NAN, f64::NAN)
        };
        run_min = run_min.min(ratio);
        points.push(CurvePoint {
            x,
            numerator: p,
            stderr: se,
            hits,
            denominator: d,
            ratio,
            ci_low: (ratio - half).max(0.0),
            ci_high: ratio + half,
            running_min: run_min,
        });
    }

    let certificate = match (spec.limit, spec.model.tau.as_ref()) {
        (Limit::Divergence { bound }, Some(tau)) if !tau.mean().is_finite() => {
            partial_mean_certificate(tau, bound)
        }
        _ => None,
    };
    let (verdict, note) = curve_verdict(
        &points,
        spec.limit,
        spec.tolerance,
        spec.exact,
        certificate.as_ref(),
        samples,
    );
    Ok(RatioCurve {
        experiment_id: spec.id.clone(),
        quantity: spec.quantity,
        denominator: spec.denominator.clone(),
        limit: spec.limit,
        tolerance: spec.tolerance,
        running_min: points.last().map_or(f64::NAN, |p| p.running_min),
        points,
        predicted_limit: spec.limit.predicted(),
        verdict,
        note,
        samples: if spec.exact { 0 } else { samples },
        seed,
        exact: spec.exact,
        hypotheses_verified: spec.hypotheses_verified,
        certificate,
    })
}

/// The trailing quarter of the grid (at least one point).
pub fn tail_segment<T>(points: &[T]) -> &[T] {
    let k = points.len().div_ceil(4).max(1).min(points.len());
    &points[points.len() - k..]
}

/// Verdict of a curve against its limit; a pure function of its inputs.
///
/// * `lim L`: every point of the trailing quarter whose CI meets the band
///   `L(1 ± tol)` → consistent; none meets it → inconsistent.
/// * `liminf L`: on the trailing quarter no CI lies wholly below `L(1-tol)`
///   and some CI reaches down to `L(1+tol)` → consistent; all CIs wholly above
///   the band, or one wholly below → inconsistent.
/// * `divergence B`: the last CI lies above `B` and a partial-mean
///   certificate exists → consistent; the last CI lies below `B` → inconsistent.
///
/// Monte Carlo curves whose last point has relative standard error above
/// [`MAX_REL_STDERR`] are inconclusive, with a sample-size recommendation.
pub fn curve_verdict(
    points: &[CurvePoint],
    limit: Limit,
    tol: f64,
    exact: bool,
    certificate: Option<&DivergenceCertificate>,
    samples: u64,
) -> (Verdict, Option<String>) {
    let Some(last) = points.last() else {
        return (Verdict::Inconclusive, Some("empty curve".into()));
    };
    if !exact {
        let rel = if last.numerator > 0.0 {
            last.stderr / last.numerator
        } else {
            f64::INFINITY
        };
        if rel > MAX_REL_STDERR {
            // the relative stderr scales as samples^-1/2; with no hits assume one
            let factor = if rel.is_finite() {
                (rel / MAX_REL_STDERR).powi(2)
            } else {
                1.0 / MAX_REL_STDERR.powi(2)
            };
            let needed = (samples as f64 * factor).ceil();
            return (
                Verdict::Inconclusive,
                Some(format!(
                    "confidence interval too wide at the grid end (relative stderr {rel:.3}); about {needed:.0} samples recommended"
                )),
            );
        }
    }
    let seg = tail_segment(points);
    match limit {
        Limit::Lim { value } => {
            let (lo, hi) = band(value, tol);
            let meets = seg
                .iter()
                .filter(|p| p.ci_high >= lo && p.ci_low <= hi)
                .count();
            if meets == seg.len() {
                (Verdict::Consistent, None)
            } else if meets == 0 {
                (
                    Verdict::Inconsistent,
                    Some(format!(
                        "no trailing confidence interval meets [{lo}, {hi}]"
                    )),
                )
            } else {
                (
                    Verdict::Inconclusive,
                    Some(format!(
                        "{meets} of {} trailing points meet [{lo}, {hi}]",
                        seg.len()
                    )),
                )
            }
        }
        Limit::Liminf { value } => {
            let (lo, hi) = band(value, tol);
            let below = seg.iter().any(|p| p.ci_high < lo);
            let reaches = seg.iter().any(|p| p.ci_low <= hi);
            if below {
                (
                    Verdict::Inconsistent,
                    Some(format!("a trailing point lies wholly below {lo}")),
                )
            } else if !reaches {
                (
                    Verdict::Inconsistent,
                    Some(format!("every trailing point lies wholly above {hi}")),
                )
            } else {
                (Verdict::Consistent, None)
            }
        }
        Limit::Divergence { bound } => {
            if last.ci_high < bound {
                (
                    Verdict::Inconsistent,
                    Some(format!("ratio at the grid end stays below {bound}")),
                )
            } else if last.ci_low > bound && certificate.is_some() {
                (Verdict::Consistent, None)
            } else if certificate.is_none() {
                (
                    Verdict::Inconclusive,
                    Some(format!("no partial-mean certificate above {bound}")),
                )
            } else {
                (
                    Verdict::Inconclusive,
                    Some(format!(
                        "confidence interval at the grid end straddles {bound}"
                    )),
                )
            }
        }
    }
}

fn band(value: f64, tol: f64) -> (f64, f64) {
    if value == 0.0 {
        (-tol, tol)
    } else {
        (value * (1.0 - tol), value * (1.0 + tol))
    }
}
