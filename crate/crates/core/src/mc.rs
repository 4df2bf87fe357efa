//! Seeded Monte Carlo estimation of tail probabilities.
//!
//! Replicate `i` always reads from substream `i` of the seed, so results do
//! not depend on the number of workers. Workers own contiguous replicate
//! ranges and the per-threshold hit counts are reduced by integer addition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::copulas::{Copula, DependentModel};
use crate::dists::Counting;
use crate::error::{invalid, Error, Result};
use crate::rng::{Stream, StreamFactory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuantityKind {
    MaxN,
    SumN,
    RunMaxN,
    MaxTau,
    SumTau,
    RunMaxTau,
}

impl QuantityKind {
    pub const ALL: [QuantityKind; 6] = [
        QuantityKind::MaxN,
        QuantityKind::SumN,
        QuantityKind::RunMaxN,
        QuantityKind::MaxTau,
        QuantityKind::SumTau,
        QuantityKind::RunMaxTau,
    ];

    pub fn is_tau(self) -> bool {
        matches!(
            self,
            QuantityKind::MaxTau | QuantityKind::SumTau | QuantityKind::RunMaxTau
        )
    }

    fn op(self) -> Op {
        match self {
            QuantityKind::MaxN | QuantityKind::MaxTau => Op::Max,
            QuantityKind::SumN | QuantityKind::SumTau => Op::Sum,
            QuantityKind::RunMaxN | QuantityKind::RunMaxTau => Op::RunMax,
        }
    }
}

impl fmt::Display for QuantityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantityKind::MaxN => "MaxN",
            QuantityKind::SumN => "SumN",
            QuantityKind::RunMaxN => "RunMaxN",
            QuantityKind::MaxTau => "MaxTau",
            QuantityKind::SumTau => "SumTau",
            QuantityKind::RunMaxTau => "RunMaxTau",
        })
    }
}

impl FromStr for QuantityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QuantityKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown quantity '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Quantity {
    pub kind: QuantityKind,
    /// Number of terms for the fixed-n kinds; `None` for tau kinds.
    pub n: Option<usize>,
}

impl Quantity {
    pub fn fixed(kind: QuantityKind, n: usize) -> Self {
        Self { kind, n: Some(n) }
    }

    pub fn random(kind: QuantityKind) -> Self {
        Self { kind, n: None }
    }

    /// Fixed kinds take `n` from the model dimension.
    pub fn for_model(kind: QuantityKind, model: &DependentModel) -> Self {
        if kind.is_tau() {
            Self::random(kind)
        } else {
            Self::fixed(kind, model.dim())
        }
    }

    pub fn validate(&self, model: &DependentModel) -> Result<()> {
        if self.kind.is_tau() {
            if model.tau.is_none() {
                return Err(Error::Configuration(format!(
                    "{} needs a counting law tau in the model",
                    self.kind
                )));
            }
            if !model.identical_marginals() {
                return Err(Error::Configuration(format!(
                    "{} needs identical marginals across coordinates",
                    self.kind
                )));
            }
        } else if self.n != Some(model.dim()) {
            return Err(Error::Configuration(format!(
                "{} needs n equal to the copula dimension {}",
                self.kind,
                model.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    pub x: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub hits: u64,
    pub samples: u64,
    pub seed: u64,
}

impl TailEstimate {
    pub fn from_hits(x: f64, hits: u64, samples: u64, seed: u64) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            x,
            p_hat: p,
            stderr: (p * (1.0 - p) / samples as f64).sqrt(),
            hits,
            samples,
            seed,
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Op {
    Max,
    Sum,
    RunMax,
}

/// Above this many terms an independence-copula random maximum is drawn in
/// one step from `F^tau` instead of term by term. Deterministic counts never
/// take the shortcut, so they replay the fixed-n draws exactly.
pub const MAX_SHORTCUT: u64 = 64;

/// A replicate that has not settled after this many terms is an error.
pub const MAX_TERMS: u64 = 1 << 34;

/// Per-worker buffers.
pub struct Scratch {
    pub(crate) u: Vec<f64>,
    pub(crate) x: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Self {
            u: vec![0.0; dim],
            x: vec![0.0; dim],
        }
    }
}

/// Evaluates one replicate of a quantity on `stream`.
///
/// Draws `tau` first (tau kinds), then copula blocks of the model dimension;
/// the first `min(n, remaining)` coordinates of each block are used. Blocks
/// are independent of each other. Evaluation stops as soon as the value is
/// certain to exceed `stop`, returning a value above `stop`.
pub struct Evaluator<'a> {
    model: &'a DependentModel,
    op: Op,
    tau: Option<&'a Counting>,
    /// Smallest support point over the marginals.
    lower: f64,
    shortcut: bool,
    /// Term `k` (from 1) is multiplied by `(1 + r)^-k` when set.
    discount: Option<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a DependentModel, q: &Quantity) -> Result<Self> {
        q.validate(model)?;
        let tau = if q.kind.is_tau() {
            model.tau.as_ref()
        } else {
            None
        };
        let lower = model
            .marginals
            .iter()
            .map(|m| m.support_lower())
            .fold(f64::INFINITY, f64::min);
        let shortcut = q.kind == QuantityKind::MaxTau
            && matches!(model.copula, Copula::Independence { .. })
            && !matches!(tau, Some(Counting::Deterministic { .. }));
        Ok(Self {
            model,
            op: q.kind.op(),
            tau,
            lower,
            shortcut,
            discount: None,
        })
    }

    /// Discounts term `k` by `(1 + rate)^-k`; needs `rate > -1`.
    pub fn with_discount(mut self, rate: f64) -> Result<Self> {
        if !(rate > -1.0 && rate.is_finite()) {
            return Err(invalid(format!("discount rate must exceed -1, got {rate}")));
        }
        self.discount = Some(1.0 + rate);
        // discounting rescales the support bound of later terms: a positive
        // bound shrinks towards 0, a negative one grows when rate < 0
        if rate != 0.0 {
            self.lower = if self.lower < 0.0 && rate < 0.0 {
                f64::NEG_INFINITY
            } else {
                self.lower.min(0.0)
            };
        }
        self.shortcut = false;
        Ok(self)
    }

    pub fn eval(&self, stream: &mut Stream, scratch: &mut Scratch, stop: f64) -> Result<f64> {
        let dim = self.model.dim();
        let count = match self.tau {
            Some(t) => t.sample(stream),
            None => dim as u64,
        };
        if count == 0 {
            return Ok(match self.op {
                Op::Max => f64::NEG_INFINITY,
                Op::Sum | Op::RunMax => 0.0,
            });
        }
        if self.shortcut && count > MAX_SHORTCUT {
            // max of `count` i.i.d. draws has tail level 1 - U^(1/count)
            let v = -(stream.uniform().ln() / count as f64).exp_m1();
            return Ok(self.model.marginals[0].inv_tail(v));
        }
        let mut remaining = count;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut run = f64::NEG_INFINITY;
        while remaining > 0 {
            if count - remaining >= MAX_TERMS {
                return Err(Error::Resource(format!(
                    "replicate with {count} terms did not settle within {MAX_TERMS} terms"
                )));
            }
            self.model
                .sample_into(stream, &mut scratch.u, &mut scratch.x);
            let take = remaining.min(dim as u64) as usize;
            for &raw in &scratch.x[..take] {
                let xk = match self.discount {
                    Some(g) => raw * g.powi(-((count - remaining + 1).min(i32::MAX as u64) as i32)),
                    None => raw,
                };
                remaining -= 1;
                match self.op {
                    Op::Max => {
                        max = max.max(xk);
                        if max > stop {
                            return Ok(max);
                        }
                    }
                    Op::Sum => {
                        sum += xk;
                        let floor = sum + remaining as f64 * self.lower;
                        if floor > stop {
                            return Ok(floor);
                        }
                    }
                    Op::RunMax => {
                        sum += xk;
                        run = run.max(sum);
                        if run > stop {
                            return Ok(run);
                        }
                    }
                }
            }
        }
        Ok(match self.op {
            Op::Max => max,
            Op::Sum => sum,
            Op::RunMax => run,
        })
    }
}

/// Estimates `P(Q > x)` for every `x` in `x_grid`.
pub fn estimate_tail(
    model: &DependentModel,
    q: &Quantity,
    x_grid: &[f64],
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<TailEstimate>> {
    estimate_tail_with(Evaluator::new(model, q)?, x_grid, samples, seed, workers)
}

/// [`estimate_tail`] for a configured evaluator (e.g. with discounting).
pub fn estimate_tail_with(
    ev: Evaluator<'_>,
    x_grid: &[f64],
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<TailEstimate>> {
    let dim = ev.model.dim();
    estimate_statistic(x_grid, samples, seed, workers, |stream, stop| {
        thread_local_scratch(dim, |s| ev.eval(stream, s, stop))
    })
}

fn thread_local_scratch<R>(dim: usize, f: impl FnOnce(&mut Scratch) -> R) -> R {
    thread_local! {
        static SCRATCH: std::cell::RefCell<Scratch> = std::cell::RefCell::new(Scratch::new(0));
    }
    SCRATCH.with(|cell| {
        let mut s = cell.borrow_mut();
        if s.u.len() != dim {
            *s = Scratch::new(dim);
        }
        f(&mut s)
    })
}

/// Generic driver: `stat(stream, stop)` produces one replicate from its own
/// substream; a replicate counts as a hit at `x` when its value exceeds `x`.
/// `stop` is the largest threshold, beyond which the exact value is irrelevant.
pub fn estimate_statistic<F>(
    x_grid: &[f64],
    samples: u64,
    seed: u64,
    workers: usize,
    stat: F,
) -> Result<Vec<TailEstimate>>
where
    F: Fn(&mut Stream, f64) -> Result<f64> + Sync,
{
    if samples == 0 {
        return Err(invalid("samples must be positive"));
    }
    if x_grid.is_empty() || x_grid.iter().any(|x| x.is_nan()) {
        return Err(invalid("threshold grid must be non-empty and free of NaN"));
    }
    let workers = workers.max(1).min(samples as usize);
    let mut order: Vec<usize> = (0..x_grid.len()).collect();
    order.sort_by(|&a, &b| x_grid[a].total_cmp(&x_grid[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| x_grid[i]).collect();
    let stop = *sorted.last().unwrap();
    let factory = StreamFactory::new(seed);

    let run_range = |lo: u64, hi: u64| -> Result<Vec<u64>> {
        // below[k] counts replicates exceeding exactly the k smallest thresholds
        let mut below = vec![0u64; sorted.len() + 1];
        for i in lo..hi {
            let mut stream = factory.stream(i);
            let v = stat(&mut stream, stop)?;
            below[sorted.partition_point(|&x| x < v)] += 1;
        }
        Ok(below)
    };

    let chunk = samples.div_ceil(workers as u64);
    let partials: Vec<Result<Vec<u64>>> = if workers == 1 {
        vec![run_range(0, samples)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers as u64)
                .map(|w| {
                    let lo = (w * chunk).min(samples);
                    let hi = ((w + 1) * chunk).min(samples);
                    let run = &run_range;
                    scope.spawn(move || run(lo, hi))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    };
    let mut below = vec![0u64; sorted.len() + 1];
    for p in partials {
        for (b, v) in below.iter_mut().zip(p?) {
            *b += v;
        }
    }
    // hits at sorted[i] = replicates whose value exceeds sorted[i]
    let mut hits_sorted = vec![0u64; sorted.len()];
    let mut acc = 0u64;
    for i in (0..sorted.len()).rev() {
        acc += below[i + 1];
        hits_sorted[i] = acc;
    }
    let mut out = vec![TailEstimate::from_hits(0.0, 0, samples, seed); x_grid.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = TailEstimate::from_hits(x_grid[i], hits_sorted[pos], samples, seed);
    }
    Ok(out)
}

/// The full value of one replicate (no early stop), for pathwise checks.
pub fn replicate(model: &DependentModel, q: &Quantity, seed: u64, index: u64) -> Result<f64> {
    let ev = Evaluator::new(model, q)?;
    let mut s = StreamFactory::new(seed).stream(index);
    ev.eval(&mut s, &mut Scratch::new(model.dim()), f64::INFINITY)
}

impl Evaluator<'_> {
    /// The full value of replicate `index` under this evaluator.
    pub fn replicate(&self, seed: u64, index: u64) -> Result<f64> {
        let mut s = StreamFactory::new(seed).stream(index);
        self.eval(&mut s, &mut Scratch::new(self.model.dim()), f64::INFINITY)
    }
}

/// The dependent vector drawn by replicate `index` of a fixed-n quantity.
pub fn replicate_vector(model: &DependentModel, seed: u64, index: u64) -> Vec<f64> {
    let mut s = StreamFactory::new(seed).stream(index);
    let mut scratch = Scratch::new(model.dim());
    model.sample_into(&mut s, &mut scratch.u, &mut scratch.x);
    scratch.x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::Marginal;

    fn pareto_model(copula: Copula) -> DependentModel {
        DependentModel::identical(copula, Marginal::pareto(1.0, 1.0).unwrap(), None).unwrap()
    }

    fn within(est: &TailEstimate, truth: f64, k: f64) -> bool {
        let sd = (truth * (1.0 - truth) / est.samples as f64).sqrt();
        (est.p_hat - truth).abs() <= k * sd
    }

    #[test]
    fn independent_max() {
        let m = pareto_model(Copula::independence(2).unwrap());
        let e = estimate_tail(
            &m,
            &Quantity::fixed(QuantityKind::MaxN, 2),
            &[10.0],
            1_000_000,
            1,
            1,
        )
        .unwrap();
        assert!(within(&e[0], 0.19, 4.0), "{e:?}");
    }

    #[test]
    fn comonotone_sum() {
        let m = pareto_model(Copula::comonotone(2).unwrap());
        let e = estimate_tail(
            &m,
            &Quantity::fixed(QuantityKind::SumN, 2),
            &[4.0],
            1_000_000,
            2,
            1,
        )
        .unwrap();
        assert!(within(&e[0], 0.5, 4.0), "{e:?}");
    }

    #[test]
    fn exponential_sum_inside_bracket() {
        let d = Marginal::exponential(1.0).unwrap();
        let m =
            DependentModel::identical(Copula::independence(2).unwrap(), d.clone(), None).unwrap();
        let e = estimate_tail(
            &m,
            &Quantity::fixed(QuantityKind::SumN, 2),
            &[9.0],
            1_000_000,
            3,
            1,
        )
        .unwrap();
        let b = crate::conv::nfold_tail_bracket(&d, 2, 9.0, None).unwrap();
        assert!(b.contains(e[0].p_hat, 4.0 * e[0].stderr), "{e:?} {b:?}");
    }

    #[test]
    fn workers_do_not_change_hits() {
        let m = pareto_model(Copula::fgm2(1.0).unwrap());
        let q = Quantity::fixed(QuantityKind::SumN, 2);
        let grid = [3.0, 10.0, 100.0, 1e4];
        let one = estimate_tail(&m, &q, &grid, 20_000, 9, 1).unwrap();
        for w in [4, 16] {
            assert_eq!(estimate_tail(&m, &q, &grid, 20_000, 9, w).unwrap(), one);
        }
    }

    #[test]
    fn unsorted_grid_keeps_order() {
        let m = pareto_model(Copula::independence(2).unwrap());
        let q = Quantity::fixed(QuantityKind::MaxN, 2);
        let a = estimate_tail(&m, &q, &[100.0, 2.0, 10.0], 10_000, 4, 2).unwrap();
        let b = estimate_tail(&m, &q, &[2.0, 10.0, 100.0], 10_000, 4, 2).unwrap();
        assert_eq!(a[0], b[2]);
        assert_eq!(a[1], b[0]);
    }

    #[test]
    fn configuration_errors() {
        let m = pareto_model(Copula::independence(2).unwrap());
        assert!(matches!(
            estimate_tail(
                &m,
                &Quantity::random(QuantityKind::SumTau),
                &[1.0],
                10,
                1,
                1
            ),
            Err(Error::Configuration(_))
        ));
        let mixed = DependentModel::new(
            Copula::independence(2).unwrap(),
            vec![
                Marginal::pareto(1.0, 1.0).unwrap(),
                Marginal::pareto(2.0, 1.0).unwrap(),
            ],
            Some(Counting::poisson(1.0).unwrap()),
        )
        .unwrap();
        assert!(matches!(
            estimate_tail(
                &mixed,
                &Quantity::random(QuantityKind::MaxTau),
                &[1.0],
                10,
                1,
                1
            ),
            Err(Error::Configuration(_))
        ));
        assert!(matches!(
            estimate_tail(
                &m,
                &Quantity::fixed(QuantityKind::SumN, 3),
                &[1.0],
                10,
                1,
                1
            ),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn deterministic_tau_matches_fixed_n() {
        let mut m = pareto_model(Copula::fgm2(0.5).unwrap());
        let grid = [2.0, 5.0, 50.0];
        let fixed: Vec<_> = [
            QuantityKind::MaxN,
            QuantityKind::SumN,
            QuantityKind::RunMaxN,
        ]
        .iter()
        .map(|&k| estimate_tail(&m, &Quantity::fixed(k, 2), &grid, 5_000, 7, 2).unwrap())
        .collect();
        m.tau = Some(Counting::deterministic(2).unwrap());
        for (k, f) in [
            QuantityKind::MaxTau,
            QuantityKind::SumTau,
            QuantityKind::RunMaxTau,
        ]
        .iter()
        .zip(&fixed)
        {
            assert_eq!(
                &estimate_tail(&m, &Quantity::random(*k), &grid, 5_000, 7, 2).unwrap(),
                f
            );
            for i in 0..50 {
                let a = replicate(&m, &Quantity::random(*k), 7, i).unwrap();
                let b = replicate(&m, &Quantity::fixed(fixed_kind(*k), 2), 7, i).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    fn fixed_kind(k: QuantityKind) -> QuantityKind {
        match k {
            QuantityKind::MaxTau => QuantityKind::MaxN,
            QuantityKind::SumTau => QuantityKind::SumN,
            _ => QuantityKind::RunMaxN,
        }
    }

    #[test]
    fn geometric_count_of_unit_summands() {
        let unit = Marginal::atoms(vec![(1.0, 1.0)]).unwrap();
        let m = DependentModel::identical(
            Copula::independence(2).unwrap(),
            unit,
            Some(Counting::geometric1(0.5).unwrap()),
        )
        .unwrap();
        let grid: Vec<f64> = (1..6).map(|k| k as f64 - 0.5).collect();
        let e = estimate_tail(
            &m,
            &Quantity::random(QuantityKind::SumTau),
            &grid,
            200_000,
            8,
            1,
        )
        .unwrap();
        for (k, est) in (1..6).zip(&e) {
            assert!(within(est, 2f64.powi(-(k - 1)), 4.0), "k={k} {est:?}");
        }
    }

    #[test]
    fn coupling_monotonicity() {
        let d = Marginal::shifted(Marginal::pareto(1.0, 1.0).unwrap(), -2.0).unwrap();
        let m = DependentModel::identical(Copula::fgm_uniform(3, 0.3).unwrap(), d, None).unwrap();
        for i in 0..2000 {
            let x = replicate_vector(&m, 5, i);
            let s = replicate(&m, &Quantity::fixed(QuantityKind::SumN, 3), 5, i).unwrap();
            let r = replicate(&m, &Quantity::fixed(QuantityKind::RunMaxN, 3), 5, i).unwrap();
            let pos: f64 = x.iter().map(|v| v.max(0.0)).sum();
            assert!(s <= r && r <= pos + 1e-12 * pos.abs().max(1.0), "{x:?}");
        }
    }

    #[test]
    fn zero_count_conventions() {
        let m = DependentModel::identical(
            Copula::independence(2).unwrap(),
            Marginal::pareto(1.0, 1.0).unwrap(),
            Some(Counting::poisson(1e-9).unwrap()),
        )
        .unwrap();
        assert_eq!(
            replicate(&m, &Quantity::random(QuantityKind::MaxTau), 1, 0).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            replicate(&m, &Quantity::random(QuantityKind::SumTau), 1, 0).unwrap(),
            0.0
        );
        assert_eq!(
            replicate(&m, &Quantity::random(QuantityKind::RunMaxTau), 1, 0).unwrap(),
            0.0
        );
    }

    #[test]
    fn zeta_count_tail() {
        // with a point mass at 1 as marginal, S_tau = tau
        let unit = Marginal::atoms(vec![(1.0, 1.0)]).unwrap();
        let tau = Counting::zeta(1.5).unwrap();
        let m =
            DependentModel::identical(Copula::independence(2).unwrap(), unit, Some(tau.clone()))
                .unwrap();
        let e = estimate_tail(
            &m,
            &Quantity::random(QuantityKind::SumTau),
            &[10.5, 100.5],
            200_000,
            6,
            1,
        )
        .unwrap();
        assert!(within(&e[0], tau.tail(10), 4.0));
        assert!(within(&e[1], tau.tail(100), 4.0));
    }

    #[test]
    fn estimator_unbiased_over_seeds() {
        let m = pareto_model(Copula::independence(2).unwrap());
        let q = Quantity::fixed(QuantityKind::MaxN, 2);
        let truth = 0.19;
        let n = 2_000;
        let ps: Vec<f64> = (0..100)
            .map(|s| estimate_tail(&m, &q, &[10.0], n, 1000 + s, 1).unwrap()[0].p_hat)
            .collect();
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        let var = ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (ps.len() - 1) as f64;
        let t = (mean - truth) / (var / ps.len() as f64).sqrt();
        assert!(t.abs() <= 4.0, "t={t}");
    }

    #[test]
    fn quantity_names_round_trip() {
        for k in QuantityKind::ALL {
            assert_eq!(k.to_string().parse::<QuantityKind>().unwrap(), k);
        }
    }
}
