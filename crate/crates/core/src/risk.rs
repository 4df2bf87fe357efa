//! Insurance risk models: a discrete-time model with a constant interest
//! rate, and a customer-arrival model over a finite horizon.
//!
//! Both reduce to running maxima handled by the Monte Carlo engine: the
//! discrete model discounts claim `k` by `(1 + r)^-k`, the arrival model takes
//! the running maximum of net claims over a Poisson number of customers.

use serde::Serialize;

use crate::asym::{DenominatorSpec, ExperimentSpec, Limit, DEFAULT_CURVE_TOLERANCE};
use crate::copulas::{Copula, DependentModel};
use crate::dists::{Counting, Marginal, TailClass};
use crate::error::{invalid, Error, Result};
use crate::mc::{estimate_tail_with, Evaluator, Quantity, QuantityKind, Scratch, TailEstimate};
use crate::rng::StreamFactory;

/// One claim per period, discounted at rate `r`; the horizon is the claim
/// vector's dimension.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteRiskModel {
    pub claims: DependentModel,
    pub rate: f64,
}

impl DiscreteRiskModel {
    pub fn new(claims: DependentModel, rate: f64) -> Result<Self> {
        if !(rate > -1.0 && rate.is_finite()) {
            return Err(invalid(format!("interest rate must exceed -1, got {rate}")));
        }
        if claims.tau.is_some() {
            return Err(invalid(
                "discrete risk model has a fixed horizon; drop the counting law",
            ));
        }
        Ok(Self { claims, rate })
    }

    pub fn horizon(&self) -> usize {
        self.claims.dim()
    }

    fn quantity(&self) -> Quantity {
        Quantity::fixed(QuantityKind::RunMaxN, self.horizon())
    }

    fn evaluator(&self) -> Result<Evaluator<'_>> {
        Evaluator::new(&self.claims, &self.quantity())?.with_discount(self.rate)
    }

    /// `psi_n(x) = P(max_k sum_{j<=k} X_j (1+r)^-j > x)` on the grid.
    pub fn ruin_prob_finite(
        &self,
        x_grid: &[f64],
        samples: u64,
        seed: u64,
        workers: usize,
    ) -> Result<Vec<TailEstimate>> {
        estimate_tail_with(self.evaluator()?, x_grid, samples, seed, workers)
    }

    /// Ratio experiment against `sum_k F_k(x (1+r)^k)` with limit 1.
    pub fn experiment(&self, id: impl Into<String>, grid: Vec<f64>) -> ExperimentSpec {
        ExperimentSpec {
            id: id.into(),
            model: self.claims.clone(),
            quantity: self.quantity(),
            denominator: DenominatorSpec::Discounted { rate: self.rate },
            limit: Limit::Lim { value: 1.0 },
            grid,
            tolerance: DEFAULT_CURVE_TOLERANCE,
            discount: Some(self.rate),
            exact: false,
            hypotheses_verified: false,
        }
    }

    /// Surplus `U(k) = (1+r)^k (x - sum_{j<=k} X_j (1+r)^-j)` at `k = 0..n`
    /// on the draws of replicate `index`.
    pub fn surplus_path(&self, x: f64, seed: u64, index: u64) -> Vec<(u64, f64)> {
        let mut stream = StreamFactory::new(seed).stream(index);
        let mut s = Scratch::new(self.horizon());
        self.claims.sample_into(&mut stream, &mut s.u, &mut s.x);
        let g = 1.0 + self.rate;
        let mut path = vec![(0, x)];
        let mut disc = 0.0;
        for (k, &claim) in s.x.iter().enumerate() {
            let k = k as i32 + 1;
            disc += claim * g.powi(-k);
            path.push((k as u64, g.powi(k) * (x - disc)));
        }
        path
    }
}

/// Customers arrive by a counting process over `[0, T]`; each brings a claim
/// `Z` and pays a premium `(1 + loading) E Z`, so net claims are
/// `Z - (1 + loading) E Z`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArrivalRiskModel {
    pub claim: Marginal,
    pub loading: f64,
    pub intensity: f64,
    pub horizon: f64,
    /// Dependence between consecutive claims, applied in blocks.
    pub copula: Copula,
    /// Overrides the Poisson(`intensity * horizon`) customer count.
    pub counting: Option<Counting>,
}

impl ArrivalRiskModel {
    pub fn new(claim: Marginal, loading: f64, intensity: f64, horizon: f64) -> Result<Self> {
        if claim.support_lower() < 0.0 {
            return Err(invalid("claim sizes must be nonnegative"));
        }
        if !claim.mean().is_finite() {
            return Err(Error::Precondition("claim size mean must be finite".into()));
        }
        if !(loading > 0.0 && loading.is_finite()) {
            return Err(invalid(format!("loading must be positive, got {loading}")));
        }
        if !(intensity > 0.0 && intensity.is_finite() && horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("intensity and horizon must be positive and finite"));
        }
        Ok(Self {
            claim,
            loading,
            intensity,
            horizon,
            copula: Copula::independence(1)?,
            counting: None,
        })
    }

    pub fn with_copula(mut self, copula: Copula) -> Self {
        self.copula = copula;
        self
    }

    pub fn with_counting(mut self, counting: Counting) -> Self {
        self.counting = Some(counting);
        self
    }

    /// `lambda(T)`, the expected number of customers by the horizon.
    pub fn lambda_t(&self) -> f64 {
        match &self.counting {
            Some(c) => c.mean().as_f64(),
            None => self.intensity * self.horizon,
        }
    }

    pub fn counting_law(&self) -> Result<Counting> {
        match &self.counting {
            Some(c) => Ok(c.clone()),
            None => Counting::poisson(self.intensity * self.horizon),
        }
    }

    /// Law of one net claim.
    pub fn net_claim(&self) -> Result<Marginal> {
        let mu = self.claim.mean().as_f64();
        Marginal::shifted(self.claim.clone(), -(1.0 + self.loading) * mu)
    }

    /// Net claims under the copula, with the customer count as `tau`.
    pub fn net_model(&self) -> Result<DependentModel> {
        DependentModel::identical(
            self.copula.clone(),
            self.net_claim()?,
            Some(self.counting_law()?),
        )
    }

    /// `psi(x; T) = P(max_{k <= N(T)} S_k > x)` on the grid.
    pub fn ruin_prob_horizon(
        &self,
        x_grid: &[f64],
        samples: u64,
        seed: u64,
        workers: usize,
    ) -> Result<Vec<TailEstimate>> {
        let model = self.net_model()?;
        let ev = Evaluator::new(&model, &Quantity::random(QuantityKind::RunMaxTau))?;
        estimate_tail_with(ev, x_grid, samples, seed, workers)
    }

    /// Conditions under which the asymptotic ratio is not meaningful.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.claim.declared_classes().contains(&TailClass::L) {
            out.push("claim size law is not heavy-tailed; the ratio limit does not apply".into());
        }
        out
    }

    /// Ratio `psi(x; T) / F_Z(x)` with limit `lambda(T)`.
    pub fn experiment(&self, id: impl Into<String>, grid: Vec<f64>) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            id: id.into(),
            model: self.net_model()?,
            quantity: Quantity::random(QuantityKind::RunMaxTau),
            denominator: DenominatorSpec::LawTail {
                law: self.claim.clone(),
            },
            limit: Limit::Lim {
                value: self.lambda_t(),
            },
            grid,
            tolerance: DEFAULT_CURVE_TOLERANCE,
            discount: None,
            exact: false,
            hypotheses_verified: false,
        })
    }

    /// Surplus `x - S_k` after each of the customers of replicate `index`.
    pub fn surplus_path(&self, x: f64, seed: u64, index: u64) -> Result<Vec<(u64, f64)>> {
        let model = self.net_model()?;
        let tau = model.tau.as_ref().expect("net model has a counting law");
        let mut stream = StreamFactory::new(seed).stream(index);
        let count = tau.sample(&mut stream);
        let mut s = Scratch::new(model.dim());
        let mut path = vec![(0, x)];
        let mut sum = 0.0;
        let mut k = 0u64;
        while k < count {
            model.sample_into(&mut stream, &mut s.u, &mut s.x);
            for &claim in
                s.x.iter()
                    .take((count - k).min(model.dim() as u64) as usize)
            {
                k += 1;
                sum += claim;
                path.push((k, x - sum));
            }
        }
        Ok(path)
    }
}

/// Ruin occurs when the surplus drops below zero at some epoch.
pub fn ruined(path: &[(u64, f64)]) -> bool {
    path.iter().any(|&(_, u)| u < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classdiag::geometric_grid;
    use crate::mc::{estimate_tail, replicate, replicate_vector};

    fn pareto(alpha: f64) -> Marginal {
        Marginal::pareto(alpha, 1.0).unwrap()
    }

    fn claims(a: f64, n: usize) -> DependentModel {
        let c = if n == 2 {
            Copula::fgm2(a).unwrap()
        } else {
            Copula::fgm_uniform(n, a).unwrap()
        };
        DependentModel::identical(c, pareto(1.0), None).unwrap()
    }

    #[test]
    fn single_period_is_the_claim_tail() {
        let m = DiscreteRiskModel::new(
            DependentModel::identical(Copula::independence(1).unwrap(), pareto(1.0), None).unwrap(),
            0.0,
        )
        .unwrap();
        let e = m.ruin_prob_finite(&[4.0, 20.0], 200_000, 11, 1).unwrap();
        for (est, x) in e.iter().zip([4.0, 20.0]) {
            let p = 1.0 / x;
            assert!((est.p_hat - p).abs() <= 4.0 * (p * (1.0 - p) / 200_000.0).sqrt());
        }
    }

    #[test]
    fn zero_rate_is_running_max_bitwise() {
        let c = claims(1.0, 2);
        let grid = geometric_grid(5.0, 1e3, 7).unwrap();
        let m = DiscreteRiskModel::new(c.clone(), 0.0).unwrap();
        let a = m.ruin_prob_finite(&grid, 100_000, 21, 2).unwrap();
        let b = estimate_tail(
            &c,
            &Quantity::fixed(QuantityKind::RunMaxN, 2),
            &grid,
            100_000,
            21,
            3,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monotone_in_x_horizon_and_rate() {
        let grid = geometric_grid(2.0, 500.0, 9).unwrap();
        let indep = |n| {
            DependentModel::identical(Copula::independence(n).unwrap(), pareto(1.0), None).unwrap()
        };
        // independence draws coordinates in order, so horizons share draws
        let short = DiscreteRiskModel::new(indep(2), 0.05).unwrap();
        let long = DiscreteRiskModel::new(indep(3), 0.05).unwrap();
        let steep = DiscreteRiskModel::new(indep(3), 0.2).unwrap();
        let a = short.ruin_prob_finite(&grid, 30_000, 8, 1).unwrap();
        let b = long.ruin_prob_finite(&grid, 30_000, 8, 1).unwrap();
        let c = steep.ruin_prob_finite(&grid, 30_000, 8, 1).unwrap();
        assert!(a.windows(2).all(|w| w[0].hits >= w[1].hits));
        for ((s, l), st) in a.iter().zip(&b).zip(&c) {
            assert!(
                s.hits <= l.hits,
                "a longer horizon cannot lower the running max"
            );
            assert!(
                st.hits <= l.hits,
                "larger discounting cannot raise the running max"
            );
        }
    }

    #[test]
    fn surplus_ruin_matches_running_max() {
        let m = DiscreteRiskModel::new(claims(1.0, 2), 0.05).unwrap();
        let ev = Evaluator::new(&m.claims, &Quantity::fixed(QuantityKind::RunMaxN, 2))
            .unwrap()
            .with_discount(0.05)
            .unwrap();
        for i in 0..5_000 {
            let v = ev.replicate(4, i).unwrap();
            for x in [1.0, 10.0, 100.0] {
                let path = m.surplus_path(x, 4, i);
                assert_eq!(ruined(&path), v > x, "replicate {i}, x {x}");
                assert_eq!(path[0], (0, x));
            }
        }
    }

    #[test]
    fn single_large_claim_ruins() {
        let m = DiscreteRiskModel::new(claims(0.0, 2), 0.1).unwrap();
        let mut seen = 0;
        for i in 0..500 {
            let x1 = replicate_vector(&m.claims, 1, i)[0];
            if x1 > 5.0 * 1.1 {
                seen += 1;
                assert!(ruined(&m.surplus_path(5.0, 1, i)));
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn arrival_model_reduces_to_running_max() {
        let z = pareto(2.0);
        let m = ArrivalRiskModel::new(z.clone(), 0.1, 1.0, 2.0).unwrap();
        assert_eq!(m.lambda_t(), 2.0);
        let net = m.net_claim().unwrap();
        assert!(
            (net.mean().as_f64() + 0.2).abs() < 1e-12,
            "net claims have mean -rho mu"
        );

        let det = m.clone().with_counting(Counting::deterministic(3).unwrap());
        let grid = geometric_grid(1.0, 100.0, 6).unwrap();
        let a = det.ruin_prob_horizon(&grid, 50_000, 2, 1).unwrap();
        let fixed = DependentModel::identical(Copula::independence(3).unwrap(), net, None).unwrap();
        // a deterministic count and a fixed horizon use different block sizes,
        // so compare against the one-dimensional block model with tau = 3
        let blocks = DependentModel::identical(
            Copula::independence(1).unwrap(),
            fixed.marginals[0].clone(),
            Some(Counting::deterministic(3).unwrap()),
        )
        .unwrap();
        let b = estimate_tail(
            &blocks,
            &Quantity::random(QuantityKind::RunMaxTau),
            &grid,
            50_000,
            2,
            4,
        )
        .unwrap();
        assert_eq!(a, b);

        for i in 0..2_000 {
            let v = replicate(&blocks, &Quantity::random(QuantityKind::RunMaxTau), 2, i).unwrap();
            for x in [0.5, 5.0, 50.0] {
                assert_eq!(ruined(&det.surplus_path(x, 2, i).unwrap()), v > x);
            }
        }
    }

    #[test]
    fn short_horizon_means_no_ruin() {
        let m = ArrivalRiskModel::new(pareto(2.0), 0.1, 1.0, 1e-9).unwrap();
        let e = m.ruin_prob_horizon(&[1.0, 10.0], 100_000, 3, 1).unwrap();
        assert!(e.iter().all(|t| t.hits == 0));
        let empty = m.surplus_path(3.0, 3, 0).unwrap();
        assert_eq!(empty, vec![(0, 3.0)]);
    }

    #[test]
    fn no_claims_keeps_discounted_surplus() {
        let c = DependentModel::identical(
            Copula::independence(3).unwrap(),
            Marginal::atoms(vec![(0.0, 1.0)]).unwrap(),
            None,
        )
        .unwrap();
        let m = DiscreteRiskModel::new(c, 0.05).unwrap();
        let path = m.surplus_path(2.0, 0, 0);
        for &(k, u) in &path {
            assert!((u - 2.0 * 1.05f64.powi(k as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(DiscreteRiskModel::new(claims(0.5, 2), -1.0).is_err());
        assert!(
            ArrivalRiskModel::new(pareto(1.0), 0.1, 1.0, 1.0).is_err(),
            "infinite mean claims"
        );
        assert!(ArrivalRiskModel::new(pareto(2.0), 0.0, 1.0, 1.0).is_err());
        assert!(ArrivalRiskModel::new(
            Marginal::shifted(pareto(2.0), -3.0).unwrap(),
            0.1,
            1.0,
            1.0
        )
        .is_err());
    }
}
