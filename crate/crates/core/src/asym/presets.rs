//! Built-in experiments, one set per theorem or corollary id.
//!
//! Each preset model is chosen to satisfy the hypotheses of its claim, and
//! each claim is tested in its strongest form the model supports (a plain
//! limit wherever the marginals are subexponential).

use std::str::FromStr;

use serde::Serialize;

use super::{
    default_grid, run_experiment, DenominatorSpec, ExperimentSpec, Limit, RatioCurve,
    DEFAULT_DIVERGENCE_BOUND,
};
use crate::classdiag::geometric_grid;
use crate::copulas::{Copula, DependentModel};
use crate::dists::{Counting, Marginal, TailClass};
use crate::error::{invalid, Result};
use crate::mc::QuantityKind;
use crate::risk::{ArrivalRiskModel, DiscreteRiskModel};

pub const PRESET_IDS: [&str; 11] = [
    "T3.1", "T3.2", "T3.3", "C3.1", "T4.1", "T4.2", "T4.3", "T4.4i", "T4.4ii", "C5.1", "C5.2",
];

/// Sample budget of a preset run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Quick,
    Default,
    Full,
}

impl Scale {
    pub fn samples(self) -> u64 {
        match self {
            Scale::Quick => 100_000,
            Scale::Default => 1_000_000,
            Scale::Full => 10_000_000,
        }
    }
}

impl FromStr for Scale {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Scale::Quick),
            "default" => Ok(Scale::Default),
            "full" => Ok(Scale::Full),
            _ => Err(invalid(format!(
                "unknown preset scale '{s}' (quick, default, full)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PresetInfo {
    pub id: &'static str,
    pub claim: &'static str,
    pub model: &'static str,
}

pub fn catalog() -> Vec<PresetInfo> {
    let info = |id, claim, model| PresetInfo { id, claim, model };
    vec![
        info(
            "T3.1",
            "P(S_n>x), P(S_(n)>x) ~ sum F_k(x)",
            "FGM(2, a=0.5); Pareto(0.8,1), Pareto(0.9,1)",
        ),
        info(
            "T3.2",
            "P(S_n>x), P(S_(n)>x) ~ sum F_k(x) under H2",
            "FGM(3, a=0.3); Pareto(0.7,1) x3",
        ),
        info(
            "T3.3",
            "P(X_(n)>x) ~ sum F_k(x), exact",
            "FGM(2, a=1); Pareto(1.5,1)",
        ),
        info("C3.1", "P(S_n>x) ~ n F(x)", "FGM(2, a=1); Pareto(0.8,1)"),
        info(
            "T4.1",
            "random sum, max, running max ~ E tau F(x)",
            "independence blocks; Pareto(0.8,1); tau ~ Geometric(0.5)",
        ),
        info(
            "T4.2",
            "ratio to F(x) diverges when E tau = inf",
            "independence; Pareto(1,1); tau ~ Zeta(1.5)",
        ),
        info(
            "T4.3",
            "P(X_(tau)>x) ~ E tau F(x)",
            "FGM(2, a=1); Pareto(1.5,1); tau ~ Poisson(3)",
        ),
        info(
            "T4.4i",
            "negative drift: S_tau, S_(tau) ~ E tau F(x)",
            "FGM(2, a=0.5); Pareto(2,1) - 3; tau ~ Poisson(2)",
        ),
        info(
            "T4.4ii",
            "light-tailed tau: S_tau, S_(tau) ~ E tau F(x)",
            "FGM(2, a=0.5); Pareto(1.5,1); tau ~ Geometric(0.5)",
        ),
        info(
            "C5.1",
            "discounted n-period ruin ~ sum F_k(x(1+r)^k)",
            "FGM(2, a=1); Pareto(1,1); r = 0.05",
        ),
        info(
            "C5.2",
            "finite-horizon ruin ~ lambda(T) F_Z(x)",
            "Pareto(2,1) claims; loading 0.1; Poisson, lambda T = 2",
        ),
    ]
}

fn pareto(alpha: f64) -> Result<Marginal> {
    Marginal::pareto(alpha, 1.0)
}

fn exp(
    id: &str,
    tag: &str,
    model: &DependentModel,
    kind: QuantityKind,
    d: DenominatorSpec,
    limit: Limit,
) -> Result<ExperimentSpec> {
    ExperimentSpec::new(format!("{id}/{tag}"), model.clone(), kind, d, limit)
}

fn lim(value: f64) -> Limit {
    Limit::Lim { value }
}

fn check_id(id: &str) -> Result<()> {
    if PRESET_IDS.contains(&id) {
        Ok(())
    } else {
        Err(invalid(format!(
            "unknown preset '{id}'; known: {}",
            PRESET_IDS.join(", ")
        )))
    }
}

/// The model of a theorem preset (`T*` and `C3.1` ids; the `C5.*` presets
/// are risk models, see [`preset_experiments`]).
pub fn preset_model(id: &str) -> Result<DependentModel> {
    check_id(id)?;
    match id {
        "T3.1" => DependentModel::new(Copula::fgm2(0.5)?, vec![pareto(0.8)?, pareto(0.9)?], None),
        "T3.2" => DependentModel::identical(Copula::fgm_uniform(3, 0.3)?, pareto(0.7)?, None),
        "T3.3" => DependentModel::identical(Copula::fgm2(1.0)?, pareto(1.5)?, None),
        "C3.1" => DependentModel::identical(Copula::fgm2(1.0)?, pareto(0.8)?, None),
        "T4.1" => DependentModel::identical(
            Copula::independence(2)?,
            pareto(0.8)?,
            Some(Counting::geometric1(0.5)?),
        ),
        "T4.2" => DependentModel::identical(
            Copula::independence(1)?,
            pareto(1.0)?,
            Some(Counting::zeta(1.5)?),
        ),
        "T4.3" => DependentModel::identical(
            Copula::fgm2(1.0)?,
            pareto(1.5)?,
            Some(Counting::poisson(3.0)?),
        ),
        "T4.4i" => DependentModel::identical(
            Copula::fgm2(0.5)?,
            Marginal::shifted(pareto(2.0)?, -3.0)?,
            Some(Counting::poisson(2.0)?),
        ),
        "T4.4ii" => DependentModel::identical(
            Copula::fgm2(0.5)?,
            pareto(1.5)?,
            Some(Counting::geometric1(0.5)?),
        ),
        _ => Err(invalid(format!(
            "preset {id} is a risk model; configure it through the ruin command"
        ))),
    }
}

/// The claims of a theorem tested on `model`: one experiment per quantity.
pub fn claim_experiments(id: &str, model: &DependentModel) -> Result<Vec<ExperimentSpec>> {
    use DenominatorSpec::*;
    use QuantityKind::*;
    check_id(id)?;
    let m = model;
    Ok(match id {
        "T3.1" | "T3.2" => {
            vec![
                exp(id, "sum", m, SumN, SumTails, lim(1.0))?,
                exp(id, "runmax", m, RunMaxN, SumTails, lim(1.0))?,
            ]
        }
        "T3.3" => {
            let spec = exp(id, "max", m, MaxN, SumTails, lim(1.0))?;
            let exact = super::exact_numerator(&spec, spec.grid[0]).is_some();
            vec![spec.with_exact(exact)]
        }
        "C3.1" => {
            let n = m.dim() as f64;
            vec![
                exp(id, "sum", m, SumN, Tail, lim(n))?,
                exp(id, "runmax", m, RunMaxN, Tail, lim(n))?,
            ]
        }
        "T4.1" => vec![
            exp(id, "sum", m, SumTau, MeanTauTail, lim(1.0))?,
            exp(id, "max", m, MaxTau, MeanTauTail, lim(1.0))?,
            exp(id, "runmax", m, RunMaxTau, MeanTauTail, lim(1.0))?,
        ],
        // X_(tau) <= S_(tau) <= S_tau for nonnegative terms, so divergence of
        // the maximum carries over to the sums
        "T4.2" => vec![exp(
            id,
            "max",
            m,
            MaxTau,
            Tail,
            Limit::Divergence {
                bound: DEFAULT_DIVERGENCE_BOUND,
            },
        )?],
        "T4.3" => vec![exp(id, "max", m, MaxTau, MeanTauTail, lim(1.0))?],
        "T4.4i" | "T4.4ii" => vec![
            exp(id, "sum", m, SumTau, MeanTauTail, lim(1.0))?,
            exp(id, "runmax", m, RunMaxTau, MeanTauTail, lim(1.0))?,
        ],
        _ => {
            return Err(invalid(format!(
                "preset {id} is a risk model; configure it through the ruin command"
            )))
        }
    })
}

/// Hypotheses of a theorem that `model` visibly violates. An empty list does
/// not prove the hypotheses (the dependence conditions are not decidable
/// from a finite computation); it only means no check failed.
pub fn hypothesis_warnings(id: &str, model: &DependentModel) -> Vec<String> {
    let mut out = Vec::new();
    let mut need = |ok: bool, what: &str| {
        if !ok {
            out.push(format!("{id}: {what}"));
        }
    };
    let has = |c: TailClass| {
        model
            .marginals
            .iter()
            .all(|m| m.declared_classes().contains(&c))
    };
    let tau = model.tau.as_ref();
    let mean = model.marginals[0].mean();
    need(
        !matches!(model.copula, Copula::Comonotone { .. }) || model.dim() == 1,
        "comonotone dependence violates H1",
    );
    match id {
        "T3.1" | "T3.2" | "T3.3" | "C3.1" => {
            need(tau.is_none(), "fixed-n theorem with a counting law");
            match id {
                "T3.1" => need(has(TailClass::L), "marginals must be long-tailed"),
                "T3.2" => {
                    need(has(TailClass::D), "marginals must be dominatedly varying");
                    need(
                        model.marginals.iter().all(|m| m.support_lower() >= 0.0),
                        "marginals must be nonnegative",
                    );
                }
                "C3.1" => {
                    need(model.identical_marginals(), "marginals must be identical");
                    need(has(TailClass::S), "marginals must be subexponential");
                }
                _ => {}
            }
        }
        _ => {
            let Some(tau) = tau else {
                need(false, "random-index theorem without a counting law");
                return out;
            };
            need(model.identical_marginals(), "marginals must be identical");
            match id {
                "T4.1" => {
                    need(
                        tau.is_light_tailed(),
                        "E z^tau must be finite for some z > 1",
                    );
                    need(has(TailClass::S), "marginals must be subexponential");
                }
                "T4.2" => {
                    need(!tau.mean().is_finite(), "E tau must be infinite");
                    need(has(TailClass::D), "marginals must be dominatedly varying");
                }
                "T4.3" => need(tau.mean().is_finite(), "E tau must be finite"),
                "T4.4i" => {
                    need(
                        mean.is_finite() && mean.as_f64() < 0.0,
                        "marginal mean must be negative",
                    );
                    need(
                        has(TailClass::StrongSubexp),
                        "marginals must be strongly subexponential",
                    );
                    need(tau.is_light_tailed(), "tau must be light-tailed");
                }
                "T4.4ii" => {
                    need(
                        mean.is_finite() && mean.as_f64() >= 0.0,
                        "marginal mean must be finite and nonnegative",
                    );
                    need(has(TailClass::SStar), "marginals must be in S*");
                    need(
                        tau.is_light_tailed(),
                        "P(c tau > x) = o(F(x)) needs a light-tailed tau",
                    );
                }
                _ => {}
            }
        }
    }
    out
}

/// The experiments of a preset, in a fixed order.
pub fn preset_experiments(id: &str) -> Result<Vec<ExperimentSpec>> {
    check_id(id)?;
    let specs = match id {
        "C5.1" => {
            let claims = DependentModel::identical(Copula::fgm2(1.0)?, pareto(1.0)?, None)?;
            let m = DiscreteRiskModel::new(claims, 0.05)?;
            vec![m.experiment(format!("{id}/ruin"), geometric_grid(10.0, 1e3, 24)?)]
        }
        "C5.2" => {
            let z = pareto(2.0)?;
            let grid = default_grid(&z)?;
            let m = ArrivalRiskModel::new(z, 0.1, 2.0, 1.0)?;
            vec![m.experiment(format!("{id}/ruin"), grid)?]
        }
        _ => claim_experiments(id, &preset_model(id)?)?,
    };
    Ok(specs.into_iter().map(ExperimentSpec::verified).collect())
}

/// The claims of a theorem on a user-supplied model. Such runs are always
/// stamped as having unverified hypotheses.
pub fn custom_experiments(id: &str, model: &DependentModel) -> Result<Vec<ExperimentSpec>> {
    claim_experiments(id, model)
}

/// Runs every experiment of a preset on one shared seed.
pub fn theorem_suite(id: &str, samples: u64, seed: u64, workers: usize) -> Result<Vec<RatioCurve>> {
    preset_experiments(id)?
        .iter()
        .map(|s| run_experiment(s, samples, seed, workers))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classdiag::Verdict;

    #[test]
    fn catalog_is_complete() {
        let ids: Vec<_> = catalog().iter().map(|p| p.id).collect();
        assert_eq!(ids, PRESET_IDS);
        for id in PRESET_IDS {
            let specs = preset_experiments(id).unwrap();
            assert!(!specs.is_empty());
            for s in &specs {
                s.validate().unwrap();
                assert!(s.hypotheses_verified);
                assert!(s.id.starts_with(id));
            }
        }
        assert!(preset_experiments("T9.9").is_err());
    }

    #[test]
    fn preset_warnings_only_for_divergence_free_presets() {
        for id in PRESET_IDS {
            for s in preset_experiments(id).unwrap() {
                assert!(s.warnings().is_empty(), "{id}: {:?}", s.warnings());
            }
        }
    }

    #[test]
    fn preset_models_pass_hypothesis_checks() {
        for id in &PRESET_IDS[..9] {
            let m = preset_model(id).unwrap();
            assert!(
                hypothesis_warnings(id, &m).is_empty(),
                "{id}: {:?}",
                hypothesis_warnings(id, &m)
            );
        }
    }

    #[test]
    fn hypothesis_violations_are_flagged() {
        let mut m = preset_model("T4.4i").unwrap();
        let f = Marginal::shifted(pareto(2.0).unwrap(), -1.0).unwrap();
        m.marginals = vec![f.clone(), f];
        assert!(hypothesis_warnings("T4.4i", &m)
            .iter()
            .any(|w| w.contains("negative")));
        let t42 = preset_model("T4.2").unwrap();
        assert!(hypothesis_warnings("T4.3", &t42)
            .iter()
            .any(|w| w.contains("finite")));
        let como =
            DependentModel::identical(Copula::comonotone(2).unwrap(), pareto(1.5).unwrap(), None)
                .unwrap();
        assert!(!hypothesis_warnings("T3.3", &como).is_empty());
        let custom = custom_experiments("C3.1", &como).unwrap();
        assert!(custom.iter().all(|s| !s.hypotheses_verified));
        assert_eq!(custom[0].limit, Limit::Lim { value: 2.0 });
    }

    #[test]
    fn shifted_preset_has_negative_mean() {
        let s = &preset_experiments("T4.4i").unwrap()[0];
        assert!((s.model.marginals[0].mean().as_f64() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_preset_is_consistent() {
        let c = theorem_suite("T3.3", 1, 0, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].verdict, Verdict::Consistent);
        assert!((c[0].last().ratio - 1.0).abs() <= 6e-4);
    }

    #[test]
    fn quick_scale_runs() {
        let c = theorem_suite("T4.4ii", Scale::Quick.samples(), 1, 1).unwrap();
        assert_eq!(c.len(), 2);
        for (s, r) in c[0].points.iter().zip(&c[1].points) {
            assert!(s.ratio <= r.ratio);
        }
    }
}
