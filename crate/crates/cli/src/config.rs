//! TOML run configuration. Every run is described by one [`Config`]; command
//! line flags are folded into it before execution and the resulting
//! effective config is echoed into the output, so an output file carries
//! everything needed to reproduce it.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use heavytail::asym::{DenominatorSpec, Limit};
use heavytail::copulas::{Copula, DependentModel};
use heavytail::dists::{Counting, Marginal};
use heavytail::mc::QuantityKind;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    RatioCurve,
    Theorem,
    DiagnoseClass,
    DiagnoseDependence,
    Convolve,
    Ruin,
    SurplusPath,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RatioCurve => "ratio-curve",
            Command::Theorem => "theorem",
            Command::DiagnoseClass => "diagnose-class",
            Command::DiagnoseDependence => "diagnose-dependence",
            Command::Convolve => "convolve",
            Command::Ruin => "ruin",
            Command::SurplusPath => "surplus-path",
        }
    }

    /// Commands that draw random numbers and therefore record a seed.
    pub fn is_random(self) -> bool {
        matches!(
            self,
            Command::RatioCurve | Command::Theorem | Command::Ruin | Command::SurplusPath
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Records,
}

pub const DEFAULT_SAMPLES: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<Format>,
    /// Output path; not echoed, since it does not affect results.
    #[serde(skip_serializing)]
    pub out: Option<String>,
    pub model: Option<ModelCfg>,
    pub experiment: Option<ExperimentCfg>,
    pub grid: Option<GridCfg>,
    pub theorem: Option<TheoremCfg>,
    pub class: Option<ClassCfg>,
    pub dependence: Option<DependenceCfg>,
    pub convolve: Option<ConvolveCfg>,
    pub ruin: Option<RuinCfg>,
    pub surplus: Option<SurplusCfg>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are always representable")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCfg {
    pub copula: CopulaCfg,
    /// One law per coordinate, or a single law used for every coordinate.
    pub marginals: Vec<MarginalCfg>,
    pub tau: Option<CountingCfg>,
}

impl ModelCfg {
    pub fn build(&self) -> Result<DependentModel, CliError> {
        let copula = self.copula.build()?;
        let mut marginals = self
            .marginals
            .iter()
            .map(MarginalCfg::build)
            .collect::<Result<Vec<_>, _>>()?;
        if marginals.len() == 1 && copula.dim() > 1 {
            marginals = vec![marginals[0].clone(); copula.dim()];
        }
        let tau = self.tau.as_ref().map(CountingCfg::build).transpose()?;
        Ok(DependentModel::new(copula, marginals, tau)?)
    }

    /// Built-in models addressable by name from the command line.
    pub fn named(name: &str) -> Result<Self, CliError> {
        let pareto = vec![MarginalCfg::Pareto {
            alpha: 1.5,
            scale: 1.0,
        }];
        let copula = match name {
            "comonotone-pareto" => CopulaCfg::Comonotone { n: 2 },
            "independent-pareto" => CopulaCfg::Independence { n: 2 },
            "fgm-pareto" => CopulaCfg::FgmUniform { n: 2, a: 1.0 },
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown model '{name}' (comonotone-pareto, independent-pareto, fgm-pareto)"
                )))
            }
        };
        Ok(Self {
            copula,
            marginals: pareto,
            tau: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CopulaCfg {
    Independence {
        n: usize,
    },
    Comonotone {
        n: usize,
    },
    /// Full symmetric coefficient matrix (diagonal ignored).
    Fgm {
        matrix: Vec<Vec<f64>>,
    },
    /// All pairwise coefficients equal to `a`.
    FgmUniform {
        n: usize,
        a: f64,
    },
}

impl CopulaCfg {
    pub fn build(&self) -> Result<Copula, CliError> {
        Ok(match self {
            CopulaCfg::Independence { n } => Copula::independence(*n)?,
            CopulaCfg::Comonotone { n } => Copula::comonotone(*n)?,
            CopulaCfg::Fgm { matrix } => Copula::fgm(matrix.clone())?,
            CopulaCfg::FgmUniform { n, a } => Copula::fgm_uniform(*n, *a)?,
        })
    }
}

fn default_q() -> f64 {
    0.5
}

fn default_sigma() -> Vec<[f64; 2]> {
    vec![[-2.5, 0.5], [-0.5, 0.5]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalCfg {
    Pareto {
        alpha: f64,
        scale: f64,
    },
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
    Example11 {
        #[serde(default = "default_q")]
        q: f64,
        /// `[location, mass]` pairs of the bounded component.
        #[serde(default = "default_sigma")]
        sigma: Vec<[f64; 2]>,
    },
    Shifted {
        base: Box<MarginalCfg>,
        shift: f64,
    },
    Atoms {
        atoms: Vec<[f64; 2]>,
    },
    IntegratedTail {
        base: Box<MarginalCfg>,
    },
    Window {
        base: Box<MarginalCfg>,
        h: f64,
    },
}

impl MarginalCfg {
    pub fn build(&self) -> Result<Marginal, CliError> {
        let pairs = |v: &[[f64; 2]]| v.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>();
        Ok(match self {
            MarginalCfg::Pareto { alpha, scale } => Marginal::pareto(*alpha, *scale)?,
            MarginalCfg::Weibull { shape, scale } => Marginal::weibull(*shape, *scale)?,
            MarginalCfg::Lognormal { mu, sigma } => Marginal::lognormal(*mu, *sigma)?,
            MarginalCfg::Exponential { rate } => Marginal::exponential(*rate)?,
            MarginalCfg::Example11 { q, sigma } => Marginal::example11(*q, pairs(sigma))?,
            MarginalCfg::Shifted { base, shift } => Marginal::shifted(base.build()?, *shift)?,
            MarginalCfg::Atoms { atoms } => Marginal::atoms(pairs(atoms))?,
            MarginalCfg::IntegratedTail { base } => Marginal::integrated_tail_law(base.build()?)?,
            MarginalCfg::Window { base, h } => Marginal::window(base.build()?, *h)?,
        })
    }

    /// Parses `family[:p1,p2,...]`, e.g. `pareto:0.8,1` or `example11`.
    /// Missing parameters take the defaults of the built-in examples.
    pub fn from_spec(spec: &str) -> Result<Self, CliError> {
        let (family, params) = spec.split_once(':').unwrap_or((spec, ""));
        let p: Vec<f64> = if params.is_empty() {
            vec![]
        } else {
            params
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("bad parameter in '{spec}': {e}")))?
        };
        let arg = |i: usize, default: f64| p.get(i).copied().unwrap_or(default);
        let cfg = match family {
            "pareto" => MarginalCfg::Pareto { alpha: arg(0, 1.5), scale: arg(1, 1.0) },
            "weibull" => MarginalCfg::Weibull { shape: arg(0, 0.5), scale: arg(1, 1.0) },
            "lognormal" => MarginalCfg::Lognormal { mu: arg(0, 0.0), sigma: arg(1, 1.0) },
            "exponential" => MarginalCfg::Exponential { rate: arg(0, 1.0) },
            "example11" => MarginalCfg::Example11 { q: arg(0, default_q()), sigma: default_sigma() },
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown distribution '{family}' (pareto, weibull, lognormal, exponential, example11)"
                )))
            }
        };
        let max = match family {
            "exponential" | "example11" => 1,
            _ => 2,
        };
        if p.len() > max {
            return Err(CliError::Usage(format!(
                "'{family}' takes at most {max} parameters"
            )));
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CountingCfg {
    Poisson { lambda: f64 },
    Geometric1 { p: f64 },
    Zeta { s: f64 },
    Deterministic { n: u64 },
}

impl CountingCfg {
    pub fn build(&self) -> Result<Counting, CliError> {
        Ok(match self {
            CountingCfg::Poisson { lambda } => Counting::poisson(*lambda)?,
            CountingCfg::Geometric1 { p } => Counting::geometric1(*p)?,
            CountingCfg::Zeta { s } => Counting::zeta(*s)?,
            CountingCfg::Deterministic { n } => Counting::deterministic(*n)?,
        })
    }
}

fn default_experiment_id() -> String {
    "custom".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentCfg {
    #[serde(default = "default_experiment_id")]
    pub id: String,
    pub quantity: QuantityKind,
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub exact: bool,
    pub discount: Option<f64>,
    pub denominator: DenominatorCfg,
    pub limit: Limit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenominatorCfg {
    SumTails,
    NTail,
    MeanTauTail,
    Discounted { rate: f64 },
    Tail,
    LawTail { law: MarginalCfg },
}

impl DenominatorCfg {
    pub fn build(&self) -> Result<DenominatorSpec, CliError> {
        Ok(match self {
            DenominatorCfg::SumTails => DenominatorSpec::SumTails,
            DenominatorCfg::NTail => DenominatorSpec::NTail,
            DenominatorCfg::MeanTauTail => DenominatorSpec::MeanTauTail,
            DenominatorCfg::Discounted { rate } => DenominatorSpec::Discounted { rate: *rate },
            DenominatorCfg::Tail => DenominatorSpec::Tail,
            DenominatorCfg::LawTail { law } => DenominatorSpec::LawTail { law: law.build()? },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridCfg {
    /// Geometric from `from` to `to`.
    Geometric {
        from: f64,
        to: f64,
        points: usize,
    },
    /// Geometric between the quantiles at levels `lo` and `hi` of the first marginal.
    Quantile {
        lo: f64,
        hi: f64,
        points: usize,
    },
    Explicit {
        x: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremCfg {
    pub id: String,
    /// Sample scale: quick, default or full.
    pub preset: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCfg {
    pub dist: MarginalCfg,
    /// Subset of L, D, S, Sstar, SstarStrong.
    pub checks: Option<Vec<String>>,
    pub tolerance: Option<f64>,
    /// Shift for the long-tail ratio.
    pub y: Option<f64>,
    /// Factor in (0,1) for the dominated-variation ratio.
    pub factor: Option<f64>,
    /// Window widths for the strong-subexponential check.
    pub h: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum DepCheck {
    H1,
    H2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependenceCfg {
    pub check: DepCheck,
    pub pair: Option<[usize; 2]>,
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointsCfg {
    Count(usize),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolveCfg {
    pub dist: MarginalCfg,
    pub nfold: usize,
    /// `"auto"` or a number of grid points.
    pub points: Option<PointsCfg>,
    /// Lattice step for non-atomic laws; chosen per point when absent.
    pub step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuinCfg {
    /// Discrete-time model; claims come from `[model]`.
    Discrete { rate: f64, id: Option<String> },
    /// Customer-arrival model; `[model]` is not used.
    Arrival {
        claim: MarginalCfg,
        loading: f64,
        intensity: f64,
        horizon: f64,
        /// Overrides the Poisson customer count.
        counting: Option<CountingCfg>,
        id: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurplusCfg {
    pub x: f64,
    pub index: Option<u64>,
}
