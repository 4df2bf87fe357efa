//! Turns an effective config into a plan (everything built and checked,
//! nothing run) and executes plans into reports.

use serde_json::{json, Value};

use heavytail::asym::presets::{self, Scale};
use heavytail::asym::{default_grid, run_experiment, ExperimentSpec, RatioCurve};
use heavytail::classdiag::{
    default_class_grid, diag_dominated, diag_h1, diag_h2, diag_long_tail, diag_sstar,
    diag_strong_subexponential, diag_subexponential, geometric_grid, quantile_grid, ClassReport,
    Verdict, DEFAULT_TOLERANCE,
};
use heavytail::conv::{example11_breakpoints, example11_ratio_curve, nfold_tail_bracket};
use heavytail::copulas::DependentModel;
use heavytail::dists::Marginal;
use heavytail::risk::{ruined, ArrivalRiskModel, DiscreteRiskModel};

use crate::config::{Command, Config, DepCheck, GridCfg, PointsCfg, RuinCfg};
use crate::CliError;

/// Class checks accepted by `diagnose-class`, with their report names.
const CLASS_CHECKS: [&str; 5] = ["L", "D", "S", "Sstar", "SstarStrong"];

/// Window widths for the strong-subexponential check.
const DEFAULT_WINDOWS: [f64; 3] = [1.0, 2.0, 5.0];

/// Convolution table range for Example11 with automatic points.
const EXAMPLE11_RANGE: (f64, f64) = (1.0, 2047.0);

pub enum Plan {
    Curves {
        specs: Vec<ExperimentSpec>,
        warnings: Vec<String>,
    },
    Class {
        dist: Marginal,
        checks: Vec<String>,
        grid: Vec<f64>,
        tol: f64,
        y: f64,
        factor: f64,
        h: Vec<f64>,
    },
    Dependence {
        model: DependentModel,
        check: DepCheck,
        pair: (usize, usize),
        grid: Vec<f64>,
        tol: f64,
    },
    Convolve {
        dist: Marginal,
        nfold: usize,
        points: Vec<f64>,
        step: Option<f64>,
        exact_example11: bool,
    },
    Surplus {
        path: SurplusModel,
        x: f64,
        index: u64,
        warnings: Vec<String>,
    },
}

pub enum SurplusModel {
    Discrete(DiscreteRiskModel),
    Arrival(ArrivalRiskModel),
}

impl Plan {
    pub fn warnings(&self) -> Vec<String> {
        match self {
            Plan::Curves { warnings, .. } | Plan::Surplus { warnings, .. } => warnings.clone(),
            _ => vec![],
        }
    }
}

#[derive(Default)]
pub struct Report {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Summary lines written after the table.
    pub trailer: Vec<String>,
    pub records: Vec<Value>,
    pub inconsistent: bool,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn need<'a, T>(v: &'a Option<T>, what: &str, cmd: Command) -> Result<&'a T, CliError> {
    v.as_ref()
        .ok_or_else(|| usage(format!("{} needs {what}", cmd.name())))
}

fn resolve_grid(
    grid: Option<&GridCfg>,
    first: &Marginal,
    fallback: Vec<f64>,
) -> Result<Vec<f64>, CliError> {
    Ok(match grid {
        None => fallback,
        Some(GridCfg::Geometric { from, to, points }) => geometric_grid(*from, *to, *points)?,
        Some(GridCfg::Quantile { lo, hi, points }) => quantile_grid(first, *lo, *hi, *points)?,
        Some(GridCfg::Explicit { x }) => {
            if x.is_empty() {
                return Err(usage("explicit grid is empty"));
            }
            x.clone()
        }
    })
}

pub fn plan(cmd: Command, cfg: &Config) -> Result<Plan, CliError> {
    match cmd {
        Command::RatioCurve => {
            let model = need(&cfg.model, "a [model] table", cmd)?.build()?;
            let e = need(&cfg.experiment, "an [experiment] table", cmd)?;
            let grid = resolve_grid(
                cfg.grid.as_ref(),
                &model.marginals[0],
                default_grid(&model.marginals[0])?,
            )?;
            let mut spec = ExperimentSpec::new(
                e.id.clone(),
                model,
                e.quantity,
                e.denominator.build()?,
                e.limit,
            )?
            .with_grid(grid)
            .with_exact(e.exact);
            if let Some(t) = e.tolerance {
                spec = spec.with_tolerance(t);
            }
            if let Some(r) = e.discount {
                spec = spec.with_discount(r);
            }
            spec.validate()?;
            let warnings = spec.warnings();
            Ok(Plan::Curves {
                specs: vec![spec],
                warnings,
            })
        }
        Command::Theorem => {
            let t = need(&cfg.theorem, "--id or a [theorem] table", cmd)?;
            if let Some(p) = &t.preset {
                p.parse::<Scale>()?;
            }
            let (mut specs, mut warnings) = match &cfg.model {
                Some(m) => {
                    let model = m.build()?;
                    let w = presets::hypothesis_warnings(&t.id, &model);
                    (presets::custom_experiments(&t.id, &model)?, w)
                }
                None => (presets::preset_experiments(&t.id)?, vec![]),
            };
            if let Some(g) = &cfg.grid {
                for s in &mut specs {
                    s.grid = resolve_grid(Some(g), &s.model.marginals[0], vec![])?;
                }
            }
            for s in &specs {
                s.validate()?;
                warnings.extend(s.warnings());
            }
            Ok(Plan::Curves { specs, warnings })
        }
        Command::Ruin | Command::SurplusPath => {
            let r = need(&cfg.ruin, "a [ruin] table", cmd)?;
            let (model, id) = match r {
                RuinCfg::Discrete { rate, id } => {
                    let claims =
                        need(&cfg.model, "a [model] table for discrete claims", cmd)?.build()?;
                    (
                        SurplusModel::Discrete(DiscreteRiskModel::new(claims, *rate)?),
                        id.clone(),
                    )
                }
                RuinCfg::Arrival {
                    claim,
                    loading,
                    intensity,
                    horizon,
                    counting,
                    id,
                } => {
                    let mut m =
                        ArrivalRiskModel::new(claim.build()?, *loading, *intensity, *horizon)?;
                    if let Some(c) = counting {
                        m = m.with_counting(c.build()?);
                    }
                    if let Some(mc) = &cfg.model {
                        m = m.with_copula(mc.copula.build()?);
                    }
                    (SurplusModel::Arrival(m), id.clone())
                }
            };
            let id = id.unwrap_or_else(|| "ruin".into());
            if cmd == Command::SurplusPath {
                let s = need(&cfg.surplus, "--x or a [surplus] table", cmd)?;
                let warnings = match &model {
                    SurplusModel::Arrival(m) => m.warnings(),
                    SurplusModel::Discrete(_) => vec![],
                };
                return Ok(Plan::Surplus {
                    path: model,
                    x: s.x,
                    index: s.index.unwrap_or(0),
                    warnings,
                });
            }
            let (spec, mut warnings) = match &model {
                SurplusModel::Discrete(m) => {
                    let first = &m.claims.marginals[0];
                    let grid = resolve_grid(cfg.grid.as_ref(), first, default_grid(first)?)?;
                    (m.experiment(id, grid), vec![])
                }
                SurplusModel::Arrival(m) => {
                    let grid = resolve_grid(cfg.grid.as_ref(), &m.claim, default_grid(&m.claim)?)?;
                    (m.experiment(id, grid)?, m.warnings())
                }
            };
            spec.validate()?;
            warnings.extend(spec.warnings());
            Ok(Plan::Curves {
                specs: vec![spec],
                warnings,
            })
        }
        Command::DiagnoseClass => {
            let c = need(&cfg.class, "--dist or a [class] table", cmd)?;
            let dist = c.dist.build()?;
            let checks = c
                .checks
                .clone()
                .unwrap_or_else(|| CLASS_CHECKS.iter().map(|s| s.to_string()).collect());
            for ch in &checks {
                if !CLASS_CHECKS.contains(&ch.as_str()) {
                    return Err(usage(format!(
                        "unknown class check '{ch}' ({})",
                        CLASS_CHECKS.join(", ")
                    )));
                }
            }
            let grid = resolve_grid(cfg.grid.as_ref(), &dist, vec![])?;
            let grid = if grid.is_empty() {
                default_class_grid(&dist)?
            } else {
                grid
            };
            Ok(Plan::Class {
                dist,
                checks,
                grid,
                tol: c.tolerance.unwrap_or(DEFAULT_TOLERANCE),
                y: c.y.unwrap_or(1.0),
                factor: c.factor.unwrap_or(0.5),
                h: c.h.clone().unwrap_or_else(|| DEFAULT_WINDOWS.to_vec()),
            })
        }
        Command::DiagnoseDependence => {
            let model = need(&cfg.model, "--model or a [model] table", cmd)?.build()?;
            let d = need(&cfg.dependence, "--check or a [dependence] table", cmd)?;
            let pair = d.pair.map_or((0, 1), |p| (p[0], p[1]));
            let grid = resolve_grid(cfg.grid.as_ref(), &model.marginals[0], vec![])?;
            let grid = if grid.is_empty() {
                default_class_grid(&model.marginals[0])?
            } else {
                grid
            };
            Ok(Plan::Dependence {
                model,
                check: d.check,
                pair,
                grid,
                tol: d.tolerance.unwrap_or(DEFAULT_TOLERANCE),
            })
        }
        Command::Convolve => {
            let c = need(&cfg.convolve, "--dist or a [convolve] table", cmd)?;
            let dist = c.dist.build()?;
            if c.nfold < 1 {
                return Err(usage("--nfold must be at least 1"));
            }
            let exact_example11 = matches!(dist, Marginal::Example11(_)) && c.nfold == 2;
            let points = match (&c.points, &cfg.grid) {
                (_, Some(g)) => resolve_grid(Some(g), &dist, vec![])?,
                (None, None) => auto_points(&dist, exact_example11)?,
                (Some(PointsCfg::Named(s)), None) if s == "auto" => {
                    auto_points(&dist, exact_example11)?
                }
                (Some(PointsCfg::Named(s)), None) => {
                    return Err(usage(format!("unknown points '{s}' (auto or a count)")))
                }
                (Some(PointsCfg::Count(n)), None) => quantile_grid(&dist, 0.5, 1.0 - 1e-6, *n)?,
            };
            Ok(Plan::Convolve {
                dist,
                nfold: c.nfold,
                points,
                step: c.step,
                exact_example11,
            })
        }
    }
}

fn auto_points(dist: &Marginal, exact_example11: bool) -> Result<Vec<f64>, CliError> {
    match dist {
        Marginal::Example11(e) if exact_example11 => Ok(example11_breakpoints(
            e,
            EXAMPLE11_RANGE.0,
            EXAMPLE11_RANGE.1,
        )),
        _ => Ok(default_class_grid(dist)?),
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn execute(plan: Plan, cfg: &Config) -> Result<Report, CliError> {
    let seed = cfg.seed.unwrap_or_default();
    let samples = cfg.samples.unwrap_or_default();
    let workers = cfg.workers.unwrap_or(1);
    let mut rep = Report::default();
    match plan {
        Plan::Curves { specs, .. } => {
            rep.columns = vec![
                "experiment_id",
                "x",
                "numerator",
                "stderr",
                "denominator",
                "ratio",
                "ci_low",
                "ci_high",
                "running_min",
            ];
            for spec in &specs {
                let curve = run_experiment(spec, samples, seed, workers)?;
                add_curve(&mut rep, &curve);
            }
        }
        Plan::Class {
            dist,
            checks,
            grid,
            tol,
            y,
            factor,
            h,
        } => {
            rep.columns = vec!["check", "series", "x", "ratio"];
            for ch in &checks {
                let r = match ch.as_str() {
                    "L" => diag_long_tail(&dist, y, &grid, tol),
                    "D" => diag_dominated(&dist, factor, &grid, tol),
                    "S" => diag_subexponential(&dist, &grid, tol, false),
                    "Sstar" => diag_sstar(&dist, &grid, tol),
                    _ => diag_strong_subexponential(&dist, &h, &grid, tol),
                };
                match r {
                    Ok(report) => add_class_report(&mut rep, ch, &report),
                    Err(heavytail::Error::Precondition(why)) => {
                        rep.trailer.push(format!(
                            "verdict check={ch} verdict=skipped reason=\"{why}\""
                        ));
                        rep.records.push(json!({"record": "class_report", "check": ch, "verdict": "skipped", "reason": why}));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Plan::Dependence {
            model,
            check,
            pair,
            grid,
            tol,
        } => {
            rep.columns = vec!["check", "series", "x", "ratio"];
            let report = match check {
                DepCheck::H1 => diag_h1(&model, pair, &grid, tol)?,
                DepCheck::H2 => diag_h2(&model, pair, &grid, tol)?,
            };
            let name = format!("{check:?}");
            add_class_report(&mut rep, &name, &report);
        }
        Plan::Convolve {
            dist,
            nfold,
            points,
            step,
            exact_example11,
        } => {
            rep.columns = vec![
                "x",
                "lower",
                "upper",
                "base_tail",
                "ratio_lower",
                "ratio_upper",
                "running_min",
            ];
            let mut rows = Vec::new();
            if exact_example11 {
                let Marginal::Example11(e) = &dist else {
                    unreachable!("checked in plan")
                };
                for p in example11_ratio_curve(e, &points)? {
                    let t = dist.tail(p.x);
                    rows.push((
                        p.x,
                        p.ratio * t,
                        p.ratio * t,
                        t,
                        p.ratio,
                        p.ratio,
                        p.running_min,
                    ));
                }
            } else {
                let mut run_min = f64::INFINITY;
                for &x in &points {
                    let b = nfold_tail_bracket(&dist, nfold, x, step)?;
                    let t = dist.tail(x);
                    let (lo, hi) = (b.lower / t, b.upper / t);
                    run_min = run_min.min(lo);
                    rows.push((x, b.lower, b.upper, t, lo, hi, run_min));
                }
            }
            for r in &rows {
                rep.rows.push(vec![
                    num(r.0),
                    num(r.1),
                    num(r.2),
                    num(r.3),
                    num(r.4),
                    num(r.5),
                    num(r.6),
                ]);
            }
            let (argmin, min) = rows.iter().fold((f64::NAN, f64::INFINITY), |acc, r| {
                if r.4 < acc.1 {
                    (r.0, r.4)
                } else {
                    acc
                }
            });
            let exact = exact_example11 || dist.is_atomic();
            rep.trailer.push(format!(
                "summary nfold={nfold} points={} exact={exact} running_min={} at_x={}",
                rows.len(),
                num(min),
                num(argmin)
            ));
            rep.records.push(json!({
                "record": "convolution",
                "nfold": nfold,
                "exact": exact,
                "running_min": min,
                "argmin": argmin,
                "rows": rows.iter().map(|r| json!({
                    "x": r.0, "lower": r.1, "upper": r.2, "base_tail": r.3,
                    "ratio_lower": r.4, "ratio_upper": r.5, "running_min": r.6,
                })).collect::<Vec<_>>(),
            }));
        }
        Plan::Surplus { path, x, index, .. } => {
            rep.columns = vec!["k", "surplus"];
            let pts = match &path {
                SurplusModel::Discrete(m) => m.surplus_path(x, seed, index),
                SurplusModel::Arrival(m) => m.surplus_path(x, seed, index)?,
            };
            for &(k, u) in &pts {
                rep.rows.push(vec![k.to_string(), num(u)]);
            }
            let r = ruined(&pts);
            rep.trailer.push(format!(
                "summary x={} index={index} seed={seed} steps={} ruined={r}",
                num(x),
                pts.len() - 1
            ));
            rep.records.push(json!({"record": "surplus_path", "x": x, "index": index, "seed": seed, "ruined": r, "path": pts}));
        }
    }
    Ok(rep)
}

fn add_curve(rep: &mut Report, c: &RatioCurve) {
    for p in &c.points {
        rep.rows.push(vec![
            c.experiment_id.clone(),
            num(p.x),
            num(p.numerator),
            num(p.stderr),
            num(p.denominator),
            num(p.ratio),
            num(p.ci_low),
            num(p.ci_high),
            num(p.running_min),
        ]);
    }
    let mut line = format!(
        "verdict experiment_id={} verdict={} limit={} predicted={} tolerance={} running_min={} last_ratio={} samples={} seed={} exact={} hypotheses={}",
        c.experiment_id,
        c.verdict,
        c.limit.name(),
        match c.predicted_limit.finite() {
            Some(v) => num(v),
            None => "inf".into(),
        },
        num(c.tolerance),
        num(c.running_min),
        num(c.last().ratio),
        c.samples,
        c.seed,
        c.exact,
        if c.hypotheses_verified { "verified" } else { "unverified" },
    );
    if let Some(cert) = &c.certificate {
        line.push_str(&format!(
            " certificate_terms={} certificate_partial_mean={}",
            cert.terms,
            num(cert.partial_mean)
        ));
    }
    if let Some(n) = &c.note {
        line.push_str(&format!(" note=\"{n}\""));
    }
    rep.trailer.push(line);
    let mut v = serde_json::to_value(c).expect("curves serialize");
    v["record"] = json!("curve");
    rep.records.push(v);
    rep.inconsistent |= c.verdict == Verdict::Inconsistent;
}

fn add_class_report(rep: &mut Report, check: &str, r: &ClassReport) {
    for p in &r.statistics {
        rep.rows.push(vec![
            check.to_string(),
            p.series.map(num).unwrap_or_default(),
            num(p.x),
            num(p.ratio),
        ]);
    }
    rep.trailer.push(format!(
        "verdict check={check} target={} verdict={} tolerance={}",
        r.target,
        r.verdict,
        num(r.tolerance)
    ));
    let mut v = serde_json::to_value(r).expect("reports serialize");
    v["record"] = json!("class_report");
    v["check"] = json!(check);
    rep.records.push(v);
    rep.inconsistent |= r.verdict == Verdict::Inconsistent;
}
