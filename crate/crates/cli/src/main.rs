//! `heavytail` command line: runs ratio-curve experiments, theorem presets,
//! class and dependence diagnostics, convolution oracles and risk models
//! from a TOML config plus flag overrides.
//!
//! Exit codes: 0 consistent, inconclusive or complete; 2 when any verdict is
//! inconsistent; 1 on runtime errors; 64 on usage and config errors.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::{Command, Config, DepCheck, Format, MarginalCfg, ModelCfg, PointsCfg, TheoremCfg};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] heavytail::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use heavytail::Error as E;
        match self {
            CliError::Usage(_) => 64,
            CliError::Core(
                E::InvalidInput(_) | E::Configuration(_) | E::InadmissibleFgm { .. },
            ) => 64,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CliCommand {
    RatioCurve,
    Theorem,
    DiagnoseClass,
    DiagnoseDependence,
    Convolve,
    Ruin,
    SurplusPath,
    /// Run the command named in the config file.
    Run,
    ListPresets,
    /// Check a config without running it.
    Validate,
}

#[derive(Debug, Parser)]
#[command(
    name = "heavytail",
    version,
    about = "Tail-ratio experiments for dependent heavy-tailed models"
)]
struct Cli {
    #[arg(value_enum)]
    command: CliCommand,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Theorem preset id, or the experiment id of a custom run.
    #[arg(long)]
    id: Option<String>,
    /// Sample scale of a theorem preset: quick, default or full.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Named model: comonotone-pareto, independent-pareto, fgm-pareto.
    #[arg(long)]
    model: Option<String>,
    /// Dependence check (H1, H2) or comma-separated class checks.
    #[arg(long)]
    check: Option<String>,
    /// Distribution as family[:params], e.g. pareto:0.8,1 or example11.
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    nfold: Option<usize>,
    /// Convolution grid: auto or a number of points.
    #[arg(long)]
    points: Option<String>,
    /// Initial surplus for surplus-path.
    #[arg(long)]
    x: Option<f64>,
    /// Replicate index for surplus-path.
    #[arg(long)]
    index: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    if cli.command == CliCommand::ListPresets {
        output::print_catalog();
        return Ok(0);
    }
    let validate_only = cli.command == CliCommand::Validate;
    let (cmd, cfg) = effective_config(cli)?;
    let plan = run::plan(cmd, &cfg)?;
    if validate_only {
        let warnings = plan.warnings();
        println!(
            "config ok: {} ({} warning{})",
            cmd.name(),
            warnings.len(),
            if warnings.len() == 1 { "" } else { "s" }
        );
        for w in warnings {
            println!("warning: {w}");
        }
        return Ok(0);
    }
    for w in plan.warnings() {
        eprintln!("warning: {w}");
    }
    let report = run::execute(plan, &cfg)?;
    output::write(&report, cmd, &cfg)?;
    Ok(if report.inconsistent { 2 } else { 0 })
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Folds flags into the config file and fills defaults, producing the
/// config that is executed and echoed.
fn effective_config(cli: Cli) -> Result<(Command, Config), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    let cmd = match cli.command {
        CliCommand::RatioCurve => Command::RatioCurve,
        CliCommand::Theorem => Command::Theorem,
        CliCommand::DiagnoseClass => Command::DiagnoseClass,
        CliCommand::DiagnoseDependence => Command::DiagnoseDependence,
        CliCommand::Convolve => Command::Convolve,
        CliCommand::Ruin => Command::Ruin,
        CliCommand::SurplusPath => Command::SurplusPath,
        CliCommand::Run | CliCommand::Validate => match (cfg.command, &cli.id) {
            (Some(c), _) => c,
            (None, Some(_)) => Command::Theorem,
            (None, None) => return Err(usage("the config does not name a command")),
        },
        CliCommand::ListPresets => unreachable!("handled before"),
    };
    if let Some(c) = cfg.command {
        if c != cmd {
            return Err(usage(format!(
                "config is for '{}' but '{}' was requested",
                c.name(),
                cmd.name()
            )));
        }
    }
    cfg.command = Some(cmd);

    let only = |ok: bool, flag: &str| -> Result<(), CliError> {
        if ok {
            Ok(())
        } else {
            Err(usage(format!("--{flag} does not apply to {}", cmd.name())))
        }
    };
    if let Some(id) = cli.id {
        match cmd {
            Command::Theorem => match &mut cfg.theorem {
                Some(t) => t.id = id,
                None => cfg.theorem = Some(TheoremCfg { id, preset: None }),
            },
            Command::RatioCurve => {
                cfg.experiment
                    .as_mut()
                    .ok_or_else(|| usage("--id needs an [experiment] table"))?
                    .id = id;
            }
            _ => only(false, "id")?,
        }
    }
    if let Some(p) = cli.preset {
        only(cmd == Command::Theorem, "preset")?;
        cfg.theorem
            .as_mut()
            .ok_or_else(|| usage("--preset needs --id"))?
            .preset = Some(p);
    }
    if let Some(name) = cli.model {
        only(
            matches!(
                cmd,
                Command::RatioCurve
                    | Command::Theorem
                    | Command::DiagnoseDependence
                    | Command::Ruin
            ),
            "model",
        )?;
        cfg.model = Some(ModelCfg::named(&name)?);
    }
    if let Some(spec) = cli.dist {
        let dist = MarginalCfg::from_spec(&spec)?;
        match cmd {
            Command::DiagnoseClass => match &mut cfg.class {
                Some(c) => c.dist = dist,
                None => {
                    cfg.class = Some(config::ClassCfg {
                        dist,
                        checks: None,
                        tolerance: None,
                        y: None,
                        factor: None,
                        h: None,
                    })
                }
            },
            Command::Convolve => match &mut cfg.convolve {
                Some(c) => c.dist = dist,
                None => {
                    cfg.convolve = Some(config::ConvolveCfg {
                        dist,
                        nfold: 2,
                        points: None,
                        step: None,
                    })
                }
            },
            _ => only(false, "dist")?,
        }
    }
    if let Some(check) = cli.check {
        match cmd {
            Command::DiagnoseDependence => {
                let c = DepCheck::from_str(&check, true)
                    .map_err(|_| usage(format!("unknown check '{check}' (H1, H2)")))?;
                match &mut cfg.dependence {
                    Some(d) => d.check = c,
                    None => {
                        cfg.dependence = Some(config::DependenceCfg {
                            check: c,
                            pair: None,
                            tolerance: None,
                        })
                    }
                }
            }
            Command::DiagnoseClass => {
                let list = check.split(',').map(|s| s.trim().to_string()).collect();
                cfg.class
                    .as_mut()
                    .ok_or_else(|| usage("--check needs --dist or a [class] table"))?
                    .checks = Some(list);
            }
            _ => only(false, "check")?,
        }
    }
    if cli.nfold.is_some() || cli.points.is_some() {
        only(cmd == Command::Convolve, "nfold")?;
        let c = cfg
            .convolve
            .as_mut()
            .ok_or_else(|| usage("--nfold/--points need --dist or a [convolve] table"))?;
        if let Some(n) = cli.nfold {
            c.nfold = n;
        }
        if let Some(p) = cli.points {
            c.points = Some(match p.parse::<usize>() {
                Ok(n) => PointsCfg::Count(n),
                Err(_) => PointsCfg::Named(p),
            });
        }
    }
    if cli.x.is_some() || cli.index.is_some() {
        only(cmd == Command::SurplusPath, "x")?;
        match &mut cfg.surplus {
            Some(s) => {
                if let Some(x) = cli.x {
                    s.x = x;
                }
                if cli.index.is_some() {
                    s.index = cli.index;
                }
            }
            None => {
                let x = cli.x.ok_or_else(|| usage("surplus-path needs --x"))?;
                cfg.surplus = Some(config::SurplusCfg {
                    x,
                    index: cli.index,
                });
            }
        }
    }

    if cli.seed.is_some() || cli.samples.is_some() || cli.workers.is_some() {
        only(cmd.is_random(), "seed/--samples/--workers")?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(s) = cli.samples {
        cfg.samples = Some(s);
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(f) = cli.format {
        cfg.format = Some(f);
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o.to_string_lossy().into_owned());
    }

    // explicit defaults, so the echoed config is complete
    if cmd.is_random() {
        cfg.seed.get_or_insert(config::DEFAULT_SEED);
        cfg.workers.get_or_insert(1);
        if cfg.samples.is_none() {
            let samples = match (&mut cfg.theorem, cmd) {
                (Some(t), Command::Theorem) => {
                    let scale: heavytail::asym::presets::Scale =
                        t.preset.get_or_insert_with(|| "default".into()).parse()?;
                    scale.samples()
                }
                _ => config::DEFAULT_SAMPLES,
            };
            cfg.samples = Some(samples);
        }
    }
    if let Some(t) = &mut cfg.theorem {
        t.preset.get_or_insert_with(|| "default".into());
    }
    cfg.format.get_or_insert(Format::Csv);
    Ok((cmd, cfg))
}
