//! Output rendering. CSV: `#` header with the config echo, the table, then
//! `#` summary lines. Records: one JSON object per line, the first being the
//! config echo.

use std::io::Write;

use serde_json::json;

use heavytail::asym::presets::catalog;

use crate::config::{Command, Config, Format};
use crate::run::Report;
use crate::CliError;

pub const CONFIG_BEGIN: &str = "# --- config ---";
pub const CONFIG_END: &str = "# --- end config ---";

pub fn render(rep: &Report, cmd: Command, cfg: &Config) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    match cfg.format.unwrap_or_default() {
        Format::Csv => {
            writeln!(
                out,
                "# heavytail {} {}",
                cmd.name(),
                env!("CARGO_PKG_VERSION")
            )?;
            writeln!(out, "{CONFIG_BEGIN}")?;
            for line in cfg.to_toml().lines() {
                if line.is_empty() {
                    writeln!(out, "#")?;
                } else {
                    writeln!(out, "# {line}")?;
                }
            }
            writeln!(out, "{CONFIG_END}")?;
            {
                let mut w = csv::Writer::from_writer(&mut out);
                w.write_record(&rep.columns).map_err(csv_err)?;
                for r in &rep.rows {
                    w.write_record(r).map_err(csv_err)?;
                }
                w.flush()?;
            }
            for t in &rep.trailer {
                writeln!(out, "# {t}")?;
            }
        }
        Format::Records => {
            let head = json!({"record": "config", "command": cmd.name(), "version": env!("CARGO_PKG_VERSION"), "config": cfg});
            writeln!(out, "{head}")?;
            for r in &rep.records {
                writeln!(out, "{r}")?;
            }
        }
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

pub fn write(rep: &Report, cmd: Command, cfg: &Config) -> Result<(), CliError> {
    let bytes = render(rep, cmd, cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    for t in &rep.trailer {
        if cfg.out.is_some() {
            eprintln!("{t}");
        }
    }
    Ok(())
}

pub fn print_catalog() {
    println!("{:<8} {:<50} model", "id", "claim");
    for p in catalog() {
        println!("{:<8} {:<50} {}", p.id, p.claim, p.model);
    }
}
