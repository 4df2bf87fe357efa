use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heavytail"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("heavytail-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn trailer(out: &str) -> Vec<&str> {
    out.lines()
        .filter(|l| l.starts_with("# verdict") || l.starts_with("# summary"))
        .collect()
}

#[test]
fn theorem_preset_is_consistent() {
    let o = run(&[
        "theorem", "--id", "C3.1", "--preset", "quick", "--seed", "7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("# heavytail theorem "));
    assert!(out.contains(
        "\nexperiment_id,x,numerator,stderr,denominator,ratio,ci_low,ci_high,running_min\n"
    ));
    let t = trailer(&out);
    assert_eq!(t.len(), 2);
    for line in t {
        assert!(line.contains("verdict=consistent"), "{line}");
        assert!(line.contains("seed=7"));
        assert!(line.contains("hypotheses=verified"));
    }
}

#[test]
fn comonotone_violates_h1() {
    let o = run(&[
        "diagnose-dependence",
        "--model",
        "comonotone-pareto",
        "--check",
        "H1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("verdict=inconsistent"));
}

#[test]
fn example11_convolution_table() {
    let o = run(&[
        "convolve",
        "--dist",
        "example11",
        "--nfold",
        "2",
        "--points",
        "auto",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("\nx,lower,upper,base_tail,ratio_lower,ratio_upper,running_min\n"));
    let summary = out.lines().find(|l| l.starts_with("# summary")).unwrap();
    assert!(summary.contains("exact=true"), "{summary}");
    assert!(summary.contains("running_min=1.25"), "{summary}");
}

#[test]
fn list_presets_is_complete() {
    let o = run(&["list-presets"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for id in [
        "T3.1", "T3.2", "T3.3", "C3.1", "T4.1", "T4.2", "T4.3", "T4.4i", "T4.4ii", "C5.1", "C5.2",
    ] {
        assert!(
            out.lines().any(|l| l.split_whitespace().next() == Some(id)),
            "missing {id}"
        );
    }
}

#[test]
fn validate_rejects_inadmissible_fgm_with_witness() {
    let cfg = configs().join("inadmissible_fgm.toml");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(64));
    let err = stderr(&o);
    assert!(err.contains("inadmissible FGM"), "{err}");
    assert!(err.contains("[1, -1]"), "{err}");
}

#[test]
fn validate_warns_on_infinite_mean_with_finite_limit() {
    let cfg = configs().join("zeta_sum_limit.toml");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("config ok"));
    assert!(out.contains("E tau is infinite"), "{out}");
}

#[test]
fn validate_flags_nonnegative_shifted_mean() {
    let cfg = configs().join("t44i_positive_mean.toml");
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("marginal mean must be negative"));
}

#[test]
fn shipped_configs_validate() {
    for name in [
        "fgm_pareto_sum",
        "discrete_ruin",
        "arrival_ruin",
        "weibull_classes",
    ] {
        let cfg = configs().join(format!("{name}.toml"));
        let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(run(&["theorem", "--id", "T9.9"]).status.code(), Some(64));
    assert_eq!(
        run(&["convolve", "--seed", "3", "--dist", "pareto:1.5,1"])
            .status
            .code(),
        Some(64)
    );
    let bad = tmp("unknown_field.toml");
    std::fs::write(&bad, "command = \"theorem\"\nsamlpes = 10\n").unwrap();
    assert_eq!(
        run(&["run", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_echo_reruns_byte_identical() {
    let first = tmp("first.csv");
    let o = run(&[
        "ratio-curve",
        "--config",
        configs().join("fgm_pareto_sum.toml").to_str().unwrap(),
        "--samples",
        "20000",
        "--workers",
        "3",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    let text = std::fs::read_to_string(&first).unwrap();
    let echo: String = text
        .lines()
        .skip_while(|l| *l != "# --- config ---")
        .skip(1)
        .take_while(|l| *l != "# --- end config ---")
        .map(|l| {
            format!(
                "{}\n",
                l.strip_prefix("# ").unwrap_or(l.trim_start_matches('#'))
            )
        })
        .collect();
    assert!(echo.contains("seed = "), "{echo}");
    let cfg = tmp("echo.toml");
    std::fs::write(&cfg, echo).unwrap();
    for workers in ["3", "1"] {
        let second = tmp(&format!("second-{workers}.csv"));
        let o = run(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--workers",
            workers,
            "--out",
            second.to_str().unwrap(),
        ]);
        assert!(matches!(o.status.code(), Some(0 | 2)));
        let again = std::fs::read_to_string(&second).unwrap();
        if workers == "3" {
            assert_eq!(again, text);
        } else {
            // only the echoed worker count may differ
            let body = |s: &str| {
                s.lines()
                    .filter(|l| !l.starts_with("# workers"))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(body(&again), body(&text));
        }
    }
}

#[test]
fn records_format_starts_with_config_echo() {
    let o = run(&["theorem", "--id", "T3.3", "--format", "records"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    let head: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(head["record"], "config");
    assert_eq!(head["command"], "theorem");
    assert_eq!(head["config"]["theorem"]["id"], "T3.3");
    let rest: Vec<serde_json::Value> = lines.map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!rest.is_empty());
    assert!(rest.iter().any(|r| r.get("verdict").is_some()));
}

#[test]
fn surplus_path_reports_ruin() {
    let o = run(&[
        "surplus-path",
        "--config",
        configs().join("discrete_ruin.toml").to_str().unwrap(),
        "--x",
        "5",
    ]);
    // the shipped ruin config names the ruin command
    assert_eq!(o.status.code(), Some(64));
    let cfg = tmp("surplus.toml");
    std::fs::write(
        &cfg,
        "command = \"surplus-path\"\nseed = 3\n\n[model]\ncopula = { kind = \"independence\", n = 2 }\n\
         marginals = [{ family = \"pareto\", alpha = 1.0, scale = 1.0 }, { family = \"pareto\", alpha = 1.0, scale = 1.0 }]\n\n\
         [ruin]\nkind = \"discrete\"\nrate = 0.05\n",
    )
    .unwrap();
    let o = run(&[
        "surplus-path",
        "--config",
        cfg.to_str().unwrap(),
        "--x",
        "5",
        "--index",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("\nk,surplus\n"));
    assert!(out
        .lines()
        .any(|l| l.starts_with("# summary") && l.contains("ruined=")));
}
