//! Batch CLI for solve runs and convergence studies.
//!
//! Usage:
//!   chreg solve <config> [--output-dir DIR]
//!   chreg cauchy-study <config> [--output-dir DIR]
//!   chreg rate-study <config> [--output-dir DIR]
//!   chreg truncation-study <config> [--output-dir DIR]
//!   chreg validate <config>
//!
//! Exit code 0 when all checks pass, 2 when an inequality check fails,
//! 1 on any error.

use chreg::config::parse_config;
use chreg::runner;
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "usage: chreg <solve|cauchy-study|rate-study|truncation-study|validate> <config> [--output-dir DIR]";

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(2),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn run() -> Result<bool, String> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut positional = Vec::new();
    let mut output_dir: Option<PathBuf> = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--output-dir" {
            let dir = iter
                .next()
                .ok_or_else(|| format!("--output-dir needs a value\n{USAGE}"))?;
            output_dir = Some(PathBuf::from(dir));
        } else if arg.starts_with("--") {
            return Err(format!("unknown flag {arg}\n{USAGE}"));
        } else {
            positional.push(arg);
        }
    }
    if positional.len() != 2 {
        return Err(USAGE.to_string());
    }
    let command = positional[0].as_str();
    let config_path = &positional[1];
    let known = [
        "solve",
        "cauchy-study",
        "rate-study",
        "truncation-study",
        "validate",
    ];
    if !known.contains(&command) {
        return Err(format!("unknown command {command}\n{USAGE}"));
    }

    let text = std::fs::read_to_string(config_path)
        .map_err(|e| format!("cannot read config {config_path}: {e}"))?;
    let mut cfg = parse_config(&text).map_err(|e| e.to_string())?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }

    match command {
        "solve" => {
            let artifacts = runner::run_solve(&cfg).map_err(|e| e.to_string())?;
            print!("{}", artifacts.report);
            Ok(artifacts.checks_passed)
        }
        "cauchy-study" => {
            let artifacts = runner::run_cauchy_study(&cfg).map_err(|e| e.to_string())?;
            print!("{}", artifacts.report);
            Ok(artifacts.checks_passed)
        }
        "rate-study" => {
            let artifacts = runner::run_rate_study(&cfg).map_err(|e| e.to_string())?;
            print!("{}", artifacts.report);
            Ok(artifacts.checks_passed)
        }
        "truncation-study" => {
            let artifacts = runner::run_truncation_study(&cfg).map_err(|e| e.to_string())?;
            print!("{}", artifacts.report);
            Ok(artifacts.checks_passed)
        }
        "validate" => {
            let (report, passed) = runner::run_validate(&cfg).map_err(|e| e.to_string())?;
            print!("{report}");
            Ok(passed)
        }
        _ => unreachable!("command validated above"),
    }
}
