//! `torus-entropy`: entropy estimators, periodic-orbit scans and the
//! channel observer for maps of the 2-torus, with JSON/CSV output.

mod commands;
mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::{Format, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "torus-entropy",
    version,
    about = "Entropy and data-rate experiments on torus maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Restoration entropy from singular values of DT^n
    Hrst(Invocation),
    /// Topological entropy from (n, epsilon)-separated sets
    Htop(Invocation),
    /// Finite-time Lyapunov exponents at a point
    Lyap(Invocation),
    /// Topological pressure of -t J^u
    Pressure(Invocation),
    /// Unstable multipliers of periodic orbits and the strict-inequality certificate
    GammaScan(Invocation),
    /// One run of the channel observer
    Observe(Invocation),
    /// Observer verdicts across channel rates
    RateSweep(Invocation),
    /// Sampled subadditivity defects of the singular-value cocycle
    SubaddCheck(Invocation),
}

#[derive(clap::Args, Debug)]
struct Invocation {
    /// TOML file with the same keys as the flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunConfig,
}

#[derive(Debug)]
pub struct CliError {
    key: &'static str,
    message: String,
    code: u8,
}

impl CliError {
    pub fn config(key: &'static str, message: impl fmt::Display) -> Self {
        CliError {
            key,
            message: message.to_string(),
            code: 2,
        }
    }

    pub fn library(key: &'static str, e: torus_entropy::Error) -> Self {
        CliError {
            key,
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

/// Rounds every float to 9 significant digits.
fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let r: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
            *v = json!(r);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::config("out", format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, inv) = match &cli.command {
        Command::Hrst(i) => ("hrst", i),
        Command::Htop(i) => ("htop", i),
        Command::Lyap(i) => ("lyap", i),
        Command::Pressure(i) => ("pressure", i),
        Command::GammaScan(i) => ("gamma-scan", i),
        Command::Observe(i) => ("observe", i),
        Command::RateSweep(i) => ("rate-sweep", i),
        Command::SubaddCheck(i) => ("subadd-check", i),
    };
    let cfg = match &inv.config {
        Some(path) => inv.flags.over(&RunConfig::load(path)?),
        None => inv.flags.clone(),
    };
    if let Some(threads) = cfg.threads {
        if threads == 0 {
            return Err(CliError::config("threads", "must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config("threads", e))?;
    }
    let report = match &cli.command {
        Command::Hrst(_) => commands::hrst(&cfg),
        Command::Htop(_) => commands::htop(&cfg),
        Command::Lyap(_) => commands::lyap(&cfg),
        Command::Pressure(_) => commands::pressure(&cfg),
        Command::GammaScan(_) => commands::gamma(&cfg),
        Command::Observe(_) => commands::observe(&cfg),
        Command::RateSweep(_) => commands::sweep(&cfg),
        Command::SubaddCheck(_) => commands::subadd(&cfg),
    }?;
    let out = cfg.out.as_deref();
    match cfg.format() {
        Format::Csv => write_out(out, &report.csv),
        Format::Json => {
            let mut doc = json!({
                "command": name,
                "config": serde_json::to_value(&report.config).expect("config serializes"),
                "result": report.result,
            });
            round_floats(&mut doc);
            let text = serde_json::to_string_pretty(&doc).expect("json renders") + "\n";
            write_out(out, &text)?;
            if let (Some(path), Some((suffix, csv))) = (out, &report.sidecar) {
                write_out(Some(&path.with_extension(suffix)), csv)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("torus-entropy: {e}");
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let numerical = torus_entropy::Error::Convergence {
            what: "Newton orbit continuation",
            iterations: 50,
            residual: 1e-3,
        };
        assert_eq!(CliError::library("max-period", numerical).code, 3);
        assert_eq!(
            CliError::library("eps", torus_entropy::Error::Continuation("stalled".into())).code,
            3
        );
        assert_eq!(
            CliError::library("eps", torus_entropy::Error::InvalidMap("eps".into())).code,
            2
        );
        assert_eq!(CliError::config("grid", "must be >= 1").code, 2);
    }

    #[test]
    fn rounding_keeps_nine_digits() {
        let mut v = json!({"a": [1.0 / 3.0, 2], "b": {"c": 1.388483827261234}});
        round_floats(&mut v);
        assert_eq!(v["a"][0].as_f64().unwrap(), 0.333333333);
        assert_eq!(v["a"][1], 2);
        assert_eq!(v["b"]["c"].as_f64().unwrap(), 1.38848383);
    }
}
