use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};
use torus_entropy::{IntMatrix, MapSpec, TorusPoint};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MapName {
    Linear,
    Pcat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Flags and config-file keys share names; flags win.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    /// Map family
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<MapName>,
    /// Integer matrix, row-major, comma separated
    #[arg(long)]
    #[serde(
        default,
        deserialize_with = "list",
        skip_serializing_if = "Option::is_none"
    )]
    pub matrix: Option<String>,
    /// Perturbation strength for pcat
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Grid resolution per axis for h_rst
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    /// Horizons for h_rst, comma separated and increasing
    #[arg(long)]
    #[serde(
        default,
        deserialize_with = "list",
        skip_serializing_if = "Option::is_none"
    )]
    pub schedule: Option<String>,
    /// Orbit length for separated sets
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Separation radius
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Candidate lattice resolution per axis for separated sets
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<usize>,
    /// Pressure parameters, comma separated
    #[arg(long)]
    #[serde(
        default,
        deserialize_with = "list",
        skip_serializing_if = "Option::is_none"
    )]
    pub t: Option<String>,
    /// Base point, comma separated
    #[arg(long)]
    #[serde(
        default,
        deserialize_with = "list",
        skip_serializing_if = "Option::is_none"
    )]
    pub point: Option<String>,
    /// Orbit horizon for lyap, or the largest n+m for subadd-check
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_period: Option<usize>,
    /// Spread threshold in bits
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Channel rate in bits per step
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Initial error bound
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// True initial state
    #[arg(long)]
    #[serde(
        default,
        deserialize_with = "list",
        skip_serializing_if = "Option::is_none"
    )]
    pub x0: Option<String>,
    /// Initial estimate
    #[arg(long)]
    #[serde(
        default,
        deserialize_with = "list",
        skip_serializing_if = "Option::is_none"
    )]
    pub xhat0: Option<String>,
    /// Channel rates to sweep, comma separated
    #[arg(long)]
    #[serde(
        default,
        deserialize_with = "list",
        skip_serializing_if = "Option::is_none"
    )]
    pub rates: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    /// Output file (default: stdout)
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

/// Accepts `"1,2,3"` or `[1, 2, 3]` and stores the comma-joined form.
fn list<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Numbers(Vec<toml::Value>),
    }
    Ok(match Option::<Raw>::deserialize(d)? {
        None => None,
        Some(Raw::Text(s)) => Some(s),
        Some(Raw::Numbers(v)) => Some(
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
    })
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.clone().or_else(|| $base.$f.clone())),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))
    }

    /// `self` over `base`, field by field.
    pub fn over(&self, base: &RunConfig) -> RunConfig {
        overlay!(self, base; map, matrix, eps, grid, schedule, n, epsilon, lattice, t, point,
            horizon, max_period, threshold, rate, delta, steps, x0, xhat0, rates, trials,
            samples, seed, format, threads, out)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    /// The map fields alone, validated.
    pub fn map_only(&self) -> Result<(RunConfig, MapSpec), CliError> {
        let map = self
            .map
            .ok_or_else(|| CliError::config("map", "missing (linear or pcat)"))?;
        let mut echo = RunConfig {
            map: Some(map),
            ..Default::default()
        };
        let spec = match map {
            MapName::Linear => {
                let raw = self
                    .matrix
                    .as_deref()
                    .ok_or_else(|| CliError::config("matrix", "required for --map linear"))?;
                let entries: Vec<i64> = parse_list("matrix", raw)?;
                let m = IntMatrix::from_flat(entries).map_err(|e| CliError::config("matrix", e))?;
                echo.matrix = Some(join(m.entries()));
                MapSpec::linear(m).map_err(|e| CliError::config("matrix", e))?
            }
            MapName::Pcat => {
                let eps = self
                    .eps
                    .ok_or_else(|| CliError::config("eps", "required for --map pcat"))?;
                echo.eps = Some(eps);
                MapSpec::perturbed_cat(eps).map_err(|e| CliError::config("eps", e))?
            }
        };
        echo.format = Some(self.format());
        Ok((echo, spec))
    }
}

pub fn parse_list<T: std::str::FromStr>(key: &'static str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    let out: Vec<T> = raw
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| CliError::config(key, format!("bad entry {s:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err(CliError::config(key, "empty list"));
    }
    Ok(out)
}

pub fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_point(key: &'static str, raw: &str, dim: usize) -> Result<TorusPoint, CliError> {
    let coords: Vec<f64> = parse_list(key, raw)?;
    if coords.len() != dim {
        return Err(CliError::config(
            key,
            format!("expected {dim} coordinates, got {}", coords.len()),
        ));
    }
    TorusPoint::new(coords).map_err(|e| CliError::config(key, e))
}
