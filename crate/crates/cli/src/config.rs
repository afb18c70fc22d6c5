use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use exact_coreset::RegularizerLayout;

use crate::error::{CliError, Result};
use crate::input::LabelColumn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Ridge regression coreset (p = 2).
    Ridge,
    /// lp-regularized lp regression coreset (even p).
    Lpreg,
    /// Third-moment coreset for latent variable models.
    Lvm,
    /// Compare an artifact against the full data it was built from.
    Verify,
    /// Coreset size and statistical-dimension bound across lambda values.
    Sweep,
}

/// Build, verify and sweep accurate coresets over CSV data.
#[derive(Debug, Parser)]
#[command(name = "exact-coreset", version)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,

    /// Input CSV (comma-separated, optional header row).
    #[arg(long)]
    pub input: PathBuf,

    /// Artifact (ridge, lpreg, lvm), report (verify) or table (sweep) path.
    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lambda: f64,

    /// Loss exponent; must be even.
    #[arg(long)]
    pub p: Option<usize>,

    /// Number of latent components (lvm).
    #[arg(long)]
    pub k: Option<usize>,

    /// Label column for regression: zero-based index, header name or "last".
    #[arg(long = "label-col", default_value = "last")]
    pub label_col: LabelColumn,

    /// Seed for verification queries.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Cluster count for the fast reduction.
    #[arg(long)]
    pub clusters: Option<usize>,

    #[arg(long = "query-count", default_value_t = 100)]
    pub query_count: usize,

    /// Artifact to check (verify).
    #[arg(long)]
    pub artifact: Option<PathBuf>,

    /// Comma-separated lambda grid (sweep).
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 1.0, 10.0, 100.0])]
    pub lambdas: Vec<f64>,

    /// Regularizer rows: "sign-tensor" or "diagonal".
    #[arg(long = "reg-layout", default_value = "sign-tensor")]
    pub layout: RegularizerLayout,

    /// Largest relative loss gap verify accepts before failing.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,

    /// Store wall-clock time in the artifact (breaks byte-identical output).
    #[arg(long = "record-timing")]
    pub record_timing: bool,
}

/// Validated invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub input_path: PathBuf,
    pub label_column: LabelColumn,
    pub lambda: f64,
    pub p: usize,
    pub k: Option<usize>,
    pub seed: u64,
    pub clusters: Option<usize>,
    pub output_path: Option<PathBuf>,
    pub query_count: usize,
    pub artifact_path: Option<PathBuf>,
    pub lambdas: Vec<f64>,
    pub layout: RegularizerLayout,
    pub tolerance: f64,
    pub record_timing: bool,
}

impl RunConfig {
    pub fn new(command: Command, input: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            input_path: input.into(),
            label_column: LabelColumn::Last,
            lambda: 0.0,
            p: 2,
            k: None,
            seed: 0,
            clusters: None,
            output_path: None,
            query_count: 100,
            artifact_path: None,
            lambdas: vec![0.0, 0.1, 1.0, 10.0, 100.0],
            layout: RegularizerLayout::SignTensor,
            tolerance: 1e-8,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let need = |present: bool, flag: &str| {
            if present {
                Ok(())
            } else {
                Err(CliError::input(
                    format!("{:?} requires {flag}", self.command).to_lowercase(),
                ))
            }
        };
        match self.command {
            Command::Ridge | Command::Lpreg | Command::Lvm | Command::Sweep => {
                need(self.output_path.is_some(), "--output")?
            }
            Command::Verify => need(self.artifact_path.is_some(), "--artifact")?,
        }
        if self.command == Command::Lvm {
            need(self.k.is_some(), "--k")?;
        }
        if self.command == Command::Ridge && self.p != 2 {
            return Err(CliError::input(
                "ridge uses p = 2; use lpreg for other exponents",
            ));
        }
        if self.p < 2 || !self.p.is_multiple_of(2) {
            return Err(CliError::input(format!(
                "p must be even and at least 2, got {}",
                self.p
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(CliError::input(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(CliError::input(format!(
                "lambda values must be >= 0, got {l}"
            )));
        }
        if self.command == Command::Sweep && self.lambdas.is_empty() {
            return Err(CliError::input("sweep needs at least one lambda"));
        }
        if self.k == Some(0) {
            return Err(CliError::input("k must be positive"));
        }
        if matches!(self.clusters, Some(c) if c < 2) {
            return Err(CliError::input("clusters must be at least 2"));
        }
        if self.query_count == 0 {
            return Err(CliError::input("query-count must be positive"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(CliError::input("tolerance must be >= 0"));
        }
        Ok(())
    }
}

impl TryFrom<Args> for RunConfig {
    type Error = CliError;

    fn try_from(a: Args) -> Result<Self> {
        let cfg = RunConfig {
            command: a.command,
            input_path: a.input,
            label_column: a.label_col,
            lambda: a.lambda,
            p: a.p.unwrap_or(2),
            k: a.k,
            seed: a.seed,
            clusters: a.clusters,
            output_path: a.output,
            query_count: a.query_count,
            artifact_path: a.artifact,
            lambdas: a.lambdas,
            layout: a.layout,
            tolerance: a.tolerance,
            record_timing: a.record_timing,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig> {
        let a = Args::try_parse_from(std::iter::once("exact-coreset").chain(args.iter().copied()))
            .map_err(|e| CliError::input(e.to_string()))?;
        RunConfig::try_from(a)
    }

    #[test]
    fn defaults() {
        let c = parse(&[
            "ridge", "--input", "d.csv", "--output", "o.json", "--lambda", "1",
        ])
        .unwrap();
        assert_eq!(c.p, 2);
        assert_eq!(c.seed, 0);
        assert_eq!(c.query_count, 100);
        assert_eq!(c.label_column, LabelColumn::Last);
        assert_eq!(c.lambda, 1.0);
    }

    #[test]
    fn required_fields() {
        assert!(parse(&["ridge", "--input", "d.csv"]).is_err());
        assert!(parse(&["lvm", "--input", "d.csv", "--output", "o"]).is_err());
        assert!(parse(&["verify", "--input", "d.csv"]).is_err());
        assert!(parse(&["verify", "--input", "d.csv", "--artifact", "a.json"]).is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        let base = ["lpreg", "--input", "d.csv", "--output", "o"];
        let with = |extra: &[&str]| parse(&[&base[..], extra].concat());
        assert!(with(&["--p", "3"]).is_err());
        assert!(with(&["--p", "0"]).is_err());
        assert!(with(&["--p", "4"]).is_ok());
        assert!(with(&["--lambda", "-1"]).is_err());
        assert!(with(&["--clusters", "1"]).is_err());
        assert!(with(&["--reg-layout", "bogus"]).is_err());
        assert!(parse(&["ridge", "--input", "d", "--output", "o", "--p", "4"]).is_err());
    }

    #[test]
    fn lambda_grid() {
        let c = parse(&[
            "sweep",
            "--input",
            "d",
            "--output",
            "o",
            "--lambdas",
            "0,0.5,2",
        ])
        .unwrap();
        assert_eq!(c.lambdas, vec![0.0, 0.5, 2.0]);
    }
}
