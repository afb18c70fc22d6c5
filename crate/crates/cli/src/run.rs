use std::ffi::OsString;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use exact_coreset::caratheodory::CoresetSelection;
use exact_coreset::kernelization::build_regression_kernel_with;
use exact_coreset::lvm::{build_lvm_kernel, lvm_coreset_with, verify_tensor_equivalence};
use exact_coreset::numerics::{effective_rank, statistical_dimension, thin_svd};
use exact_coreset::regression::{
    build_coreset_with, sweep_lambda_with, verify_equivalence, BuildOptions,
};
use exact_coreset::{par, CoresetError, RegressionCoreset, RegressionProblem, RegularizerLayout};
use serde::Serialize;

use crate::artifact::{
    to_json, write_atomic, ArtifactMeta, CoresetArtifact, Pipeline, SCHEMA_VERSION,
};
use crate::config::{Args, Command, RunConfig};
use crate::error::{CliError, Result};
use crate::input::{load_moments, load_regression, LabelColumn};

pub const THREADS_ENV: &str = "EXACT_CORESET_THREADS";

/// Report printed by `verify` for regression artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RegressionReport {
    pub pipeline: Pipeline,
    pub num_queries: usize,
    pub seed: u64,
    pub max_abs_gap: f64,
    pub max_rel_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_solution: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coreset_solution: Option<Vec<f64>>,
    pub n: usize,
    pub d: usize,
    pub coreset_rows: usize,
    pub regularizer_rows: usize,
    pub full_eval_ms: f64,
    pub coreset_eval_ms: f64,
}

/// Report printed by `verify` for lvm artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct LvmReport {
    pub pipeline: Pipeline,
    pub num_queries: usize,
    pub seed: u64,
    pub max_abs_gap: f64,
    pub max_rel_gap: f64,
    pub moment_max_abs_gap: f64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub coreset_rows: usize,
    pub full_eval_ms: f64,
    pub coreset_eval_ms: f64,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = apply_thread_limit()
        .and_then(|_| RunConfig::try_from(args))
        .and_then(|cfg| run(&cfg, out));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn apply_thread_limit() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            par::configure_global_threads(n);
            Ok(())
        }
        _ => Err(CliError::input(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))),
    }
}

pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    match cfg.command {
        Command::Ridge | Command::Lpreg => build_regression(cfg, out),
        Command::Lvm => build_lvm(cfg, out),
        Command::Verify => verify(cfg, out),
        Command::Sweep => sweep(cfg, out),
    }
}

fn output_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.output_path
        .as_deref()
        .ok_or_else(|| CliError::input("missing --output"))
}

/// Statistical dimension of the unregularized data kernel at `lambda`, plus one.
fn sd_bound(prob: &RegressionProblem, layout: RegularizerLayout) -> Result<f64> {
    let data = build_regression_kernel_with(&prob.x, &prob.y, 0.0, prob.p, layout)?;
    Ok(statistical_dimension(&thin_svd(&data.rows, None)?, prob.lambda)? + 1.0)
}

fn build_regression(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (prob, label) = load_regression(&cfg.input_path, &cfg.label_column, cfg.lambda, cfg.p)?;
    let start = Instant::now();
    let opts = BuildOptions {
        clusters: cfg.clusters,
        layout: cfg.layout,
        skip_rank: false,
    };
    let coreset = build_coreset_with(&prob, opts)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let artifact = regression_artifact(cfg, &prob, label, &coreset, wall_ms)?;
    write_atomic(output_path(cfg)?, &to_json(&artifact))?;
    writeln!(
        out,
        "selected {} of {} samples and {} regularizer rows (kernel rank {})",
        coreset.n_data_rows(),
        prob.n(),
        coreset.reg_diag.len(),
        coreset.kernel_rank
    )
    .map_err(stdout_err)
}

fn regression_artifact(
    cfg: &RunConfig,
    prob: &RegressionProblem,
    label: usize,
    c: &RegressionCoreset,
    wall_ms: f64,
) -> Result<CoresetArtifact> {
    Ok(CoresetArtifact {
        schema_version: SCHEMA_VERSION.into(),
        pipeline: if cfg.command == Command::Ridge {
            Pipeline::Ridge
        } else {
            Pipeline::Lpreg
        },
        indices: c.indices.clone(),
        weights: c.data_weights.clone(),
        reg_diag: Some(c.reg_diag.clone()),
        meta: ArtifactMeta {
            lambda: Some(prob.lambda),
            p: Some(prob.p),
            k: None,
            n: prob.n(),
            d: prob.d(),
            label_column: Some(label),
            layout: Some(cfg.layout.as_str().into()),
            clusters: cfg.clusters,
            kernel_rank: c.kernel_rank,
            sd_bound: Some(sd_bound(prob, cfg.layout)?),
            selected_count: c.n_data_rows(),
            regularizer_count: Some(c.reg_diag.len()),
            wall_ms: cfg.record_timing.then_some(wall_ms),
        },
    })
}

fn build_lvm(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let k = cfg.k.ok_or_else(|| CliError::input("lvm requires --k"))?;
    let model = load_moments(&cfg.input_path, k)?;
    let start = Instant::now();
    let c = lvm_coreset_with(&model, cfg.clusters)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let kernel_rank = effective_rank(&thin_svd(&c.kernel.rows, None)?);
    let artifact = CoresetArtifact {
        schema_version: SCHEMA_VERSION.into(),
        pipeline: Pipeline::Lvm,
        indices: c.selection.indices.clone(),
        weights: c.selection.weights.clone(),
        reg_diag: None,
        meta: ArtifactMeta {
            lambda: None,
            p: None,
            k: Some(k),
            n: model.x.nrows(),
            d: model.x.ncols(),
            label_column: None,
            layout: None,
            clusters: cfg.clusters,
            kernel_rank,
            sd_bound: None,
            selected_count: c.selection.len(),
            regularizer_count: None,
            wall_ms: cfg.record_timing.then_some(wall_ms),
        },
    };
    write_atomic(output_path(cfg)?, &to_json(&artifact))?;
    writeln!(
        out,
        "selected {} of {} samples (kernel rank {kernel_rank})",
        c.selection.len(),
        model.x.nrows()
    )
    .map_err(stdout_err)
}

fn check_shape(a: &CoresetArtifact, n: usize, d: usize) -> Result<()> {
    if a.meta.n != n || a.meta.d != d {
        return Err(CliError::input(format!(
            "artifact was built from {}x{} data but the input is {n}x{d}",
            a.meta.n, a.meta.d
        )));
    }
    Ok(())
}

fn verify(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let path = cfg
        .artifact_path
        .as_deref()
        .ok_or_else(|| CliError::input("verify requires --artifact"))?;
    let a = CoresetArtifact::load(path)?;
    let (json, max_rel_gap) = match a.pipeline {
        Pipeline::Ridge | Pipeline::Lpreg => {
            let label = a
                .meta
                .label_column
                .map_or(LabelColumn::Last, LabelColumn::Index);
            let lambda = a.meta.lambda.unwrap_or_default();
            let p = a.meta.p.unwrap_or(2);
            let (prob, _) = load_regression(&cfg.input_path, &label, lambda, p)?;
            check_shape(&a, prob.n(), prob.d())?;
            let reg_diag = a.reg_diag.clone().unwrap_or_default();
            let c = RegressionCoreset::from_parts(
                &prob,
                a.indices.clone(),
                a.weights.clone(),
                reg_diag,
            )?;
            let r = verify_equivalence(&prob, &c, cfg.query_count, cfg.seed)?;
            let report = RegressionReport {
                pipeline: a.pipeline,
                num_queries: r.num_queries,
                seed: r.seed,
                max_abs_gap: r.max_abs_gap,
                max_rel_gap: r.max_rel_gap,
                solution_gap: r.solution_gap,
                full_solution: r.full_solution,
                coreset_solution: r.coreset_solution,
                n: r.n,
                d: r.d,
                coreset_rows: r.coreset_rows,
                regularizer_rows: c.reg_diag.len(),
                full_eval_ms: r.full_eval_ms,
                coreset_eval_ms: r.coreset_eval_ms,
            };
            (to_json(&report), r.max_rel_gap)
        }
        Pipeline::Lvm => {
            let k = a.meta.k.unwrap_or_default();
            let model = load_moments(&cfg.input_path, k)?;
            check_shape(&a, model.x.nrows(), model.x.ncols())?;
            let kernel = build_lvm_kernel(&model)?;
            let selection = CoresetSelection {
                indices: a.indices.clone(),
                weights: a.weights.clone(),
            };
            let r = verify_tensor_equivalence(&kernel, &selection, cfg.query_count, cfg.seed)?;
            let report = LvmReport {
                pipeline: a.pipeline,
                num_queries: r.num_queries,
                seed: r.seed,
                max_abs_gap: r.max_abs_gap,
                max_rel_gap: r.max_rel_gap,
                moment_max_abs_gap: r.moment_max_abs_gap,
                n: r.n,
                d: model.x.ncols(),
                k: r.k,
                coreset_rows: r.coreset_rows,
                full_eval_ms: r.full_eval_ms,
                coreset_eval_ms: r.coreset_eval_ms,
            };
            (to_json(&report), r.max_rel_gap)
        }
    };
    out.write_all(&json).map_err(stdout_err)?;
    if let Some(path) = &cfg.output_path {
        write_atomic(path, &json)?;
    }
    if !(max_rel_gap <= cfg.tolerance) {
        return Err(CoresetError::NumericalFailure(format!(
            "max relative gap {max_rel_gap:e} exceeds tolerance {:e}",
            cfg.tolerance
        ))
        .into());
    }
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let (prob, _) = load_regression(&cfg.input_path, &cfg.label_column, 0.0, cfg.p)?;
    let opts = BuildOptions {
        clusters: cfg.clusters,
        layout: cfg.layout,
        skip_rank: true,
    };
    let rows = sweep_lambda_with(&prob, &cfg.lambdas, opts)?;
    let mut table = String::from("lambda,selected,sd_bound\n");
    for r in &rows {
        table.push_str(&format!("{},{},{}\n", r.lambda, r.selected, r.sd_bound));
    }
    write_atomic(output_path(cfg)?, table.as_bytes())?;
    writeln!(out, "wrote {} rows", rows.len()).map_err(stdout_err)
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source,
    }
}
