use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;

use nfar_core::config::ExperimentConfig;
use nfar_core::diagnostics::{
    check_assumption_m2, check_example_condition, empirical_drift_test, mixing_decay_estimate,
    CovarianceOperatorDisc,
};
use nfar_core::experiment::{self, SweepOptions};
use nfar_core::gp::{CirculantSpectrum, NoiseSampler, StationaryKernel};
use nfar_core::learner::{self, OperatorModel};
use nfar_core::mlp::Checkpoint;
use nfar_core::nfar::{NfarModel, NfarPath, Tau};
use nfar_core::seed::{stream, Role};
use nfar_core::{Error, GridSpec, Result};

#[derive(Parser)]
#[command(name = "nfar", version, about = "NFAR simulation, diagnostics and operator learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the circulant embedding and report its spectrum as JSON.
    CheckEmbedding {
        #[arg(long, default_value_t = 100)]
        grid_size: usize,
        #[arg(long, default_value_t = 5.0)]
        kernel_scale: f64,
    },
    /// Simulate a path and write it as CSV frames plus meta.json.
    Simulate {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        grid_size: usize,
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 500)]
        burn_in: usize,
        #[arg(long)]
        out: PathBuf,
        /// Experiment config whose [model] section is used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Report drift constants, the series condition and the mixing proxy as JSON.
    CheckConditions {
        #[arg(long, default_value_t = 16)]
        grid_size: usize,
        #[arg(long, default_value_t = 2000)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        m_terms: usize,
        #[arg(long, default_value_t = 20)]
        max_lag: usize,
        #[arg(long, value_parser = parse_tau, default_value = "trig")]
        tau: Tau,
        #[arg(long, default_value_t = 500)]
        burn_in: usize,
    },
    /// Train a kernel network on a stored path.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run (or resume) a replicated sample-size sweep and write its artifacts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "NFAR_WORKERS")]
        workers: Option<usize>,
    },
    /// Score a checkpoint on an independent test field.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test_seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_tau(s: &str) -> std::result::Result<Tau, String> {
    match s {
        "trig" => Ok(Tau::Trig),
        "identity" => Ok(Tau::Identity),
        "zero" => Ok(Tau::Zero),
        _ => Err(format!("unknown tau {s:?} (trig, identity, zero)")),
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CheckEmbedding {
            grid_size,
            kernel_scale,
        } => {
            let k = StationaryKernel::new(kernel_scale)?;
            let spec = CirculantSpectrum::build_for_size(&k, grid_size)?;
            print_json(&spec.report())
        }
        Command::Simulate {
            seed,
            grid_size,
            length,
            burn_in,
            out,
            config,
        } => {
            let cfg = load_config(config.as_ref())?;
            let grid = GridSpec::new(grid_size)?;
            let model = NfarModel::new(cfg.model, grid)?;
            let spectrum = Arc::new(CirculantSpectrum::build(model.kernel(), grid)?);
            let mut sampler = NoiseSampler::new(spectrum, stream(seed, &[], Role::Noise));
            let mut path = model.simulate_path(&mut sampler, length, burn_in)?;
            path.meta.seed = Some(seed);
            path.write_dir(&out)?;
            eprintln!("wrote {} fields to {}", path.len(), out.display());
            Ok(())
        }
        Command::CheckConditions {
            grid_size,
            length,
            seed,
            m_terms,
            max_lag,
            tau,
            burn_in,
        } => {
            let grid = GridSpec::new(grid_size)?;
            let model = NfarModel::standard(grid).with_tau(tau)?;
            let q = CovarianceOperatorDisc::new(model.kernel(), grid)?;
            let drift = check_assumption_m2(&model, &q);
            let series = check_example_condition(&model, &q, m_terms.min(grid.len()))?;
            let spectrum = Arc::new(CirculantSpectrum::build(model.kernel(), grid)?);
            let mut sampler = NoiseSampler::new(spectrum, stream(seed, &[], Role::Noise));
            let path = model.simulate_path(&mut sampler, length, burn_in)?;
            let test = empirical_drift_test(&path, &drift)?;
            let decay = mixing_decay_estimate(&path, max_lag)?;
            print_json(&json!({
                "grid_size": grid_size,
                "trace": q.trace(),
                "lambda_max": q.lambda_max(),
                "rho": drift.rho,
                "kappa": drift.kappa,
                "c1": drift.c1,
                "c2": drift.c2,
                "drift_condition": drift.passes,
                "partial_sums": series.partial_sums,
                "series_condition": series.series_condition_holds,
                "factorization_bounded": series.factorization_holds,
                "drift_pass": test.passed,
                "drift_test": test,
                "decay_rate": decay.rate(),
                "r2": decay.r2(),
                "decay": decay,
                "warnings": series.warnings,
                "note": drift.note,
            }))
        }
        Command::Train {
            data,
            config,
            out,
            trace,
        } => {
            let cfg = load_config(config.as_ref())?;
            let path = NfarPath::read_dir(&data)?;
            let (tr, va) = learner::split_path(&path, &cfg.train)?;
            let outcome = learner::train_pairs(&tr, &va, &cfg.train, |r| {
                eprintln!(
                    "epoch {:>4}  train {:.6e}  val {:.6e}  {:.1}s",
                    r.epoch, r.train_loss, r.val_loss, r.seconds
                )
            })?;
            let ck = outcome.checkpoint(cfg.train.seed);
            std::fs::write(&out, ck.to_json()).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            if let Some(t) = trace {
                std::fs::write(&t, outcome.trace.to_csv()).map_err(|e| Error::Io {
                    path: t.clone(),
                    source: e,
                })?;
            }
            print_json(&json!({
                "stop_epoch": outcome.trace.stop_epoch,
                "stopped_early": outcome.trace.stopped_early,
                "best_epoch": outcome.trace.best_epoch,
                "best_val_loss": outcome.trace.best_val_loss,
            }))
        }
        Command::Sweep {
            config,
            out,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = SweepOptions {
                workers,
                ..Default::default()
            };
            let result = experiment::run_sweep(&cfg, &out, &opts)?;
            experiment::emit_artifacts(&result, &out)?;
            let summary = result.summary();
            print_json(&json!({
                "complete": result.is_complete(),
                "cells": result.cells.len(),
                "failures": result.failures,
                "summary": summary,
                "loglog_slope": experiment::loglog_slope(&summary),
            }))?;
            if result.is_complete() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{} cell(s) failed; rerun to retry",
                    result.failures.len()
                )))
            }
        }
        Command::Evaluate {
            checkpoint,
            test_seed,
            config,
        } => {
            let cfg = load_config(config.as_ref())?;
            let text = std::fs::read_to_string(&checkpoint).map_err(|e| Error::Io {
                path: checkpoint.clone(),
                source: e,
            })?;
            let ck = Checkpoint::from_json(&text)?;
            let learn = GridSpec::new(ck.grid_size.unwrap_or(cfg.sim.learn_grid))?;
            let mut cfg = cfg;
            if cfg.sim.sim_grid % learn.size() != 0 {
                return Err(Error::Config(format!(
                    "checkpoint grid {} does not divide sim_grid {}",
                    learn.size(),
                    cfg.sim.sim_grid
                )));
            }
            cfg.sim.learn_grid = learn.size();
            let spectrum = Arc::new(CirculantSpectrum::build(
                &StationaryKernel::new(cfg.model.kernel_scale)?,
                cfg.sim_grid(),
            )?);
            let z = experiment::simulate_test_point(&cfg, &spectrum, test_seed, &[])?;
            let truth = experiment::reference_output(&cfg, &z)?;
            let model = OperatorModel::from_checkpoint(&ck, learn)?
                .with_truncation(cfg.model.trunc_level);
            let pred = model.apply(&z.downsample(learn)?)?;
            print_json(&json!({
                "g": experiment::generalization_error(&pred, &truth)?,
                "grid_size": learn.size(),
                "test_seed": test_seed,
            }))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
