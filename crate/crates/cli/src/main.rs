//! `pnp-gmm` command-line front end.
//!
//! Resolution order for every subcommand: built-in defaults, then the JSON
//! file given with `--spec` (which replaces the defaults wholesale), then any
//! flag given explicitly on the command line. `--print-spec` prints the
//! resolved spec instead of running it; feeding that output back through
//! `--spec` reproduces the run.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.
//!
//! `PNP_GMM_DATA` names the data directory used for default paths
//! (`<data>/generic/train` as training corpus); it defaults to `data`.

mod args;
mod resolve;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use pnp_gmm::admm::TraceRecord;
use pnp_gmm::bench::{self, ExperimentSpec};
use pnp_gmm::denoiser::{denoise_image, training_em_config, training_patches};
use pnp_gmm::gmm::{em_fit_traced, load_model, save_model};

use pnp_gmm::image::{load_image, save_image};
use pnp_gmm::metrics;
use pnp_gmm::operators::{build_cyclic, BlurKernel};

use args::{Cli, Command};
use resolve::{DegradeSpec, DenoiseSpec, EvalSpec, Metric, SweepSpec, TrainSpec};

#[derive(Debug)]
pub(crate) enum Failure {
    Usage(String),
    Runtime(pnp_gmm::Error),
}

impl From<pnp_gmm::Error> for Failure {
    fn from(e: pnp_gmm::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let env = resolve::Env::from_process(cli.spec.clone());
    match &cli.command {
        Command::TrainGmm(a) => finish(cli, resolve::train(a, &env)?, train),
        Command::Degrade(a) => finish(cli, resolve::degrade(a, &env)?, degrade),
        Command::Deblur(a) => finish(cli, resolve::deblur(a, &env)?, |s| experiment(cli, s)),
        Command::Csrecon(a) => finish(cli, resolve::csrecon(a, &env)?, |s| experiment(cli, s)),
        Command::Denoise(a) => finish(cli, resolve::denoise(a, &env)?, denoise),
        Command::Eval(a) => finish(cli, resolve::eval(a, &env)?, eval),
        Command::Sweep(a) => finish(cli, resolve::sweep(a, &env)?, sweep),
    }
}

fn finish<S: Serialize>(cli: &Cli, spec: S, run: impl FnOnce(&S) -> Outcome) -> Outcome {
    if cli.print_spec {
        println!("{}", to_json(&spec)?);
        Ok(())
    } else {
        run(&spec)
    }
}

fn to_json<S: Serialize>(value: &S) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(pnp_gmm::Error::InvalidArgument(e.to_string())))
}

fn train(spec: &TrainSpec) -> Outcome {
    let images = bench::ingest_corpus(&spec.corpus, &spec.corpus_rules)?;
    let mut all = Vec::new();
    for img in &images {
        all.push(training_patches(img, &spec.denoiser, spec.training_stride)?);
    }
    let views: Vec<_> = all.iter().map(|p| p.view()).collect();
    let patches = ndarray::concatenate(ndarray::Axis(0), &views).expect("equal patch dimension");
    let patches = resolve::subsample(patches, spec.max_training_patches, spec.em.seed);
    let outcome = em_fit_traced(patches.view(), spec.components, &training_em_config(&spec.denoiser, &spec.em))?;
    save_model(&outcome.model, &spec.out)?;
    let ll = outcome.log_likelihoods.last().copied().unwrap_or(f64::NAN);
    eprintln!(
        "trained {} components on {} patches in {} EM iterations",
        spec.components,
        patches.nrows(),
        outcome.log_likelihoods.len().saturating_sub(1)
    );
    println!("{ll}");
    Ok(())
}

fn degrade(spec: &DegradeSpec) -> Outcome {
    let clean = spec.image_rules.apply(&load_image(&spec.input)?)?;
    let kernel = match (&spec.kernel_id, &spec.kernel_file) {
        (Some(id), None) => bench::catalog_entry(*id)?.kernel,
        (None, Some(path)) => BlurKernel::load(path)?,
        _ => return Err(Failure::Usage("give exactly one of --kernel and --kernel-file".into())),
    };
    let op = build_cyclic(kernel, clean.shape())?;
    let variance = match (spec.noise_variance, spec.target_bsnr) {
        (Some(v), None) => v,
        (None, Some(b)) => bench::variance_for_bsnr(&op.blur(&clean)?, b)?,
        _ => return Err(Failure::Usage("give exactly one of --noise-variance and --bsnr".into())),
    };
    let y = bench::degrade(&clean, &op, variance, spec.noise_seed)?;
    save_image(y.as_image().expect("blur observes an image"), &spec.out)?;
    println!("{variance}");
    Ok(())
}

fn progress(quiet: bool) -> impl FnMut(&TraceRecord) {
    move |r: &TraceRecord| {
        if !quiet && (r.iteration % 10 == 0 || r.retrained) {
            eprintln!(
                "iteration {:>4}  primal residual {:.6e}{}",
                r.iteration,
                r.primal_residual,
                if r.retrained { "  (mixture refit)" } else { "" }
            );
        }
    }
}

fn experiment(cli: &Cli, spec: &ExperimentSpec) -> Outcome {
    let run = bench::execute(spec, None, &mut progress(cli.quiet))?;
    println!("{}", serde_json::to_string(&run.report.metrics).expect("metrics serialize"));
    Ok(())
}

fn sweep(spec: &SweepSpec) -> Outcome {
    let rows = bench::sweep_measurements(&spec.base, &spec.measurements)?;
    print!("{}", bench::sweep_csv(&rows));
    Ok(())
}

fn denoise(spec: &DenoiseSpec) -> Outcome {
    let noisy = load_image(&spec.input)?;
    let model = load_model(&spec.model)?;
    let out = denoise_image(&model, &noisy, spec.noise_variance, &spec.denoiser)?;
    save_image(&out, &spec.out)?;
    Ok(())
}

fn eval(spec: &EvalSpec) -> Outcome {
    let clean = load_image(&spec.clean)?;
    let restored = load_image(&spec.restored)?;
    let value = match spec.metric {
        Metric::Psnr => metrics::psnr(&clean, &restored)?,
        Metric::Nmse => metrics::nmse_db(&clean, &restored)?,
        Metric::Isnr => {
            let path = spec
                .degraded
                .as_ref()
                .ok_or_else(|| Failure::Usage("--metric isnr needs --degraded".into()))?;
            metrics::isnr(&clean, &load_image(path)?, &restored)?
        }
    };
    println!("{value}");
    Ok(())
}

pub(crate) fn read_spec<S: serde::de::DeserializeOwned>(path: &Path) -> Result<S, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read spec {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid spec {}: {e}", path.display())))
}
