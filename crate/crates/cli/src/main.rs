//! Command-line driver for the reduction/averaging experiments.
//!
//! Exit codes: 0 success, 1 validation failure (arguments, files, model
//! definitions), 2 numerical failure (integration, spectral hypotheses).

use clap::{Parser, Subcommand};
use lvcm::error::Error;
use lvcm::harness::{
    parse_experiment_spec, run_experiment, run_verify, ExperimentKind, ExperimentSpec, ModelSource,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lvcm",
    about = "Center-manifold reduction and averaging of fast-slow Lotka-Volterra metapopulation models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its output files
    Run {
        /// Bundled preset name (see `lvcm presets`)
        #[arg(long, conflicts_with = "model")]
        preset: Option<String>,
        /// Model definition file
        #[arg(long)]
        model: Option<PathBuf>,
        /// Experiment kind: direct_run | manifold_tables | reduced_run |
        /// averaged_run | transient_decay | slope_study | sigma_report |
        /// oracle_check
        #[arg(long)]
        kind: Option<String>,
        /// Scale-separation values (repeatable or space separated)
        #[arg(long, num_args = 1.., value_delimiter = ' ')]
        eps: Vec<f64>,
        /// Final time of the run (experiment dependent default)
        #[arg(long)]
        t_end: Option<f64>,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Manifold truncation order for reduced runs (0, 1 or 2)
        #[arg(long)]
        order: Option<usize>,
        /// Experiment description file (key = value lines); flags override it
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// List bundled presets
    Presets,
    /// Run the structural invariant suite
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidModel(_)
        | Error::InvalidInput(_)
        | Error::Parse { .. }
        | Error::UnknownPreset(_)
        | Error::Io(_) => 1,
        Error::NegativeRate { .. }
        | Error::SpectralHypothesis(_)
        | Error::SingularMonodromy { .. }
        | Error::ExpandingMonodromy { .. }
        | Error::NonFinite { .. }
        | Error::NewtonDivergence { .. }
        | Error::DomainViolation { .. }
        | Error::NonContraction { .. } => 2,
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Presets => {
            for name in lvcm::modelfile::preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let checks = run_verify();
            let mut all = true;
            for (name, ok, detail) in &checks {
                println!("[{}] {name}: {detail}", if *ok { "ok" } else { "FAIL" });
                all &= ok;
            }
            if all {
                println!("all {} checks passed", checks.len());
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Command::Run {
            preset,
            model,
            kind,
            eps,
            t_end,
            out,
            order,
            spec,
        } => {
            let mut experiment = match &spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    parse_experiment_spec(&text, &out)?
                }
                None => {
                    let kind = kind
                        .as_deref()
                        .ok_or_else(|| Error::InvalidInput("--kind is required".into()))?;
                    let source = source_from(preset.clone(), model.clone())?;
                    ExperimentSpec::new(source, ExperimentKind::parse(kind)?, out.clone())
                }
            };
            // flags override the spec file
            if spec.is_some() {
                if let Some(k) = kind.as_deref() {
                    experiment.kind = ExperimentKind::parse(k)?;
                }
                if preset.is_some() || model.is_some() {
                    experiment.source = source_from(preset, model)?;
                }
            }
            if !eps.is_empty() {
                experiment.eps_list = eps;
            }
            if t_end.is_some() {
                experiment.t_end = t_end;
            }
            if let Some(o) = order {
                experiment.manifold_order = o;
            }

            let outcome = run_experiment(&experiment)?;
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn source_from(preset: Option<String>, model: Option<PathBuf>) -> Result<ModelSource, Error> {
    match (preset, model) {
        (Some(p), None) => Ok(ModelSource::Preset(p)),
        (None, Some(m)) => Ok(ModelSource::File(m)),
        (None, None) => Err(Error::InvalidInput(
            "one of --preset or --model is required".into(),
        )),
        (Some(_), Some(_)) => Err(Error::InvalidInput(
            "--preset and --model are mutually exclusive".into(),
        )),
    }
}
