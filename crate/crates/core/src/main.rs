use std::path::PathBuf;
use std::process::ExitCode;

use cbf_lab::experiments::{run_with_threads, ExperimentConfig, ExperimentKind};
use cbf_lab::transforms::TransformKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cbf-lab", version, about = "Wong-Zakai CBF simulation and verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON config; the experiment's preset is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true)]
    quiet: bool,
    /// Print the effective config and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Additive,
    Multiplicative,
}

impl From<Variant> for TransformKind {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Additive => TransformKind::Additive,
            Variant::Multiplicative => TransformKind::Multiplicative,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    NoiseConvergence,
    OuConvergence,
    OperatorAudit,
    NonlinearAudit,
    EnergyAudit,
    Decay,
    WzSolutionConvergence { variant: Variant },
    Absorb,
    /// Both variants unless one is given.
    RadiusConvergence { variant: Option<Variant> },
    Usc { variant: Variant },
    ValidateAssumptions,
    TailDiagnostic,
}

impl Command {
    fn kind(&self) -> (ExperimentKind, Option<TransformKind>) {
        use ExperimentKind as K;
        match self {
            Command::NoiseConvergence => (K::NoiseConvergence, None),
            Command::OuConvergence => (K::OuConvergence, None),
            Command::OperatorAudit => (K::OperatorAudit, None),
            Command::NonlinearAudit => (K::NonlinearAudit, None),
            Command::EnergyAudit => (K::EnergyAudit, None),
            Command::Decay => (K::Decay, None),
            Command::WzSolutionConvergence { variant } => (K::WzSolutionConvergence, Some((*variant).into())),
            Command::Absorb => (K::Absorb, None),
            Command::RadiusConvergence { variant } => (K::RadiusConvergence, variant.map(Into::into)),
            Command::Usc { variant } => (K::Usc, Some((*variant).into())),
            Command::ValidateAssumptions => (K::ValidateAssumptions, None),
            Command::TailDiagnostic => (K::TailDiagnostic, None),
        }
    }
}

fn build_config(cli: &Cli) -> cbf_lab::Result<ExperimentConfig> {
    let (kind, variant) = cli.command.kind();
    let mut config = match &cli.common.config {
        Some(path) => {
            let c = ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?;
            if c.experiment != kind {
                return Err(cbf_lab::Error::Config {
                    field: "experiment".into(),
                    reason: format!("config is for {}, subcommand is {kind}", c.experiment),
                });
            }
            c
        }
        None => ExperimentConfig::preset(kind, variant),
    };
    if variant.is_some() {
        config.variant = variant;
    }
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cli.common.print_config {
        match config.to_json() {
            Ok(s) => {
                println!("{s}");
                return ExitCode::SUCCESS;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    }
    match run_with_threads(&config, cli.common.threads.max(1)) {
        Ok(outcome) => {
            if !cli.common.quiet {
                for c in outcome.checks() {
                    let tag = if c.pass { "PASS" } else { "FAIL" };
                    println!("{tag} {:<36} value={:.6e} threshold={:.6e}  {}", c.name, c.value, c.threshold, c.detail);
                }
                println!("manifest: {}", outcome.manifest_path.display());
            }
            if outcome.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
