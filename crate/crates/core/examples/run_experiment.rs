//! Runs a named experiment from its preset and prints the embedded checks.
//!
//! `cargo run --release --example run_experiment -- decay`

use cbf_lab::experiments::{run, ExperimentConfig, ExperimentKind};

fn main() -> cbf_lab::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "tail-diagnostic".into());
    let kind = ExperimentKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| cbf_lab::Error::Config { field: "experiment".into(), reason: format!("unknown {name}") })?;
    let mut config = ExperimentConfig::preset(kind, None);
    config.output_dir = std::env::temp_dir().join("cbf-lab").join(kind.name());
    let outcome = run(&config)?;
    for c in outcome.checks() {
        println!("{:5} {} = {:.4e} (threshold {:.4e})", c.pass, c.name, c.value, c.threshold);
    }
    println!("{}", outcome.manifest_path.display());
    Ok(())
}
