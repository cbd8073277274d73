use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use iic_harness::{run_to_dir, ExperimentConfig, Kind, RunError};

/// Run one experiment and write `<kind>.csv` plus `manifest.json`.
#[derive(Debug, Parser)]
#[command(name = "iic-lab", version)]
struct Cli {
    #[arg(value_enum)]
    kind: Kind,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    r_list: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<u64>>,
    /// Overrides the model's bond probability.
    #[arg(long)]
    p: Option<f64>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut config = ExperimentConfig::from_path(&cli.config)?;
    if let Some(s) = cli.seed {
        config.master_seed = s;
    }
    if cli.trials.is_some() {
        config.trials = cli.trials;
    }
    if cli.samples.is_some() {
        config.samples = cli.samples;
    }
    if cli.r_list.is_some() {
        config.r_list = cli.r_list.clone();
    }
    if cli.n_list.is_some() {
        config.n_list = cli.n_list.clone();
    }
    if let Some(p) = cli.p {
        let set = config.model.as_mut().is_some_and(|m| m.set_p(p));
        if !set {
            return Err(RunError::Schema("--p needs a lattice or bethe model".into()));
        }
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("iic-lab: {e}");
            return ExitCode::from(1);
        }
    }
    let result = load(&cli).and_then(|config| run_to_dir(cli.kind, &config, &cli.out));
    match result {
        Ok((manifest, code)) => {
            println!("{}: {} ({:.2} s)", manifest.kind.name(), manifest.status, manifest.elapsed_secs);
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("iic-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
