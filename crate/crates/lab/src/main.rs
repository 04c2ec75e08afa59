use clap::Parser;
use collapse_lab::{emit, run, ExperimentConfig, Format, LabError, RayonExecutor};
use std::path::PathBuf;
use std::process::ExitCode;

/// Run a collapse experiment and write CSV tables plus report.json.
///
/// Exit status: 0 when every verdict passes, 2 when any fails, 3 on a config error.
#[derive(Parser, Debug)]
#[command(name = "collapse-lab", version)]
struct Cli {
    /// inj-profile, volume-growth, curvature-decay, pseudo-group, holonomy-decay,
    /// gh-chart, fibration, diophantine or all
    subcommand: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Only print the verdict summary, not the per-verdict lines.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match go(&cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("collapse-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn go(cli: &Cli) -> Result<bool, LabError> {
    let cfg = ExperimentConfig::load(&cli.config)?;
    let exec = RayonExecutor::new(cli.threads)
        .map_err(|e| LabError::config("--threads", e.to_string()))?;
    let report = run(&cli.subcommand, &cfg, cli.seed, &exec)?;
    emit(&report, &cli.out, &[Format::Csv, Format::Json])?;
    if !cli.quiet {
        print!("{}", report.summary());
    }
    let failed = report.verdicts.iter().filter(|v| !v.pass).count();
    println!(
        "{}: {} verdicts, {} failed, {:.2} s, output in {}",
        report.experiment,
        report.verdicts.len(),
        failed,
        report.wall_time_s,
        cli.out.display()
    );
    Ok(failed == 0)
}
