//! Runs the lambda x beta sweep through the experiment runner and prints the
//! resulting table. The singular cell (0.5, 1) shows up with an error column.

use rarts::cli::{run_sweep, ExperimentConfig, ExperimentKind, SWEEP_FILE};

fn main() -> rarts::Result<()> {
    let out = std::env::temp_dir().join("rarts_parameter_sweep");
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::Sweep);
    cfg.sweep.lambdas = vec![0.5, 1.0, 10.0];
    cfg.sweep.betas = vec![1.0, 10.0, 100.0];
    cfg.seeds = vec![0, 1];
    cfg.quadratic.jitter = 0.5;
    cfg.out_dir = Some(out.clone());

    let report = run_sweep(&cfg)?;
    print!("{}", std::fs::read_to_string(out.join(SWEEP_FILE))?);
    println!(
        "{} runs, exit code {}, written to {}",
        report.runs.len(),
        report.exit_code(),
        out.display()
    );
    Ok(())
}
