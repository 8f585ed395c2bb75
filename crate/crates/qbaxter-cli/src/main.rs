use clap::Parser;
use qbaxter_cli::{export_report, export_table, load_config, plan, run, summary_line, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

/// Run operator-identity suites and spectrum pipelines for the open XXZ chain.
#[derive(Parser, Debug)]
#[command(name = "qbaxter", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Suite to run; repeatable, replaces the suites in the config.
    #[arg(long = "suite")]
    suites: Vec<String>,
    /// Seed; falls back to QBAXTER_SEED, then to the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when neither this nor the config names one.
    #[arg(long)]
    out: Option<String>,
    /// Tolerance for every check.
    #[arg(long)]
    tol: Option<f64>,
    /// Fock-space cutoff for the oscillator traces.
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let seed = args.seed.or_else(|| std::env::var("QBAXTER_SEED").ok().and_then(|s| s.parse().ok()));
    let ov = Overrides { suites: args.suites, seed, out: args.out, tol: args.tol, cutoff: args.cutoff };
    let plan = match load_config(&args.config).and_then(|c| plan(&c, &ov)) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("qbaxter: {e:#}");
            return ExitCode::from(2);
        }
    };
    let report = run(&plan);
    let out = plan.output_path.as_ref().map(PathBuf::from);
    if let Err(e) = export_report(&report, out.as_deref()) {
        eprintln!("qbaxter: {e:#}");
        return ExitCode::from(2);
    }
    if let Some(t) = &plan.table_path {
        if let Err(e) = export_table(&report, t.as_ref()) {
            eprintln!("qbaxter: {e:#}");
            return ExitCode::from(2);
        }
    }
    if !args.quiet {
        for c in report.checks.iter().filter(|c| !c.passed) {
            let tag = match (c.residual.is_finite(), c.conjecture) {
                (false, _) => "ERROR",
                (true, true) => "CONJECTURE",
                (true, false) => "FAIL",
            };
            eprintln!("{tag} {}: residual {:.3e}, tolerance {:.1e} {}", c.name, c.residual, c.tolerance, c.notes);
        }
        for e in &report.errors {
            eprintln!("ERROR {e}");
        }
        eprintln!("{}", summary_line(&report));
    }
    ExitCode::from(report.exit_code() as u8)
}
