//! Command-line front end for the experiment harness. One subcommand per
//! experiment kind; flags override config-file values, which override the
//! kind's defaults.

use clap::{Args, Parser, Subcommand};
use percolab::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "percolab",
    about = "First passage and invasion percolation experiments on the complete graph and the PWIT",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonFlags {
    /// TOML config file; keys override the kind's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (derives all replica seeds).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for <kind>.csv and <kind>.summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of replicas.
    #[arg(long)]
    replicas: Option<u64>,
    /// Worker threads (0 = default pool).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Rescaled optimal-path weight vs the law of max(M1, M2) across n.
    WnScaling(CommonFlags),
    /// Prefix agreement of FPP and invasion explorations on one PWIT.
    IpAgreement(CommonFlags),
    /// Freezing times against the analytic law of M.
    FreezeScaling(CommonFlags),
    /// Frozen-cluster volume and diameter across a disorder grid.
    FrozenStats(CommonFlags),
    /// I.i.d. law of the coupled K_n edge weights, plus the exact
    /// smallest-weight-tree correspondence.
    CouplingIid(CommonFlags),
    /// Poisson Galton-Watson identities and progeny law checks.
    PgwChecks(CommonFlags),
    /// Weight-family scaling/density condition reports and Malthusian
    /// identities.
    Conditions(CommonFlags),
    /// Forward-maximum chain law along the invasion backbone.
    ForwardMax(CommonFlags),
}

impl Command {
    fn split(self) -> (ExperimentKind, CommonFlags) {
        match self {
            Command::WnScaling(f) => (ExperimentKind::WnScaling, f),
            Command::IpAgreement(f) => (ExperimentKind::IpAgreement, f),
            Command::FreezeScaling(f) => (ExperimentKind::FreezeScaling, f),
            Command::FrozenStats(f) => (ExperimentKind::FrozenStats, f),
            Command::CouplingIid(f) => (ExperimentKind::CouplingIid, f),
            Command::PgwChecks(f) => (ExperimentKind::PgwChecks, f),
            Command::Conditions(f) => (ExperimentKind::Conditions, f),
            Command::ForwardMax(f) => (ExperimentKind::ForwardMax, f),
        }
    }
}

fn build_config(kind: ExperimentKind, flags: CommonFlags) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::defaults(kind);
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        cfg.apply_file(&text).map_err(|e| e.to_string())?;
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(out) = flags.out {
        cfg.out = out;
    }
    if let Some(replicas) = flags.replicas {
        cfg.replicas = replicas;
    }
    if let Some(jobs) = flags.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = cli.command.split();
    let cfg = match build_config(kind, flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    eprintln!(
        "running {} (seed {}, replicas {}, out {})",
        cfg.kind.name(),
        cfg.seed,
        cfg.replicas,
        cfg.out.display()
    );
    match run_experiment(&cfg) {
        Ok(res) => {
            println!(
                "{}: {}",
                res.kind.name(),
                if res.pass { "PASS" } else { "FAIL" }
            );
            println!(
                "wrote {}/{}.csv and {}/{}.summary.json",
                cfg.out.display(),
                res.kind.name(),
                cfg.out.display(),
                res.kind.name()
            );
            if res.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
