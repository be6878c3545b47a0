use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavefocus::harness::output::{self, comparison_csv, heatmap_grid, results_csv, summary_csv};
use wavefocus::harness::{
    compare_field, emit_heatmap, gradcheck, sweep_layers, sweep_users, ExperimentConfig, PowerPolicy, Profile,
    SweepTable,
};
use wavefocus::scalar::to_f64;

/// Gradient errors above this fail the gradient check.
const GRADCHECK_THRESHOLD: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "wavefocus", version, about = "Stacked-metasurface beamfocusing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file applied on top of the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trials per sweep point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: Profile,
    /// Split the budget equally instead of water-filling.
    #[arg(long, global = true)]
    uniform_power: bool,
    /// Comma-separated layer counts for the sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Comma-separated user counts for `sweep-users`.
    #[arg(long, global = true, value_delimiter = ',')]
    users: Option<Vec<usize>>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sum rate and NMSE against the number of layers.
    SweepLayers,
    /// Sum rate and NMSE against the number of users.
    SweepUsers,
    /// Near-field against far-field channel, paired seeds.
    CompareField,
    /// Received-energy maps for the focusing layout.
    Heatmap,
    /// Analytic against finite-difference gradient.
    Gradcheck {
        /// Random instances per amplitude mode.
        #[arg(long, default_value_t = 25)]
        instances: usize,
        /// Scales the analytic gradient by (1 + x); for testing the check.
        #[arg(long, hide = true, default_value_t = 0.0)]
        corrupt_gradient: f64,
    },
}

fn build_config(c: &Common) -> wavefocus::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::profile(c.profile);
    if let Some(path) = &c.config {
        cfg = cfg.load(path)?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = c.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if c.uniform_power {
        cfg.power_policy = PowerPolicy::Uniform;
    }
    if let Some(l) = &c.layers {
        cfg.layer_list = l.clone();
    }
    if let Some(k) = &c.users {
        cfg.user_list = k.clone();
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(table: &SweepTable) {
    println!("{:<10} {:>3} {:>3} {:>12} {:>10} {:>12} {:>6}", "scheme", "K", "L", "sum_rate", "std", "nmse", "failed");
    for r in &table.summary {
        println!(
            "{:<10} {:>3} {:>3} {:>12.4} {:>10.4} {:>12.4e} {:>6}",
            r.scheme.label(),
            r.users,
            r.layers,
            r.mean_sum_rate,
            r.std_sum_rate,
            r.mean_nmse,
            r.failed
        );
    }
    for r in table.rows.iter().filter(|r| !r.is_ok()) {
        eprintln!("trial {} {} K={} L={} failed: {}", r.trial, r.scheme, r.users, r.layers, r.error.as_deref().unwrap_or(""));
    }
}

fn run(cli: Cli) -> wavefocus::Result<ExitCode> {
    let cfg = build_config(&cli.common)?;
    let dir = cfg.out_dir.clone();
    match cli.command {
        Command::SweepLayers => {
            let t = sweep_layers(&cfg)?;
            output::write(&dir, "sweep_layers.csv", &results_csv(&t.rows))?;
            output::write(&dir, "sweep_layers_summary.csv", &summary_csv(&t.summary))?;
            print_summary(&t);
        }
        Command::SweepUsers => {
            let t = sweep_users(&cfg)?;
            output::write(&dir, "sweep_users.csv", &results_csv(&t.rows))?;
            output::write(&dir, "sweep_users_summary.csv", &summary_csv(&t.summary))?;
            print_summary(&t);
        }
        Command::CompareField => {
            let t = compare_field(&cfg)?;
            output::write(&dir, "compare_field_near.csv", &results_csv(&t.near))?;
            output::write(&dir, "compare_field_far.csv", &results_csv(&t.far))?;
            output::write(&dir, "compare_field.csv", &comparison_csv(&t.comparison))?;
            println!("{:<10} {:>3} {:>12} {:>12} {:>8}", "scheme", "L", "near", "far", "ratio");
            for r in &t.comparison {
                println!(
                    "{:<10} {:>3} {:>12.4} {:>12.4} {:>8.4}",
                    r.scheme.label(),
                    r.layers,
                    r.near_sum_rate,
                    r.far_sum_rate,
                    r.ratio
                );
            }
        }
        Command::Heatmap => {
            for arm in emit_heatmap(&cfg)? {
                output::write(&dir, &format!("heatmap_{}.dat", arm.name), &heatmap_grid(&arm.heatmap))?;
                let focused: Vec<&str> = arm.dominance.iter().map(|d| if *d { "yes" } else { "no" }).collect();
                println!("{:<4} nmse {:.4e} focused per user: {}", arm.name, arm.nmse, focused.join(" "));
            }
        }
        Command::Gradcheck {
            instances,
            corrupt_gradient,
        } => {
            let report = gradcheck(&cfg, instances, corrupt_gradient)?;
            for (mode, err) in &report.per_mode {
                println!("{mode:<8} max relative error {:.3e}", to_f64(*err));
            }
            let ok = report.passed(GRADCHECK_THRESHOLD);
            println!("gradcheck {} (threshold {GRADCHECK_THRESHOLD:e})", if ok { "PASS" } else { "FAIL" });
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
