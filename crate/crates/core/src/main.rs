use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cellfree::harness::{
    plot_series, read_rows, render_svg, run_experiment, sweep, write_rows_to_path,
    ExperimentConfig, SchemeList, SweepAxis,
};
use cellfree::Result;

#[derive(Parser)]
#[command(
    name = "cellfree",
    version,
    about = "Cell-free massive MIMO downlink PZF / dual-decomposition simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo trials of one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated schemes: pzf-dual, pzf-centralized, pinv-epa.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat an experiment over values of one parameter with shared seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// cluster_size, csi_size or iterations.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render mean sum-SE curves of a result CSV as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(config: &std::path::Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(config)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            trials,
            scheme,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = scheme {
                cfg.scheme = s.parse::<SchemeList>()?;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            let result = run_experiment(&cfg)?;
            write_rows_to_path(&cfg.output, &result.rows)?;
            for s in &result.summaries {
                println!("{s}");
            }
            let o = &result.overhead;
            println!(
                "fronthaul per AP: distributed {:.0} bit, centralized {:.0} bit, reduction {:.1}% (K_bar = {:.3})",
                o.distributed_bits,
                o.centralized_bits,
                100.0 * o.reduction,
                o.mean_served
            );
            if result.aborted > 0 {
                println!("aborted trials: {}", result.aborted);
            }
            println!("wrote {}", cfg.output.display());
        }
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => {
            let cfg = load(&config)?;
            let axis: SweepAxis = axis.parse()?;
            let result = sweep(&cfg, axis, &values)?;
            let path = out.unwrap_or_else(|| cfg.output.clone());
            write_rows_to_path(&path, &result.rows())?;
            for (v, point) in &result.points {
                for s in &point.summaries {
                    println!("value={v:<4} {s}");
                }
            }
            for (v, why) in &result.skipped {
                println!("value={v:<4} skipped: {why}");
            }
            println!("wrote {}", path.display());
        }
        Command::Plot { input, out } => {
            let rows = read_rows(std::fs::File::open(&input)?)?;
            let (label, series) = plot_series(&rows);
            std::fs::write(&out, render_svg(&label, &series))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
