use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dynsimplex::config::{ConfigError, ExperimentConfig};
use dynsimplex::experiment::{
    read_metrics_csv, run_matrix, summarize, sweep, write_history, write_summary_csv, write_sweep_csv,
    ExperimentError, SweepParam,
};

#[derive(Parser)]
#[command(name = "dynsimplex", version, about = "Run controller-switching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment matrix described by a config file.
    Run {
        config: PathBuf,
        /// worker threads
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// output directory (overrides `output_dir`)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print per-cell statistics of a metrics CSV.
    Summarize { csv: PathBuf },
    /// Vary parameters over a grid; repeat --param/--values pairs.
    Sweep {
        config: PathBuf,
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        /// comma-separated values for the matching --param
        #[arg(long = "values", required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the generated driving history as a lookup-table CSV.
    Lut {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_grid(params: &[String], values: &[String]) -> Result<Vec<(SweepParam, Vec<f64>)>, ConfigError> {
    if params.len() != values.len() {
        return Err(ConfigError::Invalid(format!(
            "{} --param flags but {} --values flags",
            params.len(),
            values.len()
        )));
    }
    params
        .iter()
        .zip(values)
        .map(|(p, vs)| {
            let vals = vs
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| ConfigError::Invalid(format!("bad value `{v}` for {p}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((p.parse()?, vals))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run { config, jobs, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_matrix(&cfg, jobs.max(1), out.as_deref())?;
            log::info!("{} episodes", report.episodes);
            for f in &report.metrics_files {
                println!("{}", f.display());
            }
            println!("{}", report.summary_file.display());
            if let Some(t) = &report.timing_file {
                println!("{}", t.display());
            }
        }
        Command::Summarize { csv } => {
            let file = fs::File::open(&csv)?;
            let rows = summarize(&read_metrics_csv(file)?)?;
            let tagged: Vec<_> = rows.into_iter().map(|r| (None, r)).collect();
            write_summary_csv(&tagged, std::io::stdout().lock())?;
        }
        Command::Sweep {
            config,
            params,
            values,
            jobs,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let grid = parse_grid(&params, &values)?;
            let rows = sweep(&cfg, &grid, jobs.max(1))?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            fs::create_dir_all(&dir)?;
            let path = dir.join("sweep.csv");
            let names: Vec<SweepParam> = grid.iter().map(|(p, _)| *p).collect();
            write_sweep_csv(&names, &rows, fs::File::create(&path)?)?;
            println!("{}", path.display());
        }
        Command::Lut { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let n = write_history(&cfg, std::io::BufWriter::new(fs::File::create(&out)?))?;
            log::info!("{n} records");
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
