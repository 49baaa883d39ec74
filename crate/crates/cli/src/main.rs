use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eoe_core::data;
use eoe_core::estimators::write_samples_csv;
use eoe_core::harness::{self, DatasetSpec, ExperimentConfig};
use eoe_core::Error;

#[derive(Parser)]
#[command(name = "eoe", version, about = "Compare experiment clusterings under interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment config; the built-in desk-scale auction setup if omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of Monte-Carlo replications
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Output directory (defaults to the config's output_dir, else stdout only)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Exit with status 3 when a self-check of the report fails
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) the bid log and print its summary
    GenData,
    /// Build both clusterings and write them as unit/cluster TSV files
    Partition,
    /// Monte-Carlo runs of the direct cluster-randomized designs
    Simulate,
    /// Full comparison: direct designs plus the experiment of experiments
    Compare,
    /// Restreaming cut-ratio trajectories
    Figure2,
    /// Estimator distributions for three clustering comparisons
    Figure3,
}

enum Failure {
    Config(String),
    Runtime(String),
    Check(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(failed)) => {
            for f in failed {
                eprintln!("check failed: {f}");
            }
            ExitCode::from(3)
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => harness::load_config(path)?,
        None => harness::parse_config(harness::DEFAULT_CONFIG)?,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(r) = common.replications {
        if r < 2 {
            return Err(Failure::Config(format!("--replications must be at least 2, got {r}")));
        }
        config.replications = r;
    }
    if common.out.is_some() {
        config.output_dir.clone_from(&common.out);
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> Result<Option<&Path>, Failure> {
    match &config.output_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Some(dir))
        }
        None => Ok(None),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    let config = load(common)?;
    let dir = out_dir(&config)?;
    match cli.command {
        Command::GenData => {
            let dataset = harness::Dataset::load(&config.dataset, config.seed)?;
            let Some(records) = dataset.records.as_ref() else {
                return Err(Failure::Config(
                    "gen-data needs a synthetic or file dataset; planted graphs carry no bid log".into(),
                ));
            };
            if let Some(dir) = dir {
                data::write_records(BufWriter::new(File::create(dir.join("bids.tsv"))?), records)?;
            } else if matches!(config.dataset, DatasetSpec::Synthetic(_)) && common.format == Format::Csv {
                data::write_records(BufWriter::new(io::stdout().lock()), records)?;
                return Ok(());
            }
            let summary = data::summarize(records);
            if let Some(dir) = dir {
                fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
            }
            print_json(&summary)
        }
        Command::Partition => {
            let (_, built) = harness::build_clusterings(&config)?;
            for (i, b) in built.iter().enumerate() {
                if let Some(dir) = dir {
                    let path = dir.join(format!("clustering_{}.tsv", i + 1));
                    b.clustering.write_tsv(BufWriter::new(File::create(path)?))?;
                }
                let cut = b.cut_ratio.map_or("-".to_string(), |c| format!("{c:.4}"));
                eprintln!(
                    "clustering_{}: {} with {} clusters, cut ratio {cut}",
                    i + 1,
                    b.description,
                    b.clustering.n_clusters()
                );
            }
            if dir.is_none() {
                built[0].clustering.write_tsv(io::stdout().lock())?;
            }
            Ok(())
        }
        Command::Simulate => {
            let (report, arms) = harness::run_direct_simulation(&config)?;
            if let Some(dir) = dir {
                fs::write(dir.join("simulation.json"), serde_json::to_string_pretty(&report)? + "\n")?;
                write_samples_csv(BufWriter::new(File::create(dir.join("samples.csv"))?), &arms)?;
            }
            match common.format {
                Format::Json => print_json(&report),
                Format::Csv => Ok(write_samples_csv(io::stdout().lock(), &arms)?),
            }
        }
        Command::Compare => {
            let run = harness::run_comparison_pipeline(&config)?;
            if let Some(dir) = dir {
                run.write(dir)?;
            }
            match common.format {
                Format::Json => writeln!(io::stdout().lock(), "{}", run.report.to_json()?)?,
                Format::Csv => write_samples_csv(io::stdout().lock(), &run.arms)?,
            }
            let failed = run.report.failed_checks();
            if common.check && !failed.is_empty() {
                return Err(Failure::Check(failed));
            }
            Ok(())
        }
        Command::Figure2 => {
            let rows = harness::reproduce_figure2(&config)?;
            if let Some(dir) = dir {
                harness::write_figure2_csv(BufWriter::new(File::create(dir.join("figure2.csv"))?), &rows)?;
            }
            match common.format {
                Format::Json => print_json(&rows),
                Format::Csv => Ok(harness::write_figure2_csv(io::stdout().lock(), &rows)?),
            }
        }
        Command::Figure3 => {
            let panels = harness::reproduce_figure3(&config)?;
            if let Some(dir) = dir {
                harness::write_figure3_csv(BufWriter::new(File::create(dir.join("figure3.csv"))?), &panels)?;
            }
            let failed: Vec<String> = panels
                .iter()
                .flat_map(|p| p.report.failed_checks().into_iter().map(move |f| format!("{}: {f}", p.panel)))
                .collect();
            match common.format {
                Format::Json => {
                    let reports: Vec<_> = panels.iter().map(|p| (&p.panel, &p.report)).collect();
                    print_json(&reports)?;
                }
                Format::Csv => harness::write_figure3_csv(io::stdout().lock(), &panels)?,
            }
            if common.check && !failed.is_empty() {
                return Err(Failure::Check(failed));
            }
            Ok(())
        }
    }
}
