//! The `ldpr` command line.
//!
//! Exit status: 0 on success (and for `--help`/`--version`), 1 on a usage
//! error, 2 when data, configuration, fitting or scoring fails.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ldpr_core::io;
use ldpr_core::{Error, Result};

use crate::config::{DataSource, ExperimentConfig};
use crate::experiment::{self, Experiment, ExperimentReport};
use crate::synth::synth_generate;

#[derive(Debug, Parser)]
#[command(
    name = "ldpr",
    version,
    about = "Low-dimensional postprocessing with rank-based reordering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap; overrides the configuration.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
    /// Output directory; overrides the configuration's `output_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write forecasts.csv and observations.csv from the [synthetic] table.
    Synth(Common),
    /// Fit every test date and write univariate_params.csv and bivariate_params.csv.
    Fit(Common),
    /// Write postprocessed.csv with one ensemble kind for every test date.
    Postprocess {
        #[command(flatten)]
        common: Common,
        /// Ensemble name as in the experiment report, e.g. bivariate_ecc_sen.
        #[arg(long)]
        ensemble: String,
        /// Repetition whose random draws are used.
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Score an ensemble CSV against the configured observations.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Postprocessed-ensemble CSV as written by `postprocess`.
        #[arg(long, value_name = "FILE")]
        ensembles: PathBuf,
    },
    /// Run the full comparison and write the report files.
    Experiment(Common),
}

/// Parse `args`, run, and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(t) = common.threads {
        config.threads = Some(t as usize);
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn print_report(report: &ExperimentReport) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(
        out,
        "{:<28} {:>10} {:>10} {:>9} {:>9} {:>9}",
        "ensemble", "ES", "VS", "d_MR", "d_BDR", "d_AvR"
    );
    for e in &report.ensembles {
        let [mr, bd, av] = ldpr_core::scoring::HistogramKind::ALL.map(|k| e.reliability(k));
        let _ = writeln!(
            out,
            "{:<28} {:>10.4} {:>10.4} {:>9.3} {:>9.3} {:>9.3}",
            e.name, e.mean_es, e.mean_vs, mr, bd, av
        );
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(common) => {
            let config = load(&common)?;
            let DataSource::Synthetic(spec) = &config.source else {
                return Err(Error::Config(format!(
                    "{}: synth needs a [synthetic] table",
                    common.config.display()
                )));
            };
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.seed);
            let dataset = synth_generate(spec, &mut rng)?;
            io::write_forecasts(&dataset, create(&config.output_dir, "forecasts.csv")?)?;
            io::write_observations(&dataset, create(&config.output_dir, "observations.csv")?)?;
            log::info!("wrote {} days to {}", dataset.len(), config.output_dir.display());
        }
        Command::Fit(common) => {
            let config = load(&common)?;
            let dataset = experiment::load_dataset(&config)?;
            let exp = Experiment::new(&config, &dataset)?;
            let fits = experiment::fit_all(&exp, &dataset, config.threads)?;
            let catalog = dataset.catalog();
            let uni_cases = exp.univariate_plan().partition.cases();
            let biv_cases = exp.bivariate_plan().partition.cases();
            io::write_univariate_params(
                create(&config.output_dir, "univariate_params.csv")?,
                fits.iter().flat_map(|(date, f)| {
                    uni_cases
                        .iter()
                        .zip(experiment::univariate_params(f))
                        .map(move |(case, p)| (*date, &catalog[case.margins[0]], p))
                }),
            )?;
            io::write_bivariate_params(
                create(&config.output_dir, "bivariate_params.csv")?,
                fits.iter().flat_map(|(date, f)| {
                    biv_cases
                        .iter()
                        .zip(experiment::bivariate_params(f))
                        .map(move |(case, p)| (*date, catalog[case.margins[0]].station.as_str(), p))
                }),
            )?;
        }
        Command::Postprocess {
            common,
            ensemble,
            repetition,
        } => {
            let config = load(&common)?;
            let dataset = experiment::load_dataset(&config)?;
            let exp = Experiment::new(&config, &dataset)?;
            let k = exp.names().iter().position(|n| *n == ensemble).ok_or_else(|| {
                Error::Config(format!(
                    "unknown ensemble {ensemble:?}; available: {}",
                    exp.names().join(", ")
                ))
            })?;
            let fits = experiment::fit_all(&exp, &dataset, config.threads)?;
            let mut out = Vec::with_capacity(fits.len());
            for (date, f) in &fits {
                let idx = dataset.instances().partition_point(|i| i.forecast.valid_date < *date);
                match exp.ensembles(idx, f, repetition) {
                    Ok(mut ens) => out.push(ens.swap_remove(k)),
                    Err(e) => log::warn!("skipping {date}: {e}"),
                }
            }
            io::write_ensembles(
                create(&config.output_dir, "postprocessed.csv")?,
                out.iter().map(|e| (ensemble.as_str(), e)),
            )?;
        }
        Command::Verify { common, ensembles } => {
            let config = load(&common)?;
            let dataset = experiment::load_dataset(&config)?;
            let file = File::open(&ensembles)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", ensembles.display())))?;
            let label = ensembles.display().to_string();
            let series = io::read_ensembles(&label, Box::new(std::io::BufReader::new(file)), dataset.catalog())?;
            let report = experiment::verify_ensembles(&dataset, &series, config.seed)?;
            report.write(&config.output_dir)?;
            print_report(&report);
        }
        Command::Experiment(common) => {
            let config = load(&common)?;
            let report = experiment::run_experiment(&config)?;
            log::info!(
                "{} dates scored, {} skipped",
                report.scored_dates.len(),
                report.skipped.len()
            );
            print_report(&report);
        }
    }
    Ok(())
}
