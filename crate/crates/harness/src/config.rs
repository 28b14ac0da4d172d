//! Experiment configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//! window_days = 50          # training window, at least 10
//! repetitions = 200         # samples per test date, at least 1
//! output_dir = "results"    # relative to this file
//! threads = 4               # optional worker cap
//! template = "ecc"          # or "schaake"
//! univariate_sampling = "r" # or "q"
//! rankings = ["multpr", "avpr", "sen"]
//! ensemble_size = 50        # optional; Schaake templates only
//! univariate_iterations = 2000   # optimizer budgets per fit
//! bivariate_iterations = 20000
//!
//! [data]                    # either this table ...
//! forecasts = "forecasts.csv"
//! observations = "observations.csv"
//!
//! [synthetic]               # ... or this one (fields of SyntheticSpec)
//! stations = 3
//! dispersion = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use ldpr_core::ranking::RankingKind;
use ldpr_core::reorder::Sampling;
use ldpr_core::{Error, Result};
use serde::Deserialize;

use crate::synth::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Ecc,
    Schaake,
}

impl TemplateKind {
    pub fn short_name(self) -> &'static str {
        match self {
            TemplateKind::Ecc => "ecc",
            TemplateKind::Schaake => "ss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingName {
    Q,
    R,
}

impl From<SamplingName> for Sampling {
    fn from(s: SamplingName) -> Sampling {
        match s {
            SamplingName::Q => Sampling::Q,
            SamplingName::R => Sampling::R,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingName {
    MultPr,
    AvPr,
    Sen,
    BandDepth,
}

impl From<RankingName> for RankingKind {
    fn from(r: RankingName) -> RankingKind {
        match r {
            RankingName::MultPr => RankingKind::MultPr,
            RankingName::AvPr => RankingKind::AvPr,
            RankingName::Sen => RankingKind::SEN,
            RankingName::BandDepth => RankingKind::BandDepth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub forecasts: PathBuf,
    pub observations: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files(DataFiles),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub window_days: usize,
    pub repetitions: usize,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub template: TemplateKind,
    pub univariate_sampling: SamplingName,
    /// Bivariate ECC variants, one output ensemble each.
    pub rankings: Vec<RankingName>,
    /// Output ensemble size; `None` means the raw ensemble size.
    pub ensemble_size: Option<usize>,
    /// Nelder–Mead iteration budget of each univariate fit.
    pub univariate_iterations: usize,
    /// Nelder–Mead iteration budget of each bivariate fit.
    pub bivariate_iterations: usize,
    pub source: DataSource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_window")]
    window_days: usize,
    #[serde(default = "default_repetitions")]
    repetitions: usize,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    threads: Option<usize>,
    #[serde(default = "default_template")]
    template: TemplateKind,
    #[serde(default = "default_sampling")]
    univariate_sampling: SamplingName,
    #[serde(default = "default_rankings")]
    rankings: Vec<RankingName>,
    ensemble_size: Option<usize>,
    #[serde(default = "default_univariate_iterations")]
    univariate_iterations: usize,
    #[serde(default = "default_bivariate_iterations")]
    bivariate_iterations: usize,
    data: Option<DataFiles>,
    synthetic: Option<SyntheticSpec>,
}

fn default_window() -> usize {
    50
}
fn default_repetitions() -> usize {
    200
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_template() -> TemplateKind {
    TemplateKind::Ecc
}
fn default_sampling() -> SamplingName {
    SamplingName::R
}
fn default_univariate_iterations() -> usize {
    2000
}
fn default_bivariate_iterations() -> usize {
    20000
}
fn default_rankings() -> Vec<RankingName> {
    vec![RankingName::MultPr, RankingName::AvPr, RankingName::Sen]
}

impl ExperimentConfig {
    /// Configuration with defaults around the given data source.
    pub fn new(source: DataSource) -> Self {
        ExperimentConfig {
            seed: 0,
            window_days: default_window(),
            repetitions: default_repetitions(),
            output_dir: default_output(),
            threads: None,
            template: default_template(),
            univariate_sampling: default_sampling(),
            rankings: default_rankings(),
            ensemble_size: None,
            univariate_iterations: default_univariate_iterations(),
            bivariate_iterations: default_bivariate_iterations(),
            source,
        }
    }

    /// Parse TOML text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let source = match (raw.data, raw.synthetic) {
            (Some(files), None) => DataSource::Files(DataFiles {
                forecasts: base.join(files.forecasts),
                observations: base.join(files.observations),
            }),
            (None, Some(spec)) => DataSource::Synthetic(spec),
            _ => {
                return Err(Error::Config(
                    "exactly one of the [data] and [synthetic] tables is required".into(),
                ))
            }
        };
        let config = ExperimentConfig {
            seed: raw.seed,
            window_days: raw.window_days,
            repetitions: raw.repetitions,
            output_dir: base.join(raw.output_dir),
            threads: raw.threads,
            template: raw.template,
            univariate_sampling: raw.univariate_sampling,
            rankings: raw.rankings,
            ensemble_size: raw.ensemble_size,
            univariate_iterations: raw.univariate_iterations,
            bivariate_iterations: raw.bivariate_iterations,
            source,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::parse(&text, base).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_days < 10 {
            return Err(Error::Config(format!(
                "window_days must be at least 10, got {}",
                self.window_days
            )));
        }
        if self.repetitions < 1 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.univariate_iterations == 0 || self.bivariate_iterations == 0 {
            return Err(Error::Config("optimizer iteration budgets must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.ensemble_size.is_some_and(|n| n < 2) {
            return Err(Error::Config("ensemble_size must be at least 2".into()));
        }
        for (i, r) in self.rankings.iter().enumerate() {
            if self.rankings[..i].contains(r) {
                return Err(Error::Config(format!("ranking {r:?} listed twice")));
            }
        }
        if let DataSource::Synthetic(spec) = &self.source {
            spec.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_relative_paths() {
        let c = ExperimentConfig::parse(
            "[data]\nforecasts = \"f.csv\"\nobservations = \"/abs/o.csv\"\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(c.window_days, 50);
        assert_eq!(c.repetitions, 200);
        assert_eq!(c.template, TemplateKind::Ecc);
        assert_eq!(c.rankings, default_rankings());
        assert_eq!(c.output_dir, Path::new("/cfg/results"));
        let DataSource::Files(files) = c.source else {
            panic!("expected files")
        };
        assert_eq!(files.forecasts, Path::new("/cfg/f.csv"));
        assert_eq!(files.observations, Path::new("/abs/o.csv"));
    }

    #[test]
    fn synthetic_section() {
        let c = ExperimentConfig::parse(
            "seed = 3\ntemplate = \"schaake\"\nrankings = [\"sen\", \"banddepth\"]\n[synthetic]\nstations = 2\ndispersion = 0.5\nbias = [1.0, 0.0, 1.0, 0.0]\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.rankings, vec![RankingName::Sen, RankingName::BandDepth]);
        let DataSource::Synthetic(spec) = c.source else {
            panic!("expected synthetic")
        };
        assert_eq!(spec.stations, 2);
        assert_eq!(spec.members, 50);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        for text in [
            "window_days = 9\n[synthetic]\n",
            "repetitions = 0\n[synthetic]\n",
            "seed = 1\n",
            "[synthetic]\n[data]\nforecasts = \"a\"\nobservations = \"b\"\n",
            "unknown_key = 1\n[synthetic]\n",
            "rankings = [\"nope\"]\n[synthetic]\n",
            "rankings = [\"sen\", \"sen\"]\n[synthetic]\n",
            "[synthetic]\ndispersion = -1.0\n",
        ] {
            assert!(
                matches!(ExperimentConfig::parse(text, base), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn missing_file_names_path() {
        let err = ExperimentConfig::from_file(Path::new("/no/such/dir/exp.toml")).unwrap_err();
        assert!(err.to_string().contains("/no/such/dir/exp.toml"));
    }
}
