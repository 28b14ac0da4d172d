//! End-to-end comparison of raw and postprocessed ensembles.
//!
//! For each test date the univariate and bivariate postprocessors are fitted
//! on the preceding `window_days` instances. Each repetition then builds the
//! reference ensembles from fresh samples and scores them against the
//! observation on standardized values.
//!
//! Ensembles, in report order:
//!
//! | name | construction |
//! |------|--------------|
//! | `raw` | the raw ensemble |
//! | `emos_<t>_<s>` | univariate EMOS per margin, reordered by template `t` (`ecc` or `ss`), sampling `s` |
//! | `bivariate_unordered` | bivariate EMOS per station, stations combined in sample order |
//! | `bivariate_<t>_<ranking>` | the same bivariate samples, reordered by template `t` under `ranking` |
//!
//! All bivariate ensembles of one repetition share one sample, so they differ
//! only in the reordering step.
//!
//! Randomness is keyed by `(seed, date, repetition, purpose)`, so results do
//! not depend on thread scheduling or on which other dates are processed.
//! A date on which any fit or sampling step fails is skipped for every
//! ensemble.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use ldpr_core::bvemos::{fit_bivariate_emos, BivariateEmosParams, BivariateFitConfig};
use ldpr_core::dataset::EnsembleForecast;
use ldpr_core::dataset::{
    fit_climatology, training_window, CasePartition, Climatology, Dataset, Observation, PostprocessorKind,
};
use ldpr_core::io::{self, ScoreRow};
use ldpr_core::ranking::RankingKind;
use ldpr_core::reorder::{
    assemble, build_template_ecc, build_template_schaake, draw_case_samples, reorder_cases, CaseFit, CasePlan,
    DependenceTemplate, Sampling,
};
use ldpr_core::scoring::{
    energy_score, observation_rank, reliability_index, variogram_score_05, HistogramKind, RankHistogram,
    VerificationRecord,
};
use ldpr_core::uvemos::{fit_univariate_emos, Family, FitConfig, UnivariateEmosParams};
use ldpr_core::{Error, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig, RankingName, SamplingName, TemplateKind};
use crate::synth::synth_generate;

/// Independent generator for one `(date, repetition, purpose)` triple.
pub fn keyed_rng(seed: u64, date: NaiveDate, rep: usize, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let words = [seed, date.num_days_from_ce() as u64, rep as u64, purpose];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

const TEMPLATE: u64 = 0;
const UNIVARIATE: u64 = 1;
const BIVARIATE: u64 = 2;
const HISTOGRAM: u64 = 3;
/// Ranking variant `k` uses purpose `RANKING + k`.
const RANKING: u64 = 16;

/// Load the configured dataset. Synthetic data are generated from `seed`.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.source {
        DataSource::Files(files) => {
            let ingested = io::ingest_dataset(&files.forecasts, &files.observations)?;
            if ingested.dropped_dates > 0 {
                log::warn!(
                    "{} dates without a complete forecast/observation pair were dropped",
                    ingested.dropped_dates
                );
            }
            Ok(ingested.dataset)
        }
        DataSource::Synthetic(spec) => synth_generate(spec, &mut ChaCha8Rng::seed_from_u64(config.seed)),
    }
}

/// Fitted postprocessors for one test date, in case order.
#[derive(Debug, Clone, PartialEq)]
pub struct DateFits {
    pub univariate: Vec<CaseFit>,
    pub bivariate: Vec<CaseFit>,
}

/// A configured experiment over one dataset.
#[derive(Debug)]
pub struct Experiment<'a> {
    config: &'a ExperimentConfig,
    dataset: &'a Dataset,
    observations: Vec<Observation>,
    climatology: Climatology,
    univariate: CasePlan,
    bivariate: CasePlan,
    variants: Vec<CasePlan>,
    names: Vec<String>,
}

impl<'a> Experiment<'a> {
    pub fn new(config: &'a ExperimentConfig, dataset: &'a Dataset) -> Result<Self> {
        config.validate()?;
        let first = dataset
            .instances()
            .first()
            .ok_or_else(|| Error::EmptyDataset("experiment needs at least one instance".into()))?;
        let m = first.forecast.n_members();
        if dataset.instances().iter().any(|i| i.forecast.n_members() != m) {
            return Err(Error::Schema("raw ensemble size varies between dates".into()));
        }
        let n = config.ensemble_size.unwrap_or(m);
        if config.template == TemplateKind::Ecc && n != m {
            return Err(Error::Config(format!(
                "an ECC template needs ensemble_size equal to the raw size {m}, got {n}"
            )));
        }
        let climatology = fit_climatology(dataset)?;
        let catalog = dataset.catalog();
        let univariate = CasePlan::new(
            CasePartition::univariate(catalog)?,
            RankingKind::MultPr,
            config.univariate_sampling.into(),
            n,
        )?
        .with_climatology(climatology.clone());
        let bivariate = CasePlan::new(
            CasePartition::bivariate_by_station(catalog)?,
            RankingKind::MultPr,
            Sampling::R,
            n,
        )?
        .with_climatology(climatology.clone());
        let variants = config
            .rankings
            .iter()
            .map(|&r| CasePlan {
                ranking: r.into(),
                ..bivariate.clone()
            })
            .collect();

        let t = config.template.short_name();
        let s = match config.univariate_sampling {
            SamplingName::Q => "q",
            SamplingName::R => "r",
        };
        let mut names = vec![
            "raw".to_string(),
            format!("emos_{t}_{s}"),
            "bivariate_unordered".to_string(),
        ];
        names.extend(
            config
                .rankings
                .iter()
                .map(|r| format!("bivariate_{t}_{}", ranking_name(*r))),
        );

        Ok(Experiment {
            config,
            dataset,
            observations: dataset.instances().iter().map(|i| i.observation.clone()).collect(),
            climatology,
            univariate,
            bivariate,
            variants,
            names,
        })
    }

    /// Ensemble names in report order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn univariate_plan(&self) -> &CasePlan {
        &self.univariate
    }

    pub fn bivariate_plan(&self) -> &CasePlan {
        &self.bivariate
    }

    pub fn climatology(&self) -> &Climatology {
        &self.climatology
    }

    /// Indices of the instances with a full training window before them.
    pub fn test_indices(&self) -> std::ops::Range<usize> {
        self.config.window_days.min(self.dataset.len())..self.dataset.len()
    }

    /// Fit every case for the instance at `idx`.
    pub fn fit_date(&self, idx: usize) -> Result<DateFits> {
        let inst = &self.dataset.instances()[idx];
        let date = inst.forecast.valid_date;
        let window = training_window(self.dataset, date, self.config.window_days)?;
        let exchangeable = inst.forecast.exchangeable;
        let mut uni_config = FitConfig::default();
        uni_config.optimizer.max_iterations = self.config.univariate_iterations;
        let mut biv_config = BivariateFitConfig::default();
        biv_config.optimizer.max_iterations = self.config.bivariate_iterations;

        let univariate = self
            .univariate
            .partition
            .cases()
            .iter()
            .map(|case| {
                let l = case.margins[0];
                let family = match case.kind {
                    PostprocessorKind::TruncatedNormalEmos => Family::TruncatedNormal,
                    _ => Family::Normal,
                };
                let training: Vec<_> = window
                    .iter()
                    .map(|i| (i.forecast.margin(l), i.observation.values[l]))
                    .collect();
                let fit = fit_univariate_emos(&training, family, exchangeable, &uni_config)?;
                Ok(CaseFit::Univariate(fit.params))
            })
            .collect::<Result<Vec<_>>>()?;

        let bivariate = self
            .bivariate
            .partition
            .cases()
            .iter()
            .map(|case| {
                let (w, t) = (case.margins[0], case.margins[1]);
                let training: Vec<_> = window
                    .iter()
                    .map(|i| {
                        let members = i.forecast.members().iter().map(|r| [r[w], r[t]]).collect();
                        (members, [i.observation.values[w], i.observation.values[t]])
                    })
                    .collect();
                let fit = fit_bivariate_emos(&training, exchangeable, &biv_config)?;
                Ok(CaseFit::Bivariate(fit.params))
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(DateFits { univariate, bivariate })
    }

    fn template(&self, idx: usize, rep: usize) -> Result<DependenceTemplate> {
        let inst = &self.dataset.instances()[idx];
        match self.config.template {
            TemplateKind::Ecc => Ok(build_template_ecc(&inst.forecast)),
            TemplateKind::Schaake => {
                let mut rng = keyed_rng(self.config.seed, inst.forecast.valid_date, rep, TEMPLATE);
                build_template_schaake(&self.observations[..idx], self.univariate.n, &mut rng)
            }
        }
    }

    /// The reference ensembles of repetition `rep` at instance `idx`, in
    /// [`Experiment::names`] order.
    pub fn ensembles(&self, idx: usize, fits: &DateFits, rep: usize) -> Result<Vec<EnsembleForecast>> {
        let raw = &self.dataset.instances()[idx].forecast;
        let date = raw.valid_date;
        let seed = self.config.seed;
        let template = self.template(idx, rep)?;
        let mut out = Vec::with_capacity(self.names.len());
        out.push(raw.clone());

        let master = keyed_rng(seed, date, rep, UNIVARIATE).next_u64();
        let samples = draw_case_samples(raw, &self.univariate, &fits.univariate, master)?;
        let reordered = reorder_cases(&samples, &template, &self.univariate, master)?;
        out.push(assemble(raw, &self.univariate.partition, &reordered)?);

        let master = keyed_rng(seed, date, rep, BIVARIATE).next_u64();
        let samples = draw_case_samples(raw, &self.bivariate, &fits.bivariate, master)?;
        out.push(assemble(raw, &self.bivariate.partition, &samples)?);
        for (k, plan) in self.variants.iter().enumerate() {
            let master = keyed_rng(seed, date, rep, RANKING + k as u64).next_u64();
            let reordered = reorder_cases(&samples, &template, plan, master)?;
            out.push(assemble(raw, &plan.partition, &reordered)?);
        }
        Ok(out)
    }

    fn score_date(&self, idx: usize) -> Result<DateOutcome> {
        let fits = self.fit_date(idx)?;
        let inst = &self.dataset.instances()[idx];
        let obs = self.climatology.standardize_row(&inst.observation.values);
        let k = self.names.len();
        let mut outcome = DateOutcome {
            es: vec![0.0; k],
            vs: vec![0.0; k],
            histograms: Vec::with_capacity(k),
        };
        for rep in 0..self.config.repetitions {
            let ensembles = self.ensembles(idx, &fits, rep)?;
            let mut rng = keyed_rng(self.config.seed, inst.forecast.valid_date, rep, HISTOGRAM);
            for (e, ens) in ensembles.iter().enumerate() {
                let rows = ens
                    .members()
                    .iter()
                    .map(|r| self.climatology.standardize_row(r))
                    .collect();
                let record = VerificationRecord::new(rows, obs.clone())?;
                outcome.es[e] += energy_score(&record);
                outcome.vs[e] += variogram_score_05(&record);
                if outcome.histograms.len() == e {
                    outcome
                        .histograms
                        .push(HistogramKind::ALL.map(|kind| RankHistogram::new(kind, record.n_members())));
                }
                for h in outcome.histograms[e].iter_mut() {
                    h.add(observation_rank(&record, h.kind(), &mut rng));
                }
            }
        }
        Ok(outcome)
    }

    /// Score every test date. Dates run in parallel on `threads` workers
    /// (all cores when `None`); the result does not depend on the count.
    pub fn run(&self, threads: Option<usize>) -> Result<ExperimentReport> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        let dates: Vec<usize> = self.test_indices().collect();
        let outcomes: Vec<Result<DateOutcome>> =
            pool.install(|| dates.par_iter().map(|&idx| self.score_date(idx)).collect());

        let k = self.names.len();
        let mut es = vec![0.0; k];
        let mut vs = vec![0.0; k];
        let mut histograms: Option<Vec<[RankHistogram; 3]>> = None;
        let mut scored = Vec::new();
        let mut skipped = Vec::new();
        for (&idx, outcome) in dates.iter().zip(outcomes) {
            let date = self.dataset.instances()[idx].forecast.valid_date;
            match outcome {
                Ok(o) => {
                    for e in 0..k {
                        es[e] += o.es[e];
                        vs[e] += o.vs[e];
                    }
                    match histograms.as_mut() {
                        None => histograms = Some(o.histograms),
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(&o.histograms) {
                                for (ha, hb) in a.iter_mut().zip(b) {
                                    ha.merge(hb)?;
                                }
                            }
                        }
                    }
                    scored.push(date);
                }
                Err(err) => {
                    log::warn!("skipping {date}: {err}");
                    skipped.push((date, err.to_string()));
                }
            }
        }
        let Some(histograms) = histograms else {
            return Err(Error::EmptyDataset(format!(
                "no scoreable test dates ({} skipped, window {} days, {} instances)",
                skipped.len(),
                self.config.window_days,
                self.dataset.len()
            )));
        };
        let records = (scored.len() * self.config.repetitions) as u64;
        let ensembles = self
            .names
            .iter()
            .zip(histograms)
            .enumerate()
            .map(|(e, (name, histograms))| EnsembleSummary {
                name: name.clone(),
                mean_es: es[e] / records as f64,
                mean_vs: vs[e] / records as f64,
                records,
                histograms,
            })
            .collect();
        Ok(ExperimentReport {
            ensembles,
            scored_dates: scored,
            skipped,
        })
    }
}

fn ranking_name(r: RankingName) -> &'static str {
    RankingKind::from(r).name()
}

#[derive(Debug)]
struct DateOutcome {
    es: Vec<f64>,
    vs: Vec<f64>,
    histograms: Vec<[RankHistogram; 3]>,
}

/// Aggregated scores of one ensemble over every scored `(date, repetition)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub name: String,
    pub mean_es: f64,
    pub mean_vs: f64,
    pub records: u64,
    /// Multivariate, band-depth and average rank histograms.
    pub histograms: [RankHistogram; 3],
}

impl EnsembleSummary {
    pub fn histogram(&self, kind: HistogramKind) -> &RankHistogram {
        self.histograms
            .iter()
            .find(|h| h.kind() == kind)
            .expect("all kinds present")
    }

    pub fn reliability(&self, kind: HistogramKind) -> f64 {
        reliability_index(self.histogram(kind)).expect("histograms are non-empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub ensembles: Vec<EnsembleSummary>,
    pub scored_dates: Vec<NaiveDate>,
    pub skipped: Vec<(NaiveDate, String)>,
}

pub fn reliability_metric(kind: HistogramKind) -> &'static str {
    match kind {
        HistogramKind::Multivariate => "delta_mr",
        HistogramKind::BandDepth => "delta_bdr",
        HistogramKind::Average => "delta_avr",
    }
}

impl ExperimentReport {
    pub fn ensemble(&self, name: &str) -> Option<&EnsembleSummary> {
        self.ensembles.iter().find(|e| e.name == name)
    }

    /// Mean energy and variogram scores plus the record count.
    pub fn score_rows(&self) -> Vec<ScoreRow> {
        let row = |e: &EnsembleSummary, metric: &str, value: f64| ScoreRow {
            ensemble_name: e.name.clone(),
            metric: metric.into(),
            value,
        };
        self.ensembles
            .iter()
            .flat_map(|e| {
                [
                    row(e, "es", e.mean_es),
                    row(e, "vs", e.mean_vs),
                    row(e, "n_records", e.records as f64),
                ]
            })
            .collect()
    }

    pub fn reliability_rows(&self) -> Vec<ScoreRow> {
        self.ensembles
            .iter()
            .flat_map(|e| {
                HistogramKind::ALL.map(|kind| ScoreRow {
                    ensemble_name: e.name.clone(),
                    metric: reliability_metric(kind).into(),
                    value: e.reliability(kind),
                })
            })
            .collect()
    }

    /// Write `scores.csv`, `reliability.csv`, `skipped.csv` and one
    /// `histogram_<ensemble>_<kind>.csv` per ensemble and histogram kind.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        io::write_score_report(&self.score_rows(), create("scores.csv")?)?;
        io::write_score_report(&self.reliability_rows(), create("reliability.csv")?)?;
        let mut out = csv::Writer::from_writer(create("skipped.csv")?);
        out.write_record(["date", "reason"]).map_err(Error::from)?;
        for (date, reason) in &self.skipped {
            out.write_record([date.to_string().as_str(), reason])
                .map_err(Error::from)?;
        }
        out.flush()?;
        for e in &self.ensembles {
            for h in &e.histograms {
                io::write_histogram(h, create(&format!("histogram_{}_{}.csv", e.name, h.kind().as_str()))?)?;
            }
        }
        Ok(())
    }
}

/// Load data, run, and write the report into the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let dataset = load_dataset(config)?;
    let experiment = Experiment::new(config, &dataset)?;
    let report = experiment.run(config.threads)?;
    report.write(&config.output_dir)?;
    Ok(report)
}

/// Score named ensemble series against the observations in `dataset`,
/// standardized by its full climatology. Every forecast date must have an
/// observation.
pub fn verify_ensembles(
    dataset: &Dataset,
    ensembles: &BTreeMap<String, Vec<EnsembleForecast>>,
    seed: u64,
) -> Result<ExperimentReport> {
    let climatology = fit_climatology(dataset)?;
    let by_date: BTreeMap<NaiveDate, &Observation> = dataset
        .instances()
        .iter()
        .map(|i| (i.observation.valid_date, &i.observation))
        .collect();
    let mut dates = BTreeSet::new();
    let mut summaries = Vec::with_capacity(ensembles.len());
    for (name, series) in ensembles {
        let mut es = 0.0;
        let mut vs = 0.0;
        let mut histograms: Option<[RankHistogram; 3]> = None;
        for ens in series {
            let date = ens.valid_date;
            let obs = by_date
                .get(&date)
                .ok_or_else(|| Error::Schema(format!("ensemble {name:?}: no observation for {date}")))?;
            let rows = ens.members().iter().map(|r| climatology.standardize_row(r)).collect();
            let record = VerificationRecord::new(rows, climatology.standardize_row(&obs.values))?;
            es += energy_score(&record);
            vs += variogram_score_05(&record);
            let hs =
                histograms.get_or_insert_with(|| HistogramKind::ALL.map(|k| RankHistogram::new(k, record.n_members())));
            let mut rng = keyed_rng(seed, date, 0, HISTOGRAM);
            for h in hs.iter_mut() {
                if h.n_members() != record.n_members() {
                    return Err(Error::Aggregation(format!("ensemble {name:?} changes size on {date}")));
                }
                h.add(observation_rank(&record, h.kind(), &mut rng));
            }
            dates.insert(date);
        }
        let histograms = histograms.ok_or_else(|| Error::EmptyDataset(format!("ensemble {name:?} has no dates")))?;
        let records = series.len() as u64;
        summaries.push(EnsembleSummary {
            name: name.clone(),
            mean_es: es / records as f64,
            mean_vs: vs / records as f64,
            records,
            histograms,
        });
    }
    if summaries.is_empty() {
        return Err(Error::EmptyDataset("no ensembles to verify".into()));
    }
    Ok(ExperimentReport {
        ensembles: summaries,
        scored_dates: dates.into_iter().collect(),
        skipped: Vec::new(),
    })
}

/// Parameter fits for every test date; failed dates are logged and left out.
pub fn fit_all(
    experiment: &Experiment<'_>,
    dataset: &Dataset,
    threads: Option<usize>,
) -> Result<Vec<(NaiveDate, DateFits)>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let idx: Vec<usize> = experiment.test_indices().collect();
    let fits: Vec<Result<DateFits>> = pool.install(|| idx.par_iter().map(|&i| experiment.fit_date(i)).collect());
    Ok(idx
        .iter()
        .zip(fits)
        .filter_map(|(&i, f)| {
            let date = dataset.instances()[i].forecast.valid_date;
            match f {
                Ok(f) => Some((date, f)),
                Err(e) => {
                    log::warn!("no fit for {date}: {e}");
                    None
                }
            }
        })
        .collect())
}

/// Univariate parameters of `fits`, keyed by case.
pub fn univariate_params(fits: &DateFits) -> impl Iterator<Item = &UnivariateEmosParams> {
    fits.univariate.iter().filter_map(|f| match f {
        CaseFit::Univariate(p) => Some(p),
        CaseFit::Bivariate(_) => None,
    })
}

pub fn bivariate_params(fits: &DateFits) -> impl Iterator<Item = &BivariateEmosParams> {
    fits.bivariate.iter().filter_map(|f| match f {
        CaseFit::Bivariate(p) => Some(p),
        CaseFit::Univariate(_) => None,
    })
}
