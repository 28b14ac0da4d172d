//! Forecast/observation data model, climatological standardization and
//! training-window selection.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Weather quantity carried by a margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[non_exhaustive]
pub enum Variable {
    /// Wind speed in m/s; nonnegative.
    WindSpeed,
    /// Temperature in °C.
    Temperature,
}

impl Variable {
    pub fn as_str(self) -> &'static str {
        match self {
            Variable::WindSpeed => "wind_speed",
            Variable::Temperature => "temperature",
        }
    }

    pub fn is_nonnegative(self) -> bool {
        matches!(self, Variable::WindSpeed)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wind_speed" | "wind" | "w" => Ok(Variable::WindSpeed),
            "temperature" | "temp" | "t" => Ok(Variable::Temperature),
            other => Err(Error::Schema(format!("unknown variable {other:?}"))),
        }
    }
}

/// One margin: a (variable, station, lead time) triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MarginIndex {
    pub variable: Variable,
    pub station: String,
    pub lead_time: u32,
}

impl MarginIndex {
    pub fn new(variable: Variable, station: impl Into<String>, lead_time: u32) -> Self {
        MarginIndex {
            variable,
            station: station.into(),
            lead_time,
        }
    }
}

impl fmt::Display for MarginIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}+{}h", self.variable, self.station, self.lead_time)
    }
}

/// Ordered list of margins shared by every forecast and observation of a dataset.
pub type MarginCatalog = Arc<[MarginIndex]>;

/// Build a catalog, rejecting duplicate margins.
pub fn margin_catalog(margins: Vec<MarginIndex>) -> Result<MarginCatalog> {
    if margins.is_empty() {
        return Err(Error::param("margin catalog is empty"));
    }
    let mut seen = HashSet::new();
    for m in &margins {
        if !seen.insert(m) {
            return Err(Error::Schema(format!("duplicate margin {m}")));
        }
    }
    Ok(margins.into())
}

fn check_values(catalog: &[MarginIndex], values: &[f64], what: &str) -> Result<()> {
    if values.len() != catalog.len() {
        return Err(Error::Schema(format!(
            "{what}: {} values for {} margins",
            values.len(),
            catalog.len()
        )));
    }
    for (v, m) in values.iter().zip(catalog) {
        if !v.is_finite() {
            return Err(Error::Schema(format!("{what}: non-finite value for {m}")));
        }
        if m.variable.is_nonnegative() && *v < 0.0 {
            return Err(Error::Schema(format!("{what}: negative value {v} for {m}")));
        }
    }
    Ok(())
}

/// An `M`-member ensemble forecast over `L` margins for one valid date.
///
/// `members[m][l]` is member `m` at margin `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    pub valid_date: NaiveDate,
    members: Vec<Vec<f64>>,
    catalog: MarginCatalog,
    pub exchangeable: bool,
}

impl EnsembleForecast {
    pub fn new(
        valid_date: NaiveDate,
        members: Vec<Vec<f64>>,
        catalog: MarginCatalog,
        exchangeable: bool,
    ) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Schema(format!(
                "ensemble on {valid_date} has {} members, at least 2 required",
                members.len()
            )));
        }
        for (i, row) in members.iter().enumerate() {
            check_values(&catalog, row, &format!("forecast {valid_date} member {}", i + 1))?;
        }
        Ok(EnsembleForecast {
            valid_date,
            members,
            catalog,
            exchangeable,
        })
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    pub fn catalog(&self) -> &MarginCatalog {
        &self.catalog
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn n_margins(&self) -> usize {
        self.catalog.len()
    }

    /// All member values of one margin.
    pub fn margin(&self, l: usize) -> Vec<f64> {
        self.members.iter().map(|row| row[l]).collect()
    }

    /// Members restricted to a subset of margins, in the given order.
    pub fn select(&self, margins: &[usize]) -> Vec<Vec<f64>> {
        self.members
            .iter()
            .map(|row| margins.iter().map(|&l| row[l]).collect())
            .collect()
    }
}

/// Verifying observation vector aligned with a margin catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub valid_date: NaiveDate,
    pub values: Vec<f64>,
}

impl Observation {
    pub fn new(valid_date: NaiveDate, values: Vec<f64>, catalog: &[MarginIndex]) -> Result<Self> {
        check_values(catalog, &values, &format!("observation {valid_date}"))?;
        Ok(Observation { valid_date, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub forecast: EnsembleForecast,
    pub observation: Observation,
}

/// Date-ordered forecast/observation pairs over one shared margin catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<Instance>,
    catalog: MarginCatalog,
}

impl Dataset {
    pub fn new(catalog: MarginCatalog, instances: Vec<Instance>) -> Result<Self> {
        for pair in instances.windows(2) {
            if pair[1].forecast.valid_date <= pair[0].forecast.valid_date {
                return Err(Error::Schema(format!(
                    "dates not strictly increasing at {}",
                    pair[1].forecast.valid_date
                )));
            }
        }
        for inst in &instances {
            if *inst.forecast.catalog != *catalog {
                return Err(Error::Schema(format!(
                    "forecast on {} uses a different margin catalog",
                    inst.forecast.valid_date
                )));
            }
            if inst.observation.valid_date != inst.forecast.valid_date {
                return Err(Error::Schema(format!(
                    "observation date {} paired with forecast date {}",
                    inst.observation.valid_date, inst.forecast.valid_date
                )));
            }
            check_values(&catalog, &inst.observation.values, "observation")?;
        }
        Ok(Dataset { instances, catalog })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn catalog(&self) -> &MarginCatalog {
        &self.catalog
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.instances.iter().map(|i| i.forecast.valid_date)
    }

    pub fn position(&self, margin: &MarginIndex) -> Option<usize> {
        self.catalog.iter().position(|m| m == margin)
    }
}

/// Per-margin climatological mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Climatology {
    catalog: MarginCatalog,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Climatology {
    pub fn new(catalog: MarginCatalog, mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.len() != catalog.len() || sd.len() != catalog.len() {
            return Err(Error::param("climatology length does not match catalog"));
        }
        if let Some(l) = sd.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::DegenerateClimatology(catalog[l].clone()));
        }
        Ok(Climatology { catalog, mean, sd })
    }

    /// Sample mean and standard deviation (denominator `n − 1`) of the
    /// given observations.
    pub fn from_observations<'a>(
        catalog: MarginCatalog,
        observations: impl IntoIterator<Item = &'a Observation>,
    ) -> Result<Self> {
        let rows: Vec<&[f64]> = observations.into_iter().map(|o| o.values.as_slice()).collect();
        if rows.is_empty() {
            return Err(Error::EmptyDataset("no observations for climatology".into()));
        }
        let n = rows.len() as f64;
        let l = catalog.len();
        let mut mean = vec![0.0; l];
        for row in &rows {
            for (acc, v) in mean.iter_mut().zip(row.iter()) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut ss = vec![0.0; l];
        for row in &rows {
            for k in 0..l {
                let d = row[k] - mean[k];
                ss[k] += d * d;
            }
        }
        let sd: Vec<f64> = if rows.len() < 2 {
            vec![0.0; l]
        } else {
            ss.iter().map(|s| (s / (n - 1.0)).sqrt()).collect()
        };
        Climatology::new(catalog, mean, sd)
    }

    pub fn catalog(&self) -> &MarginCatalog {
        &self.catalog
    }

    pub fn mean(&self, l: usize) -> f64 {
        self.mean[l]
    }

    pub fn sd(&self, l: usize) -> f64 {
        self.sd[l]
    }

    fn lookup(&self, margin: &MarginIndex) -> Result<usize> {
        self.catalog
            .iter()
            .position(|m| m == margin)
            .ok_or_else(|| Error::UnknownMargin(margin.clone()))
    }

    /// Standardize a whole row laid out in catalog order.
    pub fn standardize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(l, v)| (v - self.mean[l]) / self.sd[l])
            .collect()
    }

    /// Standardize a row whose entries are the catalog positions `margins`.
    pub fn standardize_subset(&self, row: &[f64], margins: &[usize]) -> Vec<f64> {
        row.iter()
            .zip(margins)
            .map(|(v, &l)| (v - self.mean[l]) / self.sd[l])
            .collect()
    }
}

/// Fit the climatology of all observations in the dataset.
pub fn fit_climatology(dataset: &Dataset) -> Result<Climatology> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("cannot fit climatology".into()));
    }
    Climatology::from_observations(
        dataset.catalog().clone(),
        dataset.instances().iter().map(|i| &i.observation),
    )
}

/// `(value − μ) / σ` for the given margin.
pub fn standardize(value: f64, margin: &MarginIndex, clim: &Climatology) -> Result<f64> {
    let l = clim.lookup(margin)?;
    Ok((value - clim.mean[l]) / clim.sd[l])
}

/// Inverse of [`standardize`].
pub fn destandardize(value: f64, margin: &MarginIndex, clim: &Climatology) -> Result<f64> {
    let l = clim.lookup(margin)?;
    Ok(value * clim.sd[l] + clim.mean[l])
}

/// The `window_days` most recent instances strictly before `target_date`.
///
/// The window counts available instances, so gaps in the record reach
/// further back instead of shrinking the training set.
pub fn training_window(dataset: &Dataset, target_date: NaiveDate, window_days: usize) -> Result<&[Instance]> {
    if window_days == 0 {
        return Err(Error::param("window_days must be at least 1"));
    }
    let end = dataset
        .instances
        .partition_point(|i| i.forecast.valid_date < target_date);
    if end < window_days {
        return Err(Error::InsufficientTraining {
            target: target_date,
            available: end,
            required: window_days,
        });
    }
    Ok(&dataset.instances[end - window_days..end])
}

/// Low-dimensional postprocessing method applied to one case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PostprocessorKind {
    NormalEmos,
    TruncatedNormalEmos,
    BivariateTruncatedNormalEmos,
}

impl PostprocessorKind {
    pub fn dimension(self) -> usize {
        match self {
            PostprocessorKind::BivariateTruncatedNormalEmos => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Case {
    /// Catalog positions of the case's margins.
    pub margins: Vec<usize>,
    pub kind: PostprocessorKind,
}

/// Disjoint cover of all margins by low-dimensional cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CasePartition {
    cases: Vec<Case>,
    n_margins: usize,
}

impl CasePartition {
    /// Validate a partition. Bivariate cases are reordered to
    /// (wind speed, temperature) whatever order they were listed in.
    pub fn new(mut cases: Vec<Case>, catalog: &[MarginIndex]) -> Result<Self> {
        let mut covered = vec![false; catalog.len()];
        for (c, case) in cases.iter_mut().enumerate() {
            if case.margins.len() != case.kind.dimension() {
                return Err(Error::Config(format!(
                    "case {c}: {:?} needs {} margins, got {}",
                    case.kind,
                    case.kind.dimension(),
                    case.margins.len()
                )));
            }
            for &l in &case.margins {
                let slot = covered
                    .get_mut(l)
                    .ok_or_else(|| Error::Config(format!("case {c}: margin position {l} out of range")))?;
                if *slot {
                    return Err(Error::Config(format!(
                        "margin {} belongs to more than one case",
                        catalog[l]
                    )));
                }
                *slot = true;
            }
            if case.kind == PostprocessorKind::BivariateTruncatedNormalEmos {
                let vars = (catalog[case.margins[0]].variable, catalog[case.margins[1]].variable);
                match vars {
                    (Variable::WindSpeed, Variable::Temperature) => {}
                    (Variable::Temperature, Variable::WindSpeed) => case.margins.swap(0, 1),
                    _ => {
                        return Err(Error::Config(format!(
                            "case {c}: bivariate EMOS needs one wind speed and one temperature margin"
                        )))
                    }
                }
            }
        }
        if let Some(l) = covered.iter().position(|c| !c) {
            return Err(Error::Config(format!("margin {} is not in any case", catalog[l])));
        }
        Ok(CasePartition {
            cases,
            n_margins: catalog.len(),
        })
    }

    /// One univariate case per margin: normal EMOS for temperature,
    /// truncated normal EMOS for wind speed.
    pub fn univariate(catalog: &[MarginIndex]) -> Result<Self> {
        let cases = catalog
            .iter()
            .enumerate()
            .map(|(l, m)| Case {
                margins: vec![l],
                kind: if m.variable.is_nonnegative() {
                    PostprocessorKind::TruncatedNormalEmos
                } else {
                    PostprocessorKind::NormalEmos
                },
            })
            .collect();
        CasePartition::new(cases, catalog)
    }

    /// One bivariate (wind speed, temperature) case per station and lead time.
    pub fn bivariate_by_station(catalog: &[MarginIndex]) -> Result<Self> {
        let mut cases = Vec::new();
        for (l, m) in catalog.iter().enumerate() {
            if m.variable != Variable::WindSpeed {
                continue;
            }
            let partner = catalog.iter().position(|o| {
                o.variable == Variable::Temperature && o.station == m.station && o.lead_time == m.lead_time
            });
            let Some(t) = partner else {
                return Err(Error::Config(format!("no temperature margin to pair with {m}")));
            };
            cases.push(Case {
                margins: vec![l, t],
                kind: PostprocessorKind::BivariateTruncatedNormalEmos,
            });
        }
        CasePartition::new(cases, catalog)
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn n_margins(&self) -> usize {
        self.n_margins
    }
}
