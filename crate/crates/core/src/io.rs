//! CSV formats: forecasts, observations, postprocessed ensembles, rank
//! histograms, score reports and fitted-parameter dumps.
//!
//! All writers are canonical: rows are emitted in date, catalog and member
//! order and floats use the shortest representation that round-trips, so
//! reading a file back and writing it again reproduces it byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use csv::StringRecord;

use crate::bvemos::BivariateEmosParams;
use crate::dataset::{
    margin_catalog, Dataset, EnsembleForecast, Instance, MarginCatalog, MarginIndex, Observation, Variable,
};
use crate::error::{Error, Result};
use crate::ranking::RankResult;
use crate::scoring::RankHistogram;
use crate::uvemos::UnivariateEmosParams;

pub const FORECAST_HEADER: [&str; 6] = ["date", "station", "variable", "lead_hours", "member", "value"];
pub const OBSERVATION_HEADER: [&str; 5] = ["date", "station", "variable", "lead_hours", "value"];

/// Result of [`ingest_dataset`].
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Dates present in either file that lacked a complete forecast or a
    /// complete observation.
    pub dropped_dates: usize,
}

struct Reader<'a> {
    label: &'a str,
    inner: csv::Reader<Box<dyn Read + 'a>>,
}

impl<'a> Reader<'a> {
    fn new(label: &'a str, source: Box<dyn Read + 'a>, header: &[&str]) -> Result<Self> {
        let mut inner = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let found: Vec<String> = inner.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if found != header {
            return Err(Error::Parse {
                path: label.to_string(),
                line: 1,
                message: format!("expected header {:?}, found {:?}", header.join(","), found.join(",")),
            });
        }
        Ok(Reader { label, inner })
    }

    fn rows(&mut self) -> Result<Vec<(u64, StringRecord)>> {
        let mut rows = Vec::new();
        let mut record = StringRecord::new();
        loop {
            match self.inner.read_record(&mut record) {
                Ok(true) => {
                    let line = record.position().map_or(0, |p| p.line());
                    rows.push((line, record.clone()));
                }
                Ok(false) => return Ok(rows),
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Err(self.err(line, e.to_string()));
                }
            }
        }
    }

    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.label.to_string(),
            line,
            message: message.into(),
        }
    }

    fn field<T: std::str::FromStr>(&self, rec: &StringRecord, i: usize, line: u64) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = rec
            .get(i)
            .ok_or_else(|| self.err(line, format!("missing column {}", i + 1)))?;
        raw.trim()
            .parse::<T>()
            .map_err(|e| self.err(line, format!("column {}: {raw:?}: {e}", i + 1)))
    }

    fn date(&self, rec: &StringRecord, i: usize, line: u64) -> Result<NaiveDate> {
        let raw = rec.get(i).unwrap_or("").trim();
        NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|e| self.err(line, format!("bad date {raw:?}: {e}")))
    }

    fn margin(&self, rec: &StringRecord, offset: usize, line: u64) -> Result<MarginIndex> {
        let station = rec.get(offset).unwrap_or("").trim();
        if station.is_empty() {
            return Err(self.err(line, "empty station"));
        }
        let variable: Variable = rec
            .get(offset + 1)
            .unwrap_or("")
            .parse()
            .map_err(|e: Error| self.err(line, e.to_string()))?;
        let lead: u32 = self.field(rec, offset + 2, line)?;
        Ok(MarginIndex::new(variable, station, lead))
    }

    fn value(&self, rec: &StringRecord, i: usize, line: u64, margin: &MarginIndex) -> Result<f64> {
        let v: f64 = self.field(rec, i, line)?;
        if !v.is_finite() {
            return Err(self.err(line, format!("non-finite value for {margin}")));
        }
        if margin.variable.is_nonnegative() && v < 0.0 {
            return Err(Error::Schema(format!(
                "{}: line {line}: negative value {v} for margin {margin}",
                self.label
            )));
        }
        Ok(v)
    }
}

type MemberTable = BTreeMap<NaiveDate, HashMap<usize, BTreeMap<u32, f64>>>;

fn read_forecast_rows(
    label: &str,
    source: Box<dyn Read + '_>,
    margins: &mut Vec<MarginIndex>,
    positions: &mut HashMap<MarginIndex, usize>,
) -> Result<MemberTable> {
    let mut reader = Reader::new(label, source, &FORECAST_HEADER)?;
    let mut table = MemberTable::new();
    let rows = reader.rows()?;
    for (line, rec) in rows {
        let date = reader.date(&rec, 0, line)?;
        let margin = reader.margin(&rec, 1, line)?;
        let member: u32 = reader.field(&rec, 4, line)?;
        if member == 0 {
            return Err(reader.err(line, "member indices start at 1"));
        }
        let value = reader.value(&rec, 5, line, &margin)?;
        let l = *positions.entry(margin.clone()).or_insert_with(|| {
            margins.push(margin.clone());
            margins.len() - 1
        });
        let slot = table.entry(date).or_default().entry(l).or_default();
        if slot.insert(member, value).is_some() {
            return Err(reader.err(line, format!("duplicate member {member} for {margin} on {date}")));
        }
    }
    Ok(table)
}

/// Read forecast and observation CSVs into a dataset of the dates on which
/// both are complete.
pub fn ingest_dataset(forecast_file: impl AsRef<Path>, observation_file: impl AsRef<Path>) -> Result<Ingested> {
    let fpath = forecast_file.as_ref();
    let opath = observation_file.as_ref();
    let flabel = fpath.display().to_string();
    let olabel = opath.display().to_string();
    read_dataset(
        &flabel,
        Box::new(File::open(fpath).map_err(|e| Error::Parse {
            path: flabel.clone(),
            line: 0,
            message: e.to_string(),
        })?),
        &olabel,
        Box::new(File::open(opath).map_err(|e| Error::Parse {
            path: olabel.clone(),
            line: 0,
            message: e.to_string(),
        })?),
    )
}

/// [`ingest_dataset`] over arbitrary readers; labels appear in error messages.
pub fn read_dataset(
    forecast_label: &str,
    forecasts: Box<dyn Read + '_>,
    observation_label: &str,
    observations: Box<dyn Read + '_>,
) -> Result<Ingested> {
    let mut margins = Vec::new();
    let mut positions = HashMap::new();
    let table = read_forecast_rows(forecast_label, forecasts, &mut margins, &mut positions)?;
    let n_margins = margins.len();

    let mut obs_table: BTreeMap<NaiveDate, HashMap<usize, f64>> = BTreeMap::new();
    let mut reader = Reader::new(observation_label, observations, &OBSERVATION_HEADER)?;
    let rows = reader.rows()?;
    for (line, rec) in rows {
        let date = reader.date(&rec, 0, line)?;
        let margin = reader.margin(&rec, 1, line)?;
        let value = reader.value(&rec, 4, line, &margin)?;
        // Observations of margins nobody forecasts are irrelevant.
        let Some(&l) = positions.get(&margin) else { continue };
        if obs_table.entry(date).or_default().insert(l, value).is_some() {
            return Err(reader.err(line, format!("duplicate observation for {margin} on {date}")));
        }
    }

    let catalog =
        margin_catalog(margins).map_err(|_| Error::EmptyDataset(format!("{forecast_label} contains no forecasts")))?;

    let mut all_dates: Vec<NaiveDate> = table.keys().chain(obs_table.keys()).copied().collect();
    all_dates.sort();
    all_dates.dedup();

    let mut n_members: Option<usize> = None;
    let mut instances = Vec::new();
    for date in &all_dates {
        let Some(fc) = table.get(date) else { continue };
        if fc.len() != n_margins {
            continue;
        }
        let m = fc[&0].len();
        for (l, members) in fc {
            let contiguous = members.keys().copied().eq(1..=members.len() as u32);
            if members.len() != m || !contiguous {
                return Err(Error::Schema(format!(
                    "{forecast_label}: inconsistent members on {date}: {} has members {:?}, expected 1..={m}",
                    catalog[*l],
                    members.keys().collect::<Vec<_>>()
                )));
            }
        }
        match n_members {
            None => n_members = Some(m),
            Some(prev) if prev != m => {
                return Err(Error::Schema(format!(
                    "{forecast_label}: member count {m} on {date} differs from {prev} on earlier dates"
                )))
            }
            _ => {}
        }
        let Some(obs) = obs_table.get(date) else { continue };
        if obs.len() != n_margins {
            continue;
        }
        let members: Vec<Vec<f64>> = (1..=m as u32)
            .map(|k| (0..n_margins).map(|l| fc[&l][&k]).collect())
            .collect();
        let values: Vec<f64> = (0..n_margins).map(|l| obs[&l]).collect();
        instances.push(Instance {
            forecast: EnsembleForecast::new(*date, members, catalog.clone(), true)?,
            observation: Observation::new(*date, values, &catalog)?,
        });
    }
    if instances.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no date has both a complete forecast in {forecast_label} and a complete observation in {observation_label}"
        )));
    }
    let dropped_dates = all_dates.len() - instances.len();
    Ok(Ingested {
        dataset: Dataset::new(catalog, instances)?,
        dropped_dates,
    })
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn margin_fields(m: &MarginIndex) -> [String; 3] {
    [m.station.clone(), m.variable.to_string(), m.lead_time.to_string()]
}

/// Canonical forecast CSV of a dataset.
pub fn write_forecasts<W: Write>(dataset: &Dataset, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(FORECAST_HEADER)?;
    for inst in dataset.instances() {
        write_ensemble_rows(&mut out, None, &inst.forecast)?;
    }
    out.flush()?;
    Ok(())
}

/// Canonical observation CSV of a dataset.
pub fn write_observations<W: Write>(dataset: &Dataset, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(OBSERVATION_HEADER)?;
    for inst in dataset.instances() {
        let date = inst.observation.valid_date.to_string();
        for (m, v) in dataset.catalog().iter().zip(&inst.observation.values) {
            let [station, variable, lead] = margin_fields(m);
            out.write_record([date.as_str(), &station, &variable, &lead, &v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_ensemble_rows<W: Write>(out: &mut csv::Writer<W>, name: Option<&str>, ens: &EnsembleForecast) -> Result<()> {
    let date = ens.valid_date.to_string();
    for (l, m) in ens.catalog().iter().enumerate() {
        let [station, variable, lead] = margin_fields(m);
        for (k, row) in ens.members().iter().enumerate() {
            let member = (k + 1).to_string();
            let value = row[l].to_string();
            let mut fields = vec![date.as_str(), &station, &variable, &lead, &member, &value];
            if let Some(name) = name {
                fields.insert(0, name);
            }
            out.write_record(fields)?;
        }
    }
    Ok(())
}

/// Postprocessed-ensemble CSV: the forecast schema prefixed by `ensemble_name`.
pub fn write_ensembles<'a, W: Write>(
    w: W,
    ensembles: impl IntoIterator<Item = (&'a str, &'a EnsembleForecast)>,
) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["ensemble_name"];
    header.extend(FORECAST_HEADER);
    out.write_record(header)?;
    for (name, ens) in ensembles {
        write_ensemble_rows(&mut out, Some(name), ens)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a postprocessed-ensemble CSV, grouped by ensemble name then date.
/// Margins are laid out in `catalog` order; margins outside it are an error.
pub fn read_ensembles(
    label: &str,
    source: Box<dyn Read + '_>,
    catalog: &MarginCatalog,
) -> Result<BTreeMap<String, Vec<EnsembleForecast>>> {
    let mut header = vec!["ensemble_name"];
    header.extend(FORECAST_HEADER);
    let mut reader = Reader::new(label, source, &header)?;
    let positions: HashMap<&MarginIndex, usize> = catalog.iter().enumerate().map(|(l, m)| (m, l)).collect();
    let rows = reader.rows()?;
    let mut groups: BTreeMap<String, BTreeMap<NaiveDate, BTreeMap<u32, Vec<Option<f64>>>>> = BTreeMap::new();
    for (line, rec) in rows {
        let name = rec.get(0).unwrap_or("").trim().to_string();
        let date = reader.date(&rec, 1, line)?;
        let margin = reader.margin(&rec, 2, line)?;
        let member: u32 = reader.field(&rec, 5, line)?;
        let value = reader.value(&rec, 6, line, &margin)?;
        let &l = positions
            .get(&margin)
            .ok_or_else(|| reader.err(line, format!("margin {margin} not in the observation catalog")))?;
        let row = groups
            .entry(name)
            .or_default()
            .entry(date)
            .or_default()
            .entry(member)
            .or_insert_with(|| vec![None; catalog.len()]);
        row[l] = Some(value);
    }
    let mut out = BTreeMap::new();
    for (name, dates) in groups {
        let mut list = Vec::new();
        for (date, members) in dates {
            let rows: Option<Vec<Vec<f64>>> = members
                .into_values()
                .map(|r| r.into_iter().collect::<Option<Vec<f64>>>())
                .collect();
            let rows = rows.ok_or_else(|| {
                Error::Schema(format!(
                    "{label}: ensemble {name:?} on {date} does not cover every margin"
                ))
            })?;
            list.push(EnsembleForecast::new(date, rows, catalog.clone(), true)?);
        }
        out.insert(name, list);
    }
    Ok(out)
}

/// Rank histogram CSV: `kind,rank,count` with 1-based ranks.
pub fn write_histogram<W: Write>(hist: &RankHistogram, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["kind", "rank", "count"])?;
    for (r, c) in hist.counts().iter().enumerate() {
        out.write_record([hist.kind().as_str(), &(r + 1).to_string(), &c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Ranking debug dump: `index,characteristic,rank` with 1-based index and
/// rank, one row per point.
pub fn write_rank_dump<W: Write>(ranked: &RankResult, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["index", "characteristic", "rank"])?;
    for (i, (c, r)) in ranked.characteristics.iter().zip(&ranked.ranks).enumerate() {
        out.write_record([(i + 1).to_string(), c.to_string(), (r + 1).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// One row of a score report.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub ensemble_name: String,
    pub metric: String,
    pub value: f64,
}

/// Score report CSV: `ensemble_name,metric,value`.
pub fn write_score_report<W: Write>(rows: &[ScoreRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["ensemble_name", "metric", "value"])?;
    for r in rows {
        out.write_record([r.ensemble_name.as_str(), &r.metric, &r.value.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_score_report(label: &str, source: Box<dyn Read + '_>) -> Result<Vec<ScoreRow>> {
    let mut reader = Reader::new(label, source, &["ensemble_name", "metric", "value"])?;
    let mut rows = Vec::new();
    let raw = reader.rows()?;
    for (line, rec) in raw {
        rows.push(ScoreRow {
            ensemble_name: rec.get(0).unwrap_or("").to_string(),
            metric: rec.get(1).unwrap_or("").to_string(),
            value: reader.field(&rec, 2, line)?,
        });
    }
    Ok(rows)
}

/// Univariate parameter dump: `date,station,variable,param,value`.
pub fn write_univariate_params<'a, W: Write>(
    w: W,
    fits: impl IntoIterator<Item = (NaiveDate, &'a MarginIndex, &'a UnivariateEmosParams)>,
) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["date", "station", "variable", "param", "value"])?;
    for (date, margin, p) in fits {
        let date = date.to_string();
        let variable = margin.variable.to_string();
        let mut emit =
            |name: &str, v: f64| out.write_record([date.as_str(), &margin.station, &variable, name, &v.to_string()]);
        emit("a", p.a)?;
        if p.exchangeable() {
            emit("b", p.b[0])?;
        } else {
            for (m, b) in p.b.iter().enumerate() {
                emit(&format!("b_{}", m + 1), *b)?;
            }
        }
        emit("c", p.c)?;
        emit("d", p.d)?;
    }
    out.flush()?;
    Ok(())
}

/// Bivariate parameter dump: `date,station,param,row,col,value`.
pub fn write_bivariate_params<'a, W: Write>(
    w: W,
    fits: impl IntoIterator<Item = (NaiveDate, &'a str, &'a BivariateEmosParams)>,
) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["date", "station", "param", "row", "col", "value"])?;
    for (date, station, p) in fits {
        let date = date.to_string();
        let mut emit = |name: &str, row: usize, col: usize, v: f64| {
            out.write_record([
                date.as_str(),
                station,
                name,
                &row.to_string(),
                &col.to_string(),
                &v.to_string(),
            ])
        };
        for r in 0..2 {
            emit("A", r, 0, p.a[r])?;
        }
        let shared = p.exchangeable();
        for (m, b) in p.b.iter().enumerate() {
            let name = if shared {
                "B".to_string()
            } else {
                format!("B_{}", m + 1)
            };
            for r in 0..2 {
                for c in 0..2 {
                    emit(&name, r, c, b[(r, c)])?;
                }
            }
            if shared {
                break;
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                emit("C", r, c, p.c[(r, c)])?;
            }
        }
        for r in 0..2 {
            for c in 0..2 {
                emit("D", r, c, p.d[(r, c)])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
