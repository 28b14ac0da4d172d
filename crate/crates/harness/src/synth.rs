//! Synthetic forecast/observation data with known structure.
//!
//! Each day has a predictable centre: a seasonal mean plus a spatially
//! correlated signal. The observation adds correlated noise to the centre;
//! every raw member adds its own independent copy of that noise, scaled by
//! the dispersion factor, plus a fixed bias. With dispersion 1 and zero
//! bias, observation and members are exchangeable, so the raw ensemble is
//! perfectly calibrated. A day-level multiplier on the noise makes the
//! ensemble spread informative. Wind speed is floored at zero.
//!
//! Margins are ordered `(S1 wind, S1 temp, S2 wind, S2 temp, ...)`.

use std::f64::consts::PI;

use chrono::{Days, NaiveDate};
use ldpr_core::dataset::{margin_catalog, Dataset, EnsembleForecast, Instance, MarginIndex, Observation, Variable};
use ldpr_core::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub stations: usize,
    pub days: usize,
    pub members: usize,
    pub start_date: NaiveDate,
    pub lead_hours: u32,
    /// `2J × 2J` correlation of signal and noise. Defaults to
    /// [`default_correlation`].
    pub correlation: Option<Vec<Vec<f64>>>,
    /// Raw-member bias per margin, length `2J`. Defaults to zero.
    pub bias: Option<Vec<f64>>,
    /// Scale of member noise relative to observation noise.
    pub dispersion: f64,
    /// Seasonal swing of temperature in °C; wind swings by a fifth of it.
    pub seasonal_amplitude: f64,
    /// Standard deviation of the predictable signal, `[wind, temp]`.
    pub signal_sd: [f64; 2],
    /// Standard deviation of the unpredictable noise, `[wind, temp]`.
    pub noise_sd: [f64; 2],
    /// Log-scale standard deviation of the day-level noise multiplier.
    pub spread_variability: f64,
    pub exchangeable: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            stations: 3,
            days: 1100,
            members: 50,
            start_date: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            lead_hours: 24,
            correlation: None,
            bias: None,
            dispersion: 1.0,
            seasonal_amplitude: 8.0,
            signal_sd: [2.0, 3.0],
            noise_sd: [1.0, 1.5],
            spread_variability: 0.3,
            exchangeable: true,
        }
    }
}

/// Correlation with wind–wind 0.7 and temperature–temperature 0.9 across
/// stations, wind–temperature −0.3 within a station and −0.2 across.
pub fn default_correlation(stations: usize) -> Vec<Vec<f64>> {
    let l = 2 * stations;
    let mut r = vec![vec![0.0; l]; l];
    for i in 0..l {
        for j in 0..l {
            let same_station = i / 2 == j / 2;
            let (wi, wj) = (i % 2 == 0, j % 2 == 0);
            r[i][j] = if i == j {
                1.0
            } else if wi && wj {
                0.7
            } else if !wi && !wj {
                0.9
            } else if same_station {
                -0.3
            } else {
                -0.2
            };
        }
    }
    r
}

impl SyntheticSpec {
    pub fn n_margins(&self) -> usize {
        2 * self.stations
    }

    pub fn correlation_matrix(&self) -> Vec<Vec<f64>> {
        self.correlation
            .clone()
            .unwrap_or_else(|| default_correlation(self.stations))
    }

    pub fn bias_vector(&self) -> Vec<f64> {
        self.bias.clone().unwrap_or_else(|| vec![0.0; self.n_margins()])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.stations == 0 || self.days == 0 {
            return bad("stations and days must be positive".into());
        }
        if self.members < 2 {
            return bad(format!("at least 2 members required, got {}", self.members));
        }
        if !(self.dispersion > 0.0 && self.dispersion.is_finite()) {
            return bad(format!("dispersion must be positive, got {}", self.dispersion));
        }
        if self.signal_sd.iter().chain(&self.noise_sd).any(|s| !(*s >= 0.0)) || !(self.spread_variability >= 0.0) {
            return bad("standard deviations must be nonnegative".into());
        }
        let l = self.n_margins();
        if self.bias_vector().len() != l {
            return bad(format!("bias needs {l} entries"));
        }
        let r = self.correlation_matrix();
        if r.len() != l || r.iter().any(|row| row.len() != l) {
            return bad(format!("correlation must be {l} × {l}"));
        }
        for i in 0..l {
            if r[i][i] != 1.0 {
                return bad(format!("correlation diagonal entry {i} is {}", r[i][i]));
            }
            for j in 0..i {
                if r[i][j] != r[j][i] {
                    return bad(format!("correlation is not symmetric at ({i}, {j})"));
                }
            }
        }
        if Cholesky::new(DMatrix::from_fn(l, l, |i, j| r[i][j])).is_none() {
            return bad("correlation is not positive definite".into());
        }
        Ok(())
    }

    fn catalog(&self) -> Result<ldpr_core::dataset::MarginCatalog> {
        let mut margins = Vec::with_capacity(self.n_margins());
        for s in 1..=self.stations {
            let station = format!("S{s}");
            margins.push(MarginIndex::new(Variable::WindSpeed, station.clone(), self.lead_hours));
            margins.push(MarginIndex::new(Variable::Temperature, station, self.lead_hours));
        }
        margin_catalog(margins)
    }
}

/// Generate a dataset; deterministic given `rng`.
pub fn synth_generate<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let l = spec.n_margins();
    let r = spec.correlation_matrix();
    let chol = Cholesky::new(DMatrix::from_fn(l, l, |i, j| r[i][j]))
        .ok_or_else(|| Error::Config("synthetic spec: correlation is not positive definite".into()))?
        .l();
    let bias = spec.bias_vector();
    let catalog = spec.catalog()?;
    let per_margin = |sd: [f64; 2]| DVector::from_fn(l, |i, _| sd[i % 2]);
    let signal_sd = per_margin(spec.signal_sd);
    let noise_sd = per_margin(spec.noise_sd);

    let correlated = |rng: &mut R| -> DVector<f64> {
        let z = DVector::from_fn(l, |_, _| rng.sample::<f64, _>(StandardNormal));
        &chol * z
    };
    let floor = |v: &mut DVector<f64>| {
        for i in (0..l).step_by(2) {
            v[i] = v[i].max(0.0);
        }
    };

    let mut instances = Vec::with_capacity(spec.days);
    for day in 0..spec.days {
        let date = spec.start_date + Days::new(day as u64);
        let phase = (2.0 * PI * day as f64 / 365.25).cos();
        let seasonal = DVector::from_fn(l, |i, _| {
            if i % 2 == 0 {
                5.0 + 0.2 * spec.seasonal_amplitude * phase
            } else {
                8.0 - spec.seasonal_amplitude * phase
            }
        });
        let centre = seasonal + correlated(rng).component_mul(&signal_sd);
        let z: f64 = rng.sample(StandardNormal);
        let multiplier = (spec.spread_variability * z).exp();
        let noise_scale = &noise_sd * multiplier;

        let mut obs = &centre + correlated(rng).component_mul(&noise_scale);
        floor(&mut obs);
        let members: Vec<Vec<f64>> = (0..spec.members)
            .map(|_| {
                let mut x = &centre + correlated(rng).component_mul(&noise_scale) * spec.dispersion;
                for (i, b) in bias.iter().enumerate() {
                    x[i] += b;
                }
                floor(&mut x);
                x.iter().copied().collect()
            })
            .collect();
        let forecast = EnsembleForecast::new(date, members, catalog.clone(), spec.exchangeable)?;
        let observation = Observation::new(date, obs.iter().copied().collect(), &catalog)?;
        instances.push(Instance { forecast, observation });
    }
    Dataset::new(catalog, instances)
}
