//! Proper scores and rank-histogram verification.
//!
//! All scores are negatively oriented: smaller is better.

use std::f64::consts::SQRT_2;

use rand::Rng;

use crate::dataset::MarginCatalog;
use crate::error::{Error, Result};
use crate::normal::{self, FRAC_1_SQRT_PI};
use crate::ranking::{prerank_average, prerank_banddepth, prerank_multivariate};

/// CRPS of `N(mu, sigma²)` at `y`:
/// `σ·[z(2Φ(z) − 1) + 2φ(z) − 1/√π]` with `z = (y − μ)/σ`.
pub fn crps_normal(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    Ok(crps_normal_unchecked(mu, sigma, y))
}

pub(crate) fn crps_normal_unchecked(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * normal::cdf(z) - 1.0) + 2.0 * normal::pdf(z) - FRAC_1_SQRT_PI)
}

/// CRPS of the normal law `N(mu, sigma²)` truncated below at zero, at `y ≥ 0`.
pub fn crps_truncnormal(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    if !(y >= 0.0) {
        return Err(Error::param(format!("observation must be nonnegative, got {y}")));
    }
    let v = crps_truncnormal_unchecked(mu, sigma, y);
    if !v.is_finite() {
        return Err(Error::param(format!(
            "truncation mass of N({mu}, {sigma}²) above zero underflows"
        )));
    }
    Ok(v)
}

/// Evaluated as `σ·(E|Z − z| − ½E|Z − Z'|)` for the standardized truncated
/// variable `Z` on `[α, ∞)`, `α = −μ/σ`. Every term is divided by the mass
/// `q = 1 − Φ(α)` at most once per power it carries, which keeps the
/// expression accurate when almost all of the untruncated mass lies below
/// zero.
pub(crate) fn crps_truncnormal_unchecked(mu: f64, sigma: f64, y: f64) -> f64 {
    let alpha = -mu / sigma;
    let z = (y - mu) / sigma;
    let q = normal::sf(alpha);
    let phi_alpha = normal::pdf(alpha);
    let mass_between = if alpha > 0.0 {
        q - normal::sf(z)
    } else {
        normal::cdf(z) - normal::cdf(alpha)
    };
    // ∫_α^z (z − t) φ(t) dt
    let lower_part = z * mass_between + normal::pdf(z) - phi_alpha;
    let abs_dev = phi_alpha / q - z + 2.0 * lower_part / q;
    // ½E|Z − Z'| = J / q² with J = ∫_α^∞ (Φ(t) − Φ(α))(1 − Φ(t)) dt.
    let j = normal::sf(SQRT_2 * alpha) * FRAC_1_SQRT_PI - q * phi_alpha;
    sigma * (abs_dev - j / (q * q))
}

/// CRPS of an ensemble: `(1/N)Σ|x_n − y| − (1/2N²)ΣΣ|x_ν − x_n|`.
pub fn crps_ensemble(members: &[f64], y: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::param("empty ensemble"));
    }
    let n = members.len() as f64;
    let spread_to_obs: f64 = members.iter().map(|x| (x - y).abs()).sum();
    let mut spread = 0.0;
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            spread += (a - b).abs();
        }
    }
    Ok(spread_to_obs / n - spread / (n * n))
}

/// `−ln f(y)` for the bivariate normal `N(mu, sigma)` with the first
/// coordinate truncated below at zero.
pub fn logscore_bivariate_truncnormal(mu: [f64; 2], sigma: [[f64; 2]; 2], y: [f64; 2]) -> Result<f64> {
    if (sigma[0][1] - sigma[1][0]).abs() > 1e-12 * (sigma[0][1].abs() + sigma[1][0].abs()).max(1.0) {
        return Err(Error::param("scale matrix is not symmetric"));
    }
    if !(y[0] >= 0.0) {
        return Err(Error::Domain(format!("truncated coordinate {} is negative", y[0])));
    }
    logscore_bivariate_unchecked(mu, sigma[0][0], sigma[0][1], sigma[1][1], y)
        .ok_or_else(|| Error::param("scale matrix is not positive definite"))
}

/// Returns `None` when the scale matrix is not positive definite.
#[inline]
pub(crate) fn logscore_bivariate_unchecked(mu: [f64; 2], s11: f64, s12: f64, s22: f64, y: [f64; 2]) -> Option<f64> {
    let det = s11 * s22 - s12 * s12;
    if !(s11 > 0.0 && det > 0.0) {
        return None;
    }
    let d0 = y[0] - mu[0];
    let d1 = y[1] - mu[1];
    let quad = (s22 * d0 * d0 - 2.0 * s12 * d0 * d1 + s11 * d1 * d1) / det;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    Some(ln_2pi + 0.5 * det.ln() + 0.5 * quad + normal::ln_cdf(mu[0] / s11.sqrt()))
}

/// An `N`-member ensemble paired with its verifying observation.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRecord {
    ensemble: Vec<Vec<f64>>,
    observation: Vec<f64>,
    catalog: Option<MarginCatalog>,
}

impl VerificationRecord {
    pub fn new(ensemble: Vec<Vec<f64>>, observation: Vec<f64>) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(Error::param("verification record has no members"));
        }
        let dim = observation.len();
        if dim == 0 {
            return Err(Error::param("observation has no margins"));
        }
        for (i, row) in ensemble.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::param(format!(
                    "member {i} has {} margins, observation has {dim}",
                    row.len()
                )));
            }
        }
        if ensemble.iter().flatten().chain(&observation).any(|v| !v.is_finite()) {
            return Err(Error::param("non-finite value in verification record"));
        }
        Ok(VerificationRecord {
            ensemble,
            observation,
            catalog: None,
        })
    }

    pub fn with_catalog(mut self, catalog: MarginCatalog) -> Result<Self> {
        if catalog.len() != self.observation.len() {
            return Err(Error::param("catalog length does not match record dimension"));
        }
        self.catalog = Some(catalog);
        Ok(self)
    }

    pub fn ensemble(&self) -> &[Vec<f64>] {
        &self.ensemble
    }

    pub fn observation(&self) -> &[f64] {
        &self.observation
    }

    pub fn catalog(&self) -> Option<&MarginCatalog> {
        self.catalog.as_ref()
    }

    pub fn n_members(&self) -> usize {
        self.ensemble.len()
    }

    pub fn dimension(&self) -> usize {
        self.observation.len()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Energy score `(1/N)Σ‖x_n − y‖ − (1/2N²)ΣΣ‖x_ν − x_n‖`.
pub fn energy_score(record: &VerificationRecord) -> f64 {
    let ens = &record.ensemble;
    let n = ens.len() as f64;
    let to_obs: f64 = ens.iter().map(|x| distance(x, &record.observation)).sum();
    let mut spread = 0.0;
    for (i, a) in ens.iter().enumerate() {
        for b in &ens[i + 1..] {
            spread += distance(a, b);
        }
    }
    to_obs / n - spread / (n * n)
}

/// Unweighted variogram score of order ½ over all ordered margin pairs.
pub fn variogram_score_05(record: &VerificationRecord) -> f64 {
    let dim = record.dimension();
    let n = record.n_members() as f64;
    let y = &record.observation;
    let mut total = 0.0;
    for l in 0..dim {
        for k in l + 1..dim {
            let observed = (y[l] - y[k]).abs().sqrt();
            let expected = record.ensemble.iter().map(|x| (x[l] - x[k]).abs().sqrt()).sum::<f64>() / n;
            let d = observed - expected;
            total += d * d;
        }
    }
    // (ℓ, λ) and (λ, ℓ) contribute equally; diagonal terms vanish.
    2.0 * total
}

/// Multivariate rank-histogram flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HistogramKind {
    Multivariate,
    BandDepth,
    Average,
}

impl HistogramKind {
    pub const ALL: [HistogramKind; 3] = [
        HistogramKind::Multivariate,
        HistogramKind::BandDepth,
        HistogramKind::Average,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HistogramKind::Multivariate => "multivariate",
            HistogramKind::BandDepth => "band_depth",
            HistogramKind::Average => "average",
        }
    }
}

/// Rank (1-based, in `1..=N+1`) of the observation's pre-rank among the
/// pooled ensemble and observation. Ties are broken uniformly at random.
pub fn observation_rank<R: Rng + ?Sized>(record: &VerificationRecord, kind: HistogramKind, rng: &mut R) -> usize {
    let mut pool: Vec<&[f64]> = record.ensemble.iter().map(Vec::as_slice).collect();
    pool.push(&record.observation);
    let chars: Vec<f64> = match kind {
        HistogramKind::Multivariate => prerank_multivariate(&pool).into_iter().map(|r| r as f64).collect(),
        HistogramKind::Average => prerank_average(&pool),
        // The pool always has at least two points.
        HistogramKind::BandDepth => prerank_banddepth(&pool).expect("pool of at least two points"),
    };
    let (obs, members) = chars.split_last().expect("non-empty pool");
    let below = members.iter().filter(|c| *c < obs).count();
    let tied = members.iter().filter(|c| *c == obs).count();
    let offset = if tied == 0 { 0 } else { rng.random_range(0..=tied) };
    below + offset + 1
}

/// Counts of observation ranks over many records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankHistogram {
    kind: HistogramKind,
    counts: Vec<u64>,
    total: u64,
}

impl RankHistogram {
    /// Empty histogram for `n_members`-member ensembles (`n_members + 1` bins).
    pub fn new(kind: HistogramKind, n_members: usize) -> Self {
        RankHistogram {
            kind,
            counts: vec![0; n_members + 1],
            total: 0,
        }
    }

    /// Build from explicit counts.
    pub fn from_counts(kind: HistogramKind, counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::param("a rank histogram needs at least two bins"));
        }
        let total = counts.iter().sum();
        Ok(RankHistogram { kind, counts, total })
    }

    pub fn kind(&self) -> HistogramKind {
        self.kind
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_members(&self) -> usize {
        self.counts.len() - 1
    }

    /// Count one observation of the 1-based `rank`.
    pub fn add(&mut self, rank: usize) {
        assert!(
            (1..=self.counts.len()).contains(&rank),
            "rank {rank} outside 1..={}",
            self.counts.len()
        );
        self.counts[rank - 1] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &RankHistogram) -> Result<()> {
        if other.kind != self.kind || other.counts.len() != self.counts.len() {
            return Err(Error::Aggregation(format!(
                "{} histogram with {} bins vs {} histogram with {} bins",
                self.kind.as_str(),
                self.counts.len(),
                other.kind.as_str(),
                other.counts.len()
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }
}

/// Rank histogram of a stream of records sharing one ensemble size.
pub fn accumulate_histogram<'a, R: Rng + ?Sized>(
    records: impl IntoIterator<Item = &'a VerificationRecord>,
    kind: HistogramKind,
    rng: &mut R,
) -> Result<RankHistogram> {
    let mut hist: Option<RankHistogram> = None;
    for record in records {
        let h = hist.get_or_insert_with(|| RankHistogram::new(kind, record.n_members()));
        if record.n_members() != h.n_members() {
            return Err(Error::Aggregation(format!(
                "record with {} members in a histogram of {}-member ensembles",
                record.n_members(),
                h.n_members()
            )));
        }
        let rank = observation_rank(record, kind, rng);
        h.add(rank);
    }
    hist.ok_or_else(|| Error::Aggregation("no records".into()))
}

/// `Δ = Σ_r |ρ_r − 1/(N+1)|`, the total deviation from a flat histogram.
pub fn reliability_index(hist: &RankHistogram) -> Result<f64> {
    if hist.total == 0 {
        return Err(Error::param("reliability index of an empty histogram"));
    }
    let bins = hist.counts.len() as f64;
    let total = hist.total as f64;
    Ok(hist.counts.iter().map(|&c| (c as f64 / total - 1.0 / bins).abs()).sum())
}
