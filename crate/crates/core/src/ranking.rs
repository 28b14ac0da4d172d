//! Ranking of multivariate points.
//!
//! Each point gets a scalar pre-rank characteristic; the characteristics are
//! then ranked with the usual univariate order, ties broken at random.
//! Every function here takes rows as `&[P]` with `P: AsRef<[f64]>`, so
//! `Vec<f64>` rows and `[f64; 2]` rows both work.
//!
//! Ranks are zero-based throughout this module: the smallest characteristic
//! gets rank `0`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Which pre-rank characteristic to rank by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RankingKind {
    /// Multivariate pre-rank: number of points dominated coordinatewise.
    MultPr,
    /// Average of the per-margin univariate ranks.
    AvPr,
    /// Signed Euclidean norm of a (wind speed, temperature) pair, signed by
    /// the temperature coordinate. Indices are column positions in the rows.
    Sen { wind: usize, temp: usize },
    /// Band-depth pre-rank: mean number of bracketing pairs per margin.
    BandDepth,
}

impl RankingKind {
    /// Signed Euclidean norm with wind speed in column 0 and temperature in column 1.
    pub const SEN: RankingKind = RankingKind::Sen { wind: 0, temp: 1 };

    pub fn name(&self) -> &'static str {
        match self {
            RankingKind::MultPr => "multpr",
            RankingKind::AvPr => "avpr",
            RankingKind::Sen { .. } => "sen",
            RankingKind::BandDepth => "banddepth",
        }
    }

    /// Characteristic of every point.
    pub fn characteristics<P: AsRef<[f64]>>(&self, points: &[P]) -> Result<Vec<f64>> {
        match *self {
            RankingKind::MultPr => Ok(prerank_multivariate(points).into_iter().map(|r| r as f64).collect()),
            RankingKind::AvPr => Ok(prerank_average(points)),
            RankingKind::Sen { wind, temp } => prerank_sen(points, wind, temp),
            RankingKind::BandDepth => prerank_banddepth(points),
        }
    }
}

/// `R_n = #{ν : z_ν ⪯ z_n}` where `⪯` is "≤ in every coordinate".
/// Every point dominates itself, so values lie in `1..=N`.
pub fn prerank_multivariate<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    points
        .iter()
        .map(|zn| {
            let zn = zn.as_ref();
            points
                .iter()
                .filter(|zv| zv.as_ref().iter().zip(zn).all(|(a, b)| a <= b))
                .count()
        })
        .collect()
}

fn sorted_margin<P: AsRef<[f64]>>(points: &[P], l: usize) -> Vec<f64> {
    let mut col: Vec<f64> = points.iter().map(|p| p.as_ref()[l]).collect();
    col.sort_by(f64::total_cmp);
    col
}

fn dimension<P: AsRef<[f64]>>(points: &[P]) -> usize {
    points.first().map_or(0, |p| p.as_ref().len())
}

/// Mean over margins of `#{ν : z_ν^ℓ ≤ z_n^ℓ}`.
pub fn prerank_average<P: AsRef<[f64]>>(points: &[P]) -> Vec<f64> {
    let dim = dimension(points);
    let mut totals = vec![0usize; points.len()];
    for l in 0..dim {
        let col = sorted_margin(points, l);
        for (total, p) in totals.iter_mut().zip(points) {
            let v = p.as_ref()[l];
            *total += col.partition_point(|x| *x <= v);
        }
    }
    totals.into_iter().map(|t| t as f64 / dim as f64).collect()
}

/// `sgn(z^T) · ‖(z^W, z^T)‖` with `sgn(0) = +1`.
///
/// The inputs should be standardized by the caller; the norm mixes units.
pub fn prerank_sen<P: AsRef<[f64]>>(points: &[P], wind: usize, temp: usize) -> Result<Vec<f64>> {
    let dim = dimension(points);
    if wind >= dim || temp >= dim || wind == temp {
        return Err(Error::param(format!(
            "signed Euclidean norm needs distinct wind/temperature columns, got ({wind}, {temp}) for dimension {dim}"
        )));
    }
    Ok(points
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let norm = p[wind].hypot(p[temp]);
            if p[temp] >= 0.0 {
                norm
            } else {
                -norm
            }
        })
        .collect())
}

/// Band-depth pre-rank: for each margin, the number of unordered pairs
/// `{i, j}` of points (the point itself included) whose range
/// `[min, max]` contains the point's value, averaged over margins.
///
/// With `a` values strictly below and `b` strictly above, a margin
/// contributes `C(N,2) − C(a,2) − C(b,2)`.
pub fn prerank_banddepth<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<f64>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::param("band depth needs at least two points"));
    }
    let pairs = |k: usize| k * k.saturating_sub(1) / 2;
    let dim = dimension(points);
    let mut totals = vec![0usize; n];
    for l in 0..dim {
        let col = sorted_margin(points, l);
        for (total, p) in totals.iter_mut().zip(points) {
            let v = p.as_ref()[l];
            let below = col.partition_point(|x| *x < v);
            let above = n - col.partition_point(|x| *x <= v);
            *total += pairs(n) - pairs(below) - pairs(above);
        }
    }
    Ok(totals.into_iter().map(|t| t as f64 / dim as f64).collect())
}

/// Zero-based ranks of `characteristics` under the usual order. Each block
/// of tied values receives its ranks through one uniform shuffle drawn from
/// `rng`; tie-free input consumes no randomness.
pub fn rank_characteristics<R: Rng + ?Sized>(characteristics: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    if let Some(i) = characteristics.iter().position(|c| !c.is_finite()) {
        return Err(Error::param(format!("characteristic {i} is not finite")));
    }
    let mut order: Vec<usize> = (0..characteristics.len()).collect();
    order.sort_by(|&i, &j| characteristics[i].total_cmp(&characteristics[j]));
    let mut start = 0;
    while start < order.len() {
        let v = characteristics[order[start]];
        let mut end = start + 1;
        // `==` rather than total order so that -0.0 and 0.0 tie.
        while end < order.len() && characteristics[order[end]] == v {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].shuffle(rng);
        }
        start = end;
    }
    let mut ranks = vec![0; order.len()];
    for (rank, &i) in order.iter().enumerate() {
        ranks[i] = rank;
    }
    Ok(ranks)
}

/// Characteristics and zero-based ranks of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub characteristics: Vec<f64>,
    pub ranks: Vec<usize>,
}

pub fn rank_points<P: AsRef<[f64]>, R: Rng + ?Sized>(
    points: &[P],
    kind: RankingKind,
    rng: &mut R,
) -> Result<RankResult> {
    let characteristics = kind.characteristics(points)?;
    let ranks = rank_characteristics(&characteristics, rng)?;
    Ok(RankResult { characteristics, ranks })
}
