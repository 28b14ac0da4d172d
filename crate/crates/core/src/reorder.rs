//! Reordering of postprocessed samples by a dependence template, and the
//! full low-dimensional-postprocessing-plus-reordering pipeline.
//!
//! The pipeline for one forecast instance:
//!
//! 1. split the margins into the cases of a [`CasePartition`];
//! 2. per case, build the predictive law from the raw members of the case
//!    and draw `N` samples ([`draw_case_samples`]);
//! 3. per case, rank the template rows and the sample rows by a common
//!    pre-rank characteristic and move the sample row with rank `τ(n)`
//!    to position `n` ([`reorder_cases`]);
//! 4. concatenate the cases member by member ([`assemble`]).
//!
//! Randomness is drawn from per-case ChaCha substreams of one master seed:
//! stream `2c` samples case `c`, stream `2c + 1` breaks its ranking ties.
//! Cases are therefore independent of each other and of evaluation order.

use chrono::NaiveDate;
use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bvemos::{predict_bivariate, sample_bivariate, BivariateEmosParams, SamplerConfig};
use crate::dataset::{CasePartition, Climatology, EnsembleForecast, Observation, PostprocessorKind};
use crate::error::{Error, Result};
use crate::ranking::{rank_characteristics, RankingKind};
use crate::uvemos::{predict, sample_q, sample_r, Family, UnivariateEmosParams};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateSource {
    /// The raw ensemble itself.
    EccRawEnsemble,
    /// Observations of the listed historical dates, in template row order.
    SchaakeHistorical { dates: Vec<NaiveDate> },
}

/// `N` points over all `L` margins whose per-case rank structure is imposed
/// on the postprocessed samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceTemplate {
    points: Vec<Vec<f64>>,
    source: TemplateSource,
    /// Set when the template should not be trusted, e.g. ECC on a
    /// non-exchangeable raw ensemble.
    pub warning: Option<String>,
}

impl DependenceTemplate {
    pub fn new(points: Vec<Vec<f64>>, source: TemplateSource) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.is_empty() || dim == 0 {
            return Err(Error::param("template is empty"));
        }
        for (n, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::param(format!(
                    "template row {n} has {} margins, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::param(format!("template row {n} is not finite")));
            }
        }
        Ok(DependenceTemplate {
            points,
            source,
            warning: None,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn source(&self) -> &TemplateSource {
        &self.source
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_margins(&self) -> usize {
        self.points[0].len()
    }
}

/// ECC template: the raw members verbatim.
pub fn build_template_ecc(raw: &EnsembleForecast) -> DependenceTemplate {
    let warning = (!raw.exchangeable).then(|| {
        let msg = format!(
            "raw ensemble for {} is not exchangeable; ECC assumes interchangeable members",
            raw.valid_date
        );
        log::warn!("{msg}");
        msg
    });
    DependenceTemplate {
        points: raw.members().to_vec(),
        source: TemplateSource::EccRawEnsemble,
        warning,
    }
}

/// Schaake-shuffle template: the observations of `n` historical dates
/// drawn uniformly without replacement, in random order.
pub fn build_template_schaake<R: Rng + ?Sized>(
    observations: &[Observation],
    n: usize,
    rng: &mut R,
) -> Result<DependenceTemplate> {
    if observations.len() < n {
        return Err(Error::InsufficientHistory {
            available: observations.len(),
            required: n,
        });
    }
    let picks = index::sample(rng, observations.len(), n).into_vec();
    let dates = picks.iter().map(|&i| observations[i].valid_date).collect();
    let points = picks.iter().map(|&i| observations[i].values.clone()).collect();
    DependenceTemplate::new(points, TemplateSource::SchaakeHistorical { dates })
}

/// How univariate predictive laws are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sampling {
    /// Equally spaced quantiles. Univariate cases only.
    Q,
    /// Independent random draws.
    R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CasePlan {
    pub partition: CasePartition,
    /// One ranking for every case.
    pub ranking: RankingKind,
    pub sampling: Sampling,
    /// Output ensemble size.
    pub n: usize,
    /// Used to standardize template and sample before ranking. Required for
    /// the signed Euclidean norm, whose value mixes units.
    pub climatology: Option<Climatology>,
    pub sampler: SamplerConfig,
}

impl CasePlan {
    pub fn new(partition: CasePartition, ranking: RankingKind, sampling: Sampling, n: usize) -> Result<Self> {
        if sampling == Sampling::Q && partition.cases().iter().any(|c| c.margins.len() > 1) {
            return Err(Error::Config(
                "quantile sampling has no multivariate counterpart; use random sampling for multivariate cases".into(),
            ));
        }
        if n < 2 {
            return Err(Error::Config(format!(
                "output ensemble size must be at least 2, got {n}"
            )));
        }
        Ok(CasePlan {
            partition,
            ranking,
            sampling,
            n,
            climatology: None,
            sampler: SamplerConfig::default(),
        })
    }

    pub fn with_climatology(mut self, climatology: Climatology) -> Self {
        self.climatology = Some(climatology);
        self
    }

    pub fn with_sampler(mut self, sampler: SamplerConfig) -> Self {
        self.sampler = sampler;
        self
    }
}

/// Fitted postprocessor for one case.
#[derive(Debug, Clone, PartialEq)]
pub enum CaseFit {
    Univariate(UnivariateEmosParams),
    Bivariate(BivariateEmosParams),
}

/// Independent generator `stream` of the master seed.
pub fn substream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Scalar characteristic of each row. For one-dimensional rows every
/// ranking reduces to the value itself.
fn characteristics(rows: &[Vec<f64>], ranking: RankingKind) -> Result<Vec<f64>> {
    match rows.first().map(Vec::len) {
        Some(1) => Ok(rows.iter().map(|r| r[0]).collect()),
        _ => match ranking {
            RankingKind::Sen { .. } => RankingKind::SEN.characteristics(rows),
            other => other.characteristics(rows),
        },
    }
}

/// Result of matching a sample to a template within one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseReordering {
    /// Zero-based template ranks `τ(n)`.
    pub template_ranks: Vec<usize>,
    /// Zero-based sample ranks `τ̃(n)`.
    pub sample_ranks: Vec<usize>,
    /// Output row `n` is sample row `source[n]`, the one with sample rank `τ(n)`.
    pub source: Vec<usize>,
}

/// Rank template rows and sample rows by `ranking` and pair them up.
/// Template ties are broken first, then sample ties, each by `rng`.
pub fn case_permutation<R: Rng + ?Sized>(
    sample: &[Vec<f64>],
    template: &[Vec<f64>],
    ranking: RankingKind,
    rng: &mut R,
) -> Result<CaseReordering> {
    if sample.len() != template.len() {
        return Err(Error::param(format!(
            "sample has {} rows, template has {}",
            sample.len(),
            template.len()
        )));
    }
    let dim = sample.first().map_or(0, Vec::len);
    if sample.iter().chain(template).any(|r| r.len() != dim) {
        return Err(Error::param("sample and template rows differ in dimension"));
    }
    let template_ranks = rank_characteristics(&characteristics(template, ranking)?, rng)?;
    let sample_ranks = rank_characteristics(&characteristics(sample, ranking)?, rng)?;
    let mut by_rank = vec![0; sample.len()];
    for (i, &r) in sample_ranks.iter().enumerate() {
        by_rank[r] = i;
    }
    let source = template_ranks.iter().map(|&r| by_rank[r]).collect();
    Ok(CaseReordering {
        template_ranks,
        sample_ranks,
        source,
    })
}

/// Reorder `sample` (`N × L_c`) to follow the rank structure of
/// `template_case` (`N × L_c`). The output rows are the sample rows,
/// permuted.
pub fn reorder_case<R: Rng + ?Sized>(
    sample: &[Vec<f64>],
    template_case: &[Vec<f64>],
    ranking: RankingKind,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let perm = case_permutation(sample, template_case, ranking, rng)?;
    Ok(perm.source.iter().map(|&i| sample[i].clone()).collect())
}

/// Classic single-margin reordering: output `n` is the sample order
/// statistic whose index is the template rank of `template_margin[n]`.
pub fn reorder_univariate<R: Rng + ?Sized>(sample: &[f64], template_margin: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if sample.len() != template_margin.len() {
        return Err(Error::param(format!(
            "sample has {} values, template has {}",
            sample.len(),
            template_margin.len()
        )));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("sample is not finite"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ranks = rank_characteristics(template_margin, rng)?;
    Ok(ranks.iter().map(|&r| sorted[r]).collect())
}

fn check_fit(case: usize, kind: PostprocessorKind, fit: &CaseFit) -> Result<()> {
    let ok = match (kind, fit) {
        (PostprocessorKind::NormalEmos, CaseFit::Univariate(p)) => p.family == Family::Normal,
        (PostprocessorKind::TruncatedNormalEmos, CaseFit::Univariate(p)) => p.family == Family::TruncatedNormal,
        (PostprocessorKind::BivariateTruncatedNormalEmos, CaseFit::Bivariate(_)) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "fit for case {case} does not match its postprocessor {kind:?}"
        )))
    }
}

/// Per-case samples (`N × L_c` each, case margin order), drawn from stream
/// `2c` of `master`.
pub fn draw_case_samples(
    raw: &EnsembleForecast,
    plan: &CasePlan,
    fits: &[CaseFit],
    master: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let cases = plan.partition.cases();
    if fits.len() != cases.len() {
        return Err(Error::Config(format!(
            "{} fitted postprocessors for {} cases",
            fits.len(),
            cases.len()
        )));
    }
    if plan.partition.n_margins() != raw.n_margins() {
        return Err(Error::Config(format!(
            "plan covers {} margins, ensemble has {}",
            plan.partition.n_margins(),
            raw.n_margins()
        )));
    }
    cases
        .iter()
        .zip(fits)
        .enumerate()
        .map(|(c, (case, fit))| {
            check_fit(c, case.kind, fit)?;
            let mut rng = substream(master, 2 * c as u64);
            let wrap = |e: Error| Error::Sampling {
                case: c,
                source: Box::new(e),
            };
            match fit {
                CaseFit::Univariate(p) => {
                    let dist = predict(p, &raw.margin(case.margins[0])).map_err(wrap)?;
                    let values = match plan.sampling {
                        Sampling::Q => sample_q(&dist, plan.n),
                        Sampling::R => sample_r(&dist, plan.n, &mut rng),
                    };
                    Ok(values.into_iter().map(|v| vec![v]).collect())
                }
                CaseFit::Bivariate(p) => {
                    let members: Vec<[f64; 2]> = raw
                        .members()
                        .iter()
                        .map(|row| [row[case.margins[0]], row[case.margins[1]]])
                        .collect();
                    let dist = predict_bivariate(p, &members).map_err(wrap)?;
                    let draws = sample_bivariate(&dist, plan.n, &mut rng, &plan.sampler).map_err(wrap)?;
                    Ok(draws.into_iter().map(|d| d.to_vec()).collect())
                }
            }
        })
        .collect()
}

/// Reorder every case sample by the template, breaking ties with stream
/// `2c + 1` of `master`.
pub fn reorder_cases(
    samples: &[Vec<Vec<f64>>],
    template: &DependenceTemplate,
    plan: &CasePlan,
    master: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if template.n_points() != plan.n {
        return Err(Error::Config(format!(
            "template has {} points, plan asks for {} members",
            template.n_points(),
            plan.n
        )));
    }
    if template.n_margins() != plan.partition.n_margins() {
        return Err(Error::Config(format!(
            "template covers {} margins, plan covers {}",
            template.n_margins(),
            plan.partition.n_margins()
        )));
    }
    let standardized = match (&plan.climatology, plan.ranking) {
        (Some(clim), _) => Some(clim),
        (None, RankingKind::Sen { .. }) => {
            return Err(Error::Config(
                "signed Euclidean norm ranking needs a climatology".into(),
            ))
        }
        (None, _) => None,
    };
    plan.partition
        .cases()
        .iter()
        .zip(samples)
        .enumerate()
        .map(|(c, (case, sample))| {
            let mut rng = substream(master, 2 * c as u64 + 1);
            let slice = |row: &[f64]| -> Vec<f64> {
                match standardized {
                    Some(clim) => clim.standardize_subset(row, &case.margins),
                    None => case.margins.iter().map(|&l| row[l]).collect(),
                }
            };
            let template_case: Vec<Vec<f64>> = template.points().iter().map(|r| slice(r)).collect();
            let perm = match standardized {
                Some(clim) => {
                    let scaled: Vec<Vec<f64>> = sample
                        .iter()
                        .map(|row| {
                            row.iter()
                                .zip(&case.margins)
                                .map(|(v, &l)| (v - clim.mean(l)) / clim.sd(l))
                                .collect()
                        })
                        .collect();
                    case_permutation(&scaled, &template_case, plan.ranking, &mut rng)?
                }
                None => case_permutation(sample, &template_case, plan.ranking, &mut rng)?,
            };
            Ok(perm.source.iter().map(|&i| sample[i].clone()).collect())
        })
        .collect()
}

/// Member `n` of the result concatenates row `n` of every case, placed at
/// the case's catalog positions.
pub fn assemble(
    raw: &EnsembleForecast,
    partition: &CasePartition,
    cases: &[Vec<Vec<f64>>],
) -> Result<EnsembleForecast> {
    let n = cases.first().map_or(0, Vec::len);
    let mut members = vec![vec![0.0; partition.n_margins()]; n];
    for (case, rows) in partition.cases().iter().zip(cases) {
        if rows.len() != n {
            return Err(Error::param("cases differ in ensemble size"));
        }
        for (member, row) in members.iter_mut().zip(rows) {
            for (&l, v) in case.margins.iter().zip(row) {
                member[l] = *v;
            }
        }
    }
    EnsembleForecast::new(raw.valid_date, members, raw.catalog().clone(), raw.exchangeable)
}

/// The full pipeline for one forecast instance. Draws one master seed from
/// `rng`.
pub fn ldp_reorder<R: RngCore + ?Sized>(
    raw: &EnsembleForecast,
    plan: &CasePlan,
    template: &DependenceTemplate,
    fits: &[CaseFit],
    rng: &mut R,
) -> Result<EnsembleForecast> {
    if let TemplateSource::EccRawEnsemble = template.source() {
        if template.n_points() != raw.n_members() {
            return Err(Error::Config(format!(
                "ECC template has {} points for a {}-member ensemble",
                template.n_points(),
                raw.n_members()
            )));
        }
    }
    let master = rng.next_u64();
    let samples = draw_case_samples(raw, plan, fits, master)?;
    let reordered = reorder_cases(&samples, template, plan, master)?;
    assemble(raw, &plan.partition, &reordered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{margin_catalog, MarginCatalog, MarginIndex, Variable};
    use nalgebra::{Matrix2, Vector2};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    fn catalog(stations: &[&str]) -> MarginCatalog {
        let mut v = Vec::new();
        for s in stations {
            v.push(MarginIndex::new(Variable::WindSpeed, *s, 24));
            v.push(MarginIndex::new(Variable::Temperature, *s, 24));
        }
        margin_catalog(v).unwrap()
    }

    #[test]
    fn univariate_examples() {
        let out = reorder_univariate(&[30.0, 10.0, 20.0], &[0.2, 0.1, 0.3], &mut rng(0)).unwrap();
        assert_eq!(out, vec![20.0, 10.0, 30.0]);
        let out = reorder_univariate(&[3.0, 1.0, 2.0], &[1.0, 2.0, 3.0], &mut rng(0)).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
        assert!(reorder_univariate(&[1.0], &[1.0, 2.0], &mut rng(0)).is_err());
    }

    #[test]
    fn case_example_two_members() {
        // Template point 0 has rank 2 (1-based), point 1 rank 1.
        let template = vec![vec![2.0, 2.0], vec![1.0, 1.0]];
        let a = vec![5.0, 5.0];
        let b = vec![0.0, 0.0];
        let out = reorder_case(&[b.clone(), a.clone()], &template, RankingKind::MultPr, &mut rng(0)).unwrap();
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn self_template_is_identity() {
        let rows = vec![vec![0.3, 1.0], vec![1.2, 2.5], vec![-0.4, 0.1], vec![2.0, 3.0]];
        for kind in [RankingKind::MultPr, RankingKind::AvPr, RankingKind::SEN] {
            assert_eq!(reorder_case(&rows, &rows, kind, &mut rng(1)).unwrap(), rows);
        }
    }

    #[test]
    fn one_margin_case_matches_univariate() {
        let sample = [4.0, -1.0, 2.5, 0.5, 3.0];
        let template = [0.1, 0.9, 0.4, 0.2, 0.7];
        let rows: Vec<Vec<f64>> = sample.iter().map(|v| vec![*v]).collect();
        let t: Vec<Vec<f64>> = template.iter().map(|v| vec![*v]).collect();
        let uni = reorder_univariate(&sample, &template, &mut rng(2)).unwrap();
        for kind in [
            RankingKind::MultPr,
            RankingKind::AvPr,
            RankingKind::SEN,
            RankingKind::BandDepth,
        ] {
            let case: Vec<f64> = reorder_case(&rows, &t, kind, &mut rng(2))
                .unwrap()
                .into_iter()
                .map(|r| r[0])
                .collect();
            assert_eq!(case, uni);
        }
    }

    #[test]
    fn ecc_template() {
        let cat = catalog(&["A"]);
        let members: Vec<Vec<f64>> = (0..50).map(|m| vec![m as f64 * 0.1, 20.0 - m as f64]).collect();
        let raw = EnsembleForecast::new(date(), members.clone(), cat.clone(), true).unwrap();
        let t = build_template_ecc(&raw);
        assert_eq!(t.points(), &members[..]);
        assert_eq!(t.source(), &TemplateSource::EccRawEnsemble);
        assert!(t.warning.is_none());
        let raw = EnsembleForecast::new(date(), members, cat, false).unwrap();
        assert!(build_template_ecc(&raw).warning.is_some());
    }

    #[test]
    fn schaake_template() {
        let cat = catalog(&["A"]);
        let history: Vec<Observation> = (0..10)
            .map(|d| Observation::new(date() + chrono::Days::new(d), vec![d as f64, -(d as f64)], &cat).unwrap())
            .collect();
        let a = build_template_schaake(&history, 6, &mut rng(3)).unwrap();
        let b = build_template_schaake(&history, 6, &mut rng(3)).unwrap();
        assert_eq!(a, b);
        let TemplateSource::SchaakeHistorical { dates } = a.source() else {
            panic!()
        };
        let mut sorted = dates.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
        let all = build_template_schaake(&history, 10, &mut rng(4)).unwrap();
        assert_eq!(all.n_points(), 10);
        assert!(matches!(
            build_template_schaake(&history, 11, &mut rng(4)),
            Err(Error::InsufficientHistory {
                available: 10,
                required: 11
            })
        ));
    }

    #[test]
    fn quantile_sampling_rejected_for_pairs() {
        let cat = catalog(&["A"]);
        let partition = CasePartition::bivariate_by_station(&cat).unwrap();
        assert!(matches!(
            CasePlan::new(partition, RankingKind::MultPr, Sampling::Q, 10),
            Err(Error::Config(_))
        ));
        let partition = CasePartition::univariate(&cat).unwrap();
        assert!(CasePlan::new(partition, RankingKind::MultPr, Sampling::Q, 10).is_ok());
    }

    fn bivariate_fit(m: usize) -> CaseFit {
        CaseFit::Bivariate(BivariateEmosParams::shared(
            Vector2::new(0.5, 0.0),
            Matrix2::identity() / m as f64,
            m,
            Matrix2::new(1.0, 0.2, 0.2, 1.0),
            Matrix2::identity(),
        ))
    }

    fn raw_ensemble(stations: &[&str], m: usize, seed: u64) -> EnsembleForecast {
        let cat = catalog(stations);
        let mut r = rng(seed);
        let members = (0..m)
            .map(|_| {
                (0..cat.len())
                    .map(|l| {
                        if l % 2 == 0 {
                            3.0 + r.random::<f64>() * 4.0
                        } else {
                            r.random::<f64>() * 10.0 - 5.0
                        }
                    })
                    .collect()
            })
            .collect();
        EnsembleForecast::new(date(), members, cat, true).unwrap()
    }

    #[test]
    fn pipeline_preserves_case_marginals() {
        let m = 20;
        let raw = raw_ensemble(&["A", "B", "C"], m, 5);
        let partition = CasePartition::bivariate_by_station(raw.catalog()).unwrap();
        let plan = CasePlan::new(partition, RankingKind::AvPr, Sampling::R, m).unwrap();
        let fits = vec![bivariate_fit(m); 3];
        let template = build_template_ecc(&raw);
        let master = 99;
        let samples = draw_case_samples(&raw, &plan, &fits, master).unwrap();
        let out = ldp_reorder(&raw, &plan, &template, &fits, &mut FixedRng(master)).unwrap();
        assert_eq!(out.n_members(), m);
        for (case, sample) in plan.partition.cases().iter().zip(&samples) {
            let mut got: Vec<Vec<f64>> = out.select(&case.margins);
            let mut want = sample.clone();
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got, want);
        }
        let again = ldp_reorder(&raw, &plan, &template, &fits, &mut FixedRng(master)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn univariate_plan_matches_classic_ecc() {
        let m = 15;
        let raw = raw_ensemble(&["A", "B"], m, 6);
        let partition = CasePartition::univariate(raw.catalog()).unwrap();
        let plan = CasePlan::new(partition, RankingKind::MultPr, Sampling::R, m).unwrap();
        let fits: Vec<CaseFit> = (0..4)
            .map(|l| {
                let family = if l % 2 == 0 {
                    Family::TruncatedNormal
                } else {
                    Family::Normal
                };
                CaseFit::Univariate(UnivariateEmosParams::shared(family, 0.3, 1.0 / m as f64, m, 0.5, 0.8))
            })
            .collect();
        let master = 1234;
        let out = ldp_reorder(&raw, &plan, &build_template_ecc(&raw), &fits, &mut FixedRng(master)).unwrap();
        for (c, (case, fit)) in plan.partition.cases().iter().zip(&fits).enumerate() {
            let l = case.margins[0];
            let CaseFit::Univariate(p) = fit else { unreachable!() };
            let dist = predict(p, &raw.margin(l)).unwrap();
            let sample = sample_r(&dist, m, &mut substream(master, 2 * c as u64));
            let classic =
                reorder_univariate(&sample, &raw.margin(l), &mut substream(master, 2 * c as u64 + 1)).unwrap();
            assert_eq!(out.margin(l), classic);
        }
    }

    #[test]
    fn sen_requires_climatology() {
        let m = 10;
        let raw = raw_ensemble(&["A"], m, 7);
        let partition = CasePartition::bivariate_by_station(raw.catalog()).unwrap();
        let plan = CasePlan::new(partition, RankingKind::SEN, Sampling::R, m).unwrap();
        let fits = vec![bivariate_fit(m)];
        assert!(matches!(
            ldp_reorder(&raw, &plan, &build_template_ecc(&raw), &fits, &mut rng(0)),
            Err(Error::Config(_))
        ));
        let clim = Climatology::new(raw.catalog().clone(), vec![5.0, 0.0], vec![2.0, 3.0]).unwrap();
        let plan = plan.with_climatology(clim);
        assert!(ldp_reorder(&raw, &plan, &build_template_ecc(&raw), &fits, &mut rng(0)).is_ok());
    }

    #[test]
    fn missing_or_mismatched_fit() {
        let m = 10;
        let raw = raw_ensemble(&["A"], m, 8);
        let partition = CasePartition::bivariate_by_station(raw.catalog()).unwrap();
        let plan = CasePlan::new(partition, RankingKind::MultPr, Sampling::R, m).unwrap();
        let t = build_template_ecc(&raw);
        assert!(matches!(
            ldp_reorder(&raw, &plan, &t, &[], &mut rng(0)),
            Err(Error::Config(_))
        ));
        let wrong = CaseFit::Univariate(UnivariateEmosParams::shared(Family::Normal, 0.0, 0.1, m, 1.0, 0.0));
        assert!(matches!(
            ldp_reorder(&raw, &plan, &t, &[wrong], &mut rng(0)),
            Err(Error::Config(_))
        ));
    }

    /// Yields a fixed value, so the pipeline's master seed is known.
    pub(super) struct FixedRng(pub u64);

    impl RngCore for FixedRng {
        fn next_u32(&mut self) -> u32 {
            self.0 as u32
        }
        fn next_u64(&mut self) -> u64 {
            self.0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            rand::rand_core::impls::fill_bytes_via_next(self, dst)
        }
    }
}
