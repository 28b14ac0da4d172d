//! Bivariate EMOS for (wind speed, temperature) pairs.
//!
//! The predictive law is a bivariate normal with location
//! `A + Σ B_m x_m` and scale `C + D·S·Dᵀ`, where `S` is the member
//! covariance with denominator `M − 1`, truncated below at zero in the first
//! (wind) coordinate. Parameters minimize the mean logarithmic score.
//!
//! `C` is searched as `G·Gᵀ` with `G` lower triangular, so it stays
//! symmetric nonnegative definite for every candidate. A floor of
//! [`SIGMA_FLOOR`]`·I` is added to every scale matrix.

use nalgebra::{Cholesky, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::normal::{self, TruncatedNormal};
use crate::optim::NelderMead;
use crate::scoring::logscore_bivariate_unchecked;

pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BivariateEmosParams {
    pub a: Vector2<f64>,
    /// One matrix per member; all equal for an exchangeable fit.
    pub b: Vec<Matrix2<f64>>,
    /// Symmetric nonnegative definite.
    pub c: Matrix2<f64>,
    /// Unconstrained.
    pub d: Matrix2<f64>,
}

impl BivariateEmosParams {
    pub fn shared(a: Vector2<f64>, b: Matrix2<f64>, m: usize, c: Matrix2<f64>, d: Matrix2<f64>) -> Self {
        BivariateEmosParams { a, b: vec![b; m], c, d }
    }

    pub fn exchangeable(&self) -> bool {
        self.b.windows(2).all(|w| w[0] == w[1])
    }

    pub fn n_members(&self) -> usize {
        self.b.len()
    }

    /// `Σ_m B_m`, the coefficient on the ensemble mean.
    pub fn total_b(&self) -> Matrix2<f64> {
        self.b.iter().sum()
    }

    /// `[A, B_1.., C, D]` flattened row by row.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.a[0], self.a[1]];
        let mut push = |m: &Matrix2<f64>| v.extend([m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]);
        for b in &self.b {
            push(b);
        }
        push(&self.c);
        push(&self.d);
        v
    }
}

/// Bivariate normal with the first coordinate truncated below at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariatePredictive {
    pub mu: Vector2<f64>,
    /// Exactly symmetric, positive definite.
    pub sigma: Matrix2<f64>,
}

impl BivariatePredictive {
    /// Symmetrizes `sigma` and checks positive definiteness; no floor added.
    pub fn new(mu: Vector2<f64>, sigma: Matrix2<f64>) -> Result<Self> {
        let sigma = 0.5 * (sigma + sigma.transpose());
        if !mu.iter().all(|v| v.is_finite()) || !sigma.iter().all(|v| v.is_finite()) {
            return Err(Error::DegeneratePredictive("non-finite location or scale".into()));
        }
        if Cholesky::new(sigma).is_none() {
            return Err(Error::DegeneratePredictive(format!(
                "scale matrix [[{}, {}], [{}, {}]] is not positive definite",
                sigma[(0, 0)],
                sigma[(0, 1)],
                sigma[(1, 0)],
                sigma[(1, 1)]
            )));
        }
        Ok(BivariatePredictive { mu, sigma })
    }

    /// Probability that an untruncated draw lands in the support.
    pub fn acceptance(&self) -> f64 {
        normal::cdf(self.mu[0] / self.sigma[(0, 0)].sqrt())
    }

    /// `−ln f(y)`; `None` outside the support.
    pub fn logscore(&self, y: [f64; 2]) -> Option<f64> {
        if !(y[0] >= 0.0) {
            return None;
        }
        logscore_bivariate_unchecked(
            [self.mu[0], self.mu[1]],
            self.sigma[(0, 0)],
            self.sigma[(0, 1)],
            self.sigma[(1, 1)],
            y,
        )
    }
}

/// Member covariance with denominator `M − 1`.
pub fn ensemble_cov(members: &[[f64; 2]]) -> Result<Matrix2<f64>> {
    if members.len() < 2 {
        return Err(Error::param(format!(
            "covariance needs at least 2 members, got {}",
            members.len()
        )));
    }
    Ok(mean_and_cov(members).1)
}

fn mean_and_cov(members: &[[f64; 2]]) -> (Vector2<f64>, Matrix2<f64>) {
    let m = members.len() as f64;
    let mean = members
        .iter()
        .fold(Vector2::zeros(), |acc, x| acc + Vector2::new(x[0], x[1]))
        / m;
    let mut s = Matrix2::zeros();
    for x in members {
        let d = Vector2::new(x[0], x[1]) - mean;
        s += d * d.transpose();
    }
    (mean, s / (m - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BivariateFitConfig {
    pub min_training: usize,
    pub optimizer: NelderMead,
}

impl Default for BivariateFitConfig {
    fn default() -> Self {
        BivariateFitConfig {
            min_training: 10,
            optimizer: NelderMead {
                max_iterations: 5000,
                ..NelderMead::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BivariateFit {
    pub params: BivariateEmosParams,
    /// Mean training log score at `params`.
    pub mean_logscore: f64,
    pub iterations: usize,
    /// Best mean training log score after each optimizer iteration.
    pub trace: Vec<f64>,
}

/// Raw members `[wind, temp]` and the verifying observation.
pub type BivariateTrainingPair = (Vec<[f64; 2]>, [f64; 2]);

struct Prepared<'a> {
    training: &'a [BivariateTrainingPair],
    sums: Vec<Vector2<f64>>,
    covs: Vec<Matrix2<f64>>,
}

fn mat(t: &[f64]) -> Matrix2<f64> {
    Matrix2::new(t[0], t[1], t[2], t[3])
}

struct Layout {
    m: usize,
    exchangeable: bool,
}

impl Layout {
    fn n_b(&self) -> usize {
        if self.exchangeable {
            1
        } else {
            self.m
        }
    }

    fn decode(&self, theta: &[f64]) -> BivariateEmosParams {
        let a = Vector2::new(theta[0], theta[1]);
        let nb = self.n_b();
        let b = if self.exchangeable {
            vec![mat(&theta[2..6]); self.m]
        } else {
            (0..nb).map(|k| mat(&theta[2 + 4 * k..6 + 4 * k])).collect()
        };
        let off = 2 + 4 * nb;
        let g = Matrix2::new(theta[off], 0.0, theta[off + 1], theta[off + 2]);
        let d = mat(&theta[off + 3..off + 7]);
        BivariateEmosParams {
            a,
            b,
            c: g * g.transpose(),
            d,
        }
    }

    fn encode(&self, a: Vector2<f64>, b: Matrix2<f64>, g: Matrix2<f64>, d: Matrix2<f64>) -> Vec<f64> {
        let mut theta = vec![a[0], a[1]];
        for _ in 0..self.n_b() {
            theta.extend([b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]]);
        }
        theta.extend([g[(0, 0)], g[(1, 0)], g[(1, 1)]]);
        theta.extend([d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]]);
        theta
    }
}

fn location(p: &BivariateEmosParams, members: &[[f64; 2]], sum: &Vector2<f64>, exchangeable: bool) -> Vector2<f64> {
    if exchangeable {
        p.a + p.b[0] * sum
    } else {
        p.b.iter()
            .zip(members)
            .fold(p.a, |acc, (b, x)| acc + b * Vector2::new(x[0], x[1]))
    }
}

fn scale(p: &BivariateEmosParams, s: &Matrix2<f64>) -> Matrix2<f64> {
    let raw = p.c + p.d * s * p.d.transpose() + Matrix2::identity() * SIGMA_FLOOR;
    0.5 * (raw + raw.transpose())
}

fn mean_logscore(p: &BivariateEmosParams, data: &Prepared<'_>, exchangeable: bool) -> f64 {
    let mut total = 0.0;
    for (i, (members, y)) in data.training.iter().enumerate() {
        let mu = location(p, members, &data.sums[i], exchangeable);
        let sigma = scale(p, &data.covs[i]);
        match logscore_bivariate_unchecked([mu[0], mu[1]], sigma[(0, 0)], sigma[(0, 1)], sigma[(1, 1)], *y) {
            Some(v) => total += v,
            None => return f64::INFINITY,
        }
    }
    let v = total / data.training.len() as f64;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimum mean log-score estimation over `training`.
pub fn fit_bivariate_emos(
    training: &[BivariateTrainingPair],
    exchangeable: bool,
    config: &BivariateFitConfig,
) -> Result<BivariateFit> {
    if training.len() < config.min_training.max(1) {
        return Err(Error::param(format!(
            "training set has {} instances, at least {} required",
            training.len(),
            config.min_training
        )));
    }
    let m = training[0].0.len();
    if m < 2 {
        return Err(Error::param("bivariate fitting needs at least 2 members"));
    }
    for (i, (members, y)) in training.iter().enumerate() {
        if members.len() != m {
            return Err(Error::param(format!(
                "training instance {i} has {} members, expected {m}",
                members.len()
            )));
        }
        if !y.iter().all(|v| v.is_finite()) || !members.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::param(format!("training instance {i} is not finite")));
        }
        if y[0] < 0.0 {
            return Err(Error::Domain(format!(
                "training wind observation {i} is negative ({})",
                y[0]
            )));
        }
    }

    let (sums, covs): (Vec<_>, Vec<_>) = training
        .iter()
        .map(|(x, _)| {
            let (mean, s) = mean_and_cov(x);
            (mean * m as f64, s)
        })
        .unzip();
    let data = Prepared { training, sums, covs };

    let n = training.len() as f64;
    let residuals: Vec<Vector2<f64>> = training
        .iter()
        .zip(&data.sums)
        .map(|((_, y), s)| Vector2::new(y[0], y[1]) - s / m as f64)
        .collect();
    let mean_r = residuals.iter().sum::<Vector2<f64>>() / n;
    let residual_cov = residuals
        .iter()
        .map(|r| (r - mean_r) * (r - mean_r).transpose())
        .sum::<Matrix2<f64>>()
        / n;
    let g = Cholesky::new(residual_cov + Matrix2::identity() * 1e-4)
        .ok_or_else(|| Error::DegenerateFit("training residual covariance is not finite".into()))?
        .l();

    let layout = Layout { m, exchangeable };
    let start = layout.encode(Vector2::zeros(), Matrix2::identity() / m as f64, g, Matrix2::zeros());
    let min = config.optimizer.minimize(
        |theta| mean_logscore(&layout.decode(theta), &data, exchangeable),
        &start,
    );
    let params = layout.decode(&min.x);
    if !min.value.is_finite() {
        return Err(Error::DegenerateFit(
            "no candidate yields a positive definite scale".into(),
        ));
    }
    if !min.converged {
        return Err(Error::NotConverged {
            iterations: min.iterations,
            objective: min.value,
            best: params.to_vec(),
        });
    }
    Ok(BivariateFit {
        params,
        mean_logscore: min.value,
        iterations: min.iterations,
        trace: min.trace,
    })
}

/// Predictive law for one raw ensemble of `[wind, temp]` members.
pub fn predict_bivariate(params: &BivariateEmosParams, members: &[[f64; 2]]) -> Result<BivariatePredictive> {
    if members.len() != params.b.len() {
        return Err(Error::param(format!(
            "ensemble has {} members, parameters were fitted for {}",
            members.len(),
            params.b.len()
        )));
    }
    let s = ensemble_cov(members)?;
    let mu = params
        .b
        .iter()
        .zip(members)
        .fold(params.a, |acc, (b, x)| acc + b * Vector2::new(x[0], x[1]));
    BivariatePredictive::new(mu, scale(params, &s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Rejection sampling is refused below this acceptance probability.
    pub acceptance_threshold: f64,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            acceptance_threshold: 1e-3,
            burn_in: 100,
            thinning: 1,
        }
    }
}

/// Draw untruncated normals and keep those with a nonnegative first
/// coordinate. Refuses with [`Error::LowAcceptance`] when the acceptance
/// probability is below `threshold`.
pub fn sample_rejection<R: Rng + ?Sized>(
    dist: &BivariatePredictive,
    n: usize,
    rng: &mut R,
    threshold: f64,
) -> Result<Vec<[f64; 2]>> {
    let acceptance = dist.acceptance();
    if !(acceptance >= threshold) || acceptance == 0.0 {
        return Err(Error::LowAcceptance { acceptance, threshold });
    }
    let l = Cholesky::new(dist.sigma)
        .ok_or_else(|| Error::DegeneratePredictive("scale matrix is not positive definite".into()))?
        .l();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z = Vector2::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let x = dist.mu + l * z;
        if x[0] >= 0.0 {
            out.push([x[0], x[1]]);
        }
    }
    Ok(out)
}

/// Gibbs sampler alternating the truncated conditional of the first
/// coordinate and the normal conditional of the second.
///
/// The chain starts from an exact draw of the target (the truncated
/// marginal, then the conditional), so `burn_in` only adds decorrelation.
pub fn sample_gibbs<R: Rng + ?Sized>(
    dist: &BivariatePredictive,
    n: usize,
    rng: &mut R,
    burn_in: usize,
    thinning: usize,
) -> Result<Vec<[f64; 2]>> {
    if thinning == 0 {
        return Err(Error::param("thinning must be at least 1"));
    }
    let (m1, m2) = (dist.mu[0], dist.mu[1]);
    let s11 = dist.sigma[(0, 0)];
    let s12 = dist.sigma[(0, 1)];
    let s22 = dist.sigma[(1, 1)];
    let sd1 = (s11 - s12 * s12 / s22).max(0.0).sqrt();
    let sd2 = (s22 - s12 * s12 / s11).max(0.0).sqrt();
    if !(sd1 > 0.0 && sd2 > 0.0) {
        return Err(Error::DegeneratePredictive(
            "conditional variance is not positive".into(),
        ));
    }
    let draw2 = |x1: f64, rng: &mut R| {
        let z: f64 = rng.sample(StandardNormal);
        m2 + s12 / s11 * (x1 - m1) + sd2 * z
    };
    let mut x1 = TruncatedNormal::new(m1, s11.sqrt()).sample(rng);
    let mut x2 = draw2(x1, rng);
    let mut out = Vec::with_capacity(n);
    let mut step = 0usize;
    while out.len() < n {
        x1 = TruncatedNormal::new(m1 + s12 / s22 * (x2 - m2), sd1).sample(rng);
        x2 = draw2(x1, rng);
        if step >= burn_in && (step - burn_in) % thinning == 0 {
            out.push([x1, x2]);
        }
        step += 1;
    }
    Ok(out)
}

/// Rejection sampling, falling back to Gibbs when acceptance is too low.
pub fn sample_bivariate<R: Rng + ?Sized>(
    dist: &BivariatePredictive,
    n: usize,
    rng: &mut R,
    config: &SamplerConfig,
) -> Result<Vec<[f64; 2]>> {
    match sample_rejection(dist, n, rng, config.acceptance_threshold) {
        Err(Error::LowAcceptance { .. }) => sample_gibbs(dist, n, rng, config.burn_in, config.thinning),
        other => other,
    }
}
