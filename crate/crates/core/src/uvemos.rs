//! Univariate EMOS: normal and zero-truncated normal predictive laws fitted
//! by minimum mean CRPS, with quantile (Q) and random (R) discretization.
//!
//! The predictive law for members `x_1..x_M` has location
//! `a + Σ b_m x_m` and variance `c + d·s²`, where `s²` is the member
//! variance with denominator `M`.

use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::normal::{self, TruncatedNormal};
use crate::optim::NelderMead;
use crate::scoring::{crps_normal_unchecked, crps_truncnormal_unchecked};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `N(μ, σ²)`, used for temperature.
    Normal,
    /// `N(μ, σ²)` truncated below at zero, used for wind speed.
    TruncatedNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateEmosParams {
    pub a: f64,
    /// One coefficient per member; all equal for an exchangeable fit.
    pub b: Vec<f64>,
    pub c: f64,
    pub d: f64,
    pub family: Family,
}

impl UnivariateEmosParams {
    /// Parameters with one coefficient `b` shared by `m` members.
    pub fn shared(family: Family, a: f64, b: f64, m: usize, c: f64, d: f64) -> Self {
        UnivariateEmosParams {
            a,
            b: vec![b; m],
            c,
            d,
            family,
        }
    }

    /// True when every member has the same coefficient.
    pub fn exchangeable(&self) -> bool {
        self.b.windows(2).all(|w| w[0] == w[1])
    }

    pub fn n_members(&self) -> usize {
        self.b.len()
    }

    /// `[a, b_1..b_M, c, d]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.b.len() + 3);
        v.push(self.a);
        v.extend_from_slice(&self.b);
        v.push(self.c);
        v.push(self.d);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariatePredictive {
    pub family: Family,
    /// Location before truncation.
    pub mu: f64,
    /// Scale before truncation, `> 0`.
    pub sigma: f64,
}

impl UnivariatePredictive {
    pub fn new(family: Family, mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
            return Err(Error::DegeneratePredictive(format!("location {mu}, scale {sigma}")));
        }
        Ok(UnivariatePredictive { family, mu, sigma })
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self.family {
            Family::Normal => normal::cdf((t - self.mu) / self.sigma),
            Family::TruncatedNormal => TruncatedNormal::new(self.mu, self.sigma).cdf(t),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self.family {
            Family::Normal => self.mu + self.sigma * normal::quantile(u),
            Family::TruncatedNormal => TruncatedNormal::new(self.mu, self.sigma).quantile(u),
        }
    }

    /// Closed-form CRPS at `y`. The truncated family requires `y ≥ 0`.
    pub fn crps(&self, y: f64) -> f64 {
        match self.family {
            Family::Normal => crps_normal_unchecked(self.mu, self.sigma, y),
            Family::TruncatedNormal => crps_truncnormal_unchecked(self.mu, self.sigma, y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Fewer training instances than this are refused.
    pub min_training: usize,
    /// Constrain regression coefficients to be nonnegative.
    pub nonnegative_b: bool,
    pub optimizer: NelderMead,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            min_training: 10,
            nonnegative_b: false,
            optimizer: NelderMead::default(),
        }
    }
}

/// A converged fit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateFit {
    pub params: UnivariateEmosParams,
    /// Mean training CRPS at `params`.
    pub mean_crps: f64,
    pub iterations: usize,
    /// Best mean training CRPS after each optimizer iteration.
    pub trace: Vec<f64>,
}

/// One training instance: raw members and the verifying observation.
pub type TrainingPair = (Vec<f64>, f64);

/// Member variance with denominator `M`.
pub fn member_variance(members: &[f64]) -> f64 {
    let m = members.len() as f64;
    let mean = members.iter().sum::<f64>() / m;
    members.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m
}

struct Prepared<'a> {
    training: &'a [TrainingPair],
    sums: Vec<f64>,
    variances: Vec<f64>,
}

struct Layout {
    m: usize,
    exchangeable: bool,
    nonnegative_b: bool,
    family: Family,
}

impl Layout {
    fn decode(&self, theta: &[f64]) -> UnivariateEmosParams {
        let coef = |t: f64| if self.nonnegative_b { t * t } else { t };
        let n_b = if self.exchangeable { 1 } else { self.m };
        let b = if self.exchangeable {
            vec![coef(theta[1]); self.m]
        } else {
            theta[1..=self.m].iter().map(|&t| coef(t)).collect()
        };
        UnivariateEmosParams {
            a: theta[0],
            b,
            c: theta[n_b + 1] * theta[n_b + 1],
            d: theta[n_b + 2] * theta[n_b + 2],
            family: self.family,
        }
    }

    fn encode(&self, a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
        let b = if self.nonnegative_b { b.max(0.0).sqrt() } else { b };
        let n_b = if self.exchangeable { 1 } else { self.m };
        let mut theta = vec![a];
        theta.extend(std::iter::repeat(b).take(n_b));
        theta.push(c.sqrt());
        theta.push(d.sqrt());
        theta
    }
}

fn mean_crps(p: &UnivariateEmosParams, data: &Prepared<'_>, exchangeable: bool) -> f64 {
    let mut total = 0.0;
    for (i, (members, y)) in data.training.iter().enumerate() {
        let mu = if exchangeable {
            p.a + p.b[0] * data.sums[i]
        } else {
            p.a + p.b.iter().zip(members).map(|(b, x)| b * x).sum::<f64>()
        };
        let var = p.c + p.d * data.variances[i];
        if !(var > 0.0) {
            return f64::INFINITY;
        }
        let sigma = var.sqrt();
        total += match p.family {
            Family::Normal => crps_normal_unchecked(mu, sigma, *y),
            Family::TruncatedNormal => crps_truncnormal_unchecked(mu, sigma, *y),
        };
    }
    let v = total / data.training.len() as f64;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimum-CRPS estimation over `training`.
///
/// Nonnegativity of `c` and `d` is enforced by optimizing their square
/// roots. A fit that exhausts the iteration budget is reported as
/// [`Error::NotConverged`] carrying `[a, b.., c, d]` at the best point.
pub fn fit_univariate_emos(
    training: &[TrainingPair],
    family: Family,
    exchangeable: bool,
    config: &FitConfig,
) -> Result<UnivariateFit> {
    if training.len() < config.min_training.max(1) {
        return Err(Error::param(format!(
            "training set has {} instances, at least {} required",
            training.len(),
            config.min_training
        )));
    }
    let m = training[0].0.len();
    if m == 0 {
        return Err(Error::param("training ensembles are empty"));
    }
    for (i, (members, y)) in training.iter().enumerate() {
        if members.len() != m {
            return Err(Error::param(format!(
                "training instance {i} has {} members, expected {m}",
                members.len()
            )));
        }
        if !y.is_finite() || members.iter().any(|x| !x.is_finite()) {
            return Err(Error::param(format!("training instance {i} is not finite")));
        }
        if family == Family::TruncatedNormal && *y < 0.0 {
            return Err(Error::Domain(format!("training observation {i} is negative ({y})")));
        }
    }
    let constant_members = training.iter().all(|(x, _)| x.iter().all(|v| *v == x[0]));
    let constant_obs = training.iter().all(|(_, y)| *y == training[0].1);
    if constant_members && constant_obs {
        return Err(Error::DegenerateFit(
            "all observations are equal and every ensemble is constant".into(),
        ));
    }

    let data = Prepared {
        training,
        sums: training.iter().map(|(x, _)| x.iter().sum()).collect(),
        variances: training.iter().map(|(x, _)| member_variance(x)).collect(),
    };
    let layout = Layout {
        m,
        exchangeable,
        nonnegative_b: config.nonnegative_b,
        family,
    };

    let n = training.len() as f64;
    let residuals: Vec<f64> = training
        .iter()
        .zip(&data.sums)
        .map(|((_, y), s)| y - s / m as f64)
        .collect();
    let mean_residual = residuals.iter().sum::<f64>() / n;
    let residual_var = residuals
        .iter()
        .map(|r| (r - mean_residual) * (r - mean_residual))
        .sum::<f64>()
        / n;
    let start = layout.encode(0.0, 1.0 / m as f64, residual_var.max(1e-4), 1.0);

    let min = config
        .optimizer
        .minimize(|theta| mean_crps(&layout.decode(theta), &data, exchangeable), &start);
    let params = layout.decode(&min.x);
    if !min.converged || !min.value.is_finite() {
        return Err(Error::NotConverged {
            iterations: min.iterations,
            objective: min.value,
            best: params.to_vec(),
        });
    }
    Ok(UnivariateFit {
        params,
        mean_crps: min.value,
        iterations: min.iterations,
        trace: min.trace,
    })
}

/// Predictive law for one raw ensemble.
pub fn predict(params: &UnivariateEmosParams, members: &[f64]) -> Result<UnivariatePredictive> {
    if members.len() != params.b.len() {
        return Err(Error::param(format!(
            "ensemble has {} members, parameters were fitted for {}",
            members.len(),
            params.b.len()
        )));
    }
    let mu = params.a + params.b.iter().zip(members).map(|(b, x)| b * x).sum::<f64>();
    let var = params.c + params.d * member_variance(members);
    if !(var > 0.0) {
        return Err(Error::DegeneratePredictive(format!("predictive variance {var}")));
    }
    UnivariatePredictive::new(params.family, mu, var.sqrt())
}

/// Scheme Q: the quantiles at levels `n/(N+1)`, `n = 1..N`, ascending.
pub fn sample_q(dist: &UnivariatePredictive, n: usize) -> Vec<f64> {
    let denom = (n + 1) as f64;
    (1..=n).map(|i| dist.quantile(i as f64 / denom)).collect()
}

/// Scheme R: `N` inverse-CDF transforms of independent uniforms.
pub fn sample_r<R: Rng + ?Sized>(dist: &UnivariatePredictive, n: usize, rng: &mut R) -> Vec<f64> {
    match dist.family {
        Family::Normal => (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                dist.mu + dist.sigma * normal::quantile(u)
            })
            .collect(),
        Family::TruncatedNormal => {
            let law = TruncatedNormal::new(dist.mu, dist.sigma);
            (0..n).map(|_| law.sample(rng)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use crate::scoring::crps_ensemble;

    /// `y = 2 + x̄ + ε`, `ε ~ N(0, 0.25)`, members around a moving centre.
    fn synthetic(seed: u64, n: usize, m: usize) -> Vec<TrainingPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centre = Normal::new(10.0, 3.0).unwrap();
        let spread = Normal::new(0.0, 1.0).unwrap();
        let noise = Normal::new(0.0, 0.5).unwrap();
        (0..n)
            .map(|_| {
                let c = centre.sample(&mut rng);
                let x: Vec<f64> = (0..m).map(|_| c + spread.sample(&mut rng)).collect();
                let mean = x.iter().sum::<f64>() / m as f64;
                (x, 2.0 + mean + noise.sample(&mut rng))
            })
            .collect()
    }

    #[test]
    fn recovers_synthetic_truth() {
        let m = 10;
        let training = synthetic(1, 500, m);
        let fit = fit_univariate_emos(&training, Family::Normal, true, &FitConfig::default()).unwrap();
        let p = &fit.params;
        let mean_s2 = training.iter().map(|(x, _)| member_variance(x)).sum::<f64>() / 500.0;
        let sum_b: f64 = p.b.iter().sum();
        assert!((p.a - 2.0).abs() < 0.2, "a = {}", p.a);
        assert!((sum_b - 1.0).abs() < 0.1, "Σb = {sum_b}");
        // Compare with the noise variance actually realized in this draw.
        let realized = training
            .iter()
            .map(|(x, y)| (y - 2.0 - x.iter().sum::<f64>() / m as f64).powi(2))
            .sum::<f64>()
            / 500.0;
        let var = p.c + p.d * mean_s2;
        assert!((var - realized).abs() < 0.1 * realized, "variance {var} vs {realized}");
    }

    #[test]
    fn exchangeable_fit_shares_coefficients() {
        let training = synthetic(2, 60, 5);
        let fit = fit_univariate_emos(&training, Family::Normal, true, &FitConfig::default()).unwrap();
        assert!(fit.params.b.iter().all(|b| *b == fit.params.b[0]));
        assert_eq!(fit.params.b.len(), 5);
    }

    #[test]
    fn fit_beats_raw_ensemble() {
        let training = synthetic(3, 100, 8);
        let fit = fit_univariate_emos(&training, Family::Normal, true, &FitConfig::default()).unwrap();
        let raw = training.iter().map(|(x, y)| crps_ensemble(x, *y).unwrap()).sum::<f64>() / training.len() as f64;
        assert!(fit.mean_crps <= raw, "{} > {raw}", fit.mean_crps);
    }

    #[test]
    fn trace_is_monotone() {
        let training = synthetic(4, 80, 6);
        let fit = fit_univariate_emos(&training, Family::Normal, true, &FitConfig::default()).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.mean_crps <= fit.trace[0]);
    }

    #[test]
    fn shift_moves_intercept() {
        let training = synthetic(5, 300, 6);
        let delta = 4.0;
        let shifted: Vec<TrainingPair> = training
            .iter()
            .map(|(x, y)| (x.iter().map(|v| v + delta).collect(), y + delta))
            .collect();
        let config = FitConfig::default();
        let p = fit_univariate_emos(&training, Family::Normal, true, &config)
            .unwrap()
            .params;
        let q = fit_univariate_emos(&shifted, Family::Normal, true, &config)
            .unwrap()
            .params;
        let sum_b: f64 = p.b.iter().sum();
        assert!((q.a - (p.a + delta * (1.0 - sum_b))).abs() < 0.05, "{} vs {}", q.a, p.a);
    }

    #[test]
    fn truncated_fit_on_wind_like_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let centre = Normal::new(4.0, 2.0).unwrap();
        let unit = Normal::new(0.0, 1.0).unwrap();
        let training: Vec<TrainingPair> = (0..200)
            .map(|_| {
                let c: f64 = centre.sample(&mut rng);
                let x: Vec<f64> = (0..10).map(|_| (c + 0.5 * unit.sample(&mut rng)).max(0.0)).collect();
                (x, (c + 1.0 + unit.sample(&mut rng)).max(0.0))
            })
            .collect();
        let fit = fit_univariate_emos(&training, Family::TruncatedNormal, true, &FitConfig::default()).unwrap();
        assert!(fit.mean_crps.is_finite());
        let neg = vec![(vec![1.0; 10], -0.5); 10];
        assert!(matches!(
            fit_univariate_emos(&neg, Family::TruncatedNormal, true, &FitConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn refuses_small_or_degenerate_training() {
        let config = FitConfig::default();
        let small = synthetic(7, 9, 4);
        assert!(fit_univariate_emos(&small, Family::Normal, true, &config).is_err());
        let flat = vec![(vec![1.0; 4], 3.0); 20];
        assert!(matches!(
            fit_univariate_emos(&flat, Family::Normal, true, &config),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn budget_exhaustion_carries_best_parameters() {
        let training = synthetic(8, 50, 4);
        let config = FitConfig {
            optimizer: NelderMead {
                max_iterations: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        match fit_univariate_emos(&training, Family::Normal, true, &config) {
            Err(Error::NotConverged { best, iterations, .. }) => {
                assert_eq!(best.len(), 4 + 3);
                assert_eq!(iterations, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn predict_plug_in() {
        let m = 4;
        let p = UnivariateEmosParams::shared(Family::Normal, 0.0, 0.25, m, 1.0, 0.0);
        let d = predict(&p, &[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_abs_diff_eq!(d.mu, 3.0, epsilon = 1e-15);
        assert_eq!(d.sigma, 1.0);
        let q = UnivariateEmosParams::shared(Family::Normal, 0.0, 0.25, m, 4.0, 3.0);
        assert_eq!(predict(&q, &[2.0; 4]).unwrap().sigma, 2.0);
        let z = UnivariateEmosParams::shared(Family::Normal, 0.0, 0.25, m, 0.0, 3.0);
        assert!(matches!(predict(&z, &[2.0; 4]), Err(Error::DegeneratePredictive(_))));
        assert!(predict(&p, &[1.0; 3]).is_err());
    }

    #[test]
    fn quantile_sampling() {
        let std = UnivariatePredictive::new(Family::Normal, 0.0, 1.0).unwrap();
        let q = sample_q(&std, 3);
        assert_abs_diff_eq!(q[0], -0.674_489_750_2, epsilon = 1e-5);
        assert_abs_diff_eq!(q[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[2], 0.674_489_750_2, epsilon = 1e-5);
        let shifted = UnivariatePredictive::new(Family::Normal, 3.0, 2.0).unwrap();
        assert_abs_diff_eq!(sample_q(&shifted, 1)[0], 3.0, epsilon = 1e-12);
        for (a, b) in sample_q(&shifted, 9).iter().zip(sample_q(&std, 9)) {
            assert_abs_diff_eq!(*a, 3.0 + 2.0 * b, epsilon = 1e-12);
        }
        let tn = UnivariatePredictive::new(Family::TruncatedNormal, -1.0, 2.0).unwrap();
        let qs = sample_q(&tn, 20);
        assert!(qs.windows(2).all(|w| w[0] < w[1]));
        assert!(qs[0] > 0.0);
    }

    #[test]
    fn quantile_sample_matches_cdf_exactly() {
        let tn = UnivariatePredictive::new(Family::TruncatedNormal, 0.5, 1.5).unwrap();
        let n = 40;
        for (i, x) in sample_q(&tn, n).iter().enumerate() {
            assert_abs_diff_eq!(tn.cdf(*x), (i + 1) as f64 / (n + 1) as f64, epsilon = 1e-10);
        }
    }

    #[test]
    fn random_sampling() {
        let std = UnivariatePredictive::new(Family::Normal, 0.0, 1.0).unwrap();
        let a = sample_r(&std, 100, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_r(&std, 100, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let big = sample_r(&std, 100_000, &mut ChaCha8Rng::seed_from_u64(10));
        let mean = big.iter().sum::<f64>() / big.len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        let tn = UnivariatePredictive::new(Family::TruncatedNormal, -3.0, 1.0).unwrap();
        assert!(sample_r(&tn, 10_000, &mut ChaCha8Rng::seed_from_u64(11))
            .iter()
            .all(|x| *x >= 0.0));
    }
}
