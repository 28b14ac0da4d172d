//! Independent reference implementations used only by tests.
#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::standard()
}

/// Adaptive 7/15-point Gauss–Kronrod quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];
    fn rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut kronrod = WGK[7] * fc;
        let mut gauss = WG[3] * fc;
        for i in 0..7 {
            let x = h * XGK[i];
            let s = f(c - x) + f(c + x);
            kronrod += WGK[i] * s;
            if i % 2 == 1 {
                gauss += WG[i / 2] * s;
            }
        }
        (kronrod * h, (kronrod - gauss).abs() * h)
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = rule(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1) + recurse(f, m, b, 0.5 * tol, depth - 1)
    }
    recurse(f, a, b, tol, 40)
}

/// `∫ (F(t) − 1{t ≥ y})² dt` for a CDF supported inside `[lo, hi]`.
fn crps_integral<F: Fn(f64) -> f64>(cdf: F, y: f64, lo: f64, hi: f64) -> f64 {
    let below = |t: f64| cdf(t).powi(2);
    let above = |t: f64| (1.0 - cdf(t)).powi(2);
    let mut total = 0.0;
    if y > lo {
        total += integrate(&below, lo, y.min(hi), 1e-12);
    }
    if y < hi {
        total += integrate(&above, y.max(lo), hi, 1e-12);
    }
    // Outside [lo, hi] the integrand is exactly 0 or 1.
    total + (y - hi).max(0.0) + (lo - y).max(0.0)
}

pub fn crps_normal_quadrature(mu: f64, sigma: f64, y: f64) -> f64 {
    let n = std_normal();
    crps_integral(|t| n.cdf((t - mu) / sigma), y, mu - 40.0 * sigma, mu + 40.0 * sigma)
}

/// Same integral for `N(mu, sigma²)` conditioned on `[0, ∞)`, with the CDF
/// written through upper tails so deep truncation stays accurate.
pub fn crps_truncnormal_quadrature(mu: f64, sigma: f64, y: f64) -> f64 {
    let n = std_normal();
    let tail0 = n.sf(-mu / sigma);
    let cdf = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (tail0 - n.sf((t - mu) / sigma)) / tail0
        }
    };
    crps_integral(cdf, y, 0.0, mu.max(0.0) + 40.0 * sigma)
}

/// `#{ν : z_ν ≤ z_n coordinatewise}` by direct comparison.
pub fn brute_multivariate(points: &[Vec<f64>]) -> Vec<usize> {
    let mut out = Vec::new();
    for zn in points {
        let mut count = 0;
        for zv in points {
            let mut all = true;
            for l in 0..zn.len() {
                if zv[l] > zn[l] {
                    all = false;
                }
            }
            if all {
                count += 1;
            }
        }
        out.push(count);
    }
    out
}

/// Mean over margins of the per-margin `≤` counts.
pub fn brute_average(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    points
        .iter()
        .map(|zn| {
            let mut total = 0usize;
            for l in 0..dim {
                total += points.iter().filter(|zv| zv[l] <= zn[l]).count();
            }
            total as f64 / dim as f64
        })
        .collect()
}

/// Mean over margins of the number of pairs `{i, j}`, `i ≠ j`, whose range
/// contains the point's value.
pub fn brute_banddepth(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    let n = points.len();
    points
        .iter()
        .map(|zn| {
            let mut total = 0usize;
            for l in 0..dim {
                for i in 0..n {
                    for j in i + 1..n {
                        let lo = points[i][l].min(points[j][l]);
                        let hi = points[i][l].max(points[j][l]);
                        if lo <= zn[l] && zn[l] <= hi {
                            total += 1;
                        }
                    }
                }
            }
            total as f64 / dim as f64
        })
        .collect()
}

/// `P(a ≤ X₁ ≤ b)` for the first coordinate of the truncated bivariate
/// law, `0 ≤ a ≤ b`.
pub fn truncated_first_margin_prob(mu1: f64, s11: f64, a: f64, b: f64) -> f64 {
    let n = std_normal();
    let sd = s11.sqrt();
    let mass = n.sf(-mu1 / sd);
    (n.sf((a - mu1) / sd) - n.sf((b - mu1) / sd)) / mass
}

/// `E[X₂ | X₁ ≥ 0]` for a bivariate normal.
pub fn truncated_second_mean(mu: [f64; 2], s11: f64, s12: f64) -> f64 {
    let n = std_normal();
    let sd = s11.sqrt();
    let alpha = -mu[0] / sd;
    let density = (-0.5 * alpha * alpha).exp() / (2.0 * std::f64::consts::PI).sqrt();
    mu[1] + s12 / sd * density / n.sf(alpha)
}

/// Mean and its standard error by non-overlapping batch means, robust to
/// autocorrelation.
pub fn batch_mean(values: &[f64], batches: usize) -> (f64, f64) {
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|k| values[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (mean, (var / batches as f64).sqrt())
}
