//! Derivative-free minimization by the Nelder–Mead simplex method.
//!
//! Uses the dimension-adaptive coefficients of Gao & Han, which behave
//! noticeably better than the classic ones beyond a handful of parameters,
//! and restarts from a fresh simplex around the incumbent until a restart
//! no longer improves the objective.

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMead {
    /// Iteration budget shared by all restarts.
    pub max_iterations: usize,
    /// Convergence when the simplex's objective spread falls below
    /// `tolerance · (1 + |f_best|)`.
    pub tolerance: f64,
    /// Extra restarts after the first convergence.
    pub max_restarts: usize,
    /// Initial simplex edge, relative to each coordinate's magnitude.
    pub relative_step: f64,
    /// Initial simplex edge for coordinates at zero.
    pub absolute_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iterations: 500,
            tolerance: 1e-8,
            max_restarts: 3,
            relative_step: 0.1,
            absolute_step: 0.1,
        }
    }
}

struct Vertex {
    x: Vec<f64>,
    f: f64,
}

fn eval<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], count: &mut usize) -> f64 {
    *count += 1;
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut objective: F, start: &[f64]) -> Minimum {
        let n = start.len();
        let mut evaluations = 0;
        let mut iterations = 0;
        let mut trace = Vec::new();
        let mut best_x = start.to_vec();
        let mut best_f = eval(&mut objective, start, &mut evaluations);
        let mut converged = false;

        for restart in 0..=self.max_restarts {
            let before = best_f;
            let (x, f, ok) = self.run(
                &mut objective,
                &best_x,
                best_f,
                &mut iterations,
                &mut evaluations,
                &mut trace,
            );
            if f <= best_f {
                best_x = x;
                best_f = f;
            }
            converged = ok;
            if !ok || iterations >= self.max_iterations {
                break;
            }
            // A restart that cannot improve confirms the minimum.
            if restart > 0 && before - best_f <= self.tolerance * (1.0 + best_f.abs()) {
                break;
            }
        }
        if n == 0 {
            converged = true;
        }
        Minimum {
            x: best_x,
            value: best_f,
            iterations,
            evaluations,
            converged,
            trace,
        }
    }

    fn run<F: FnMut(&[f64]) -> f64>(
        &self,
        objective: &mut F,
        start: &[f64],
        start_f: f64,
        iterations: &mut usize,
        evaluations: &mut usize,
        trace: &mut Vec<f64>,
    ) -> (Vec<f64>, f64, bool) {
        let n = start.len();
        if n == 0 {
            return (start.to_vec(), start_f, true);
        }
        let dim = n as f64;
        let reflect = 1.0;
        let expand = 1.0 + 2.0 / dim;
        let contract = 0.75 - 1.0 / (2.0 * dim);
        let shrink = 1.0 - 1.0 / dim;

        let mut simplex = Vec::with_capacity(n + 1);
        simplex.push(Vertex {
            x: start.to_vec(),
            f: start_f,
        });
        for i in 0..n {
            let mut x = start.to_vec();
            let step = if x[i] != 0.0 {
                self.relative_step * x[i].abs()
            } else {
                self.absolute_step
            };
            x[i] += step;
            let f = eval(objective, &x, evaluations);
            simplex.push(Vertex { x, f });
        }

        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        loop {
            simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
            let spread = simplex[n].f - simplex[0].f;
            if spread <= self.tolerance * (1.0 + simplex[0].f.abs()) && simplex[0].f.is_finite() {
                let best = simplex.swap_remove(0);
                return (best.x, best.f, true);
            }
            if *iterations >= self.max_iterations {
                let best = simplex.swap_remove(0);
                return (best.x, best.f, false);
            }
            *iterations += 1;

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for v in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(&v.x) {
                    *c += xi / dim;
                }
            }
            let worst_f = simplex[n].f;
            let point = |coef: f64, worst: &[f64], out: &mut Vec<f64>| {
                for ((o, c), w) in out.iter_mut().zip(&centroid).zip(worst) {
                    *o = c + coef * (c - w);
                }
            };

            point(reflect, &simplex[n].x, &mut trial);
            let fr = eval(objective, &trial, evaluations);
            if fr < simplex[0].f {
                let reflected = trial.clone();
                point(expand, &simplex[n].x, &mut trial);
                let fe = eval(objective, &trial, evaluations);
                simplex[n] = if fe < fr {
                    Vertex {
                        x: trial.clone(),
                        f: fe,
                    }
                } else {
                    Vertex { x: reflected, f: fr }
                };
            } else if fr < simplex[n - 1].f {
                simplex[n] = Vertex {
                    x: trial.clone(),
                    f: fr,
                };
            } else {
                let outside = fr < worst_f;
                let coef = if outside { contract } else { -contract };
                point(coef, &simplex[n].x, &mut trial);
                let fc = eval(objective, &trial, evaluations);
                if fc < fr.min(worst_f) || (outside && fc <= fr) {
                    simplex[n] = Vertex {
                        x: trial.clone(),
                        f: fc,
                    };
                } else {
                    let (head, tail) = simplex.split_at_mut(1);
                    let best = &head[0].x;
                    for v in tail.iter_mut() {
                        for (xi, bi) in v.x.iter_mut().zip(best) {
                            *xi = bi + shrink * (*xi - bi);
                        }
                        v.f = eval(objective, &v.x, evaluations);
                    }
                }
            }
            let best = simplex.iter().map(|v| v.f).fold(f64::INFINITY, f64::min);
            trace.push(best.min(trace.last().copied().unwrap_or(f64::INFINITY)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let nm = NelderMead {
            max_iterations: 2000,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2) + 2.0,
            &[0.0, 0.0],
        );
        assert!(m.converged);
        assert!((m.x[0] - 3.0).abs() < 1e-3 && (m.x[1] + 1.0).abs() < 1e-3, "{:?}", m.x);
        assert!((m.value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            max_iterations: 5000,
            tolerance: 1e-14,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn trace_never_increases() {
        let nm = NelderMead::default();
        let m = nm.minimize(|x| x.iter().map(|v| (v - 1.5).powi(4)).sum(), &[0.0; 5]);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.value <= *m.trace.last().unwrap());
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let nm = NelderMead {
            max_iterations: 5,
            ..Default::default()
        };
        let m = nm.minimize(|x| x.iter().map(|v| v * v).sum(), &[10.0; 6]);
        assert!(!m.converged);
        assert_eq!(m.iterations, 5);
    }

    #[test]
    fn infeasible_points_are_avoided() {
        let nm = NelderMead::default();
        let m = nm.minimize(|x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) }, &[2.0]);
        assert!((m.x[0] - 0.5).abs() < 1e-3);
    }
}
