//! Derivative-free Nelder-Mead simplex minimization.
//!
//! Used to learn GP hyperparameters by minimizing the negative log marginal
//! likelihood over log-space parameters, but generic over any objective.
//! Non-finite objective values are treated as +∞ so the simplex retreats from
//! infeasible regions (e.g. hyperparameters where the covariance matrix fails
//! to factorize).

/// Tuning knobs for [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct NelderMeadConfig {
    /// Evaluation budget. With `max_evals == 0` the start point is returned
    /// untouched.
    pub max_evals: usize,
    /// Terminate when the spread of vertex function values falls below this…
    pub tol_f: f64,
    /// …and the maximum per-coordinate vertex spread falls below this.
    pub tol_x: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Initial simplex step added to each nonzero coordinate of the start.
    pub nonzero_step: f64,
    /// Initial simplex step used when a coordinate of the start is exactly 0.
    pub zero_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_evals: 10_000,
            tol_f: 1e-9,
            tol_x: 1e-7,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            nonzero_step: 0.25,
            zero_step: 0.000_25,
        }
    }
}

/// Outcome of a [`nelder_mead`] run. Non-convergence is reported here, never
/// raised as an error.
#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x_min: Vec<f64>,
    pub f_min: f64,
    pub evaluations: usize,
    pub iterations: usize,
    /// True when the tolerance test fired before the evaluation budget ran out.
    pub converged: bool,
    /// Best function value seen after each iteration; non-increasing.
    pub best_trace: Vec<f64>,
}

/// The working simplex: `n + 1` vertices in `R^n` with their function values,
/// kept sorted ascending by value.
struct SimplexState {
    vertices: Vec<Vec<f64>>,
    values: Vec<f64>,
    iterations: usize,
    evaluations: usize,
}

impl SimplexState {
    fn best(&self) -> usize {
        0
    }

    fn worst(&self) -> usize {
        self.values.len() - 1
    }

    /// Sort vertices ascending by value. Stable, so coordinate relabeling of
    /// the objective permutes results identically.
    fn sort(&mut self) {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.vertices = order.iter().map(|&i| self.vertices[i].clone()).collect();
        self.values = order.iter().map(|&i| self.values[i]).collect();
    }

    fn value_spread(&self) -> f64 {
        self.values[self.worst()] - self.values[self.best()]
    }

    fn coord_spread(&self) -> f64 {
        let best = &self.vertices[self.best()];
        let mut spread = 0.0f64;
        for v in &self.vertices[1..] {
            for (a, b) in v.iter().zip(best) {
                spread = spread.max((a - b).abs());
            }
        }
        spread
    }

    /// Centroid of all vertices except the worst.
    fn centroid(&self) -> Vec<f64> {
        let n = self.vertices[0].len();
        let m = self.vertices.len() - 1;
        let mut c = vec![0.0; n];
        for v in &self.vertices[..m] {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi;
            }
        }
        for ci in &mut c {
            *ci /= m as f64;
        }
        c
    }
}

/// Minimize `f` from `x0` with the standard reflect/expand/contract/shrink
/// simplex iteration.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], config: &NelderMeadConfig) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0, "nelder_mead needs at least one dimension");

    if config.max_evals == 0 {
        return NelderMeadResult {
            x_min: x0.to_vec(),
            f_min: f64::INFINITY,
            evaluations: 0,
            iterations: 0,
            converged: false,
            best_trace: Vec::new(),
        };
    }

    let mut evals = 0usize;
    let budget = config.max_evals;
    // Non-finite values poison comparisons; clamp them to +∞.
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut vertices = Vec::with_capacity(n + 1);
    vertices.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if x0[i] == 0.0 {
            config.zero_step
        } else {
            config.nonzero_step
        };
        vertices.push(v);
    }
    let mut values = Vec::with_capacity(n + 1);
    for v in &vertices {
        if evals >= budget {
            break;
        }
        values.push(eval(v, &mut evals));
    }
    // Budget exhausted mid-initialization: report the best of what we saw.
    if values.len() < vertices.len() {
        let (bi, bv) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .unwrap_or((0, f64::INFINITY));
        return NelderMeadResult {
            x_min: vertices[bi].clone(),
            f_min: bv,
            evaluations: evals,
            iterations: 0,
            converged: false,
            best_trace: vec![bv],
        };
    }

    let mut simplex = SimplexState {
        vertices,
        values,
        iterations: 0,
        evaluations: evals,
    };
    simplex.sort();
    let mut trace = vec![simplex.values[0]];
    let mut converged = false;

    while simplex.evaluations < budget {
        if simplex.value_spread() < config.tol_f && simplex.coord_spread() < config.tol_x {
            converged = true;
            break;
        }

        let worst = simplex.worst();
        let second_worst = worst - 1;
        let centroid = simplex.centroid();
        let shifted = |coef: f64, from: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + coef * (c - x))
                .collect()
        };

        let x_reflect = shifted(config.reflection, &simplex.vertices[worst]);
        let f_reflect = eval(&x_reflect, &mut simplex.evaluations);

        if f_reflect < simplex.values[0] {
            // Reflection is a new best: try pushing further out.
            let x_expand = shifted(config.reflection * config.expansion, &simplex.vertices[worst]);
            if simplex.evaluations < budget {
                let f_expand = eval(&x_expand, &mut simplex.evaluations);
                if f_expand < f_reflect {
                    simplex.vertices[worst] = x_expand;
                    simplex.values[worst] = f_expand;
                } else {
                    simplex.vertices[worst] = x_reflect;
                    simplex.values[worst] = f_reflect;
                }
            } else {
                simplex.vertices[worst] = x_reflect;
                simplex.values[worst] = f_reflect;
            }
        } else if f_reflect < simplex.values[second_worst] {
            simplex.vertices[worst] = x_reflect;
            simplex.values[worst] = f_reflect;
        } else {
            // Contract: outside when the reflection improved on the worst
            // vertex, inside otherwise.
            let (x_contract, f_against) = if f_reflect < simplex.values[worst] {
                (
                    shifted(config.reflection * config.contraction, &simplex.vertices[worst]),
                    f_reflect,
                )
            } else {
                (
                    shifted(-config.contraction, &simplex.vertices[worst]),
                    simplex.values[worst],
                )
            };
            if simplex.evaluations >= budget {
                break;
            }
            let f_contract = eval(&x_contract, &mut simplex.evaluations);
            if f_contract <= f_against {
                simplex.vertices[worst] = x_contract;
                simplex.values[worst] = f_contract;
            } else {
                // Shrink every non-best vertex toward the best.
                let best = simplex.vertices[0].clone();
                for i in 1..simplex.vertices.len() {
                    if simplex.evaluations >= budget {
                        break;
                    }
                    for (v, b) in simplex.vertices[i].iter_mut().zip(&best) {
                        *v = b + config.shrink * (*v - b);
                    }
                    let v = simplex.vertices[i].clone();
                    simplex.values[i] = eval(&v, &mut simplex.evaluations);
                }
            }
        }

        simplex.sort();
        simplex.iterations += 1;
        trace.push(trace.last().copied().unwrap_or(f64::INFINITY).min(simplex.values[0]));
    }

    NelderMeadResult {
        x_min: simplex.vertices[0].clone(),
        f_min: simplex.values[0],
        evaluations: simplex.evaluations,
        iterations: simplex.iterations,
        converged,
        best_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn quadratic_1d() {
        let r = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], &NelderMeadConfig::default());
        assert!((r.x_min[0] - 3.0).abs() < 1e-6, "got {}", r.x_min[0]);
        assert!(r.converged);
    }

    #[test]
    fn rosenbrock_2d() {
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &NelderMeadConfig::default());
        assert!(r.evaluations <= 10_000);
        assert!(r.f_min < 1e-8, "f_min = {}", r.f_min);
        assert!((r.x_min[0] - 1.0).abs() < 1e-4 && (r.x_min[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn best_trace_monotone() {
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &NelderMeadConfig::default());
        for w in r.best_trace.windows(2) {
            assert!(w[1] <= w[0], "trace increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_budget_returns_start() {
        let cfg = NelderMeadConfig {
            max_evals: 0,
            ..Default::default()
        };
        let r = nelder_mead(|x| x[0] * x[0], &[5.0, -2.0], &cfg);
        assert_eq!(r.x_min, vec![5.0, -2.0]);
        assert_eq!(r.evaluations, 0);
    }

    #[test]
    fn non_finite_regions_are_avoided() {
        // Objective is NaN left of the origin; minimum at x = 2.
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 2.0).powi(2)
            }
        };
        let r = nelder_mead(f, &[0.5], &NelderMeadConfig::default());
        assert!((r.x_min[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn permutation_invariance() {
        // f evaluates a fixed anisotropic bowl; g is f with coordinates swapped.
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 7.0 * (x[1] + 2.0).powi(2) + 0.3 * x[0] * x[1];
        let g = |x: &[f64]| (x[1] - 1.0).powi(2) + 7.0 * (x[0] + 2.0).powi(2) + 0.3 * x[1] * x[0];
        let cfg = NelderMeadConfig::default();
        let rf = nelder_mead(f, &[0.3, 0.7], &cfg);
        let rg = nelder_mead(g, &[0.7, 0.3], &cfg);
        assert_eq!(rf.evaluations, rg.evaluations);
        assert_eq!(rf.x_min[0].to_bits(), rg.x_min[1].to_bits());
        assert_eq!(rf.x_min[1].to_bits(), rg.x_min[0].to_bits());
        assert_eq!(rf.f_min.to_bits(), rg.f_min.to_bits());
    }

    #[test]
    fn improves_on_start_even_without_convergence() {
        let cfg = NelderMeadConfig {
            max_evals: 40,
            ..Default::default()
        };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &cfg);
        assert!(r.f_min <= rosenbrock(&[-1.2, 1.0]));
        assert!(!r.converged);
    }
}
