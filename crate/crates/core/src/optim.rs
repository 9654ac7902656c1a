//! Nelder–Mead simplex search (minimization).
//!
//! Non-finite objective values are treated as `+∞`, so infeasible points are
//! always the first to be replaced.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Stop when the spread of objective values across the simplex,
    /// relative to their magnitude, `2|f_worst − f_best| / (|f_worst| +
    /// |f_best|)`, falls to this or below.
    pub f_tol: f64,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-6,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += cfg.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut converged = false;
    while evals < cfg.max_evals {
        // stable sort keeps earlier vertices first on ties
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if best.is_finite()
            && worst.is_finite()
            && 2.0 * (worst - best).abs() <= cfg.f_tol * (worst.abs() + best.abs() + 1e-300)
        {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let toward =
            |t: f64, from: &[f64]| -> Vec<f64> { centroid.iter().zip(from).map(|(c, w)| c + t * (c - w)).collect() };

        let worst_x = simplex[dim].0.clone();
        let xr = toward(ALPHA, &worst_x);
        let fr = eval(&xr, &mut evals);
        let second_worst = simplex[dim - 1].1;

        if fr < best {
            let xe = toward(GAMMA, &worst_x);
            let fe = eval(&xe, &mut evals);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < second_worst {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = toward(RHO, &worst_x);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = toward(-RHO, &worst_x);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = x_best.iter().zip(&vertex.0).map(|(b, v)| b + SIGMA * (v - b)).collect();
                    let v = eval(&x, &mut evals);
                    *vertex = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum { x, f, evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = NelderMeadConfig {
            max_evals: 5000,
            f_tol: 1e-14,
            initial_step: 0.5,
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &cfg);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3, "{m:?}");
    }

    #[test]
    fn infeasible_region_avoided() {
        // quadratic with a wall at x < 0
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::INFINITY
            } else {
                (x[0] - 0.2).powi(2) + x[1] * x[1]
            }
        };
        let m = nelder_mead(
            f,
            &[1.0, 1.0],
            &NelderMeadConfig {
                initial_step: 0.5,
                ..Default::default()
            },
        );
        assert!(m.f < 1e-5);
    }

    #[test]
    fn respects_budget() {
        let f = |x: &[f64]| x.iter().map(|v| v.abs()).sum::<f64>();
        let cfg = NelderMeadConfig {
            max_evals: 30,
            f_tol: 0.0,
            initial_step: 1.0,
        };
        let m = nelder_mead(f, &[3.0; 5], &cfg);
        // one iteration can overshoot by at most a shrink's worth of evaluations
        assert!(m.evals <= 30 + 5 + 1);
    }
}
