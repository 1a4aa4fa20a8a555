//! Nelder–Mead simplex descent on an unconstrained objective.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_evaluations: usize,
    /// Stop when the spread of objective values across the simplex falls
    /// below `abs_tol + rel_tol · |best|`.
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
    /// Rebuild the simplex around the best vertex this many times after
    /// convergence, to escape premature collapse.
    pub restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            max_evaluations: 20_000,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            initial_step: 0.5,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimize `f` from `x0`. Non-finite objective values are treated as
/// `+∞`. The returned value is never worse than `f(x0)`.
pub fn minimize<F>(f: F, x0: &[f64], config: &NelderMeadConfig) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let dim = x0.len();
    let mut evaluations = 0usize;
    let mut best = (x0.to_vec(), eval(x0));
    evaluations += 1;
    if dim == 0 {
        return Minimum {
            x: best.0,
            value: best.1,
            evaluations,
        };
    }

    for _round in 0..=config.restarts {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        simplex.push(best.clone());
        for i in 0..dim {
            let mut x = best.0.clone();
            x[i] += config.initial_step;
            let v = eval(&x);
            evaluations += 1;
            simplex.push((x, v));
        }

        while evaluations < config.max_evaluations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (lo, hi) = (simplex[0].1, simplex[dim].1);
            if hi - lo <= config.abs_tol + config.rel_tol * lo.abs() {
                break;
            }
            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..dim].iter().map(|p| p.0[j]).sum::<f64>() / dim as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[dim].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(REFLECT);
            let fr = eval(&xr);
            evaluations += 1;
            if fr < simplex[0].1 {
                let xe = along(EXPAND);
                let fe = eval(&xe);
                evaluations += 1;
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[dim].1 {
                let xc = along(CONTRACT);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-CONTRACT);
                let fc = eval(&xc);
                (xc, fc)
            };
            evaluations += 1;
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for p in simplex.iter_mut().skip(1) {
                for (x, a) in p.0.iter_mut().zip(&anchor) {
                    *x = a + SHRINK * (*x - a);
                }
                p.1 = eval(&p.0);
                evaluations += 1;
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best.1 {
            best = simplex.swap_remove(0);
        }
        if evaluations >= config.max_evaluations {
            break;
        }
    }
    Minimum {
        x: best.0,
        value: best.1,
        evaluations,
    }
}
