//! Nelder-Mead simplex search with projection onto box bounds.

/// Outcome of a simplex refinement.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iters: usize,
    /// Stop when `f_worst - f_best <= tol * (|f_best| + tol)`.
    pub tolerance: f64,
    /// Initial edge length as a fraction of each bound width.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-10,
            initial_step: 0.05,
        }
    }
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

/// Minimise `f` starting from `x0` inside `bounds`.
///
/// Dimensions with `lo == hi` are held fixed. After the simplex collapses
/// it is rebuilt around the best point; the search stops once a rebuilt
/// simplex fails to improve, or when `max_iters` is exhausted.
pub fn minimize<F>(f: F, x0: &[f64], bounds: &[(f64, f64)], opts: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    debug_assert_eq!(x0.len(), bounds.len());
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };

    let mut best_x = x0.to_vec();
    project(&mut best_x, bounds);
    let mut best_f = eval(&best_x);

    let free: Vec<usize> = (0..bounds.len()).filter(|&i| bounds[i].1 > bounds[i].0).collect();
    if free.is_empty() {
        return SimplexResult {
            x: best_x,
            f: best_f,
            iterations: 0,
            evaluations,
            converged: true,
        };
    }
    let n = free.len();
    let tol = opts.tolerance;
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < opts.max_iters {
        // Build a fresh simplex around the incumbent.
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_x.clone(), best_f));
        for &i in &free {
            let (lo, hi) = bounds[i];
            let step = opts.initial_step * (hi - lo);
            let mut x = best_x.clone();
            x[i] = if x[i] + step <= hi { x[i] + step } else { x[i] - step };
            project(&mut x, bounds);
            let fx = eval(&x);
            simplex.push((x, fx));
        }
        let restart_f = best_f;

        let mut collapsed = false;
        while iterations < opts.max_iters {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_worst = simplex[n].1;
            if f_worst - f_best <= tol * (f_best.abs() + tol) {
                collapsed = true;
                break;
            }

            let mut centroid = vec![0.0; bounds.len()];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let along = |t: f64| {
                let mut x: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                project(&mut x, bounds);
                x
            };

            let xr = along(REFLECT);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(EXPAND);
                let fe = eval(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(CONTRACT * REFLECT);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-CONTRACT);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x0 = simplex[0].0.clone();
            for (x, fx) in simplex.iter_mut().skip(1) {
                for (xi, bi) in x.iter_mut().zip(&x0) {
                    *xi = bi + SHRINK * (*xi - bi);
                }
                *fx = eval(x);
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if !collapsed {
            break;
        }
        if restart_f - best_f <= tol * (best_f.abs() + tol) {
            converged = true;
            break;
        }
    }

    SimplexResult {
        x: best_x,
        f: best_f,
        iterations,
        evaluations,
        converged,
    }
}
