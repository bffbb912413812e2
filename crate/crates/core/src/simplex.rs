//! Projected-gradient minimization over the probability simplex, shared by
//! the stacking-weight solver and the outcome-weight search.

/// Euclidean projection of `v` onto the simplex { w : wᵢ ≥ 0, Σwᵢ = 1 }.
pub fn project(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut found = false;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            found = true;
            break;
        }
    }
    let _ = found;
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = (v[i] - theta).max(0.0);
    }
    // tidy the sum against accumulated rounding
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|x| *x /= s);
    } else {
        out.iter_mut().for_each(|x| *x = 1.0 / n as f64);
    }
    out
}

#[derive(Clone, Debug)]
pub struct PgOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for PgOptions {
    fn default() -> Self {
        PgOptions { max_iter: 2000, tol: 1e-10, initial_step: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct PgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step (first entry = start value).
    pub trace: Vec<f64>,
}

/// Minimize a smooth function over the simplex by projected gradient descent
/// with backtracking. `f_grad` returns the objective and its gradient.
/// Descent is monotone: every accepted step decreases the objective.
pub fn minimize<F>(f_grad: F, start: &[f64], opts: &PgOptions) -> PgResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = project(start);
    let (mut fx, mut gx) = f_grad(&x);
    let mut step = opts.initial_step;
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iters = 0;
    'outer: for it in 0..opts.max_iter {
        iters = it + 1;
        let mut accepted = false;
        for _bt in 0..60 {
            let candidate: Vec<f64> =
                x.iter().zip(&gx).map(|(xi, gi)| xi - step * gi).collect();
            let candidate = project(&candidate);
            let delta: f64 = candidate
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if delta < 1e-300 {
                converged = true;
                break 'outer;
            }
            let (fc, gc) = f_grad(&candidate);
            // Armijo condition against the projected step
            let dir_deriv: f64 = candidate
                .iter()
                .zip(&x)
                .zip(&gx)
                .map(|((c, xi), gi)| gi * (c - xi))
                .sum();
            if fc <= fx + 1e-4 * dir_deriv || fc < fx {
                let improved = fx - fc;
                x = candidate;
                fx = fc;
                gx = gc;
                trace.push(fx);
                accepted = true;
                step *= 1.6; // cautious growth after success
                if improved.abs() <= opts.tol * (1.0 + fx.abs()) && delta < 1e-7 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent step found at the smallest step size: stationary
            converged = true;
            break;
        }
    }
    PgResult { x, value: fx, iterations: iters, converged, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_known_cases() {
        let p = project(&[0.5, 0.5]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        let p = project(&[2.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);

        let p = project(&[0.3, 0.3, 0.3]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);

        let p = project(&[-1.0, 0.0, 1.0]);
        assert!(p[0] >= 0.0 && p.iter().sum::<f64>() > 0.999_999);
    }

    proptest::proptest! {
        #[test]
        fn projection_always_lands_on_simplex(v in proptest::collection::vec(-10.0f64..10.0, 1..8)) {
            let p = project(&v);
            let s: f64 = p.iter().sum();
            proptest::prop_assert!((s - 1.0).abs() < 1e-9);
            proptest::prop_assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn minimizes_quadratic_over_simplex() {
        // min ||w - t||^2 over simplex, t = (0.2, 0.5, 0.3): optimum is t itself
        let target = [0.2, 0.5, 0.3];
        let f = |w: &[f64]| {
            let val: f64 = w.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
            let grad: Vec<f64> = w.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            (val, grad)
        };
        let res = minimize(f, &[1.0, 0.0, 0.0], &PgOptions::default());
        for (a, b) in res.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-6, "{:?}", res.x);
        }
    }

    #[test]
    fn descent_is_monotone() {
        let f = |w: &[f64]| {
            let val = w[0] * w[0] + 2.0 * w[1] * w[1];
            (val, vec![2.0 * w[0], 4.0 * w[1]])
        };
        let res = minimize(f, &[0.9, 0.1], &PgOptions::default());
        for pair in res.trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }
}
