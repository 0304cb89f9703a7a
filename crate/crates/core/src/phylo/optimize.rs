//! Box-constrained quasi-Newton maximization with finite-difference gradients.

/// Outcome of [`maximize_bounded`].
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Infinity norm of the projected gradient at `x`.
    pub projected_gradient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    /// Stop once the projected gradient's infinity norm falls below this.
    pub gradient_tol: f64,
    pub max_iter: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            gradient_tol: 1e-7,
            max_iter: 200,
        }
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, &lo), &hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(lo, hi);
    }
}

/// Central-difference gradient, one-sided where a bound is within the step.
pub fn numeric_gradient(
    f: &impl Fn(&[f64]) -> f64,
    x: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1e-2);
            let hi = (x[i] + h).min(upper[i]);
            let lo = (x[i] - h).max(lower[i]);
            probe[i] = hi;
            let fh = f(&probe);
            probe[i] = lo;
            let fl = f(&probe);
            probe[i] = x[i];
            if hi > lo {
                (fh - fl) / (hi - lo)
            } else {
                0.0
            }
        })
        .collect()
}

/// Gradient with components zeroed where a bound blocks ascent.
pub fn projected_gradient(g: &[f64], x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    g.iter()
        .enumerate()
        .map(|(i, &gi)| {
            let at_lo = x[i] <= lower[i] && gi < 0.0;
            let at_hi = x[i] >= upper[i] && gi > 0.0;
            if at_lo || at_hi {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// Projected BFGS: the inverse-Hessian approximation acts on the free variables,
/// steps are projected back into the box, and an Armijo backtracking search
/// guarantees `f` never decreases. Variables pinned at a bound with the gradient
/// pointing outward are frozen for that iteration.
pub fn maximize_bounded(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: OptimizeOptions,
) -> Maximum {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut fx = f(&x);
    let mut g = numeric_gradient(&f, &x, lower, upper);
    let mut h = identity(n);
    let mut fresh_h = true;
    let mut iterations = 0;

    while iterations < options.max_iter {
        let pg = projected_gradient(&g, &x, lower, upper);
        if inf_norm(&pg) < options.gradient_tol {
            break;
        }
        iterations += 1;
        let free: Vec<bool> = pg
            .iter()
            .zip(&g)
            .map(|(p, gi)| *p != 0.0 || *gi == 0.0)
            .collect();
        let mut d = direction(&h, &pg, &free);
        if dot(&d, &pg) <= 0.0 {
            h = identity(n);
            fresh_h = true;
            d = pg.clone();
        }
        if fresh_h {
            // keep the first step modest relative to the box
            let scale = 0.1 / inf_norm(&d).max(1e-300);
            if scale < 1.0 {
                d.iter_mut().for_each(|v| *v *= scale);
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut trial, lower, upper);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let predicted = dot(&g, &moved);
            let ft = f(&trial);
            if ft.is_finite() && ft >= fx + 1e-4 * predicted && predicted > 0.0 {
                accepted = Some((trial, ft, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, s)) = accepted else {
            if fresh_h {
                break;
            }
            h = identity(n);
            fresh_h = true;
            continue;
        };
        let g_new = numeric_gradient(&f, &trial, lower, upper);
        // BFGS on the minimization of -f: y = grad(-f)_new - grad(-f)_old
        let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if fresh_h {
                let gamma = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut().flatten().for_each(|v| *v *= gamma);
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh_h = false;
        }
        let improvement = ft - fx;
        x = trial;
        fx = ft;
        g = g_new;
        if improvement <= 1e-15 * fx.abs().max(1.0) && inf_norm(&s) < 1e-12 {
            break;
        }
    }
    let pg = projected_gradient(&g, &x, lower, upper);
    Maximum {
        x,
        value: fx,
        iterations,
        projected_gradient: inf_norm(&pg),
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect()
}

fn direction(h: &[Vec<f64>], g: &[f64], free: &[bool]) -> Vec<f64> {
    (0..g.len())
        .map(|i| {
            if !free[i] {
                return 0.0;
            }
            (0..g.len())
                .filter(|&j| free[j])
                .map(|j| h[i][j] * g[j])
                .sum()
        })
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
