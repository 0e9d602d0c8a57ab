//! Limited-memory BFGS minimizer.
//!
//! The line search brackets a root of the directional derivative instead of
//! relying on function-value decrease alone. Near the optimum of a large
//! likelihood the decrease per step falls below rounding noise in the
//! objective, while the gradient remains accurate, so the derivative is the
//! more reliable signal. The objective is assumed convex along search
//! directions, which holds for the penalized Poisson log-likelihood.

use std::collections::VecDeque;

/// Something L-BFGS can minimize.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Value at `x`; writes the gradient into `grad`.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Positive diagonal curvature estimate used to scale the initial inverse
    /// Hessian. Returning `false` falls back to the usual scalar scaling.
    fn diag_curvature(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    /// Stop once the gradient max-norm drops to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 500, memory: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_max_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimize `obj` from `x0`.
pub fn minimize<O: Objective>(obj: &O, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsReport {
    let n = obj.dim();
    assert_eq!(x0.len(), n, "starting point has wrong dimension");

    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut diag = vec![1.0; n];
    let mut d = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    let mut iterations = 0;
    let mut gnorm = max_norm(&g);
    while gnorm > opts.tolerance && iterations < opts.max_iterations {
        // two-loop recursion: d = -H g
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (k, pair) in history.iter().enumerate().rev() {
            alpha[k] = pair.rho * dot(&pair.s, &d);
            d.iter_mut().zip(&pair.y).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        if obj.diag_curvature(&x, &mut diag) {
            d.iter_mut().zip(&diag).for_each(|(di, h)| *di /= h.max(1e-12));
        } else if let Some(last) = history.back() {
            let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
            d.iter_mut().for_each(|di| *di *= gamma);
        } else {
            let scale = 1.0 / gnorm.max(1.0);
            d.iter_mut().for_each(|di| *di *= scale);
        }
        for (k, pair) in history.iter().enumerate() {
            let beta = pair.rho * dot(&pair.y, &d);
            d.iter_mut().zip(&pair.s).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
        }

        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // lost descent; restart from steepest descent
            history.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi / gnorm.max(1.0));
            slope = dot(&g, &d);
        }

        let Some((step, f_step)) =
            line_search(obj, &x, f, slope, &d, &mut x_new, &mut g_new)
        else {
            break;
        };
        iterations += 1;

        let s: Vec<f64> = d.iter().map(|di| step * di).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_step;
        gnorm = max_norm(&g);
        if sy > 1e-300 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }
    }

    LbfgsReport {
        x,
        value: f,
        grad_max_norm: gnorm,
        iterations,
        converged: gnorm <= opts.tolerance,
    }
}

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MAX_EVALS: usize = 60;

/// Find a step satisfying a (noise-tolerant) Armijo condition and the strong
/// curvature condition. Returns the step and the objective there; the trial
/// point and its gradient are left in `x_new` / `g_new`.
fn line_search<O: Objective>(
    obj: &O,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Option<(f64, f64)> {
    let noise = 1e-12 * f0.abs().max(1.0);
    let mut lo = 0.0;
    let mut slope_lo = slope0;
    let mut hi = f64::INFINITY;
    let mut slope_hi = f64::NAN;
    let mut step = 1.0;

    for _ in 0..MAX_EVALS {
        for ((xn, xi), di) in x_new.iter_mut().zip(x).zip(d) {
            *xn = xi + step * di;
        }
        let f = obj.eval(x_new, g_new);
        let slope = dot(g_new, d);
        let sufficient = f.is_finite() && f <= f0 + ARMIJO * step * slope0 + noise;

        if !f.is_finite() || !slope.is_finite() || (!sufficient && slope > 0.0) {
            hi = step;
            slope_hi = if slope.is_finite() { slope } else { f64::NAN };
        } else if !sufficient {
            // still descending but f did not drop enough: overshoot in value
            hi = step;
            slope_hi = f64::NAN;
        } else if slope.abs() <= CURVATURE * slope0.abs() {
            return Some((step, f));
        } else if slope < 0.0 {
            lo = step;
            slope_lo = slope;
        } else {
            hi = step;
            slope_hi = slope;
        }

        step = if hi.is_infinite() {
            step * 4.0
        } else if slope_hi.is_finite() && slope_hi > 0.0 && slope_lo < 0.0 {
            // secant on the derivative, kept away from the bracket ends
            let t = lo + (hi - lo) * (-slope_lo) / (slope_hi - slope_lo);
            t.clamp(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 * hi.max(1.0) {
            break;
        }
    }

    // accept the best descending point found if any progress was made
    if lo > 0.0 {
        for ((xn, xi), di) in x_new.iter_mut().zip(x).zip(d) {
            *xn = xi + lo * di;
        }
        let f = obj.eval(x_new, g_new);
        return Some((lo, f));
    }
    None
}
