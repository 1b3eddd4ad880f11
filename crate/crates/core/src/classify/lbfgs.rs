//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug)]
pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Converged when ‖∇f‖∞ falls below this.
    pub gtol: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct LbfgsResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

/// Minimizer of the cubic through (a, fa, ga) and (b, fb, gb), kept inside
/// the bracket away from its ends; bisection when the cubic is unusable.
fn cubic_step(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mid = 0.5 * (a + b);
    if disc < 0.0 {
        return mid;
    }
    let d2 = disc.sqrt().copysign(b - a);
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

struct Point {
    alpha: f64,
    f: f64,
    /// Directional derivative.
    g: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Returns a step satisfying the strong Wolfe conditions, or `None`.
fn line_search<F>(f: &mut F, x: &[f64], f0: f64, g0: &[f64], d: &[f64], alpha0: f64) -> Option<Point>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let dg0 = dot(g0, d);
    let mut eval = |alpha: f64| {
        let xn = axpy(x, alpha, d);
        let (fv, grad) = f(&xn);
        Point { alpha, f: fv, g: dot(&grad, d), x: xn, grad }
    };
    let mut prev = Point { alpha: 0.0, f: f0, g: dg0, x: x.to_vec(), grad: g0.to_vec() };
    let mut alpha = alpha0;
    for i in 0..MAX_LINE_EVALS {
        let cur = eval(alpha);
        if !cur.f.is_finite() {
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if cur.f > f0 + C1 * alpha * dg0 || (i > 0 && cur.f >= prev.f) {
            return zoom(&mut eval, f0, dg0, prev, cur);
        }
        if cur.g.abs() <= -C2 * dg0 {
            return Some(cur);
        }
        if cur.g >= 0.0 {
            return zoom(&mut eval, f0, dg0, cur, prev);
        }
        alpha *= 2.0;
        prev = cur;
    }
    None
}

fn zoom<E>(eval: &mut E, f0: f64, dg0: f64, mut lo: Point, mut hi: Point) -> Option<Point>
where
    E: FnMut(f64) -> Point,
{
    for _ in 0..MAX_LINE_EVALS {
        if (hi.alpha - lo.alpha).abs() <= f64::EPSILON * lo.alpha.abs().max(1.0) {
            break;
        }
        let alpha = cubic_step(lo.alpha, lo.f, lo.g, hi.alpha, hi.f, hi.g);
        let cur = eval(alpha);
        if !cur.f.is_finite() || cur.f > f0 + C1 * alpha * dg0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.g.abs() <= -C2 * dg0 {
                return Some(cur);
            }
            if cur.g * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // accept a point with sufficient decrease even if curvature is not met
    (lo.alpha > 0.0 && lo.f < f0).then_some(lo)
}

pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (mut fx, mut g) = f(&x0);
    let mut x = x0;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;

    while iterations < opts.max_iterations && inf_norm(&g) >= opts.gtol {
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map_or(1.0 / inf_norm(&g).max(1.0), |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            // not a descent direction: restart from steepest descent
            history.clear();
            d = g.iter().map(|v| -v).collect();
        }

        let Some(pt) = line_search(&mut f, &x, fx, &g, &d, 1.0) else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = pt.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = pt.x;
        fx = pt.f;
        g = pt.grad;
    }
    LbfgsResult {
        converged: inf_norm(&g) < opts.gtol,
        x,
        iterations,
    }
}
