//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Relative decrease below which an iteration counts as stalled.
    pub tolerance: f64,
    /// Consecutive stalled iterations before stopping.
    pub patience: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iterations: 100, tolerance: 1e-9, patience: 3, armijo: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationCap,
    /// The line search found no decrease even along the negative gradient.
    NoProgress,
    /// No free variables.
    NothingToOptimize,
}

#[derive(Debug, Clone)]
pub struct Minimization {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Objective at the start and after every accepted iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x0` where `(f0, g0)` is the value and gradient at `x0`.
/// `f` returns `None` at points where the objective is undefined; those
/// trial steps are rejected.
pub fn minimize<F>(x0: Vec<f64>, f0: f64, g0: Vec<f64>, mut f: F, opts: &LbfgsOptions) -> Minimization
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut out = Minimization {
        x: x0,
        value: f0,
        gradient: g0,
        trace: vec![f0],
        iterations: 0,
        evaluations: 0,
        termination: Termination::IterationCap,
    };
    if n == 0 {
        out.termination = Termination::NothingToOptimize;
        return out;
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut stalled = 0;
    while out.iterations < opts.max_iterations {
        let g = &out.gradient;
        if g.iter().all(|v| *v == 0.0) {
            out.termination = Termination::Converged;
            break;
        }
        // Two-loop recursion for d = −H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = hist.back().map(|(s, y, _)| dot(s, y) / dot(y, y)).unwrap_or(1.0);
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(g, &d);
        }
        let mut alpha = if hist.is_empty() { 1.0 / dot(g, g).sqrt() } else { 1.0 };
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let xn: Vec<f64> = out.x.iter().zip(&d).map(|(x, di)| x + alpha * di).collect();
            out.evaluations += 1;
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= out.value + opts.armijo * alpha * slope {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            alpha *= 0.5;
        }
        out.iterations += 1;
        let Some((xn, fn_, gn)) = accepted else {
            if hist.is_empty() {
                out.termination = Termination::NoProgress;
                break;
            }
            hist.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&out.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&out.gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let rel = (out.value - fn_) / out.value.abs().max(f64::MIN_POSITIVE);
        out.x = xn;
        out.value = fn_;
        out.gradient = gn;
        out.trace.push(fn_);
        if rel < opts.tolerance {
            stalled += 1;
            if stalled >= opts.patience {
                out.termination = Termination::Converged;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    out
}
