//! Limited-memory BFGS with a monotone backtracking (Armijo) line search.
//!
//! Every accepted step satisfies `f(x + a·d) <= f(x) + c1·a·∇f·d` with
//! `∇f·d < 0`, so the objective never increases between iterations.

use std::collections::VecDeque;

const MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Max-norm of the gradient fell below the tolerance.
    Converged,
    MaxIterations,
    /// No step along a descent direction decreased the objective.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad_max_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective at the start and after every iteration.
    pub loss_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Two-loop recursion: approximates `-H⁻¹ g` from the stored pairs.
fn direction(grad: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Minimizes `objective` from `x0`. `objective` returns the value and the
/// gradient at a point.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, max_iterations: usize, tol: f64) -> Outcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut f, mut g) = objective(&x);
    let mut history = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;
    let termination = loop {
        if max_norm(&g) < tol {
            break Termination::Converged;
        }
        if iterations >= max_iterations {
            break Termination::MaxIterations;
        }
        let mut d = direction(&g, &pairs);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 || slope.is_nan() {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        // Without curvature history, scale the first trial step to unit length.
        let mut step = if pairs.is_empty() {
            (1.0 / max_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let accepted = loop {
            let candidate: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = objective(&candidate);
            if fc.is_finite() && fc <= f + ARMIJO_C1 * step * slope {
                break Some((candidate, fc, gc));
            }
            step *= BACKTRACK;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((x_new, f_new, g_new)) = accepted else {
            break Termination::LineSearchFailed;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == MEMORY {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        history.push(f);
    };
    Outcome {
        grad_max_norm: max_norm(&g),
        x,
        loss: f,
        iterations,
        termination,
        loss_history: history,
    }
}
