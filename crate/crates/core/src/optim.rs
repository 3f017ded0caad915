//! Gradient ascent with Armijo backtracking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sufficient-increase constant of the Armijo test.
pub const ARMIJO_C: f64 = 1e-4;
/// Step halvings tried before giving up on an iteration.
pub const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
}

#[derive(Debug, Clone)]
pub struct AscentOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
}

/// Maximizes `objective` from `x0`. Each iteration tries the step along the
/// gradient, starting from twice the last accepted length and halving until
/// `f(x + s g) >= f(x) + c s |g|^2`. Stops when the gradient sup-norm drops
/// below `grad_tol`, after `max_iters` iterations, or when no step within
/// [`MAX_HALVINGS`] halvings is accepted (returning the current iterate).
pub fn gradient_ascent<T, F>(mut objective: F, x0: Vec<T>, opts: AscentOptions) -> Result<AscentOutcome<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    let mut x = x0;
    let (mut value, mut grad) = objective(&x)?;
    if !value.is_finite() {
        return Err(Error::NumericalFailure(format!("objective is {value} at the starting point")));
    }
    let c = T::of(ARMIJO_C);
    let tol = T::of(opts.grad_tol);
    let mut step = T::one();
    let mut iterations = 0;
    let mut trial = vec![T::zero(); x.len()];
    while iterations < opts.max_iters {
        let sup = grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
        if sup < tol {
            break;
        }
        let gnorm_sq = grad.iter().map(|&g| g * g).sum::<T>();
        let mut s = step * T::of(2.0);
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            for ((tr, &xi), &gi) in trial.iter_mut().zip(&x).zip(&grad) {
                *tr = xi + s * gi;
            }
            let (v, g) = objective(&trial)?;
            if v.is_nan() {
                return Err(Error::NumericalFailure("objective evaluated to NaN".into()));
            }
            if v >= value + c * s * gnorm_sq {
                accepted = Some((v, g));
                break;
            }
            s = s / T::of(2.0);
        }
        let Some((v, g)) = accepted else { break };
        std::mem::swap(&mut x, &mut trial);
        value = v;
        grad = g;
        step = s;
        iterations += 1;
    }
    Ok(AscentOutcome { x, value, iterations })
}
