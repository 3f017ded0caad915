//! Penalized maximum marginal likelihood by EM.
//!
//! The E-step computes `q_i = p(z_i = 1 | labels_i, x_i)`. The M-step runs
//! gradient ascent with Armijo backtracking on the expected complete-data
//! log likelihood minus `l2/2 (|alpha|^2 + sum_t |w_t|^2)`. Partial M-steps
//! still increase the penalized marginal likelihood at every iteration.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{clamped_logistic, logit_bound, AnnotatorParams, GroundTruthParams, ModelParams, PointTerms};
use crate::optim::{gradient_ascent, AscentOptions};
use crate::rng::substream;
use crate::scalar::Scalar;

/// Initial annotator reliability `eta = 0.8`.
pub const INITIAL_ETA: f64 = 0.8;
/// Iteration cap of the majority-vote logistic fit used at initialization.
pub const INIT_MAX_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_em_iters: usize,
    pub em_rel_tol: f64,
    pub l2_penalty: f64,
    pub mstep_max_iters: usize,
    pub mstep_grad_tol: f64,
    pub seed: u64,
    pub n_restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_em_iters: 200,
            em_rel_tol: 1e-6,
            l2_penalty: 1e-3,
            mstep_max_iters: 50,
            mstep_grad_tol: 1e-8,
            seed: 0,
            n_restarts: 3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.em_rel_tol > 0.0) || !(self.mstep_grad_tol > 0.0) {
            return Err(Error::invalid("tolerances must be > 0"));
        }
        if !(self.l2_penalty >= 0.0) || !self.l2_penalty.is_finite() {
            return Err(Error::invalid("l2 penalty must be finite and >= 0"));
        }
        if self.max_em_iters == 0 || self.mstep_max_iters == 0 || self.n_restarts == 0 {
            return Err(Error::invalid("iteration and restart counts must be >= 1"));
        }
        Ok(())
    }

    fn ascent_options(&self) -> AscentOptions {
        AscentOptions {
            max_iters: self.mstep_max_iters,
            grad_tol: self.mstep_grad_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Penalized log marginal likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    pub iterations_run: usize,
    pub restart_index_selected: usize,
}

impl FitTrace {
    pub fn final_log_likelihood(&self) -> Option<f64> {
        self.log_likelihood.last().copied()
    }

    /// True when no step decreases by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.log_likelihood.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}

/// Per-point majority vote of the observed labels; ties give 0.5.
pub fn majority_vote_targets<T: Scalar>(dataset: &Dataset<T>) -> Vec<T> {
    let labels = dataset.labels();
    (0..dataset.n_points())
        .map(|i| {
            let (ones, zeros) = labels.row(i).iter().flatten().fold((0usize, 0usize), |(o, z), &y| {
                if y {
                    (o + 1, z)
                } else {
                    (o, z + 1)
                }
            });
            match ones.cmp(&zeros) {
                std::cmp::Ordering::Greater => T::one(),
                std::cmp::Ordering::Less => T::zero(),
                std::cmp::Ordering::Equal => T::of(0.5),
            }
        })
        .collect()
}

/// Adds the gradient of `c log p + (1 - c) log(1 - p)`, `p = sigmoid(logit)`
/// clamped, with respect to `(w, b)` into `grad`; returns the term's value.
#[inline]
fn soft_logistic_term<T: Scalar>(target: T, logit: T, x: &[T], grad: &mut [T]) -> T {
    let (lp, lq, p) = clamped_logistic(logit);
    let value = target * lp + (T::one() - target) * lq;
    if logit.abs() < logit_bound::<T>() {
        let r = target - p;
        let d = x.len();
        for (g, &xi) in grad[..d].iter_mut().zip(x) {
            *g = *g + r * xi;
        }
        grad[d] = grad[d] + r;
    }
    value
}

fn dot_bias<T: Scalar>(wb: &[T], x: &[T]) -> T {
    let d = x.len();
    wb[..d].iter().zip(x).fold(wb[d], |acc, (&w, &xi)| acc + w * xi)
}

fn penalize<T: Scalar>(flat: &[T], grad: &mut [T], d: usize, l2: T) -> T {
    let mut norm = T::zero();
    for (block, gblock) in flat.chunks_exact(d + 1).zip(grad.chunks_exact_mut(d + 1)) {
        for (&w, g) in block[..d].iter().zip(&mut gblock[..d]) {
            norm = norm + w * w;
            *g = *g - l2 * w;
        }
    }
    l2 / T::of(2.0) * norm
}

/// Penalized weighted logistic regression of soft `targets` on the features.
fn fit_soft_logistic<T: Scalar>(dataset: &Dataset<T>, targets: &[T], l2: T) -> Result<GroundTruthParams<T>> {
    let d = dataset.n_features();
    let objective = |wb: &[T]| -> Result<(T, Vec<T>)> {
        let mut grad = vec![T::zero(); d + 1];
        let mut value = T::zero();
        for (i, &c) in targets.iter().enumerate() {
            let x = dataset.x(i);
            value = value + soft_logistic_term(c, dot_bias(wb, x), x, &mut grad);
        }
        value = value - penalize(wb, &mut grad, d, l2);
        Ok((value, grad))
    };
    let out = gradient_ascent(
        objective,
        vec![T::zero(); d + 1],
        AscentOptions {
            max_iters: INIT_MAX_ITERS,
            grad_tol: 1e-8,
        },
    )?;
    Ok(GroundTruthParams {
        alpha: out.x[..d].to_vec(),
        alpha_bias: out.x[d],
    })
}

/// Starting point of EM chain `restart_index`.
///
/// The ground-truth weights come from a logistic fit against the majority
/// vote. Annotators start at `eta = 0.8` everywhere on restart 0; later
/// restarts draw `w_t ~ U(-0.1, 0.1)` from the `(seed, restart_index)`
/// substream.
pub fn init_params<T: Scalar>(dataset: &Dataset<T>, config: &FitConfig, restart_index: usize) -> Result<ModelParams<T>> {
    let d = dataset.n_features();
    let targets = majority_vote_targets(dataset);
    let ground_truth = fit_soft_logistic(dataset, &targets, T::of(config.l2_penalty))?;
    let b0 = T::of((INITIAL_ETA / (1.0 - INITIAL_ETA)).ln());
    let annotators = if restart_index == 0 {
        vec![AnnotatorParams::constant(d, b0); dataset.n_annotators()]
    } else {
        let mut rng = substream(config.seed, restart_index as u64);
        (0..dataset.n_annotators())
            .map(|_| AnnotatorParams {
                w: (0..d).map(|_| T::of(rng.random_range(-0.1..0.1))).collect(),
                b: b0,
            })
            .collect()
    };
    Ok(ModelParams { ground_truth, annotators })
}

fn check_dims<T: Scalar>(dataset: &Dataset<T>, params: &ModelParams<T>) -> Result<()> {
    if params.n_features() != dataset.n_features()
        || params.n_annotators() != dataset.n_annotators()
        || params.annotators.iter().any(|a| a.w.len() != dataset.n_features())
    {
        return Err(Error::invalid(format!(
            "params are {} features x {} annotators, dataset is {} x {}",
            params.n_features(),
            params.n_annotators(),
            dataset.n_features(),
            dataset.n_annotators()
        )));
    }
    Ok(())
}

/// Posterior and log marginal likelihood (unpenalized) in one pass.
fn e_step_with_marginal<T: Scalar>(dataset: &Dataset<T>, params: &ModelParams<T>) -> Result<(Vec<T>, T)> {
    check_dims(dataset, params)?;
    let mut q = Vec::with_capacity(dataset.n_points());
    let mut total = T::zero();
    for i in 0..dataset.n_points() {
        let (qi, lm) = PointTerms::new(dataset.labels().row(i), dataset.x(i), params)?.posterior();
        q.push(qi);
        total = total + lm;
    }
    Ok((q, total))
}

/// `q_i = p(z_i = 1 | labels_i, x_i)` for every point.
pub fn e_step<T: Scalar>(dataset: &Dataset<T>, params: &ModelParams<T>) -> Result<Vec<T>> {
    Ok(e_step_with_marginal(dataset, params)?.0)
}

/// `sum_i log p(labels_i | x_i) - l2/2 (|alpha|^2 + sum_t |w_t|^2)`.
pub fn penalized_log_likelihood<T: Scalar>(dataset: &Dataset<T>, params: &ModelParams<T>, l2: f64) -> Result<T> {
    let (_, ll) = e_step_with_marginal(dataset, params)?;
    Ok(ll - T::of(l2) / T::of(2.0) * params.weight_norm_sq())
}

fn objective_flat<T: Scalar>(dataset: &Dataset<T>, posterior: &[T], flat: &[T], l2: T) -> (T, Vec<T>) {
    let d = dataset.n_features();
    let labels = dataset.labels();
    let mut grad = vec![T::zero(); flat.len()];
    let mut value = T::zero();
    let (g_block, a_blocks) = grad.split_at_mut(d + 1);
    for (i, &q) in posterior.iter().enumerate() {
        let x = dataset.x(i);
        value = value + soft_logistic_term(q, dot_bias(&flat[..d + 1], x), x, g_block);
        for (t, y) in labels.row(i).iter().enumerate() {
            let Some(y) = *y else { continue };
            let c = if y { q } else { T::one() - q };
            let off = (t + 1) * (d + 1);
            let gb = &mut a_blocks[t * (d + 1)..(t + 1) * (d + 1)];
            value = value + soft_logistic_term(c, dot_bias(&flat[off..off + d + 1], x), x, gb);
        }
    }
    value = value - penalize(flat, &mut grad, d, l2);
    (value, grad)
}

/// Expected penalized complete-data log likelihood under `posterior` and
/// its analytic gradient, laid out like `params`.
pub fn expected_penalized_objective<T: Scalar>(
    dataset: &Dataset<T>,
    posterior: &[T],
    params: &ModelParams<T>,
    l2: f64,
) -> Result<(T, ModelParams<T>)> {
    check_dims(dataset, params)?;
    if posterior.len() != dataset.n_points() {
        return Err(Error::invalid(format!(
            "posterior has {} entries for {} points",
            posterior.len(),
            dataset.n_points()
        )));
    }
    let (v, g) = objective_flat(dataset, posterior, &params.to_flat(), T::of(l2));
    Ok((v, ModelParams::from_flat(&g, dataset.n_features(), dataset.n_annotators())?))
}

/// Increases the expected penalized objective from `params_in`.
pub fn m_step<T: Scalar>(
    dataset: &Dataset<T>,
    posterior: &[T],
    params_in: &ModelParams<T>,
    config: &FitConfig,
) -> Result<ModelParams<T>> {
    check_dims(dataset, params_in)?;
    if posterior.len() != dataset.n_points() {
        return Err(Error::invalid("posterior length differs from the number of points"));
    }
    let l2 = T::of(config.l2_penalty);
    let out = gradient_ascent(
        |flat: &[T]| Ok(objective_flat(dataset, posterior, flat, l2)),
        params_in.to_flat(),
        config.ascent_options(),
    )?;
    ModelParams::from_flat(&out.x, dataset.n_features(), dataset.n_annotators())
}

/// One EM chain from `init_params(.., restart_index)`.
pub fn fit_chain<T: Scalar>(dataset: &Dataset<T>, config: &FitConfig, restart_index: usize) -> Result<(ModelParams<T>, FitTrace)> {
    let mut params = init_params(dataset, config, restart_index)?;
    let penalty = |p: &ModelParams<T>| T::of(config.l2_penalty) / T::of(2.0) * p.weight_norm_sq();
    let (mut q, ll0) = e_step_with_marginal(dataset, &params)?;
    let mut prev = (ll0 - penalty(&params)).as_f64();
    let mut trace = FitTrace {
        log_likelihood: Vec::new(),
        converged: false,
        iterations_run: 0,
        restart_index_selected: restart_index,
    };
    for _ in 0..config.max_em_iters {
        params = m_step(dataset, &q, &params, config)?;
        let (q_new, ll) = e_step_with_marginal(dataset, &params)?;
        let cur = (ll - penalty(&params)).as_f64();
        if !cur.is_finite() {
            return Err(Error::NumericalFailure(format!("log likelihood became {cur}")));
        }
        q = q_new;
        trace.log_likelihood.push(cur);
        trace.iterations_run += 1;
        if (cur - prev).abs() <= config.em_rel_tol * prev.abs() {
            trace.converged = true;
            break;
        }
        prev = cur;
    }
    Ok((params, trace))
}

/// Runs `n_restarts` EM chains and keeps the one with the highest final
/// penalized log likelihood (lowest restart index on ties). The truth
/// column of the dataset is never read.
pub fn fit<T: Scalar>(dataset: &Dataset<T>, config: &FitConfig) -> Result<(ModelParams<T>, FitTrace)> {
    config.validate()?;
    let chains: Vec<Result<(ModelParams<T>, FitTrace)>> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| fit_chain(dataset, config, r))
        .collect();
    let mut best: Option<(ModelParams<T>, FitTrace)> = None;
    let mut failures = Vec::new();
    for (r, chain) in chains.into_iter().enumerate() {
        match chain {
            Ok((p, t)) => {
                let score = t.final_log_likelihood().unwrap_or(f64::NEG_INFINITY);
                let better = match &best {
                    None => true,
                    Some((_, bt)) => score > bt.final_log_likelihood().unwrap_or(f64::NEG_INFINITY),
                };
                if better {
                    best = Some((p, t));
                }
            }
            Err(e) => failures.push(format!("restart {r}: {e}")),
        }
    }
    best.ok_or_else(|| Error::TrainingFailure(failures.join("; ")))
}
