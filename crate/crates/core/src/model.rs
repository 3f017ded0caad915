//! Probability computations for the latent-truth annotator model
//! `x -> y(t) <- z`: a logistic prior `p(z = 1 | x)` and, per annotator, a
//! Bernoulli "reports the true label" probability `eta_t(x)`.
//!
//! Every likelihood is accumulated in log space. Probabilities entering a
//! log are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`; this is done on the
//! logit so that the clamped pair `(p, 1 - p)` stays normalized.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower clamp for probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Logit of `1 - PROB_FLOOR`.
pub(crate) fn logit_bound<T: Scalar>() -> T {
    T::of(((1.0 - PROB_FLOOR) / PROB_FLOOR).ln())
}

/// Weights of the logistic model for `p(z = 1 | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthParams<T> {
    pub alpha: Vec<T>,
    pub alpha_bias: T,
}

/// Logistic reliability `eta_t(x) = sigmoid(w . x + b)` of one annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorParams<T> {
    pub w: Vec<T>,
    pub b: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub ground_truth: GroundTruthParams<T>,
    pub annotators: Vec<AnnotatorParams<T>>,
}

impl<T: Scalar> GroundTruthParams<T> {
    pub fn zeros(n_features: usize) -> Self {
        GroundTruthParams {
            alpha: vec![T::zero(); n_features],
            alpha_bias: T::zero(),
        }
    }

    pub fn logit(&self, x: &[T]) -> Result<T> {
        affine(&self.alpha, self.alpha_bias, x)
    }
}

impl<T: Scalar> AnnotatorParams<T> {
    pub fn constant(n_features: usize, b: T) -> Self {
        AnnotatorParams {
            w: vec![T::zero(); n_features],
            b,
        }
    }

    pub fn logit(&self, x: &[T]) -> Result<T> {
        affine(&self.w, self.b, x)
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(n_features: usize, n_annotators: usize) -> Self {
        ModelParams {
            ground_truth: GroundTruthParams::zeros(n_features),
            annotators: vec![AnnotatorParams::constant(n_features, T::zero()); n_annotators],
        }
    }

    pub fn n_features(&self) -> usize {
        self.ground_truth.alpha.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.annotators.len()
    }

    /// Number of scalars in [`ModelParams::to_flat`].
    pub fn n_flat(&self) -> usize {
        (self.n_features() + 1) * (self.n_annotators() + 1)
    }

    /// Layout: `alpha, alpha_bias, w_1, b_1, ..., w_T, b_T`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_flat());
        out.extend_from_slice(&self.ground_truth.alpha);
        out.push(self.ground_truth.alpha_bias);
        for a in &self.annotators {
            out.extend_from_slice(&a.w);
            out.push(a.b);
        }
        out
    }

    pub fn from_flat(flat: &[T], n_features: usize, n_annotators: usize) -> Result<Self> {
        let stride = n_features + 1;
        if flat.len() != stride * (n_annotators + 1) {
            return Err(Error::invalid(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                stride * (n_annotators + 1)
            )));
        }
        let mut chunks = flat.chunks_exact(stride);
        let g = chunks.next().expect("length checked above");
        let ground_truth = GroundTruthParams {
            alpha: g[..n_features].to_vec(),
            alpha_bias: g[n_features],
        };
        let annotators = chunks
            .map(|c| AnnotatorParams {
                w: c[..n_features].to_vec(),
                b: c[n_features],
            })
            .collect();
        Ok(ModelParams {
            ground_truth,
            annotators,
        })
    }

    /// Squared norm of all weight vectors; biases are excluded.
    pub fn weight_norm_sq(&self) -> T {
        let sq = |v: &[T]| v.iter().map(|&a| a * a).sum::<T>();
        sq(&self.ground_truth.alpha) + self.annotators.iter().map(|a| sq(&a.w)).sum::<T>()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c = |v: &[T]| v.iter().map(|a| U::of(a.as_f64())).collect::<Vec<U>>();
        ModelParams {
            ground_truth: GroundTruthParams {
                alpha: c(&self.ground_truth.alpha),
                alpha_bias: U::of(self.ground_truth.alpha_bias.as_f64()),
            },
            annotators: self
                .annotators
                .iter()
                .map(|a| AnnotatorParams {
                    w: c(&a.w),
                    b: U::of(a.b.as_f64()),
                })
                .collect(),
        }
    }
}

fn affine<T: Scalar>(w: &[T], b: T, x: &[T]) -> Result<T> {
    if w.len() != x.len() {
        return Err(Error::invalid(format!(
            "feature vector has length {}, weights have length {}",
            x.len(),
            w.len()
        )));
    }
    Ok(w.iter().zip(x).fold(b, |acc, (&wi, &xi)| acc + wi * xi))
}

pub fn sigmoid<T: Scalar>(a: T) -> T {
    if a >= T::zero() {
        T::one() / (T::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (T::one() + e)
    }
}

/// `log sigmoid(a) = -softplus(-a)`, finite for every finite `a`.
pub fn log_sigmoid<T: Scalar>(a: T) -> T {
    if a >= T::zero() {
        -(-a).exp().ln_1p()
    } else {
        a - a.exp().ln_1p()
    }
}

/// `(log p, log(1 - p))` for `p = sigmoid(logit)` after clamping.
#[inline]
pub(crate) fn clamped_log_pair<T: Scalar>(logit: T) -> (T, T) {
    let (lp, lq, _) = clamped_logistic(logit);
    (lp, lq)
}

/// `(log p, log(1 - p), p)` for `p = sigmoid(clamped logit)`, sharing one
/// `exp` and one `ln_1p`.
#[inline]
pub(crate) fn clamped_logistic<T: Scalar>(logit: T) -> (T, T, T) {
    let bound = logit_bound::<T>();
    let c = logit.max(-bound).min(bound);
    let e = (-c.abs()).exp();
    let l = e.ln_1p();
    let small = e / (T::one() + e);
    if c >= T::zero() {
        (-l, -c - l, T::one() - small)
    } else {
        (c - l, -l, small)
    }
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_sum_exp2<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() && b == T::neg_infinity() {
        return T::neg_infinity();
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Probability that annotator `a` reports the true label at `x`.
pub fn eta<T: Scalar>(a: &AnnotatorParams<T>, x: &[T]) -> Result<T> {
    Ok(sigmoid(a.logit(x)?))
}

/// `p(z = 1 | x)`.
pub fn prior_z<T: Scalar>(g: &GroundTruthParams<T>, x: &[T]) -> Result<T> {
    Ok(sigmoid(g.logit(x)?))
}

/// `log p(z = 1 | x)`, unclamped.
pub fn log_prior_z<T: Scalar>(g: &GroundTruthParams<T>, x: &[T]) -> Result<T> {
    Ok(log_sigmoid(g.logit(x)?))
}

/// `log p(y | z, eta)`: `log eta` when the label is correct, `log(1 - eta)`
/// otherwise.
pub fn label_log_likelihood<T: Scalar>(y: bool, z: bool, eta_val: T) -> Result<T> {
    if !(eta_val > T::zero() && eta_val < T::one()) {
        return Err(Error::invalid(format!("eta must lie in (0, 1), got {eta_val}")));
    }
    let floor = T::of(PROB_FLOOR);
    let e = eta_val.max(floor).min(T::one() - floor);
    Ok(if y == z { e.ln() } else { (-e).ln_1p() })
}

/// Per-point log terms shared by the likelihood, posterior and
/// leave-one-out computations.
#[derive(Debug, Clone)]
pub(crate) struct PointTerms<T> {
    /// `(annotator, log p(y | z = 1), log p(y | z = 0))` for observed labels.
    pub labels: Vec<(usize, T, T)>,
    pub log_prior_1: T,
    pub log_prior_0: T,
}

impl<T: Scalar> PointTerms<T> {
    pub fn new(row: &[Option<bool>], x: &[T], params: &ModelParams<T>) -> Result<Self> {
        if row.len() != params.n_annotators() {
            return Err(Error::invalid(format!(
                "label row has {} entries, params have {} annotators",
                row.len(),
                params.n_annotators()
            )));
        }
        let (log_prior_1, log_prior_0) = clamped_log_pair(params.ground_truth.logit(x)?);
        let mut labels = Vec::with_capacity(row.len());
        for (t, (y, a)) in row.iter().zip(&params.annotators).enumerate() {
            if let Some(y) = *y {
                let (log_right, log_wrong) = clamped_log_pair(a.logit(x)?);
                let (l1, l0) = if y {
                    (log_right, log_wrong)
                } else {
                    (log_wrong, log_right)
                };
                labels.push((t, l1, l0));
            }
        }
        if labels.is_empty() {
            return Err(Error::invalid("label row has no observed entry"));
        }
        Ok(PointTerms {
            labels,
            log_prior_1,
            log_prior_0,
        })
    }

    /// `(log p(labels | z = 1), log p(labels | z = 0))`, skipping annotator
    /// `exclude`.
    pub fn log_likelihoods(&self, exclude: Option<usize>) -> (T, T) {
        self.labels
            .iter()
            .filter(|(t, _, _)| Some(*t) != exclude)
            .fold((T::zero(), T::zero()), |(s1, s0), &(_, l1, l0)| (s1 + l1, s0 + l0))
    }

    /// Log marginal of the labels, optionally with one annotator removed.
    /// With nothing left the empty label set has probability one.
    pub fn log_marginal(&self, exclude: Option<usize>) -> T {
        if exclude.is_some() && self.labels.iter().all(|(t, _, _)| Some(*t) == exclude) {
            return T::zero();
        }
        let (l1, l0) = self.log_likelihoods(exclude);
        log_sum_exp2(l1 + self.log_prior_1, l0 + self.log_prior_0)
    }

    /// `(p(z = 1 | labels, x), log marginal)`.
    pub fn posterior(&self) -> (T, T) {
        let (l1, l0) = self.log_likelihoods(None);
        let j1 = l1 + self.log_prior_1;
        let j0 = l0 + self.log_prior_0;
        let lm = log_sum_exp2(j1, j0);
        let q = (j1 - lm).exp().max(T::zero()).min(T::one());
        (q, lm)
    }
}

/// `log p(observed labels of the row | z, x)`; missing labels contribute 0.
pub fn row_log_likelihood<T: Scalar>(
    labels_row: &[Option<bool>],
    z: bool,
    x: &[T],
    params: &ModelParams<T>,
) -> Result<T> {
    let (l1, l0) = PointTerms::new(labels_row, x, params)?.log_likelihoods(None);
    Ok(if z { l1 } else { l0 })
}

/// `log sum_z p(labels | z, x) p(z | x)`.
pub fn point_log_marginal<T: Scalar>(
    labels_row: &[Option<bool>],
    x: &[T],
    params: &ModelParams<T>,
) -> Result<T> {
    Ok(PointTerms::new(labels_row, x, params)?.log_marginal(None))
}

/// `p(z = 1 | labels, x)`.
pub fn posterior_z<T: Scalar>(
    labels_row: &[Option<bool>],
    x: &[T],
    params: &ModelParams<T>,
) -> Result<T> {
    Ok(PointTerms::new(labels_row, x, params)?.posterior().0)
}
