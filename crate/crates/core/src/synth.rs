//! Synthetic two-class Gaussian datasets with simulated annotators, and
//! injection of label-flipping annotators.
//!
//! Truth and features come from substream 0 of the config seed and base
//! annotator `j` from substream `j + 1` (see [`crate::rng`]). Injected
//! adversary `j` uses substream `j` of the injection seed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelMatrix};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::scalar::Scalar;

/// Name prefix marking injected annotators.
pub const ADVERSARY_PREFIX: &str = "adv_";
pub const BASE_PREFIX: &str = "base_";

/// Dataset sizes of the two reference experiments.
pub const SMALL_PRESET_POINTS: usize = 75;
pub const LARGE_PRESET_POINTS: usize = 1057;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    /// Probability of flipping each true label.
    pub p_a: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_points: usize,
    pub n_features: usize,
    pub class_balance: f64,
    /// Distance between the class means along the first feature axis.
    pub class_separation: f64,
    pub base_annotators: usize,
    pub base_accuracy: f64,
    /// When set, even-indexed base annotators have this accuracy on the
    /// half-space `x_last >= 0` and odd-indexed ones on `x_last < 0`;
    /// elsewhere they keep `base_accuracy`.
    pub region_accuracy: Option<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_points: SMALL_PRESET_POINTS,
            n_features: 2,
            class_balance: 0.5,
            class_separation: 2.0,
            base_annotators: 3,
            base_accuracy: 0.9,
            region_accuracy: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::invalid("synthetic datasets need at least 2 points"));
        }
        if self.n_features < 1 {
            return Err(Error::invalid("synthetic datasets need at least 1 feature"));
        }
        if self.base_annotators < 2 {
            return Err(Error::invalid("synthetic datasets need at least 2 base annotators"));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::invalid("class balance must lie in (0, 1)"));
        }
        let acc_ok = |a: f64| (0.0..=1.0).contains(&a);
        if !acc_ok(self.base_accuracy) || !self.region_accuracy.map_or(true, acc_ok) {
            return Err(Error::invalid("annotator accuracies must lie in [0, 1]"));
        }
        if !self.class_separation.is_finite() {
            return Err(Error::invalid("class separation must be finite"));
        }
        Ok(())
    }
}

/// Draws a dataset: `z ~ Bernoulli(class_balance)`, features Gaussian with
/// unit covariance and mean `+-separation/2` on the first axis, and base
/// annotators that report `z` correctly with their accuracy.
pub fn gen_dataset<T: Scalar>(config: &SynthConfig) -> Result<Dataset<T>> {
    config.validate()?;
    let n = config.n_points;
    let d = config.n_features;
    let mut rng = substream(config.seed, 0);
    let mut truth = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z = rng.random_bool(config.class_balance);
        let shift = if z { 0.5 } else { -0.5 } * config.class_separation;
        truth.push(z);
        for j in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            raw.push(T::of(if j == 0 { e + shift } else { e }));
        }
    }
    let columns: Vec<Vec<bool>> = (0..config.base_annotators)
        .map(|j| {
            let mut rng = substream(config.seed, j as u64 + 1);
            (0..n)
                .map(|i| {
                    let acc = match config.region_accuracy {
                        Some(ra) if (raw[i * d + d - 1] >= T::zero()) == (j % 2 == 0) => ra,
                        _ => config.base_accuracy,
                    };
                    let correct = rng.random::<f64>() < acc;
                    truth[i] == correct
                })
                .collect()
        })
        .collect();
    Dataset::from_raw(
        (0..n).map(|i| i.to_string()).collect(),
        (0..d).map(|j| format!("x{}", j + 1)).collect(),
        raw,
        LabelMatrix::from_columns(&columns)?,
        (0..config.base_annotators).map(|j| format!("{BASE_PREFIX}{}", j + 1)).collect(),
        Some(truth),
    )
}

/// Copies `truth`, flipping each label independently with probability `p_a`.
pub fn gen_adversary<R: Rng + ?Sized>(truth: &[bool], p_a: f64, rng: &mut R) -> Vec<bool> {
    truth.iter().map(|&z| z != (rng.random::<f64>() < p_a)).collect()
}

/// Appends `spec.count` adversary columns named `adv_1, adv_2, ...`.
pub fn inject_annotators<T: Scalar>(dataset: &Dataset<T>, spec: AdversarySpec, seed: u64) -> Result<Dataset<T>> {
    if !(0.0..=1.0).contains(&spec.p_a) {
        return Err(Error::invalid(format!("p_a must lie in [0, 1], got {}", spec.p_a)));
    }
    let truth = dataset
        .truth()
        .ok_or_else(|| Error::invalid("injecting adversaries requires a truth column"))?;
    if spec.count == 0 {
        return Ok(dataset.clone());
    }
    let columns = (0..spec.count)
        .map(|j| gen_adversary(truth, spec.p_a, &mut substream(seed, j as u64)))
        .collect();
    let names = (0..spec.count).map(|j| format!("{ADVERSARY_PREFIX}{}", j + 1)).collect();
    dataset.with_appended_annotators(names, columns)
}

pub fn is_adversary_name(name: &str) -> bool {
    name.starts_with(ADVERSARY_PREFIX)
}
