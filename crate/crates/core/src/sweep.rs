//! Adversary-injection experiment grid: for each `(p_a, M, replicate)`
//! cell, build a dataset, add `M` flipping annotators, fit, score every
//! annotator and measure the AUC of the recovered classifier.
//!
//! Each cell's randomness is derived only from the master seed and the
//! cell coordinates `(p_a index, M, replicate)`, so results do not depend
//! on evaluation order or thread count.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{auc, predict_all, rank_annotators, stratified_split, RankBy};
use crate::rng::{derive_seed, derive_seed_path};
use crate::synth::{gen_dataset, inject_annotators, is_adversary_name, AdversarySpec, SynthConfig};
use crate::training::{fit, FitConfig, FitTrace};

#[derive(Debug, Clone)]
pub enum SweepSource {
    /// A fresh synthetic dataset per cell; the config seed is replaced by
    /// the cell seed.
    Synthetic(SynthConfig),
    /// Adversaries are injected into copies of this dataset, which must
    /// carry a truth column.
    Dataset(Dataset<f64>),
}

#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub pa_values: Vec<f64>,
    pub adversary_counts: Vec<usize>,
    pub replicates: usize,
    pub source: SweepSource,
    pub seed: u64,
    pub fit: FitConfig,
    /// Fraction held out for the test AUC; 0 skips the held-out fit.
    pub test_split: f64,
}

pub fn default_pa_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub const DEFAULT_ADVERSARY_COUNTS: [usize; 3] = [1, 3, 9];
pub const DEFAULT_REPLICATES: usize = 10;
pub const DEFAULT_TEST_SPLIT: f64 = 0.3;

impl SweepGrid {
    pub fn new(source: SweepSource, seed: u64) -> Self {
        SweepGrid {
            pa_values: default_pa_grid(),
            adversary_counts: DEFAULT_ADVERSARY_COUNTS.to_vec(),
            replicates: DEFAULT_REPLICATES,
            source,
            seed,
            fit: FitConfig::default(),
            test_split: DEFAULT_TEST_SPLIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pa_values.is_empty() || self.adversary_counts.is_empty() || self.replicates == 0 {
            return Err(Error::invalid("sweep grid lists and replicate count must be non-empty"));
        }
        if let Some(p) = self.pa_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("p_a value {p} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&self.test_split) {
            return Err(Error::invalid("test split must lie in [0, 1)"));
        }
        match &self.source {
            SweepSource::Synthetic(cfg) => cfg.validate()?,
            SweepSource::Dataset(ds) if ds.truth().is_none() => {
                return Err(Error::invalid("sweeping an ingested dataset requires a truth column"))
            }
            SweepSource::Dataset(_) => {}
        }
        self.fit.validate()
    }

    pub fn n_cells(&self) -> usize {
        self.pa_values.len() * self.adversary_counts.len() * self.replicates
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorOutcome {
    pub name: String,
    pub is_adversary: bool,
    pub score: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub annotators: Vec<AnnotatorOutcome>,
    pub train_auc: Option<f64>,
    pub test_auc: Option<f64>,
    /// Trace of the full-data fit, then of the held-out fit if any.
    pub traces: Vec<FitTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub p_a: f64,
    pub n_adversaries: usize,
    pub replicate: usize,
    pub outcome: std::result::Result<CellOutcome, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    /// Ordered by p_a, then adversary count, then replicate.
    pub cells: Vec<SweepCell>,
}

/// Runs every cell on a pool of `threads` workers (`None`: rayon default).
pub fn run_sweep(grid: &SweepGrid, threads: Option<usize>) -> Result<SweepResult> {
    grid.validate()?;
    let coords: Vec<(usize, usize, usize)> = (0..grid.pa_values.len())
        .flat_map(|a| (0..grid.adversary_counts.len()).flat_map(move |m| (0..grid.replicates).map(move |r| (a, m, r))))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::invalid(e.to_string()))?;
    let cells = pool.install(|| coords.par_iter().map(|&(a, m, r)| run_cell(grid, a, m, r)).collect());
    Ok(SweepResult { cells })
}

/// Cell `(pa_index, count_index, replicate)`; failures are recorded, not
/// propagated.
pub fn run_cell(grid: &SweepGrid, pa_index: usize, count_index: usize, replicate: usize) -> SweepCell {
    let p_a = grid.pa_values[pa_index];
    let n_adversaries = grid.adversary_counts[count_index];
    let cell_seed = derive_seed_path(grid.seed, &[pa_index as u64, n_adversaries as u64, replicate as u64]);
    SweepCell {
        p_a,
        n_adversaries,
        replicate,
        outcome: cell_outcome(grid, p_a, n_adversaries, cell_seed).map_err(|e| e.to_string()),
    }
}

fn cell_outcome(grid: &SweepGrid, p_a: f64, n_adversaries: usize, cell_seed: u64) -> Result<CellOutcome> {
    let base = match &grid.source {
        SweepSource::Synthetic(cfg) => gen_dataset(&SynthConfig {
            seed: derive_seed(cell_seed, 0),
            ..cfg.clone()
        })?,
        SweepSource::Dataset(ds) => ds.clone(),
    };
    let spec = AdversarySpec { p_a, count: n_adversaries };
    let dataset = inject_annotators(&base, spec, derive_seed(cell_seed, 1))?;
    let config = FitConfig {
        seed: derive_seed(cell_seed, 2),
        ..grid.fit.clone()
    };
    let truth = dataset.truth().expect("injection requires truth");

    let (params, trace) = fit(&dataset, &config)?;
    let reports = rank_annotators(&dataset, &params, RankBy::Sum)?;
    let train_auc = auc(&predict_all(&params, &dataset)?, truth)?;
    let mut traces = vec![trace];

    let test_auc = if grid.test_split > 0.0 {
        let (train_idx, test_idx) = stratified_split(truth, grid.test_split, derive_seed(cell_seed, 3))?;
        let train = dataset.subset(&train_idx)?;
        let test = dataset.subset(&test_idx)?;
        let (p, t) = fit(&train, &config)?;
        traces.push(t);
        Some(auc(&predict_all(&p, &test)?, test.truth().expect("subset keeps truth"))?)
    } else {
        None
    };

    Ok(CellOutcome {
        annotators: reports
            .into_iter()
            .map(|r| AnnotatorOutcome {
                is_adversary: is_adversary_name(&r.name),
                name: r.name,
                score: r.score,
                mean_score: r.mean_score,
            })
            .collect(),
        train_auc: Some(train_auc),
        test_auc,
        traces,
    })
}

/// Replicate means for one `(p_a, M)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub p_a: f64,
    pub n_adversaries: usize,
    pub n_ok: usize,
    pub mean_adversary_score: Option<f64>,
    pub mean_base_score: f64,
    pub mean_train_auc: f64,
    pub mean_test_auc: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Averages over replicates (and over annotators of each kind), skipping
/// failed cells. Output follows the order of the grid.
pub fn summarize(result: &SweepResult) -> Vec<CellSummary> {
    let mut keys: Vec<(f64, usize)> = Vec::new();
    for c in &result.cells {
        if !keys.iter().any(|&(p, m)| p == c.p_a && m == c.n_adversaries) {
            keys.push((c.p_a, c.n_adversaries));
        }
    }
    keys.into_iter()
        .map(|(p_a, m)| {
            let ok: Vec<&CellOutcome> = result
                .cells
                .iter()
                .filter(|c| c.p_a == p_a && c.n_adversaries == m)
                .filter_map(|c| c.outcome.as_ref().ok())
                .collect();
            let kind_mean = |adv: bool| -> Vec<f64> {
                ok.iter()
                    .filter_map(|o| {
                        let s: Vec<f64> = o.annotators.iter().filter(|a| a.is_adversary == adv).map(|a| a.score).collect();
                        mean(&s)
                    })
                    .collect()
            };
            let train: Vec<f64> = ok.iter().filter_map(|o| o.train_auc).collect();
            let test: Vec<f64> = ok.iter().filter_map(|o| o.test_auc).collect();
            CellSummary {
                p_a,
                n_adversaries: m,
                n_ok: ok.len(),
                mean_adversary_score: mean(&kind_mean(true)),
                mean_base_score: mean(&kind_mean(false)).unwrap_or(f64::NAN),
                mean_train_auc: mean(&train).unwrap_or(f64::NAN),
                mean_test_auc: mean(&test),
            }
        })
        .collect()
}
