//! Leave-one-annotator-out conditional probabilities, adversarial scores,
//! annotator ranking and ROC AUC.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{prior_z, ModelParams, PointTerms};
use crate::rng::substream;
use crate::scalar::Scalar;

/// `log p(y(k) | labels of the other annotators, x)`.
pub fn conditional_log_prob<T: Scalar>(
    k: usize,
    labels_row: &[Option<bool>],
    x: &[T],
    params: &ModelParams<T>,
) -> Result<T> {
    if labels_row.get(k).copied().flatten().is_none() {
        return Err(Error::invalid(format!("annotator {k} has no label at this point")));
    }
    let terms = PointTerms::new(labels_row, x, params)?;
    Ok(terms.log_marginal(None) - terms.log_marginal(Some(k)))
}

/// `p(y(k) | labels of the other annotators, x)`: the marginal of the full
/// label set divided by the marginal with annotator `k` left out.
pub fn conditional_prob<T: Scalar>(
    k: usize,
    labels_row: &[Option<bool>],
    x: &[T],
    params: &ModelParams<T>,
) -> Result<T> {
    Ok(conditional_log_prob(k, labels_row, x, params)?.exp().min(T::one()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialScore<T> {
    /// `-sum` of the conditional log probabilities.
    pub score: T,
    pub mean_score: T,
    /// `(point index, log conditional probability)` over labeled points.
    pub conditional_log_probs: Vec<(usize, T)>,
}

/// Sum over annotator `k`'s labeled points of `-log p(y(k) | others, x)`.
/// Large scores flag annotators whose labels the rest cannot predict.
pub fn adversarial_score<T: Scalar>(k: usize, dataset: &Dataset<T>, params: &ModelParams<T>) -> Result<AdversarialScore<T>> {
    if k >= dataset.n_annotators() {
        return Err(Error::invalid(format!("annotator index {k} out of range")));
    }
    let labels = dataset.labels();
    let mut conditional_log_probs = Vec::with_capacity(labels.n_observed(k));
    for i in 0..dataset.n_points() {
        if labels.get(i, k).is_some() {
            conditional_log_probs.push((i, conditional_log_prob(k, labels.row(i), dataset.x(i), params)?));
        }
    }
    if conditional_log_probs.is_empty() {
        return Err(Error::invalid(format!("annotator {k} has no observed label")));
    }
    let score = -conditional_log_probs.iter().map(|&(_, l)| l).sum::<T>();
    let mean_score = score / T::of(conditional_log_probs.len() as f64);
    Ok(AdversarialScore {
        score,
        mean_score,
        conditional_log_probs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankBy {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorReport<T> {
    pub annotator: usize,
    pub name: String,
    pub n_labels: usize,
    pub conditional_log_probs: Vec<(usize, T)>,
    pub score: T,
    pub mean_score: T,
    /// 1-based, highest score first.
    pub rank: usize,
}

/// Scores every annotator and ranks them by descending score (sum or mean);
/// ties go to the lower annotator index. Reports come back in annotator order.
pub fn rank_annotators<T: Scalar>(dataset: &Dataset<T>, params: &ModelParams<T>, by: RankBy) -> Result<Vec<AnnotatorReport<T>>> {
    if params.n_annotators() != dataset.n_annotators() {
        return Err(Error::invalid(format!(
            "params have {} annotators, dataset has {}",
            params.n_annotators(),
            dataset.n_annotators()
        )));
    }
    let mut reports = (0..dataset.n_annotators())
        .map(|k| {
            let s = adversarial_score(k, dataset, params)?;
            Ok(AnnotatorReport {
                annotator: k,
                name: dataset.annotator_names()[k].clone(),
                n_labels: s.conditional_log_probs.len(),
                conditional_log_probs: s.conditional_log_probs,
                score: s.score,
                mean_score: s.mean_score,
                rank: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let key = |r: &AnnotatorReport<T>| match by {
        RankBy::Sum => r.score,
        RankBy::Mean => r.mean_score,
    };
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| {
        key(&reports[b])
            .partial_cmp(&key(&reports[a]))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    for (pos, &k) in order.iter().enumerate() {
        reports[k].rank = pos + 1;
    }
    Ok(reports)
}

/// Recovered classifier output `p(z = 1 | x)`.
pub fn predict<T: Scalar>(params: &ModelParams<T>, x: &[T]) -> Result<T> {
    prior_z(&params.ground_truth, x)
}

pub fn predict_all<T: Scalar>(params: &ModelParams<T>, dataset: &Dataset<T>) -> Result<Vec<T>> {
    (0..dataset.n_points()).map(|i| predict(params, dataset.x(i))).collect()
}

/// Area under the ROC curve as the normalized Mann-Whitney U statistic,
/// using midranks so that tied scores count one half.
pub fn auc<T: Scalar>(scores: &[T], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} truth labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("AUC needs both classes in the truth labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN excluded above"));
    // Twice the rank sum of the positives keeps midranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end; their mean doubled is start + end + 1.
        let twice_mid = (start + end + 1) as u128;
        let pos_in_group = order[start..end].iter().filter(|&&i| truth[i]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        start = end;
    }
    let np = n_pos as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

/// Stratified split: a `test_fraction` share of each class (rounded) goes to
/// the test side. Returns `(train, test)` indices in ascending order.
pub fn stratified_split(truth: &[bool], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid(format!("test fraction must lie in [0, 1), got {test_fraction}")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, stream) in [(false, 0u64), (true, 1u64)] {
        let mut idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        idx.shuffle(&mut substream(seed, stream));
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelMatrix;
    use crate::model::{AnnotatorParams, GroundTruthParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn constant_params(prior_logit: f64, etas: &[f64]) -> ModelParams<f64> {
        ModelParams {
            ground_truth: GroundTruthParams { alpha: vec![0.0], alpha_bias: prior_logit },
            annotators: etas.iter().map(|&e| AnnotatorParams::constant(1, logit(e))).collect(),
        }
    }

    #[test]
    fn conditional_examples() {
        let x = [0.4];
        let p = constant_params(0.0, &[0.9, 0.9]);
        let v = conditional_prob(0, &[Some(true), Some(true)], &x, &p).unwrap();
        assert_relative_eq!(v, 0.82, max_relative = 1e-12);
        let v0 = conditional_prob(0, &[Some(false), Some(true)], &x, &p).unwrap();
        assert_relative_eq!(v0, 0.18, max_relative = 1e-12);
        assert_relative_eq!(v + v0, 1.0, max_relative = 1e-14);
        assert!(matches!(
            conditional_prob(1, &[Some(true), None], &x, &p),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn point_mass_prior_collapses_to_eta() {
        let x = [0.4];
        // Prior clamps to 1 - 1e-12.
        let p = constant_params(1e3, &[0.7, 0.95, 0.6]);
        for others in [[Some(true), Some(true)], [Some(false), None], [None, Some(false)]] {
            for y in [true, false] {
                let row = [Some(y), others[0], others[1]];
                let v = conditional_prob(0, &row, &x, &p).unwrap();
                let expect = if y { 0.7 } else { 0.3 };
                assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
            }
        }
    }

    #[test]
    fn lone_label_uses_empty_denominator() {
        let p = constant_params(logit(0.3), &[0.9, 0.6]);
        let v = conditional_prob(0, &[Some(true), None], &[0.0], &p).unwrap();
        assert_relative_eq!(v, 0.3 * 0.9 + 0.7 * 0.1, max_relative = 1e-12);
    }

    fn dataset(columns: &[Vec<bool>]) -> Dataset<f64> {
        let n = columns[0].len();
        Dataset::from_raw(
            (0..n).map(|i| format!("p{i}")).collect(),
            vec!["f".into()],
            (0..n).map(|i| i as f64).collect(),
            LabelMatrix::from_columns(columns).unwrap(),
            (0..columns.len()).map(|t| format!("a{t}")).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn score_examples() {
        let ds = dataset(&[vec![true, false], vec![true, false]]);
        // Perfect, saturated annotators: conditionals are 1 - O(1e-12).
        let p = ModelParams {
            ground_truth: GroundTruthParams { alpha: vec![0.0], alpha_bias: 0.0 },
            annotators: vec![AnnotatorParams::constant(1, 100.0); 2],
        };
        let s = adversarial_score(0, &ds, &p).unwrap();
        assert!(s.score >= 0.0 && s.score < 1e-10);

        // Lone labels with conditionals 0.5 and 0.25.
        let labels = LabelMatrix::new(2, 2, vec![Some(true), Some(false), Some(true), None]).unwrap();
        let ds = Dataset::from_raw(
            vec!["a".into(), "b".into()],
            vec!["f".into()],
            vec![-1.0, 1.0],
            labels,
            vec!["x".into(), "y".into()],
            None,
        )
        .unwrap();
        // Standardized x = (-1, 1); prior logits 0 and logit(0.25); eta_0 ~ 1.
        let p = ModelParams {
            ground_truth: GroundTruthParams { alpha: vec![logit(0.25) / 2.0], alpha_bias: logit(0.25) / 2.0 },
            annotators: vec![AnnotatorParams::constant(1, 1e3), AnnotatorParams::constant(1, 0.0)],
        };
        let s = adversarial_score(0, &ds, &p).unwrap();
        let expect_logp = [(0.5f64).ln(), (0.25f64).ln()];
        // Point 0 has a second label with eta = 0.5, which is uninformative.
        for (&(_, l), e) in s.conditional_log_probs.iter().zip(expect_logp) {
            assert_relative_eq!(l, e, max_relative = 1e-9);
        }
        assert_relative_eq!(s.score, 8f64.ln(), max_relative = 1e-9);
        assert_relative_eq!(s.mean_score, 8f64.ln() / 2.0, max_relative = 1e-9);
    }

    #[test]
    fn mean_score_is_invariant_to_duplication() {
        let ds = dataset(&[vec![true, false, true], vec![true, true, false]]);
        let ds2 = dataset(&[
            vec![true, false, true, true, false, true],
            vec![true, true, false, true, true, false],
        ]);
        let p = constant_params(0.3, &[0.8, 0.7]);
        let a = adversarial_score(0, &ds, &p).unwrap();
        let b = adversarial_score(0, &ds2, &p).unwrap();
        assert_relative_eq!(b.score, 2.0 * a.score, max_relative = 1e-12);
        assert_relative_eq!(b.mean_score, a.mean_score, max_relative = 1e-12);
    }

    #[test]
    fn identical_annotators_tie_by_index() {
        let ds = dataset(&[vec![true, false, true], vec![true, false, false], vec![true, false, false]]);
        let p = constant_params(0.0, &[0.8, 0.8, 0.8]);
        let r = rank_annotators(&ds, &p, RankBy::Sum).unwrap();
        assert_eq!(r[1].score, r[2].score);
        assert!(r[1].rank < r[2].rank);
        let mut ranks: Vec<usize> = r.iter().map(|x| x.rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3]);
    }

    #[test]
    fn mean_ranking_can_differ_from_sum() {
        let labels = LabelMatrix::new(
            4,
            3,
            vec![
                Some(true), Some(true), Some(false),
                Some(false), Some(false), None,
                Some(true), Some(false), None,
                Some(false), Some(false), None,
            ],
        )
        .unwrap();
        let ds = Dataset::from_raw(
            (0..4).map(|i| i.to_string()).collect(),
            vec!["f".into()],
            vec![0.0, 1.0, 2.0, 3.0],
            labels,
            vec!["a".into(), "b".into(), "c".into()],
            None,
        )
        .unwrap();
        let p = constant_params(0.0, &[0.9, 0.9, 0.9]);
        let by_sum = rank_annotators(&ds, &p, RankBy::Sum).unwrap();
        let by_mean = rank_annotators(&ds, &p, RankBy::Mean).unwrap();
        // Annotator c labels one point and disagrees there.
        assert_eq!(by_mean[2].rank, 1);
        assert_ne!(by_sum[2].rank, 1);
    }

    #[test]
    fn predict_delegates_to_prior() {
        let p = constant_params(0.0, &[0.9, 0.9]);
        assert_eq!(predict(&p, &[3.0]).unwrap(), 0.5);
        let p = ModelParams {
            ground_truth: GroundTruthParams { alpha: vec![0.8], alpha_bias: -0.1 },
            annotators: vec![],
        };
        let v = predict(&p, &[1.7]).unwrap();
        assert_eq!(v, prior_z(&p.ground_truth, &[1.7]).unwrap());
        assert!(predict(&p, &[1.8]).unwrap() > v);
    }

    #[test]
    fn auc_examples() {
        let t = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &t).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &t).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &t).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let truth: Vec<bool> = (0..100).map(|i| i % 4 == 0).collect();
        let (train, test) = stratified_split(&truth, 0.3, 5).unwrap();
        assert_eq!(train.len() + test.len(), 100);
        assert_eq!(test.iter().filter(|&&i| truth[i]).count(), 8);
        assert_eq!(test.iter().filter(|&&i| !truth[i]).count(), 23);
        assert_eq!(stratified_split(&truth, 0.3, 5).unwrap(), (train, test));
    }

    fn brute_force_auc(scores: &[f64], truth: &[bool]) -> f64 {
        let mut twice_wins = 0u64;
        let mut pairs = 0u64;
        for (i, &ti) in truth.iter().enumerate() {
            for (j, &tj) in truth.iter().enumerate() {
                if ti && !tj {
                    pairs += 1;
                    twice_wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        Ordering::Greater => 2,
                        Ordering::Equal => 1,
                        Ordering::Less => 0,
                    };
                }
            }
        }
        twice_wins as f64 / 2.0 / pairs as f64
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            data in prop::collection::vec((0u8..12, any::<bool>()), 2..120)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 10.0).collect();
            let truth: Vec<bool> = data.iter().map(|(_, t)| *t).collect();
            prop_assume!(truth.iter().any(|&t| t) && truth.iter().any(|&t| !t));
            prop_assert_eq!(auc(&scores, &truth).unwrap(), brute_force_auc(&scores, &truth));
        }
    }
}
