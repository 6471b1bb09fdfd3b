//! Label-distribution statistics and the label-trigram frequency probe.
//!
//! Entropies are in nats. Kurtosis is the Fisher (excess) kurtosis of the
//! vector of per-label counts, `m4 / m2^2 - 3` with population moments,
//! so that a normal distribution scores 0. A compact label set with few
//! outliers scores below zero (POS tags around -0.2); a single dominant
//! label among n counts pushes the value toward n - 5.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;

use crate::corpus::word_frequencies;
use crate::corpus::TaggedCorpus;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_PROBE_FOLDS: usize = 10;
pub const DEFAULT_RIDGE_STRENGTH: f64 = 1.0;

pub type LabelCounts = BTreeMap<String, u64>;

pub fn label_distribution(corpus: &TaggedCorpus, task: &str) -> Result<LabelCounts> {
    let idx = corpus.task_index(task)?;
    let mut counts = BTreeMap::new();
    for label in corpus.sentences().iter().flat_map(|s| s.labels(idx)) {
        *counts.entry(label.to_owned()).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Shannon entropy in nats. With `drop_o`, the `o_label` entry is removed
/// and the rest renormalized.
pub fn entropy(dist: &LabelCounts, drop_o: bool, o_label: Option<&str>) -> Result<f64> {
    let counts: Vec<u64> = dist
        .iter()
        .filter(|(label, _)| !(drop_o && Some(label.as_str()) == o_label))
        .map(|(_, &c)| c)
        .filter(|&c| c > 0)
        .collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty(if drop_o {
            "label distribution after dropping the O label".into()
        } else {
            "label distribution".into()
        }));
    }
    let total = total as f64;
    let h = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Excess kurtosis of the per-label count vector.
pub fn kurtosis(dist: &LabelCounts) -> Result<f64> {
    if dist.len() < 2 {
        return Err(Error::UndefinedKurtosis("needs at least two labels"));
    }
    let n = dist.len() as f64;
    let mean = dist.values().map(|&c| c as f64).sum::<f64>() / n;
    let (m2, m4) = dist.values().fold((0.0, 0.0), |(m2, m4), &c| {
        let d = c as f64 - mean;
        let d2 = d * d;
        (m2 + d2, m4 + d2 * d2)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 == 0.0 {
        return Err(Error::UndefinedKurtosis("all label counts are equal"));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub sentences: usize,
    pub tokens: usize,
    pub ttr: f64,
    pub inventory_size: usize,
    /// Absent when the task has no out-of-span label.
    pub prop_o: Option<f64>,
    /// Absent when undefined (a single label, or all counts equal).
    pub kurtosis: Option<f64>,
    pub entropy_full: f64,
    /// Equals `entropy_full` when the task has no out-of-span label.
    pub entropy_minus_o: f64,
}

impl DatasetStats {
    pub const HEADER: [&'static str; 8] = [
        "sentences",
        "tokens",
        "ttr",
        "labels",
        "prop_o",
        "kurtosis",
        "entropy_full",
        "entropy_minus_o",
    ];

    pub fn row(&self) -> Vec<String> {
        vec![
            self.sentences.to_string(),
            self.tokens.to_string(),
            format!("{:.4}", self.ttr),
            self.inventory_size.to_string(),
            self.prop_o
                .map_or_else(|| "-".to_owned(), |p| format!("{p:.4}")),
            self.kurtosis
                .map_or_else(|| "-".to_owned(), |k| format!("{k:.4}")),
            format!("{:.4}", self.entropy_full),
            format!("{:.4}", self.entropy_minus_o),
        ]
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in Self::HEADER.iter().zip(self.row()) {
            writeln!(f, "{key}\t{value}")?;
        }
        Ok(())
    }
}

/// Table-style statistics for one task column. `o_label` overrides the
/// inventory's out-of-span label when given.
pub fn dataset_stats(
    corpus: &TaggedCorpus,
    task: &str,
    o_label: Option<&str>,
) -> Result<DatasetStats> {
    let inventory = corpus.inventory(task)?;
    let o_label = o_label.or(inventory.o_label());
    if let Some(o) = o_label {
        if inventory.index_of(o).is_none() {
            return Err(Error::LabelNotInInventory {
                task: task.to_owned(),
                label: o.to_owned(),
            });
        }
    }
    let dist = label_distribution(corpus, task)?;
    let tokens = corpus.token_count();
    if tokens == 0 {
        return Err(Error::Empty("corpus".into()));
    }
    let types = corpus
        .sentences()
        .iter()
        .flat_map(|s| s.surfaces())
        .collect::<BTreeSet<_>>()
        .len();
    let entropy_full = entropy(&dist, false, None)?;
    let (prop_o, entropy_minus_o) = match o_label {
        Some(o) => (
            Some(dist.get(o).copied().unwrap_or(0) as f64 / tokens as f64),
            entropy(&dist, true, Some(o))?,
        ),
        None => (None, entropy_full),
    };
    Ok(DatasetStats {
        sentences: corpus.len(),
        tokens,
        ttr: types as f64 / tokens as f64,
        inventory_size: inventory.len(),
        prop_o,
        kurtosis: match kurtosis(&dist) {
            Ok(k) => Some(k),
            Err(Error::UndefinedKurtosis(_)) => None,
            Err(e) => return Err(e),
        },
        entropy_full,
        entropy_minus_o,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProbeResult {
    pub r_squared_mean: f64,
    pub r_squared_per_fold: Vec<f64>,
    /// R² of each fold's model on its own training folds.
    pub train_r_squared_per_fold: Vec<f64>,
    pub n_samples: usize,
}

impl RegressionProbeResult {
    pub fn train_r_squared_mean(&self) -> f64 {
        mean(&self.train_r_squared_per_fold)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Ridge regression on a single categorical feature, one-hot encoded,
/// with an unpenalized intercept.
///
/// The normal equations decouple per category: for a fixed intercept `b`,
/// `w_c = n_c (ȳ_c - b) / (n_c + λ)`, and the intercept equation then
/// gives `b = Σ_c a_c ȳ_c / Σ_c a_c` with `a_c = n_c λ / (n_c + λ)`.
/// With `λ = 0` this degenerates to per-category means.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalRidge {
    pub intercept: f64,
    pub weights: HashMap<usize, f64>,
}

impl CategoricalRidge {
    pub fn fit(samples: &[(usize, f64)], strength: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("regression samples".into()));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ridge strength must be finite and non-negative, got {strength}"
            )));
        }
        let mut sums: HashMap<usize, (f64, f64)> = HashMap::new();
        for &(c, y) in samples {
            let e = sums.entry(c).or_insert((0.0, 0.0));
            e.0 += 1.0;
            e.1 += y;
        }
        let intercept = if strength == 0.0 {
            0.0
        } else {
            let mut categories: Vec<_> = sums.iter().collect();
            categories.sort_unstable_by_key(|(c, _)| **c);
            let (num, den) = categories
                .iter()
                .fold((0.0, 0.0), |(num, den), (_, &(n, sum))| {
                    let a = n * strength / (n + strength);
                    (num + a * sum / n, den + a)
                });
            num / den
        };
        let weights = sums
            .into_iter()
            .map(|(c, (n, sum))| (c, (sum - n * intercept) / (n + strength)))
            .collect();
        Ok(CategoricalRidge { intercept, weights })
    }

    pub fn predict(&self, category: usize) -> f64 {
        self.intercept + self.weights.get(&category).copied().unwrap_or(0.0)
    }

    /// `1 - SS_res / SS_tot`; 0 when the targets have no variance.
    pub fn r_squared(&self, samples: &[(usize, f64)]) -> f64 {
        r_squared(samples.iter().map(|&(c, y)| (y, self.predict(c))))
    }
}

fn r_squared(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let n = pairs.clone().count();
    if n == 0 {
        return 0.0;
    }
    let y_mean = pairs.clone().map(|(y, _)| y).sum::<f64>() / n as f64;
    let ss_tot: f64 = pairs.clone().map(|(y, _)| (y - y_mean).powi(2)).sum();
    if ss_tot <= f64::EPSILON * n as f64 * y_mean.abs().max(1.0) {
        return 0.0;
    }
    let ss_res: f64 = pairs.map(|(y, p)| (y - p).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Per-sentence regression samples: (label-trigram id, log10 frequency).
/// Sentence edges are padded with a boundary label.
pub fn trigram_samples(corpus: &TaggedCorpus, task: &str) -> Result<Vec<Vec<(usize, f64)>>> {
    let idx = corpus.task_index(task)?;
    let freqs = word_frequencies(corpus);
    let inventory = corpus.inventory(task)?;
    let boundary = inventory.len();
    let mut trigram_ids: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut per_sentence = Vec::with_capacity(corpus.len());
    for sentence in corpus.sentences() {
        let labels: Vec<usize> = sentence
            .labels(idx)
            .map(|l| inventory.index_of(l).expect("inventory built from corpus"))
            .collect();
        let mut samples = Vec::with_capacity(labels.len());
        for (i, token) in sentence.tokens.iter().enumerate() {
            let prev = if i == 0 { boundary } else { labels[i - 1] };
            let next = labels.get(i + 1).copied().unwrap_or(boundary);
            let n_ids = trigram_ids.len();
            let id = *trigram_ids.entry((prev, labels[i], next)).or_insert(n_ids);
            let freq = freqs[&token.surface] as f64;
            samples.push((id, freq.log10()));
        }
        per_sentence.push(samples);
    }
    Ok(per_sentence)
}

/// K-fold cross-validated R² of predicting log10 word frequency from the
/// delexicalized (previous, current, next) label trigram.
///
/// Sentences are shuffled with `seed` and split into contiguous folds.
pub fn trigram_frequency_probe(
    corpus: &TaggedCorpus,
    task: &str,
    folds: usize,
    ridge_strength: f64,
    seed: u64,
) -> Result<RegressionProbeResult> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if corpus.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} sentences cannot be split into {folds} folds",
            corpus.len()
        )));
    }
    let per_sentence = trigram_samples(corpus, task)?;
    let mut order: Vec<usize> = (0..per_sentence.len()).collect();
    order.shuffle(&mut rng::component_rng(seed, "probe-folds"));
    let n = order.len();
    let mut fold_of = vec![0; n];
    for f in 0..folds {
        for &s in &order[f * n / folds..(f + 1) * n / folds] {
            fold_of[s] = f;
        }
    }

    let mut held_out = Vec::with_capacity(folds);
    let mut train_fit = Vec::with_capacity(folds);
    for f in 0..folds {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (s, samples) in per_sentence.iter().enumerate() {
            if fold_of[s] == f {
                test.extend_from_slice(samples);
            } else {
                train.extend_from_slice(samples);
            }
        }
        let model = CategoricalRidge::fit(&train, ridge_strength)?;
        held_out.push(model.r_squared(&test));
        train_fit.push(model.r_squared(&train));
    }
    Ok(RegressionProbeResult {
        r_squared_mean: mean(&held_out),
        r_squared_per_fold: held_out,
        train_r_squared_per_fold: train_fit,
        n_samples: per_sentence.iter().map(Vec::len).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_conll, ColumnSpec};
    use proptest::prelude::*;

    fn counts(pairs: &[(&str, u64)]) -> LabelCounts {
        pairs.iter().map(|(l, c)| ((*l).to_owned(), *c)).collect()
    }

    #[test]
    fn label_distribution_examples() {
        let corpus = parse_conll("a\tO\nb\tO\nc\tB-P\n", &ColumnSpec::new([(1, "ner")])).unwrap();
        assert_eq!(
            label_distribution(&corpus, "ner").unwrap(),
            counts(&[("O", 2), ("B-P", 1)])
        );
        assert!(matches!(
            label_distribution(&corpus, "pos"),
            Err(Error::UnknownTask(_))
        ));
        let single = parse_conll("a\tX\nb\tX\n", &ColumnSpec::new([(1, "t")])).unwrap();
        assert_eq!(label_distribution(&single, "t").unwrap().len(), 1);
    }

    #[test]
    fn entropy_examples() {
        let h = entropy(&counts(&[("A", 5), ("B", 5)]), false, None).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&counts(&[("A", 7)]), false, None).unwrap(), 0.0);
        let h = entropy(&counts(&[("O", 8), ("A", 1), ("B", 1)]), true, Some("O")).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);
        assert!(entropy(&counts(&[("O", 3)]), true, Some("O")).is_err());
        assert!(entropy(&LabelCounts::new(), false, None).is_err());
    }

    #[test]
    fn kurtosis_examples() {
        // counts 1,1,1,1,101: mean 21, deviations -20 (x4) and 80.
        // m2 = (4*400 + 6400)/5 = 1600, m4 = (4*160000 + 40960000)/5 = 8320000.
        // m4/m2^2 - 3 = 8320000/2560000 - 3 = 0.25.
        let k = kurtosis(&counts(&[
            ("a", 1),
            ("b", 1),
            ("c", 1),
            ("d", 1),
            ("e", 101),
        ]))
        .unwrap();
        assert!((k - 0.25).abs() < 1e-12, "{k}");
        assert!(matches!(
            kurtosis(&counts(&[("a", 3), ("b", 3)])),
            Err(Error::UndefinedKurtosis(_))
        ));
        assert!(matches!(
            kurtosis(&counts(&[("a", 3)])),
            Err(Error::UndefinedKurtosis(_))
        ));
    }

    #[test]
    fn one_dominant_label_approaches_closed_form() {
        // One count x among n - 1 zeros: m4/m2^2 = (n^2 - 3n + 3)/(n - 1).
        let n = 701.0;
        let mut dist: LabelCounts = (0..700).map(|i| (format!("L{i}"), 0)).collect();
        dist.insert("O".into(), 1_000_000);
        let k = kurtosis(&dist).unwrap();
        let limit = (n * n - 3.0 * n + 3.0) / (n - 1.0) - 3.0;
        assert!((k - limit).abs() < 1e-6, "{k} vs {limit}");
    }

    #[test]
    fn stats_of_a_toy_corpus() {
        // Sentence 1: the/O dog/B-A barks/O ; sentence 2: the/O cat/B-A
        let corpus = parse_conll(
            "the\tO\ndog\tB-A\nbarks\tO\n\nthe\tO\ncat\tB-A\n",
            &ColumnSpec::new([(1, "ner")]),
        )
        .unwrap();
        let s = dataset_stats(&corpus, "ner", None).unwrap();
        assert_eq!(s.sentences, 2);
        assert_eq!(s.tokens, 5);
        assert!((s.ttr - 4.0 / 5.0).abs() < 1e-12);
        assert_eq!(s.inventory_size, 2);
        assert!((s.prop_o.unwrap() - 0.6).abs() < 1e-12);
        let h = -(0.6f64 * 0.6f64.ln() + 0.4 * 0.4f64.ln());
        assert!((s.entropy_full - h).abs() < 1e-12);
        assert_eq!(s.entropy_minus_o, 0.0);
        // counts (3, 2): mean 2.5, m2 = 0.25, m4 = 0.0625 -> 1 - 3 = -2.
        assert!((s.kurtosis.unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_token_ttr_is_one() {
        let corpus = parse_conll("a\tX\n", &ColumnSpec::new([(1, "t")])).unwrap();
        let s = dataset_stats(&corpus, "t", None).unwrap();
        assert_eq!(s.ttr, 1.0);
        assert_eq!(s.kurtosis, None);
        assert_eq!(s.entropy_full, 0.0);
    }

    #[test]
    fn ridge_closed_form_small_case() {
        // Two categories, λ = 1: n = (2, 1), means (1, 4).
        // a = (2/3, 1/2); b = (2/3 + 2) / (7/6) = 16/7.
        let samples = [(0, 0.0), (0, 2.0), (1, 4.0)];
        let model = CategoricalRidge::fit(&samples, 1.0).unwrap();
        assert!((model.intercept - 16.0 / 7.0).abs() < 1e-12);
        assert!((model.weights[&0] - (2.0 - 2.0 * 16.0 / 7.0) / 3.0).abs() < 1e-12);
        assert!((model.weights[&1] - (4.0 - 16.0 / 7.0) / 2.0).abs() < 1e-12);
        assert_eq!(model.predict(9), model.intercept);
    }

    #[test]
    fn zero_variance_target_scores_zero() {
        let model = CategoricalRidge::fit(&[(0, 1.0), (1, 1.0)], 1.0).unwrap();
        assert_eq!(model.r_squared(&[(0, 3.0), (1, 3.0)]), 0.0);
    }

    #[test]
    fn probe_rejects_too_few_sentences() {
        let corpus = parse_conll("a\tX\n\nb\tY\n", &ColumnSpec::new([(1, "t")])).unwrap();
        assert!(trigram_frequency_probe(&corpus, "t", 10, 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn entropy_is_permutation_and_scale_invariant(
            cs in prop::collection::vec(1u64..1000, 1..20),
            scale in 1u64..50,
        ) {
            let d: LabelCounts = cs.iter().enumerate().map(|(i, &c)| (format!("L{i}"), c)).collect();
            let rev: LabelCounts = cs.iter().rev().enumerate().map(|(i, &c)| (format!("L{i}"), c)).collect();
            let scaled: LabelCounts = d.iter().map(|(l, &c)| (l.clone(), c * scale)).collect();
            let h = entropy(&d, false, None).unwrap();
            prop_assert!((h - entropy(&rev, false, None).unwrap()).abs() < 1e-10);
            prop_assert!((h - entropy(&scaled, false, None).unwrap()).abs() < 1e-10);
            prop_assert!(h >= 0.0 && h <= (cs.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn kurtosis_is_scale_invariant(
            cs in prop::collection::vec(1u64..1000, 2..30),
            scale in 2u64..50,
        ) {
            let d: LabelCounts = cs.iter().enumerate().map(|(i, &c)| (format!("L{i}"), c)).collect();
            let scaled: LabelCounts = d.iter().map(|(l, &c)| (l.clone(), c * scale)).collect();
            match (kurtosis(&d), kurtosis(&scaled)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0)),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }
}
