//! Token-level metrics, BIO-validity counts and paired bootstrap testing.
//!
//! The headline metric is micro-averaged F1 over all non-O tokens: a
//! token is a true positive when the prediction is not O and equals the
//! gold label. Precision divides by non-O predictions, recall by non-O
//! gold tokens. It applies uniformly to span (BIO) and per-token tasks;
//! span-level F1 is reported additionally for BIO tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{validate_bio, BioTag, Scheme, ViolationKind};
use crate::error::{Error, Result};
use crate::rng;

pub const BOOTSTRAP_ITERATIONS: usize = 10_000;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

fn check_lengths<A, B>(gold: &[A], pred: &[B]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    Ok(())
}

/// True positives, non-O predictions and non-O gold tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MicroCounts {
    pub correct: u64,
    pub predicted: u64,
    pub gold: u64,
}

impl MicroCounts {
    pub fn of<S: AsRef<str>, T: AsRef<str>>(
        gold: &[S],
        pred: &[T],
        o_label: Option<&str>,
    ) -> Result<Self> {
        check_lengths(gold, pred)?;
        let is_o = |l: &str| Some(l) == o_label;
        let mut c = MicroCounts::default();
        for (g, p) in gold.iter().zip(pred) {
            let (g, p) = (g.as_ref(), p.as_ref());
            if !is_o(p) {
                c.predicted += 1;
                if p == g {
                    c.correct += 1;
                }
            }
            if !is_o(g) {
                c.gold += 1;
            }
        }
        Ok(c)
    }

    fn add(&mut self, other: MicroCounts) {
        self.correct += other.correct;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    pub fn f1(&self) -> f64 {
        f1_from_counts(self.correct, self.predicted, self.gold)
    }
}

/// `2PR / (P + R)` rewritten as `2c / (p + g)`: one rounding step.
fn f1_from_counts(correct: u64, predicted: u64, gold: u64) -> f64 {
    if correct == 0 {
        return 0.0;
    }
    (2 * correct) as f64 / (predicted + gold) as f64
}

/// Micro-F1 over non-O tokens. Without an O label every token counts.
pub fn micro_f1_non_o<S: AsRef<str>, T: AsRef<str>>(
    gold: &[S],
    pred: &[T],
    o_label: Option<&str>,
) -> Result<f64> {
    Ok(MicroCounts::of(gold, pred, o_label)?.f1())
}

/// Fraction of O predictions that are gold O; `None` if nothing was
/// predicted O.
pub fn precision_o<S: AsRef<str>, T: AsRef<str>>(
    gold: &[S],
    pred: &[T],
    o_label: &str,
) -> Result<Option<f64>> {
    check_lengths(gold, pred)?;
    let (mut hits, mut predicted) = (0u64, 0u64);
    for (g, p) in gold.iter().zip(pred) {
        if p.as_ref() == o_label {
            predicted += 1;
            if g.as_ref() == o_label {
                hits += 1;
            }
        }
    }
    Ok((predicted > 0).then(|| hits as f64 / predicted as f64))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViolationCounts {
    pub by_kind: BTreeMap<ViolationKind, usize>,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.by_kind.values().sum()
    }

    pub fn get(&self, kind: ViolationKind) -> usize {
        self.by_kind.get(&kind).copied().unwrap_or(0)
    }
}

pub fn count_bio_violations<S: AsRef<str>>(sequences: &[Vec<S>]) -> Result<ViolationCounts> {
    let mut counts = ViolationCounts {
        by_kind: ViolationKind::ALL.iter().map(|&k| (k, 0)).collect(),
    };
    for seq in sequences {
        for v in validate_bio(seq)? {
            *counts.by_kind.entry(v.kind).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

/// Spans `(start, end_exclusive, class)`; an `I-X` not continuing a span
/// of class X opens a new one.
fn bio_spans<S: AsRef<str>>(labels: &[S]) -> Result<BTreeSet<(usize, usize, String)>> {
    let mut spans = BTreeSet::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, l) in labels.iter().enumerate() {
        let tag = BioTag::parse(l.as_ref())?;
        let continues = matches!((tag, open), (BioTag::Inside(c), Some((_, oc))) if c == oc);
        if !continues {
            if let Some((s, c)) = open.take() {
                spans.insert((s, i, c.to_owned()));
            }
            if let Some(c) = tag.class() {
                open = Some((i, c));
            }
        }
    }
    if let Some((s, c)) = open {
        spans.insert((s, labels.len(), c.to_owned()));
    }
    Ok(spans)
}

/// Exact-match span F1 over BIO sequences.
pub fn span_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<f64> {
    check_lengths(gold, pred)?;
    let (mut correct, mut predicted, mut total) = (0u64, 0u64, 0u64);
    for (g, p) in gold.iter().zip(pred) {
        check_lengths(g, p)?;
        let (gs, ps) = (bio_spans(g)?, bio_spans(p)?);
        correct += gs.intersection(&ps).count() as u64;
        predicted += ps.len() as u64;
        total += gs.len() as u64;
    }
    Ok(f1_from_counts(correct, predicted, total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub micro_f1_non_o: f64,
    pub precision_o: Option<f64>,
    pub per_label_f1: BTreeMap<String, f64>,
    pub bio_violations: ViolationCounts,
    pub n_tokens: usize,
    pub accuracy: f64,
    /// BIO tasks only.
    pub span_f1: Option<f64>,
}

pub fn evaluate<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    pred: &[Vec<T>],
    o_label: Option<&str>,
    scheme: Scheme,
) -> Result<EvalReport> {
    check_lengths(gold, pred)?;
    let mut micro = MicroCounts::default();
    let (mut o_hits, mut o_pred) = (0u64, 0u64);
    let mut per_label: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    let (mut n_tokens, mut n_correct) = (0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        micro.add(MicroCounts::of(g, p, o_label)?);
        for (g, p) in g.iter().zip(p) {
            let (g, p) = (g.as_ref(), p.as_ref());
            n_tokens += 1;
            if g == p {
                n_correct += 1;
            }
            if Some(p) == o_label {
                o_pred += 1;
                if Some(g) == o_label {
                    o_hits += 1;
                }
            }
            per_label.entry(p.to_owned()).or_default().1 += 1;
            per_label.entry(g.to_owned()).or_default().2 += 1;
            if g == p {
                per_label.get_mut(g).expect("inserted above").0 += 1;
            }
        }
    }
    let bio = scheme == Scheme::Bio;
    Ok(EvalReport {
        micro_f1_non_o: micro.f1(),
        precision_o: o_label.and_then(|_| (o_pred > 0).then(|| o_hits as f64 / o_pred as f64)),
        per_label_f1: per_label
            .into_iter()
            .map(|(l, (c, p, g))| (l, f1_from_counts(c, p, g)))
            .collect(),
        bio_violations: if bio {
            count_bio_violations(pred)?
        } else {
            ViolationCounts::default()
        },
        n_tokens,
        accuracy: if n_tokens == 0 {
            0.0
        } else {
            n_correct as f64 / n_tokens as f64
        },
        span_f1: if bio {
            Some(span_f1(gold, pred)?)
        } else {
            None
        },
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.6}"));
        writeln!(f, "micro_f1_non_o\t{:.6}", self.micro_f1_non_o)?;
        writeln!(f, "precision_o\t{}", opt(self.precision_o))?;
        writeln!(f, "accuracy\t{:.6}", self.accuracy)?;
        writeln!(f, "span_f1\t{}", opt(self.span_f1))?;
        writeln!(f, "n_tokens\t{}", self.n_tokens)?;
        writeln!(f, "bio_violations\t{}", self.bio_violations.total())?;
        for (kind, n) in &self.bio_violations.by_kind {
            writeln!(f, "bio_violations.{}\t{n}", kind.name())?;
        }
        for (label, v) in &self.per_label_f1 {
            writeln!(f, "f1.{label}\t{v:.6}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceResult {
    /// F1 of the better system minus F1 of the other, on the full data.
    pub delta_f1: f64,
    pub better: System,
    pub p_value: f64,
    pub iterations: usize,
    pub significant: bool,
}

impl fmt::Display for SignificanceResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "better\t{:?}", self.better)?;
        writeln!(f, "delta_f1\t{:.6}", self.delta_f1)?;
        writeln!(f, "p_value\t{:.6}", self.p_value)?;
        writeln!(f, "iterations\t{}", self.iterations)?;
        writeln!(f, "significant\t{}", self.significant)
    }
}

/// One-sided paired bootstrap over sentences.
///
/// With A the better system on the full data, each iteration resamples
/// sentences with replacement and recomputes `δ* = F1(A) − F1(B)`; the
/// p-value is the fraction of iterations with `δ* ≤ 0`. Iteration `i`
/// draws from its own ChaCha stream, so results do not depend on how
/// iterations are scheduled.
pub fn bootstrap_significance<S: AsRef<str>, T: AsRef<str>, U: AsRef<str>>(
    gold: &[Vec<S>],
    pred_a: &[Vec<T>],
    pred_b: &[Vec<U>],
    o_label: Option<&str>,
    iterations: usize,
    seed: u64,
) -> Result<SignificanceResult> {
    if gold.is_empty() {
        return Err(Error::Empty("bootstrap data".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least one iteration".into(),
        ));
    }
    check_lengths(gold, pred_a)?;
    check_lengths(gold, pred_b)?;
    let mut per_sentence = Vec::with_capacity(gold.len());
    let (mut total_a, mut total_b) = (MicroCounts::default(), MicroCounts::default());
    for ((g, a), b) in gold.iter().zip(pred_a).zip(pred_b) {
        let ca = MicroCounts::of(g, a, o_label)?;
        let cb = MicroCounts::of(g, b, o_label)?;
        total_a.add(ca);
        total_b.add(cb);
        per_sentence.push((ca, cb));
    }
    let (f_a, f_b) = (total_a.f1(), total_b.f1());
    let better = if f_b > f_a { System::B } else { System::A };
    if better == System::B {
        for pair in &mut per_sentence {
            *pair = (pair.1, pair.0);
        }
    }

    let base = rng::derive_seed(seed, "bootstrap");
    let n = per_sentence.len();
    let mut not_better = 0usize;
    for i in 0..iterations {
        let mut stream = ChaCha8Rng::seed_from_u64(base);
        stream.set_stream(i as u64);
        let (mut a, mut b) = (MicroCounts::default(), MicroCounts::default());
        for _ in 0..n {
            let (ca, cb) = per_sentence[stream.random_range(0..n)];
            a.add(ca);
            b.add(cb);
        }
        if a.f1() - b.f1() <= 0.0 {
            not_better += 1;
        }
    }
    let p_value = not_better as f64 / iterations as f64;
    Ok(SignificanceResult {
        delta_f1: (f_a - f_b).abs(),
        better,
        p_value,
        iterations,
        significant: p_value < SIGNIFICANCE_LEVEL,
    })
}
