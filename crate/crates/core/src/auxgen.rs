//! Frequency-bin auxiliary labels.
//!
//! A word's label is a discretization of its frequency in the training
//! corpus. Unseen words count as hapaxes. Three binnings are supported:
//!
//! * `skewed10` / `skewed5`: `⌊log_b f⌋`.
//! * `uniform`: word types sorted by ascending frequency split into `k`
//!   bins of (roughly) equal token mass. All types sharing a frequency
//!   share a bin: the group goes to the quantile containing its last
//!   cumulative token, i.e. bin `⌈k · C / N⌉ − 1` where `C` is the
//!   cumulative token count through the group and `N` the corpus size.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::corpus::TaggedCorpus;
use crate::error::{Error, Result};

pub const DEFAULT_UNIFORM_K: usize = 5;
const MAX_LABELS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FreqBinVariant {
    Skewed10,
    Skewed5,
    Uniform,
}

impl FreqBinVariant {
    pub const ALL: [FreqBinVariant; 3] = [
        FreqBinVariant::Skewed10,
        FreqBinVariant::Skewed5,
        FreqBinVariant::Uniform,
    ];

    fn log_base(self) -> Option<u64> {
        match self {
            FreqBinVariant::Skewed10 => Some(10),
            FreqBinVariant::Skewed5 => Some(5),
            FreqBinVariant::Uniform => None,
        }
    }
}

impl fmt::Display for FreqBinVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreqBinVariant::Skewed10 => "skewed10",
            FreqBinVariant::Skewed5 => "skewed5",
            FreqBinVariant::Uniform => "uniform",
        })
    }
}

impl FromStr for FreqBinVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skewed10" => Ok(FreqBinVariant::Skewed10),
            "skewed5" => Ok(FreqBinVariant::Skewed5),
            "uniform" => Ok(FreqBinVariant::Uniform),
            other => Err(Error::InvalidArgument(format!(
                "unknown freqbin variant `{other}`"
            ))),
        }
    }
}

/// `⌊log_base value⌋` in exact integer arithmetic.
pub fn floor_log(value: u64, base: u64) -> usize {
    debug_assert!(value >= 1 && base >= 2);
    let mut exp = 0;
    let mut v = value;
    while v >= base {
        v /= base;
        exp += 1;
    }
    exp
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqBinSpec {
    variant: FreqBinVariant,
    k: Option<usize>,
    word_frequencies: BTreeMap<String, u64>,
    bin_of_frequency: BTreeMap<u64, usize>,
    hapax_bin: usize,
    labels: Vec<String>,
}

impl FreqBinSpec {
    pub fn variant(&self) -> FreqBinVariant {
        self.variant
    }

    pub fn k(&self) -> Option<usize> {
        self.k
    }

    pub fn hapax_bin(&self) -> usize {
        self.hapax_bin
    }

    /// Full label set, `"0"` through `"n-1"`.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn bin_of_frequency(&self) -> &BTreeMap<u64, usize> {
        &self.bin_of_frequency
    }

    pub fn word_frequencies(&self) -> &BTreeMap<String, u64> {
        &self.word_frequencies
    }

    /// Bin of a word; out-of-vocabulary words land in the hapax bin.
    pub fn bin_of_word(&self, word: &str) -> usize {
        self.word_frequencies
            .get(word)
            .and_then(|f| self.bin_of_frequency.get(f))
            .copied()
            .unwrap_or(self.hapax_bin)
    }

    pub fn label_of_word(&self, word: &str) -> &str {
        &self.labels[self.bin_of_word(word)]
    }

    /// Number of distinct bins occupied by training word types.
    pub fn realized_label_count(&self) -> usize {
        let mut bins: Vec<usize> = self.bin_of_frequency.values().copied().collect();
        bins.dedup();
        bins.len()
    }

    /// Plain-text `key = value` serialization.
    ///
    /// ```text
    /// variant = uniform
    /// k = 5
    /// hapax_bin = 0
    /// labels = 5
    /// freq 1 = 0
    /// word 17 = the
    /// ```
    ///
    /// `word <count> = <surface>` puts the surface last so that any
    /// characters other than newline survive.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("variant = {}\n", self.variant));
        if let Some(k) = self.k {
            out.push_str(&format!("k = {k}\n"));
        }
        out.push_str(&format!("hapax_bin = {}\n", self.hapax_bin));
        out.push_str(&format!("labels = {}\n", self.labels.len()));
        for (f, b) in &self.bin_of_frequency {
            out.push_str(&format!("freq {f} = {b}\n"));
        }
        for (w, f) in &self.word_frequencies {
            out.push_str(&format!("word {f} = {w}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut variant = None;
        let mut k = None;
        let mut hapax_bin = None;
        let mut n_labels = None;
        let mut bin_of_frequency = BTreeMap::new();
        let mut word_frequencies = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(" = ")
                .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
            let int = |s: &str| -> Result<u64> {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::parse(line_no, format!("expected integer, got `{s}`")))
            };
            match key.trim() {
                "variant" => variant = Some(value.trim().parse::<FreqBinVariant>()?),
                "k" => k = Some(int(value)? as usize),
                "hapax_bin" => hapax_bin = Some(int(value)? as usize),
                "labels" => n_labels = Some(int(value)? as usize),
                other => {
                    if let Some(f) = other.strip_prefix("freq ") {
                        bin_of_frequency.insert(int(f)?, int(value)? as usize);
                    } else if let Some(f) = other.strip_prefix("word ") {
                        if value.is_empty() || value.contains('\r') {
                            return Err(Error::parse(
                                line_no,
                                "empty word or carriage return in word",
                            ));
                        }
                        word_frequencies.insert(value.to_owned(), int(f)?);
                    } else {
                        return Err(Error::parse(line_no, format!("unknown key `{other}`")));
                    }
                }
            }
        }
        let missing = |what: &str| Error::parse(0, format!("missing `{what}`"));
        let n_labels = n_labels.ok_or_else(|| missing("labels"))?;
        if n_labels == 0 || n_labels > MAX_LABELS {
            return Err(Error::InvalidArgument(format!(
                "label count {n_labels} out of range"
            )));
        }
        let spec = FreqBinSpec {
            variant: variant.ok_or_else(|| missing("variant"))?,
            k,
            word_frequencies,
            bin_of_frequency,
            hapax_bin: hapax_bin.ok_or_else(|| missing("hapax_bin"))?,
            labels: bin_labels(n_labels),
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.labels.is_empty() || self.labels.len() > MAX_LABELS {
            return bad(format!("label count {} out of range", self.labels.len()));
        }
        if self.hapax_bin >= self.labels.len() {
            return bad("hapax bin outside label set".into());
        }
        match (self.variant, self.k) {
            (FreqBinVariant::Uniform, Some(k)) if k >= 2 && k == self.labels.len() => {}
            (FreqBinVariant::Uniform, _) => {
                return bad("uniform variant needs k >= 2 matching the label count".into())
            }
            (_, Some(_)) => return bad("k only applies to the uniform variant".into()),
            (_, None) => {}
        }
        let mut last = 0;
        for &b in self.bin_of_frequency.values() {
            if b < last || b >= self.labels.len() {
                return bad("bin-of-frequency is not monotone within the label set".into());
            }
            last = b;
        }
        if self.bin_of_frequency.contains_key(&0) {
            return bad("frequency 0 in bin table".into());
        }
        if let Some(&b) = self.bin_of_frequency.get(&1) {
            if b != self.hapax_bin {
                return bad("frequency 1 must map to the hapax bin".into());
            }
        }
        for f in self.word_frequencies.values() {
            if !self.bin_of_frequency.contains_key(f) {
                return bad(format!("word frequency {f} has no bin"));
            }
        }
        Ok(())
    }
}

fn bin_labels(n: usize) -> Vec<String> {
    (0..n).map(|b| b.to_string()).collect()
}

pub fn fit_freqbin(
    frequencies: &BTreeMap<String, u64>,
    variant: FreqBinVariant,
    k: Option<usize>,
) -> Result<FreqBinSpec> {
    if frequencies.is_empty() {
        return Err(Error::Empty("word frequencies".into()));
    }
    if frequencies.values().any(|&f| f == 0) {
        return Err(Error::InvalidArgument("word with frequency 0".into()));
    }
    let mut distinct: Vec<u64> = frequencies.values().copied().collect();
    distinct.sort_unstable();
    distinct.dedup();

    let (bin_of_frequency, hapax_bin, n_labels, k) = match variant.log_base() {
        Some(base) => {
            if k.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "k applies only to the uniform variant, not {variant}"
                )));
            }
            let bins: BTreeMap<u64, usize> =
                distinct.iter().map(|&f| (f, floor_log(f, base))).collect();
            let f_max = *distinct.last().expect("non-empty");
            (bins, 0, floor_log(f_max, base) + 1, None)
        }
        None => {
            let k = match k {
                Some(k) if k >= 2 => k,
                Some(k) => {
                    return Err(Error::InvalidArgument(format!(
                        "uniform variant needs k >= 2, got {k}"
                    )))
                }
                None => return Err(Error::InvalidArgument("uniform variant needs k".into())),
            };
            let mut types_per_freq: BTreeMap<u64, u64> = BTreeMap::new();
            for &f in frequencies.values() {
                *types_per_freq.entry(f).or_insert(0) += 1;
            }
            let total: u128 = frequencies.values().map(|&f| f as u128).sum();
            let mut cumulative: u128 = 0;
            let mut bins = BTreeMap::new();
            for (&f, &types) in &types_per_freq {
                cumulative += f as u128 * types as u128;
                let bin = (cumulative * k as u128).div_ceil(total) as usize - 1;
                bins.insert(f, bin);
            }
            // With no training hapaxes, unseen words still sort below every
            // observed frequency.
            let hapax = bins.get(&1).copied().unwrap_or(0);
            (bins, hapax, k, Some(k))
        }
    };
    Ok(FreqBinSpec {
        variant,
        k,
        word_frequencies: frequencies.clone(),
        bin_of_frequency,
        hapax_bin,
        labels: bin_labels(n_labels),
    })
}

/// Adds a FreqBin column named `task` to every token of `corpus`.
pub fn apply_freqbin(
    spec: &FreqBinSpec,
    corpus: &TaggedCorpus,
    task: &str,
) -> Result<TaggedCorpus> {
    if corpus.tasks().iter().any(|t| t == task) {
        return Err(Error::DuplicateTask(task.to_owned()));
    }
    let labels = corpus
        .sentences()
        .iter()
        .map(|s| {
            s.surfaces()
                .map(|w| spec.label_of_word(w).to_owned())
                .collect()
        })
        .collect();
    corpus.clone().with_task_column(task, labels)
}
