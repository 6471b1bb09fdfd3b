//! Tab-separated CoNLL corpora, label inventories and BIO utilities.
//!
//! A corpus holds one or more *task columns*. Every token carries one
//! label per task, stored positionally in the order of
//! [`TaggedCorpus::tasks`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_O_LABEL: &str = "O";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// One label per task, aligned with the owning corpus' task list.
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    /// Labels of the task stored at position `task_idx`.
    pub fn labels(&self, task_idx: usize) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(move |t| t.labels[task_idx].as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Span labels: `O`, `B-<class>`, `I-<class>`.
    Bio,
    /// Individually annotated tokens with a designated out-of-span label.
    Plain,
    /// No out-of-span label at all (POS, dependency relations, ...).
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelInventory {
    labels: Vec<String>,
    o_label: Option<String>,
    scheme: Scheme,
}

impl LabelInventory {
    /// Builds an inventory and infers its scheme.
    ///
    /// `O` is the out-of-span label when observed. The scheme is BIO if
    /// every label is `O` or `B-`/`I-` prefixed with at least one prefixed
    /// label present, plain if `O` is present otherwise, and none if not.
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = labels.into_iter().map(|s| s.as_ref().to_owned()).collect();
        let has_o = set.contains(DEFAULT_O_LABEL);
        let any_prefixed = set
            .iter()
            .any(|l| BioTag::parse(l).is_ok_and(|t| t != BioTag::Outside));
        let all_bio = set.iter().all(|l| BioTag::parse(l).is_ok());
        let scheme = if all_bio && any_prefixed {
            Scheme::Bio
        } else if has_o {
            Scheme::Plain
        } else {
            Scheme::None
        };
        LabelInventory {
            labels: set.into_iter().collect(),
            o_label: has_o.then(|| DEFAULT_O_LABEL.to_owned()),
            scheme,
        }
    }

    /// Inventory with an explicit out-of-span label.
    pub fn with_o_label(mut self, o_label: Option<&str>) -> Result<Self> {
        match o_label {
            Some(o) if !self.labels.iter().any(|l| l == o) => {
                return Err(Error::InvalidArgument(format!(
                    "o-label `{o}` is not a member of the inventory"
                )))
            }
            Some(o) => {
                if o != DEFAULT_O_LABEL && self.scheme == Scheme::Bio {
                    self.scheme = Scheme::Plain;
                }
                if self.scheme == Scheme::None {
                    self.scheme = Scheme::Plain;
                }
                self.o_label = Some(o.to_owned());
            }
            None => {
                self.o_label = None;
                self.scheme = Scheme::None;
            }
        }
        Ok(self)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn o_label(&self) -> Option<&str> {
        self.o_label.as_deref()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }
}

/// Which file columns feed a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub token_column: usize,
    pub tasks: Vec<(usize, String)>,
}

impl ColumnSpec {
    /// Token in column 0, tasks bound to the given columns.
    pub fn new<S: Into<String>>(tasks: impl IntoIterator<Item = (usize, S)>) -> Self {
        ColumnSpec {
            token_column: 0,
            tasks: tasks.into_iter().map(|(c, t)| (c, t.into())).collect(),
        }
    }

    pub fn with_token_column(mut self, column: usize) -> Self {
        self.token_column = column;
        self
    }

    /// CoNLL-U layout: FORM is column 1, UPOS column 3, XPOS column 4,
    /// DEPREL column 7.
    pub fn conllu<S: Into<String>>(tasks: impl IntoIterator<Item = (usize, S)>) -> Self {
        ColumnSpec::new(tasks).with_token_column(1)
    }

    fn max_column(&self) -> usize {
        self.tasks
            .iter()
            .map(|(c, _)| *c)
            .chain(std::iter::once(self.token_column))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedCorpus {
    sentences: Vec<Sentence>,
    tasks: Vec<String>,
    inventories: Vec<LabelInventory>,
    split: Split,
}

impl TaggedCorpus {
    pub fn new(tasks: Vec<String>, sentences: Vec<Sentence>, split: Split) -> Result<Self> {
        let unique: BTreeSet<&String> = tasks.iter().collect();
        if unique.len() != tasks.len() {
            let dup = tasks
                .iter()
                .find(|t| tasks.iter().filter(|u| u == t).count() > 1)
                .cloned()
                .unwrap_or_default();
            return Err(Error::DuplicateTask(dup));
        }
        for (i, sentence) in sentences.iter().enumerate() {
            if sentence.is_empty() {
                return Err(Error::InvalidArgument(format!("sentence {i} is empty")));
            }
            for token in &sentence.tokens {
                if token.surface.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "sentence {i} has a token with empty surface"
                    )));
                }
                if token.labels.len() != tasks.len() {
                    return Err(Error::InvalidArgument(format!(
                        "token `{}` carries {} labels for {} tasks",
                        token.surface,
                        token.labels.len(),
                        tasks.len()
                    )));
                }
            }
        }
        let inventories = (0..tasks.len())
            .map(|t| LabelInventory::from_labels(sentences.iter().flat_map(|s| s.labels(t))))
            .collect();
        Ok(TaggedCorpus {
            sentences,
            tasks,
            inventories,
            split,
        })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn tasks(&self) -> &[String] {
        &self.tasks
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn task_index(&self, task: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t == task)
            .ok_or_else(|| Error::UnknownTask(task.to_owned()))
    }

    pub fn inventory(&self, task: &str) -> Result<&LabelInventory> {
        Ok(&self.inventories[self.task_index(task)?])
    }

    /// Overrides the out-of-span label of one task's inventory.
    pub fn set_o_label(&mut self, task: &str, o_label: Option<&str>) -> Result<()> {
        let idx = self.task_index(task)?;
        self.inventories[idx] = self.inventories[idx].clone().with_o_label(o_label)?;
        Ok(())
    }

    /// Labels of `task` for every sentence, sentence-aligned.
    pub fn label_sequences(&self, task: &str) -> Result<Vec<Vec<String>>> {
        let idx = self.task_index(task)?;
        Ok(self
            .sentences
            .iter()
            .map(|s| s.labels(idx).map(str::to_owned).collect())
            .collect())
    }

    /// Adds a task column; `labels` must be sentence- and token-aligned.
    pub fn with_task_column(mut self, task: &str, labels: Vec<Vec<String>>) -> Result<Self> {
        if self.tasks.iter().any(|t| t == task) {
            return Err(Error::DuplicateTask(task.to_owned()));
        }
        if labels.len() != self.sentences.len() {
            return Err(Error::LengthMismatch {
                left: self.sentences.len(),
                right: labels.len(),
            });
        }
        for (sentence, column) in self.sentences.iter_mut().zip(labels) {
            if column.len() != sentence.len() {
                return Err(Error::LengthMismatch {
                    left: sentence.len(),
                    right: column.len(),
                });
            }
            for (token, label) in sentence.tokens.iter_mut().zip(column) {
                token.labels.push(label);
            }
        }
        self.tasks.push(task.to_owned());
        let t = self.tasks.len() - 1;
        self.inventories.push(LabelInventory::from_labels(
            self.sentences.iter().flat_map(|s| s.labels(t)),
        ));
        Ok(self)
    }

    /// Keeps only the listed tasks, in the given order.
    pub fn project(&self, tasks: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = tasks
            .iter()
            .map(|t| self.task_index(t))
            .collect::<Result<_>>()?;
        let sentences = self
            .sentences
            .iter()
            .map(|s| Sentence {
                tokens: s
                    .tokens
                    .iter()
                    .map(|tok| Token {
                        surface: tok.surface.clone(),
                        labels: idx.iter().map(|&i| tok.labels[i].clone()).collect(),
                    })
                    .collect(),
            })
            .collect();
        let mut out = TaggedCorpus::new(
            tasks.iter().map(|t| (*t).to_owned()).collect(),
            sentences,
            self.split,
        )?;
        for (new_idx, &old_idx) in idx.iter().enumerate() {
            let o = self.inventories[old_idx].o_label().map(str::to_owned);
            if out.inventories[new_idx].o_label() != o.as_deref() {
                out.inventories[new_idx] = out.inventories[new_idx]
                    .clone()
                    .with_o_label(o.as_deref())?;
            }
        }
        Ok(out)
    }

    fn with_sentences(&self, sentences: Vec<Sentence>) -> Result<Self> {
        let mut out = TaggedCorpus::new(self.tasks.clone(), sentences, self.split)?;
        for (i, inv) in self.inventories.iter().enumerate() {
            let o = inv.o_label();
            if out.inventories[i].o_label() != o
                && out.inventories[i]
                    .labels
                    .iter()
                    .any(|l| Some(l.as_str()) == o)
            {
                out.inventories[i] = out.inventories[i].clone().with_o_label(o)?;
            }
        }
        Ok(out)
    }
}

/// Parses tab-separated CoNLL text.
///
/// Blank lines end sentences. Lines starting with `#` at a sentence
/// boundary and containing no tab are comments. When the token is not
/// in column 0, lines whose column 0 is a CoNLL-U range or empty-node id
/// (`1-2`, `3.1`) are dropped.
pub fn parse_conll(text: &str, spec: &ColumnSpec) -> Result<TaggedCorpus> {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut expected_columns: Option<usize> = None;
    let min_columns = spec.max_column() + 1;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence {
                    tokens: std::mem::take(&mut current),
                });
            }
            continue;
        }
        if current.is_empty() && line.starts_with('#') && !line.contains('\t') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match expected_columns {
            None => {
                if fields.len() < min_columns {
                    return Err(Error::parse(
                        line_no,
                        format!(
                            "expected at least {min_columns} columns, found {}",
                            fields.len()
                        ),
                    ));
                }
                expected_columns = Some(fields.len());
            }
            Some(n) if n != fields.len() => {
                return Err(Error::parse(
                    line_no,
                    format!("expected {n} columns, found {}", fields.len()),
                ));
            }
            Some(_) => {}
        }
        if spec.token_column != 0 && is_conllu_multiword_id(fields[0]) {
            continue;
        }
        let surface = fields[spec.token_column];
        if surface.is_empty() {
            return Err(Error::parse(line_no, "empty token"));
        }
        let mut labels = Vec::with_capacity(spec.tasks.len());
        for (col, task) in &spec.tasks {
            let label = fields[*col];
            if label.is_empty() {
                return Err(Error::parse(
                    line_no,
                    format!("empty label for task `{task}`"),
                ));
            }
            labels.push(label.to_owned());
        }
        current.push(Token {
            surface: surface.to_owned(),
            labels,
        });
    }
    if !current.is_empty() {
        sentences.push(Sentence { tokens: current });
    }
    if sentences.is_empty() {
        return Err(Error::Empty("corpus contains no tokens".into()));
    }
    TaggedCorpus::new(
        spec.tasks.iter().map(|(_, t)| t.clone()).collect(),
        sentences,
        Split::Train,
    )
    .map_err(|e| match e {
        Error::DuplicateTask(t) => Error::Config(format!("task `{t}` bound to two columns")),
        other => other,
    })
}

fn is_conllu_multiword_id(id: &str) -> bool {
    let Some((a, b)) = id.split_once(['-', '.']) else {
        return false;
    };
    !a.is_empty()
        && !b.is_empty()
        && a.bytes().all(|c| c.is_ascii_digit())
        && b.bytes().all(|c| c.is_ascii_digit())
}

pub fn read_conll(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<TaggedCorpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, spec)
}

/// Emits `token \t label_1 \t ... \t label_n`, one blank line after each
/// sentence. Reading the output back with
/// `ColumnSpec::new([(1, task_1), ..., (n, task_n)])` is lossless.
pub fn write_conll_to<W: Write>(corpus: &TaggedCorpus, mut out: W) -> std::io::Result<()> {
    for sentence in corpus.sentences() {
        for token in &sentence.tokens {
            out.write_all(token.surface.as_bytes())?;
            for label in &token.labels {
                out.write_all(b"\t")?;
                out.write_all(label.as_bytes())?;
            }
            out.write_all(b"\n")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_conll(corpus: &TaggedCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    write_conll_to(corpus, &mut writer).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Column spec that reads back what [`write_conll`] wrote.
pub fn written_column_spec(corpus: &TaggedCorpus) -> ColumnSpec {
    ColumnSpec::new(
        corpus
            .tasks()
            .iter()
            .enumerate()
            .map(|(i, t)| (i + 1, t.clone())),
    )
}

/// Raw surface-form counts; no case folding.
pub fn word_frequencies(corpus: &TaggedCorpus) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for surface in corpus.sentences().iter().flat_map(Sentence::surfaces) {
        *counts.entry(surface.to_owned()).or_insert(0) += 1;
    }
    counts
}

/// Keeps `⌈fraction · n⌉` sentences chosen by a seeded shuffle, in their
/// original order, so fraction 1 returns the corpus unchanged.
pub fn slice_fraction(corpus: &TaggedCorpus, fraction: f64, seed: u64) -> Result<TaggedCorpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = corpus.len();
    // Tolerate float noise such as 0.1 * 30 = 3.0000000000000004.
    let take = ((fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::component_rng(seed, "slice"));
    let mut kept = order[..take.min(n)].to_vec();
    kept.sort_unstable();
    let sentences = kept.iter().map(|&i| corpus.sentences[i].clone()).collect();
    corpus.with_sentences(sentences)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioTag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> BioTag<'a> {
    pub fn parse(label: &'a str) -> Result<Self> {
        if label == DEFAULT_O_LABEL {
            return Ok(BioTag::Outside);
        }
        let tag = match label.split_at_checked(2) {
            Some(("B-", class)) if !class.is_empty() => BioTag::Begin(class),
            Some(("I-", class)) if !class.is_empty() => BioTag::Inside(class),
            _ => {
                return Err(Error::InvalidLabel {
                    label: label.to_owned(),
                    scheme: "BIO",
                })
            }
        };
        Ok(tag)
    }

    pub fn class(&self) -> Option<&'a str> {
        match *self {
            BioTag::Outside => None,
            BioTag::Begin(c) | BioTag::Inside(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    /// `I-X` directly after `O`.
    InsideAfterOutside,
    /// `I-X` as the first label of a sequence.
    InsideAtStart,
    /// `I-X` after `B-Y` or `I-Y` with `X != Y`.
    ClassMismatch,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 3] = [
        ViolationKind::InsideAfterOutside,
        ViolationKind::InsideAtStart,
        ViolationKind::ClassMismatch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::InsideAfterOutside => "I-after-O",
            ViolationKind::InsideAtStart => "I-at-start",
            ViolationKind::ClassMismatch => "class-mismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BioViolation {
    pub position: usize,
    pub kind: ViolationKind,
}

pub fn validate_bio<S: AsRef<str>>(labels: &[S]) -> Result<Vec<BioViolation>> {
    let mut violations = Vec::new();
    let mut previous: Option<BioTag<'_>> = None;
    for (position, label) in labels.iter().enumerate() {
        let tag = BioTag::parse(label.as_ref())?;
        if let BioTag::Inside(class) = tag {
            let kind = match previous {
                None => Some(ViolationKind::InsideAtStart),
                Some(BioTag::Outside) => Some(ViolationKind::InsideAfterOutside),
                Some(prev) if prev.class() != Some(class) => Some(ViolationKind::ClassMismatch),
                Some(_) => None,
            };
            if let Some(kind) = kind {
                violations.push(BioViolation { position, kind });
            }
        }
        previous = Some(tag);
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pos_spec() -> ColumnSpec {
        ColumnSpec::new([(1, "pos")])
    }

    #[test]
    fn reads_single_sentence() {
        let corpus = parse_conll("the\tDET\ndog\tNOUN\n\n", &pos_spec()).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.token_count(), 2);
        assert_eq!(corpus.inventory("pos").unwrap().labels(), ["DET", "NOUN"]);
        assert_eq!(corpus.inventory("pos").unwrap().scheme(), Scheme::None);
    }

    #[test]
    fn missing_label_column_is_a_parse_error_with_line() {
        let err = parse_conll("the\tDET\ndog\n\n", &pos_spec()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_conll("the\n", &pos_spec()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_conll("", &pos_spec()), Err(Error::Empty(_))));
        assert!(matches!(
            parse_conll("\n\n# c\n", &pos_spec()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn three_sentence_fixture_counts() {
        // 2 + 3 + 1 non-blank token lines.
        let text = "a\tX\nb\tY\n\nc\tX\nd\tX\ne\tY\n\nf\tZ\n";
        let corpus = parse_conll(text, &pos_spec()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.token_count(), 6);
        let lens: Vec<_> = corpus.sentences().iter().map(Sentence::len).collect();
        assert_eq!(lens, [2, 3, 1]);
    }

    #[test]
    fn conllu_comments_and_ranges_are_skipped() {
        let text = "# sent_id = 1\n# text = Don't go\n1-2\tDon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    1\tDo\tdo\tAUX\tVBP\t_\t3\taux\t_\t_\n\
                    2\tn't\tnot\tPART\tRB\t_\t3\tadvmod\t_\t_\n\
                    2.1\tx\tx\tX\tX\t_\t_\t_\t_\t_\n\
                    3\tgo\tgo\tVERB\tVB\t_\t0\troot\t_\t_\n\n";
        let corpus = parse_conll(text, &ColumnSpec::conllu([(3, "upos"), (7, "deprel")])).unwrap();
        assert_eq!(corpus.token_count(), 3);
        let surfaces: Vec<_> = corpus.sentences()[0].surfaces().collect();
        assert_eq!(surfaces, ["Do", "n't", "go"]);
        assert_eq!(corpus.inventory("deprel").unwrap().len(), 3);
    }

    #[test]
    fn ranges_kept_when_token_is_first_column() {
        let corpus = parse_conll("1-2\tCD\n", &pos_spec()).unwrap();
        assert_eq!(corpus.token_count(), 1);
    }

    #[test]
    fn inventory_scheme_detection() {
        let bio = LabelInventory::from_labels(["O", "B-P", "I-P"]);
        assert_eq!(bio.scheme(), Scheme::Bio);
        assert_eq!(bio.o_label(), Some("O"));
        let plain = LabelInventory::from_labels(["O", "Frame_A"]);
        assert_eq!(plain.scheme(), Scheme::Plain);
        let none = LabelInventory::from_labels(["NOUN", "VERB"]);
        assert_eq!(none.scheme(), Scheme::None);
        assert_eq!(none.o_label(), None);
        assert!(none.clone().with_o_label(Some("ADJ")).is_err());
        let custom = none.with_o_label(Some("NOUN")).unwrap();
        assert_eq!(custom.o_label(), Some("NOUN"));
        assert_eq!(custom.scheme(), Scheme::Plain);
    }

    #[test]
    fn frequencies_are_case_sensitive_counts() {
        let corpus = parse_conll("a\tX\na\tX\nb\tX\nA\tX\n", &pos_spec()).unwrap();
        let freq = word_frequencies(&corpus);
        assert_eq!(freq.get("a"), Some(&2));
        assert_eq!(freq.get("b"), Some(&1));
        assert_eq!(freq.get("A"), Some(&1));
        assert_eq!(freq.get("c"), None);
    }

    #[test]
    fn bio_examples() {
        assert!(validate_bio(&["B-P", "I-P", "O"]).unwrap().is_empty());
        assert_eq!(
            validate_bio(&["O", "I-P", "O"]).unwrap(),
            [BioViolation {
                position: 1,
                kind: ViolationKind::InsideAfterOutside
            }]
        );
        assert_eq!(
            validate_bio(&["B-P", "I-Q", "I-Q"]).unwrap(),
            [BioViolation {
                position: 1,
                kind: ViolationKind::ClassMismatch
            }]
        );
        assert_eq!(
            validate_bio(&["I-P"]).unwrap()[0].kind,
            ViolationKind::InsideAtStart
        );
        assert!(validate_bio(&["B-P", "NOUN"]).is_err());
        assert!(validate_bio(&["B-"]).is_err());
    }

    /// Regular-grammar recognizer for valid BIO: states are "outside" or
    /// "inside class c"; an `I-c` transition exists only from inside c.
    fn bio_accepts(labels: &[&str]) -> bool {
        let mut state: Option<&str> = None;
        for l in labels {
            state = match (*l, state) {
                ("O", _) => None,
                (l, _) if l.starts_with("B-") => Some(&l[2..]),
                (l, Some(c)) if l.starts_with("I-") && &l[2..] == c => Some(c),
                _ => return false,
            };
        }
        true
    }

    #[test]
    fn bio_matches_grammar_oracle_exhaustively() {
        const ALPHABET: [&str; 5] = ["O", "B-A", "I-A", "B-B", "I-B"];
        for len in 0..=6u32 {
            for code in 0..5usize.pow(len) {
                let mut c = code;
                let seq: Vec<&str> = (0..len)
                    .map(|_| {
                        let s = ALPHABET[c % 5];
                        c /= 5;
                        s
                    })
                    .collect();
                let found = validate_bio(&seq).unwrap();
                assert_eq!(found.is_empty(), bio_accepts(&seq), "{seq:?}");
            }
        }
    }

    #[test]
    fn slice_fraction_contract() {
        let text: String = (0..100).map(|i| format!("w{i}\tX\n\n")).collect();
        let corpus = parse_conll(&text, &pos_spec()).unwrap();
        assert_eq!(slice_fraction(&corpus, 0.25, 3).unwrap().len(), 25);
        assert_eq!(
            slice_fraction(&corpus, 0.25, 3).unwrap(),
            slice_fraction(&corpus, 0.25, 3).unwrap()
        );
        assert_eq!(slice_fraction(&corpus, 1.0, 9).unwrap(), corpus);
        let half = slice_fraction(&corpus, 0.5, 9).unwrap();
        let positions: Vec<usize> = half
            .sentences()
            .iter()
            .map(|s| s.tokens[0].surface[1..].parse().unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(slice_fraction(&corpus, 0.0, 1).is_err());
        assert!(slice_fraction(&corpus, 1.5, 1).is_err());
        assert!(slice_fraction(&corpus, f64::NAN, 1).is_err());
    }

    #[test]
    fn duplicate_task_column_rejected() {
        let corpus = parse_conll("a\tX\n", &pos_spec()).unwrap();
        let err = corpus
            .with_task_column("pos", vec![vec!["Y".into()]])
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateTask(_)));
    }

    fn arb_corpus() -> impl Strategy<Value = TaggedCorpus> {
        let token = (
            "[a-zA-Z.,]{1,6}",
            "[A-Z]{1,3}",
            prop_oneof!["O", "B-[AB]", "I-[AB]"],
        );
        let sentence = prop::collection::vec(token, 1..6);
        prop::collection::vec(sentence, 1..8).prop_map(|sents| {
            let sentences = sents
                .into_iter()
                .map(|toks| Sentence {
                    tokens: toks
                        .into_iter()
                        .map(|(w, a, b)| Token {
                            surface: w,
                            labels: vec![a, b],
                        })
                        .collect(),
                })
                .collect();
            TaggedCorpus::new(vec!["pos".into(), "ner".into()], sentences, Split::Train).unwrap()
        })
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(corpus in arb_corpus()) {
            let mut buf = Vec::new();
            write_conll_to(&corpus, &mut buf).unwrap();
            let back = parse_conll(std::str::from_utf8(&buf).unwrap(), &written_column_spec(&corpus)).unwrap();
            prop_assert_eq!(back, corpus);
        }

        #[test]
        fn frequencies_sum_to_token_count(corpus in arb_corpus()) {
            let total: u64 = word_frequencies(&corpus).values().sum();
            prop_assert_eq!(total as usize, corpus.token_count());
        }
    }
}
