//! Synthetic desk-scale data: an NER-like main task, a POS corpus from
//! disjoint sentences, and a ready-to-run experiment config.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use seqmtl::auxgen::FreqBinVariant;
use seqmtl::experiment::{AuxSource, AuxTask, CorpusBinding, ExperimentConfig, MainTask, OLabel};
use seqmtl::rng::{component_rng, Rng};
use seqmtl::{Error, Result};

const ONSETS: [&str; 12] = ["b", "d", "f", "k", "l", "m", "n", "p", "r", "s", "t", "v"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjectives: Vec<String>,
    persons: Vec<String>,
    places: Vec<String>,
    orgs: Vec<String>,
}

fn pseudo_word(rng: &mut Rng, syllables: usize, suffix: &str) -> String {
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    w.push_str(suffix);
    w
}

fn capitalized(mut w: String) -> String {
    if let Some(first) = w.get(..1) {
        let upper = first.to_uppercase();
        w.replace_range(..1, &upper);
    }
    w
}

impl Lexicon {
    fn new(rng: &mut Rng) -> Self {
        let mut words = |n: usize, syllables: usize, suffix: &str, cap: bool| -> Vec<String> {
            let mut out: Vec<String> = Vec::new();
            while out.len() < n {
                let w = pseudo_word(rng, syllables, suffix);
                let w = if cap { capitalized(w) } else { w };
                if !out.contains(&w) {
                    out.push(w);
                }
            }
            out
        };
        Lexicon {
            nouns: words(60, 2, "n", false),
            verbs: words(30, 2, "s", false),
            adjectives: words(25, 2, "l", false),
            persons: words(20, 2, "", true),
            places: words(15, 3, "ia", true),
            orgs: words(10, 2, "corp", true),
        }
    }
}

/// Zipf-weighted pick: rank r has weight 1/(r+1).
fn zipf<'a>(rng: &mut Rng, items: &'a [String]) -> &'a str {
    let total: f64 = (1..=items.len()).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (r, item) in items.iter().enumerate() {
        u -= 1.0 / (r + 1) as f64;
        if u <= 0.0 {
            return item;
        }
    }
    &items[items.len() - 1]
}

type Row = (String, String, String);

fn push(out: &mut Vec<Row>, word: &str, ner: &str, pos: &str) {
    out.push((word.to_owned(), ner.to_owned(), pos.to_owned()));
}

fn noun_phrase(rng: &mut Rng, lex: &Lexicon, out: &mut Vec<Row>) {
    match rng.random_range(0..3) {
        0 => {
            push(out, zipf(rng, &lex.persons), "B-PER", "PROPN");
            if rng.random_bool(0.5) {
                push(out, zipf(rng, &lex.persons), "I-PER", "PROPN");
            }
        }
        1 => {
            push(out, "the", "O", "DET");
            push(out, zipf(rng, &lex.orgs), "B-ORG", "PROPN");
        }
        _ => {
            push(
                out,
                if rng.random_bool(0.5) { "the" } else { "a" },
                "O",
                "DET",
            );
            if rng.random_bool(0.4) {
                push(out, zipf(rng, &lex.adjectives), "O", "ADJ");
            }
            push(out, zipf(rng, &lex.nouns), "O", "NOUN");
        }
    }
}

/// One sentence as (token, ner, pos) rows.
fn sentence(rng: &mut Rng, lex: &Lexicon) -> Vec<Row> {
    let mut out = Vec::new();
    noun_phrase(rng, lex, &mut out);
    push(&mut out, zipf(rng, &lex.verbs), "O", "VERB");
    noun_phrase(rng, lex, &mut out);
    if rng.random_bool(0.6) {
        push(&mut out, "in", "O", "ADP");
        push(&mut out, zipf(rng, &lex.places), "B-LOC", "PROPN");
        if rng.random_bool(0.3) {
            push(&mut out, zipf(rng, &lex.places), "I-LOC", "PROPN");
        }
    }
    push(&mut out, ".", "O", "PUNCT");
    out
}

fn corpus_text(rng: &mut Rng, lex: &Lexicon, n: usize, column: usize) -> String {
    let mut text = String::new();
    for _ in 0..n {
        for (w, ner, pos) in sentence(rng, lex) {
            let label = if column == 1 { ner } else { pos };
            let _ = writeln!(text, "{w}\t{label}");
        }
        text.push('\n');
    }
    text
}

#[derive(Debug, Clone, Copy)]
pub struct SynthSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub aux: usize,
}

/// Writes `ner-{train,dev,test}.conll`, `pos-{train,dev}.conll` and
/// `demo.ini` into `dir`, returning the config.
pub fn write_demo(dir: &Path, seed: u64, sizes: SynthSizes) -> Result<ExperimentConfig> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let lex = Lexicon::new(&mut component_rng(seed, "synth-lexicon"));
    let files = [
        ("ner-train.conll", "synth-ner-train", sizes.train, 1),
        ("ner-dev.conll", "synth-ner-dev", sizes.dev, 1),
        ("ner-test.conll", "synth-ner-test", sizes.test, 1),
        ("pos-train.conll", "synth-pos-train", sizes.aux, 2),
        ("pos-dev.conll", "synth-pos-dev", sizes.dev, 2),
    ];
    for (name, component, n, column) in files {
        let text = corpus_text(&mut component_rng(seed, component), &lex, n, column);
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io(&path, e))?;
    }
    let binding = |train: &str, dev: &str, test: Option<&str>| CorpusBinding {
        train: train.into(),
        dev: Some(dev.into()),
        test: test.map(Into::into),
        token_column: 0,
        label_column: 1,
    };
    let mut config = ExperimentConfig::new(
        seed,
        MainTask {
            name: "ner".into(),
            data: binding("ner-train.conll", "ner-dev.conll", Some("ner-test.conll")),
            layer: None,
            o_label: OLabel::Infer,
        },
    );
    config.output = Some("runs".into());
    config.bootstrap_iterations = 1000;
    config.aux = vec![
        AuxTask {
            name: "freq".into(),
            layer: 1,
            source: AuxSource::FreqBin {
                variant: FreqBinVariant::Uniform,
                k: Some(5),
            },
        },
        AuxTask {
            name: "pos".into(),
            layer: 1,
            source: AuxSource::Corpus(binding("pos-train.conll", "pos-dev.conll", None)),
        },
    ];
    config.model.word_emb_dim = 16;
    config.model.char_emb_dim = 8;
    config.model.char_hidden_dim = 8;
    config.model.hidden_dim = 16;
    config.epochs = 10;
    let path = dir.join("demo.ini");
    std::fs::write(&path, config.to_text()).map_err(|e| io(&path, e))?;
    Ok(config)
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source,
    }
}
