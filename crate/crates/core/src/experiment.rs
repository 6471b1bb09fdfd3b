//! Config-driven experiment runs, system grids and protocol drivers.
//!
//! An experiment file is plain text with `[section]` headers and
//! `key = value` lines; `#` starts a comment line.
//!
//! ```text
//! [experiment]
//! seed = 1
//! # optional artifact directory
//! output = runs/ner
//! bootstrap_iterations = 10000
//!
//! [main]
//! name = ner
//! train = data/train.conll
//! dev = data/dev.conll
//! test = data/test.conll
//! token_column = 0
//! label_column = 1
//! # optional, defaults to the top layer
//! layer = 3
//! # optional; `-` means no O label
//! o_label = O
//!
//! [aux freq]
//! source = freqbin
//! # skewed10 | skewed5 | uniform
//! variant = uniform
//! # uniform only, default 5
//! k = 5
//! layer = 1
//!
//! [aux pos]
//! source = corpus
//! train = data/pos.conll
//! # optional
//! dev = data/pos-dev.conll
//! token_column = 0
//! label_column = 1
//! layer = 1
//!
//! # any model field except the seed
//! [model]
//! hidden_dim = 100
//! use_char = true
//! width_factor = 1
//!
//! [training]
//! epochs = 30
//! learning_rate = 0.1
//! # or pooled
//! sampling = task-first
//! ```
//!
//! Every random stream (initialisation, noise, sampling, slicing,
//! bootstrap) derives from the single experiment seed.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::auxgen::{apply_freqbin, fit_freqbin, FreqBinSpec, FreqBinVariant, DEFAULT_UNIFORM_K};
use crate::corpus::{read_conll, word_frequencies, write_conll, ColumnSpec, Split, TaggedCorpus};
use crate::error::{Error, Result};
use crate::evaluation::{bootstrap_significance, EvalReport, BOOTSTRAP_ITERATIONS};
use crate::model::{Model, ModelConfig};
use crate::training::{
    build_model, capacity_sweep, evaluate_model, learning_curve, train, ProtocolPoint, Role,
    Sampling, TrainLog, TrainingConfig, TrainingTask, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE,
    MAX_AUX_TASKS,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusBinding {
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub token_column: usize,
    pub label_column: usize,
}

impl CorpusBinding {
    fn column_spec(&self, task: &str) -> ColumnSpec {
        ColumnSpec::new([(self.label_column, task)]).with_token_column(self.token_column)
    }

    fn read(&self, path: &Path, task: &str, split: Split) -> Result<TaggedCorpus> {
        Ok(read_conll(path, &self.column_spec(task))?.with_split(split))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum OLabel {
    /// `O` if the training labels contain it.
    #[default]
    Infer,
    Absent,
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MainTask {
    pub name: String,
    pub data: CorpusBinding,
    pub layer: Option<usize>,
    pub o_label: OLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuxSource {
    /// Derived from the main-task training text.
    FreqBin {
        variant: FreqBinVariant,
        k: Option<usize>,
    },
    Corpus(CorpusBinding),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxTask {
    pub name: String,
    pub layer: usize,
    pub source: AuxSource,
}

impl AuxTask {
    pub fn is_freqbin(&self) -> bool {
        matches!(self.source, AuxSource::FreqBin { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub bootstrap_iterations: usize,
    pub main: MainTask,
    pub aux: Vec<AuxTask>,
    /// Model hyperparameters; its seed is replaced by the experiment seed.
    pub model: ModelConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub sampling: Sampling,
}

struct Section {
    header: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let i = self.entries.iter().position(|(k, _, _)| k == key)?;
        let (_, v, line) = self.entries.remove(i);
        Some((v, line))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("cannot parse {key} = {v:?}"))),
        }
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::Config(format!("[{}] is missing `{key}`", self.header)))
    }

    fn finish(self) -> Result<()> {
        match self.entries.first() {
            None => Ok(()),
            Some((k, _, line)) => Err(Error::parse(
                *line,
                format!("unknown key `{k}` in [{}]", self.header),
            )),
        }
    }

    fn binding(&mut self, needs_eval: bool) -> Result<CorpusBinding> {
        let binding = CorpusBinding {
            train: self.required::<PathBuf>("train")?,
            dev: self.parsed("dev")?,
            test: self.parsed("test")?,
            token_column: self.parsed("token_column")?.unwrap_or(0),
            label_column: self.required("label_column")?,
        };
        if needs_eval && (binding.dev.is_none() || binding.test.is_none()) {
            return Err(Error::Config(format!(
                "[{}] needs both dev and test",
                self.header
            )));
        }
        Ok(binding)
    }
}

fn sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(line_no, "unterminated section header"))?;
            let header = header.split_whitespace().collect::<Vec<_>>().join(" ");
            if out.iter().any(|s| s.header == header) {
                return Err(Error::parse(
                    line_no,
                    format!("duplicate section [{header}]"),
                ));
            }
            out.push(Section {
                header,
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
        let section = out
            .last_mut()
            .ok_or_else(|| Error::parse(line_no, "key outside of any section"))?;
        let key = key.trim().to_owned();
        if section.entries.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::parse(line_no, format!("duplicate key `{key}`")));
        }
        section
            .entries
            .push((key, value.trim().to_owned(), line_no));
    }
    Ok(out)
}

fn check_name(name: &str, line: usize) -> Result<()> {
    if name.is_empty()
        || name
            .chars()
            .any(|c| c.is_whitespace() || c == '[' || c == ']')
    {
        return Err(Error::parse(line, format!("invalid task name {name:?}")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// A config with defaults for everything but the main task.
    pub fn new(seed: u64, main: MainTask) -> Self {
        ExperimentConfig {
            seed,
            output: None,
            bootstrap_iterations: BOOTSTRAP_ITERATIONS,
            main,
            aux: Vec::new(),
            model: ModelConfig::default(),
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            sampling: Sampling::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut experiment = None;
        let mut main = None;
        let mut aux = Vec::new();
        let mut model = ModelConfig::default();
        let (mut epochs, mut learning_rate, mut sampling) =
            (DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE, Sampling::default());
        for mut s in sections(text)? {
            let header = s.header.clone();
            match header.split_once(' ') {
                None if header == "experiment" => {
                    experiment = Some((
                        s.required::<u64>("seed")?,
                        s.parsed::<PathBuf>("output")?,
                        s.parsed("bootstrap_iterations")?
                            .unwrap_or(BOOTSTRAP_ITERATIONS),
                    ));
                }
                None if header == "main" => {
                    let (name, line) = s
                        .take("name")
                        .ok_or_else(|| Error::Config("[main] is missing `name`".into()))?;
                    check_name(&name, line)?;
                    let o_label = match s.take("o_label") {
                        None => OLabel::Infer,
                        Some((v, _)) if v == "-" => OLabel::Absent,
                        Some((v, _)) => OLabel::Label(v),
                    };
                    main = Some(MainTask {
                        name,
                        data: s.binding(true)?,
                        layer: s.parsed("layer")?,
                        o_label,
                    });
                }
                None if header == "model" => {
                    for (k, v, line) in std::mem::take(&mut s.entries) {
                        let known =
                            k != "seed" && model.set(&k, &v).map_err(|m| Error::parse(line, m))?;
                        if !known {
                            return Err(Error::parse(
                                line,
                                format!("unknown key `{k}` in [model]"),
                            ));
                        }
                    }
                }
                None if header == "training" => {
                    epochs = s.parsed("epochs")?.unwrap_or(epochs);
                    learning_rate = s.parsed("learning_rate")?.unwrap_or(learning_rate);
                    sampling = s.parsed("sampling")?.unwrap_or(sampling);
                }
                Some(("aux", name)) => {
                    check_name(name, s.line)?;
                    let layer = s.required("layer")?;
                    let source: String = s.required("source")?;
                    let source = match source.as_str() {
                        "freqbin" => AuxSource::FreqBin {
                            variant: s.required("variant")?,
                            k: s.parsed("k")?,
                        },
                        "corpus" => AuxSource::Corpus(s.binding(false)?),
                        other => {
                            return Err(Error::Config(format!(
                                "[aux {name}] has unknown source `{other}`"
                            )))
                        }
                    };
                    aux.push(AuxTask {
                        name: name.to_owned(),
                        layer,
                        source,
                    });
                }
                _ => return Err(Error::parse(s.line, format!("unknown section [{header}]"))),
            }
            s.finish()?;
        }
        let (seed, output, bootstrap_iterations) =
            experiment.ok_or_else(|| Error::Config("missing [experiment] section".into()))?;
        let config = ExperimentConfig {
            seed,
            output,
            bootstrap_iterations,
            main: main.ok_or_else(|| Error::Config("missing [main] section".into()))?,
            aux,
            model,
            epochs,
            learning_rate,
            sampling,
        };
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_binding = |b: &mut CorpusBinding| {
            fix(&mut b.train);
            b.dev.as_mut().map(fix);
            b.test.as_mut().map(fix);
        };
        fix_binding(&mut self.main.data);
        for a in &mut self.aux {
            if let AuxSource::Corpus(b) = &mut a.source {
                fix_binding(b);
            }
        }
        self.output.as_mut().map(fix);
    }

    pub fn to_text(&self) -> String {
        fn binding(out: &mut String, b: &CorpusBinding) {
            let _ = writeln!(out, "train = {}", b.train.display());
            if let Some(p) = &b.dev {
                let _ = writeln!(out, "dev = {}", p.display());
            }
            if let Some(p) = &b.test {
                let _ = writeln!(out, "test = {}", p.display());
            }
            let _ = writeln!(out, "token_column = {}", b.token_column);
            let _ = writeln!(out, "label_column = {}", b.label_column);
        }
        let mut out = String::from("[experiment]\n");
        let _ = writeln!(out, "seed = {}", self.seed);
        if let Some(p) = &self.output {
            let _ = writeln!(out, "output = {}", p.display());
        }
        let _ = writeln!(out, "bootstrap_iterations = {}", self.bootstrap_iterations);
        let _ = writeln!(out, "\n[main]\nname = {}", self.main.name);
        binding(&mut out, &self.main.data);
        if let Some(l) = self.main.layer {
            let _ = writeln!(out, "layer = {l}");
        }
        match &self.main.o_label {
            OLabel::Infer => {}
            OLabel::Absent => out.push_str("o_label = -\n"),
            OLabel::Label(l) => {
                let _ = writeln!(out, "o_label = {l}");
            }
        }
        for a in &self.aux {
            let _ = writeln!(out, "\n[aux {}]\nlayer = {}", a.name, a.layer);
            match &a.source {
                AuxSource::FreqBin { variant, k } => {
                    let _ = writeln!(out, "source = freqbin\nvariant = {variant}");
                    if let Some(k) = k {
                        let _ = writeln!(out, "k = {k}");
                    }
                }
                AuxSource::Corpus(b) => {
                    out.push_str("source = corpus\n");
                    binding(&mut out, b);
                }
            }
        }
        out.push_str("\n[model]\n");
        for line in self.model.to_text().lines() {
            if let Some((k, v)) = line.split_once('\t') {
                if k != "seed" {
                    let _ = writeln!(out, "{k} = {v}");
                }
            }
        }
        let _ = writeln!(
            out,
            "\n[training]\nepochs = {}\nlearning_rate = {:?}\nsampling = {}",
            self.epochs, self.learning_rate, self.sampling
        );
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        let layers = self.model.context_layers;
        if self.aux.len() > MAX_AUX_TASKS {
            return Err(Error::Config(format!(
                "at most {MAX_AUX_TASKS} auxiliary tasks, got {}",
                self.aux.len()
            )));
        }
        let mut names = BTreeSet::from([self.main.name.as_str()]);
        for a in &self.aux {
            if !names.insert(&a.name) {
                return Err(Error::DuplicateTask(a.name.clone()));
            }
        }
        let layer_ok = |l: usize| (1..=layers).contains(&l);
        if !self.main.layer.is_none_or(layer_ok) || !self.aux.iter().all(|a| layer_ok(a.layer)) {
            return Err(Error::Config(format!(
                "head layers must lie in 1..={layers}"
            )));
        }
        for a in &self.aux {
            if let AuxSource::FreqBin { variant, k } = &a.source {
                if k.is_some() && *variant != FreqBinVariant::Uniform {
                    return Err(Error::Config(format!(
                        "[aux {}] sets k for a skewed variant",
                        a.name
                    )));
                }
                if k.is_some_and(|k| k < 2) {
                    return Err(Error::Config(format!("[aux {}] needs k >= 2", a.name)));
                }
            }
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.bootstrap_iterations == 0 {
            return Err(Error::Config(
                "bootstrap_iterations must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn main_layer(&self) -> usize {
        self.main.layer.unwrap_or(self.model.context_layers)
    }

    /// The same experiment without auxiliary tasks.
    pub fn baseline(&self) -> Self {
        ExperimentConfig {
            aux: Vec::new(),
            ..self.clone()
        }
    }
}

/// Corpora and configs ready for training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model_config: ModelConfig,
    pub training: TrainingConfig,
    pub dev: TaggedCorpus,
    pub test: TaggedCorpus,
    /// Dev data for auxiliary heads that have some.
    pub aux_dev: Vec<(String, TaggedCorpus)>,
    pub freqbin_specs: Vec<(String, FreqBinSpec)>,
}

/// Loads every corpus and derives FreqBin columns. All failures surface
/// here, before any training.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let main = &config.main;
    let name = main.name.as_str();
    let binding = &main.data;
    let mut train_corpus = binding.read(&binding.train, name, Split::Train)?;
    match &main.o_label {
        OLabel::Infer => {}
        OLabel::Absent => train_corpus.set_o_label(name, None)?,
        OLabel::Label(l) => train_corpus.set_o_label(name, Some(l))?,
    }
    let eval_path = |p: &Option<PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| Error::Config(format!("[main] needs a {what} path")))
    };
    let dev = binding.read(&eval_path(&binding.dev, "dev")?, name, Split::Dev)?;
    let test = binding.read(&eval_path(&binding.test, "test")?, name, Split::Test)?;

    let mut tasks = vec![TrainingTask::new(
        name,
        train_corpus.clone(),
        config.main_layer(),
        Role::Main,
    )];
    let mut aux_dev = Vec::new();
    let mut freqbin_specs = Vec::new();
    let frequencies = word_frequencies(&train_corpus);
    for a in &config.aux {
        let corpus = match &a.source {
            AuxSource::FreqBin { variant, k } => {
                let k = k.or((*variant == FreqBinVariant::Uniform).then_some(DEFAULT_UNIFORM_K));
                let spec = fit_freqbin(&frequencies, *variant, k)?;
                let derived = apply_freqbin(&spec, &train_corpus, &a.name)?.project(&[&a.name])?;
                aux_dev.push((
                    a.name.clone(),
                    apply_freqbin(&spec, &dev, &a.name)?.project(&[&a.name])?,
                ));
                freqbin_specs.push((a.name.clone(), spec));
                derived
            }
            AuxSource::Corpus(b) => {
                if let Some(p) = &b.dev {
                    aux_dev.push((a.name.clone(), b.read(p, &a.name, Split::Dev)?));
                }
                b.read(&b.train, &a.name, Split::Train)?
            }
        };
        tasks.push(TrainingTask::new(
            a.name.clone(),
            corpus,
            a.layer,
            Role::Aux,
        ));
    }
    let training = TrainingConfig {
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        seed: config.seed,
        sampling: config.sampling,
        tasks,
    };
    training.validate()?;
    Ok(Prepared {
        model_config: config.model_config(),
        training,
        dev,
        test,
        aux_dev,
        freqbin_specs,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub model: Model,
    pub log: TrainLog,
    pub dev_report: EvalReport,
    pub test_report: EvalReport,
    /// Token accuracy of each auxiliary head on its own dev data.
    pub aux_dev_accuracy: Vec<(String, f64)>,
    pub test_gold: Vec<Vec<String>>,
    pub test_predictions: Vec<Vec<String>>,
}

impl ExperimentOutcome {
    pub fn report_text(&self) -> String {
        let mut out = String::from("[test]\n");
        out.push_str(&self.test_report.to_string());
        out.push_str("\n[dev]\n");
        out.push_str(&self.dev_report.to_string());
        for (name, acc) in &self.aux_dev_accuracy {
            let _ = write!(out, "\n[aux {name}]\ndev_accuracy\t{acc:.6}\n");
        }
        out
    }
}

/// Trains and evaluates one system; with an output directory, writes
/// `config.ini`, `report.txt`, `train_log.tsv`, `model.params`,
/// `model.model`, `predictions.conll` (token, gold, predicted) and one
/// `freqbin-<task>.txt` per derived task.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let prepared = prepare(config)?;
    let name = config.main.name.as_str();
    let mut model = build_model(&prepared.model_config, &prepared.training)?;
    let log = train(&mut model, &prepared.training, Some(&prepared.dev))?;
    let dev_report = evaluate_model(&model, &prepared.dev, name)?;
    let test_report = evaluate_model(&model, &prepared.test, name)?;
    let aux_dev_accuracy = prepared
        .aux_dev
        .iter()
        .map(|(task, corpus)| Ok((task.clone(), evaluate_model(&model, corpus, task)?.accuracy)))
        .collect::<Result<Vec<_>>>()?;
    let outcome = ExperimentOutcome {
        test_gold: prepared.test.label_sequences(name)?,
        test_predictions: model.predict_corpus(&prepared.test, name)?,
        model,
        log,
        dev_report,
        test_report,
        aux_dev_accuracy,
    };
    if let Some(dir) = &config.output {
        write_artifacts(dir, config, &prepared, &outcome)?;
    }
    Ok(outcome)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_artifacts(
    dir: &Path,
    config: &ExperimentConfig,
    prepared: &Prepared,
    outcome: &ExperimentOutcome,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("config.ini"), &config.to_text())?;
    write_file(&dir.join("report.txt"), &outcome.report_text())?;
    write_file(&dir.join("train_log.tsv"), &outcome.log.to_string())?;
    outcome.model.save(dir.join("model"))?;
    let predictions = prepared
        .test
        .clone()
        .with_task_column("predicted", outcome.test_predictions.clone())?;
    write_conll(&predictions, dir.join("predictions.conll"))?;
    for (task, spec) in &prepared.freqbin_specs {
        write_file(&dir.join(format!("freqbin-{task}.txt")), &spec.to_text())?;
    }
    Ok(())
}

/// One cell of a system grid: a set of auxiliary tasks at one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct System {
    pub aux: Vec<AuxTask>,
    /// Layer of every auxiliary head; `None` for the baseline.
    pub layer: Option<usize>,
}

impl System {
    pub fn description(&self) -> String {
        if self.aux.is_empty() {
            return "baseline".into();
        }
        self.aux.iter().map(|a| format!("+{}", a.name)).collect()
    }

    pub fn id(&self) -> String {
        match self.layer {
            None => "baseline".into(),
            Some(l) => format!("{}@{l}", self.description()),
        }
    }
}

/// Baseline, every menu entry alone, then every FreqBin entry paired
/// with every other kind of entry; each non-baseline system once per
/// layer, with all of its auxiliary heads at that layer.
pub fn grid_systems(menu: &[AuxTask], layers: &[usize]) -> Vec<System> {
    let mut combos: Vec<Vec<&AuxTask>> = menu.iter().map(|a| vec![a]).collect();
    for f in menu.iter().filter(|a| a.is_freqbin()) {
        for other in menu.iter().filter(|a| !a.is_freqbin()) {
            combos.push(vec![other, f]);
        }
    }
    let mut systems = vec![System {
        aux: Vec::new(),
        layer: None,
    }];
    for combo in combos {
        for &layer in layers {
            systems.push(System {
                aux: combo
                    .iter()
                    .map(|a| AuxTask {
                        layer,
                        ..(*a).clone()
                    })
                    .collect(),
                layer: Some(layer),
            });
        }
    }
    systems
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub system: System,
    pub f1: f64,
    pub delta: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Main-task test predictions of this system.
    pub predictions: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub main_task: String,
    pub baseline_f1: f64,
    pub rows: Vec<GridRow>,
    /// Number of context layers, for naming the outermost one.
    pub context_layers: usize,
}

impl GridTable {
    pub fn over_baseline(&self) -> usize {
        self.rows.iter().filter(|r| r.delta > 0.0).count()
    }

    /// Row with the largest Δ; the earliest wins ties.
    pub fn best(&self) -> Option<&GridRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&GridRow>, r| match best {
                Some(b) if b.delta >= r.delta => Some(b),
                _ => Some(r),
            })
    }

    fn layer_name(&self, layer: Option<usize>) -> String {
        match layer {
            None => "-".into(),
            Some(1) => "inner".into(),
            Some(l) if l == self.context_layers => "outer".into(),
            Some(l) => format!("h{l}"),
        }
    }

    /// One row per system, baseline first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system\taux\tlayer\tf1\tdelta\tp_value\tsignificant\n");
        let _ = writeln!(
            out,
            "baseline\tbaseline\t-\t{:.6}\t0.000000\t-\t-",
            self.baseline_f1
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:+.6}\t{:.6}\t{}",
                r.system.id(),
                r.system.description(),
                self.layer_name(r.system.layer),
                r.f1,
                r.delta,
                r.p_value,
                if r.significant { "yes" } else { "no" }
            );
        }
        out
    }

    /// Baseline, best difference, its description and layer, and the
    /// number of systems over baseline.
    pub fn summary_tsv(&self) -> String {
        let mut out =
            String::from("main\tBL\tdelta_best\tdescription\taux_layer\tsignificant\tover\n");
        let (delta, desc, layer, sig) = match self.best() {
            Some(b) => (
                format!("{:+.6}", b.delta),
                b.system.description(),
                self.layer_name(b.system.layer),
                if b.significant { "yes" } else { "no" },
            ),
            None => ("-".into(), "-".into(), "-".into(), "-"),
        };
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{delta}\t{desc}\t{layer}\t{sig}\t{}",
            self.main_task,
            self.baseline_f1,
            self.over_baseline()
        );
        out
    }
}

fn cell_dir(base: &Option<PathBuf>, id: &str) -> Option<PathBuf> {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    base.as_ref().map(|b| b.join(safe))
}

/// Runs the baseline once and every other system against it, with a
/// paired bootstrap test per system on the main-task test split.
pub fn run_systems(base: &ExperimentConfig, systems: &[System]) -> Result<GridTable> {
    base.validate()?;
    let mut configs = Vec::new();
    for system in systems.iter().filter(|s| !s.aux.is_empty()) {
        let cfg = ExperimentConfig {
            aux: system.aux.clone(),
            output: cell_dir(&base.output, &system.id()),
            ..base.clone()
        };
        cfg.validate()?;
        configs.push((system.clone(), cfg));
    }
    let baseline_cfg = ExperimentConfig {
        output: cell_dir(&base.output, "baseline"),
        ..base.baseline()
    };
    let baseline = run_experiment(&baseline_cfg)?;
    let o_label = baseline
        .model
        .head(&base.main.name)?
        .inventory
        .o_label()
        .map(str::to_owned);
    let mut rows = Vec::new();
    for (system, cfg) in configs {
        let outcome = run_experiment(&cfg)?;
        let sig = bootstrap_significance(
            &baseline.test_gold,
            &outcome.test_predictions,
            &baseline.test_predictions,
            o_label.as_deref(),
            base.bootstrap_iterations,
            base.seed,
        )?;
        let f1 = outcome.test_report.micro_f1_non_o;
        rows.push(GridRow {
            system,
            f1,
            delta: f1 - baseline.test_report.micro_f1_non_o,
            p_value: sig.p_value,
            significant: sig.significant,
            predictions: outcome.test_predictions,
        });
    }
    let table = GridTable {
        main_task: base.main.name.clone(),
        baseline_f1: baseline.test_report.micro_f1_non_o,
        rows,
        context_layers: base.model.context_layers,
    };
    if let Some(dir) = &base.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("grid.tsv"), &table.to_tsv())?;
        write_file(&dir.join("grid_summary.tsv"), &table.summary_tsv())?;
    }
    Ok(table)
}

/// The grid over the config's auxiliary tasks used as a menu.
pub fn run_grid(config: &ExperimentConfig, layers: &[usize]) -> Result<GridTable> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no grid layers".into()));
    }
    run_systems(config, &grid_systems(&config.aux, layers))
}

/// One system per auxiliary task of the config, each alone at `layer`,
/// against a shared baseline.
pub fn compare_pos_sources(config: &ExperimentConfig, layer: usize) -> Result<GridTable> {
    if config.aux.is_empty() {
        return Err(Error::Config("no auxiliary sources to compare".into()));
    }
    let mut systems = vec![System {
        aux: Vec::new(),
        layer: None,
    }];
    systems.extend(config.aux.iter().map(|a| System {
        aux: vec![AuxTask { layer, ..a.clone() }],
        layer: Some(layer),
    }));
    run_systems(config, &systems)
}

/// TSV with one dev-metric row per protocol point.
pub fn protocol_tsv<K: std::fmt::Display>(key: &str, points: &[ProtocolPoint<K>]) -> String {
    let mut out = format!("{key}\tdev_f1\tprecision_o\taccuracy\n");
    for p in points {
        let po = p
            .report
            .precision_o
            .map_or_else(|| "-".to_owned(), |v| format!("{v:.6}"));
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{po}\t{:.6}",
            p.key, p.report.micro_f1_non_o, p.report.accuracy
        );
    }
    out
}

/// Learning curve over the main-task training data; writes
/// `learning_curve.tsv` when the config has an output directory.
pub fn run_learning_curve(
    config: &ExperimentConfig,
    fractions: &[f64],
) -> Result<Vec<ProtocolPoint<f64>>> {
    let prepared = prepare(config)?;
    let points = learning_curve(
        &prepared.model_config,
        &prepared.training,
        &prepared.dev,
        fractions,
    )?;
    if let Some(dir) = &config.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(
            &dir.join("learning_curve.tsv"),
            &protocol_tsv("fraction", &points),
        )?;
    }
    Ok(points)
}

/// Hidden-width sweep; writes `capacity_sweep.tsv` when the config has
/// an output directory.
pub fn run_capacity_sweep(
    config: &ExperimentConfig,
    factors: &[usize],
) -> Result<Vec<ProtocolPoint<usize>>> {
    let prepared = prepare(config)?;
    let points = capacity_sweep(
        &prepared.model_config,
        &prepared.training,
        &prepared.dev,
        factors,
    )?;
    if let Some(dir) = &config.output {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(
            &dir.join("capacity_sweep.tsv"),
            &protocol_tsv("width_factor", &points),
        )?;
    }
    Ok(points)
}
