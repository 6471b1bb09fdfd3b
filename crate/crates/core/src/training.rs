//! Multi-task SGD and the experiment protocols built on it.
//!
//! One update draws a task, then one sentence of that task's corpus,
//! and applies plain SGD on the summed token cross-entropy. An epoch is
//! as many updates as there are sentences across all task corpora.

use std::fmt;

use rand::Rng as _;

use crate::corpus::{slice_fraction, TaggedCorpus};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::model::{Model, ModelConfig, TaskHead, Vocabulary};
use crate::rng;
use crate::tensor::{sgd_step, Tape};

pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const MAX_AUX_TASKS: usize = 2;
pub const LEARNING_CURVE_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Main,
    Aux,
}

/// How an update picks its training sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Uniform over tasks, then uniform over that task's sentences.
    #[default]
    TaskFirst,
    /// Uniform over the pooled sentences of all tasks.
    Pooled,
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::TaskFirst => "task-first",
            Sampling::Pooled => "pooled",
        })
    }
}

impl std::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task-first" => Ok(Sampling::TaskFirst),
            "pooled" => Ok(Sampling::Pooled),
            _ => Err(Error::Config(format!("unknown sampling {s:?}"))),
        }
    }
}

/// A task with its own training corpus. The corpus must carry a label
/// column named after the task.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTask {
    pub name: String,
    pub corpus: TaggedCorpus,
    pub head_layer: usize,
    pub role: Role,
}

impl TrainingTask {
    pub fn new(
        name: impl Into<String>,
        corpus: TaggedCorpus,
        head_layer: usize,
        role: Role,
    ) -> Self {
        TrainingTask {
            name: name.into(),
            corpus,
            head_layer,
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub sampling: Sampling,
    pub tasks: Vec<TrainingTask>,
}

impl TrainingConfig {
    pub fn new(seed: u64, tasks: Vec<TrainingTask>) -> Self {
        TrainingConfig {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed,
            sampling: Sampling::default(),
            tasks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        let mains = self.tasks.iter().filter(|t| t.role == Role::Main).count();
        if mains != 1 {
            return Err(Error::Config(format!(
                "expected exactly one main task, got {mains}"
            )));
        }
        let aux = self.tasks.len() - 1;
        if aux > MAX_AUX_TASKS {
            return Err(Error::Config(format!(
                "at most {MAX_AUX_TASKS} auxiliary tasks, got {aux}"
            )));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].iter().any(|u| u.name == t.name) {
                return Err(Error::DuplicateTask(t.name.clone()));
            }
            if t.corpus.is_empty() {
                return Err(Error::Empty(format!("training corpus of task {}", t.name)));
            }
            t.corpus.task_index(&t.name)?;
        }
        Ok(())
    }

    pub fn main_task(&self) -> Result<&TrainingTask> {
        self.tasks
            .iter()
            .find(|t| t.role == Role::Main)
            .ok_or_else(|| Error::Config("no main task".into()))
    }

    pub fn instance_count(&self) -> usize {
        self.tasks.iter().map(|t| t.corpus.len()).sum()
    }

    fn with_main_corpus(&self, corpus: TaggedCorpus) -> Self {
        let mut out = self.clone();
        for t in &mut out.tasks {
            if t.role == Role::Main {
                t.corpus = corpus.clone();
            }
        }
        out
    }
}

/// Builds a fresh model whose vocabulary and heads come from the
/// training corpora of `config`.
pub fn build_model(model_config: &ModelConfig, config: &TrainingConfig) -> Result<Model> {
    config.validate()?;
    let vocab = Vocabulary::build(config.tasks.iter().map(|t| &t.corpus));
    let heads = config
        .tasks
        .iter()
        .map(|t| {
            Ok(TaskHead::new(
                t.name.clone(),
                t.head_layer,
                t.corpus.inventory(&t.name)?.clone(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Model::build(model_config.clone(), vocab, heads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochEntry {
    pub epoch: usize,
    pub task: String,
    /// Number of updates drawn for this task during the epoch.
    pub updates: usize,
    /// Mean summed-sentence loss; `None` if the task was never drawn.
    pub mean_loss: Option<f64>,
    /// Main-task dev micro-F1 after the epoch.
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub entries: Vec<EpochEntry>,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch\ttask\tupdates\tmean_loss\tdev_f1";

    pub fn entries_for<'a>(&'a self, task: &'a str) -> impl Iterator<Item = &'a EpochEntry> + 'a {
        self.entries.iter().filter(move |e| e.task == task)
    }

    /// Dev F1 recorded after `epoch`, if any.
    pub fn dev_f1_at(&self, epoch: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.epoch == epoch)
            .and_then(|e| e.dev_f1)
    }
}

impl fmt::Display for TrainLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.6}"));
        writeln!(f, "{}", Self::HEADER)?;
        for e in &self.entries {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}",
                e.epoch,
                e.task,
                e.updates,
                opt(e.mean_loss),
                opt(e.dev_f1)
            )?;
        }
        Ok(())
    }
}

/// Evaluates one head of `model` against the gold column of `corpus`.
pub fn evaluate_model(model: &Model, corpus: &TaggedCorpus, task: &str) -> Result<EvalReport> {
    let head = model.head(task)?;
    let gold = corpus.label_sequences(task)?;
    let pred = model.predict_corpus(corpus, task)?;
    evaluate(
        &gold,
        &pred,
        head.inventory.o_label(),
        head.inventory.scheme(),
    )
}

/// Trains `model` in place. `dev`, when given, must carry the main-task
/// column; it is only read for logging and never affects updates.
pub fn train(
    model: &mut Model,
    config: &TrainingConfig,
    dev: Option<&TaggedCorpus>,
) -> Result<TrainLog> {
    config.validate()?;
    for t in &config.tasks {
        let head = model.head(&t.name)?;
        if head.output_layer != t.head_layer {
            return Err(Error::Config(format!(
                "task {} configured at layer {} but the model head sits at layer {}",
                t.name, t.head_layer, head.output_layer
            )));
        }
    }
    let main = config.main_task()?.name.clone();
    if let Some(dev) = dev {
        dev.task_index(&main)?;
    }

    // Pre-split every sentence into words and gold labels once.
    let data = config
        .tasks
        .iter()
        .map(|t| {
            let idx = t.corpus.task_index(&t.name)?;
            Ok(t.corpus
                .sentences()
                .iter()
                .map(|s| {
                    let words: Vec<&str> = s.surfaces().collect();
                    let gold: Vec<&str> = s.labels(idx).collect();
                    (words, gold)
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;

    let total = config.instance_count();
    let mut sampler = rng::component_rng(config.seed, "sampling");
    let mut noise = rng::component_rng(config.seed, "noise");
    let mut log = TrainLog::default();
    for epoch in 1..=config.epochs {
        let mut loss_sum = vec![0.0; data.len()];
        let mut updates = vec![0usize; data.len()];
        for _ in 0..total {
            let (task, instance) = match config.sampling {
                Sampling::TaskFirst => {
                    let task = sampler.random_range(0..data.len());
                    (task, sampler.random_range(0..data[task].len()))
                }
                Sampling::Pooled => {
                    let mut i = sampler.random_range(0..total);
                    let mut task = 0;
                    while i >= data[task].len() {
                        i -= data[task].len();
                        task += 1;
                    }
                    (task, i)
                }
            };
            let (words, gold) = &data[task][instance];
            let name = &config.tasks[task].name;
            let (loss, grads) = {
                let mut tape = Tape::new(model.params());
                let loss = model.task_loss(&mut tape, words, gold, name, Some(&mut noise))?;
                (tape.value(loss).item(), tape.backward(loss)?)
            };
            sgd_step(model.params_mut(), &grads, config.learning_rate)?;
            loss_sum[task] += loss;
            updates[task] += 1;
        }
        let dev_f1 = match dev {
            Some(dev) => Some(evaluate_model(model, dev, &main)?.micro_f1_non_o),
            None => None,
        };
        for (i, t) in config.tasks.iter().enumerate() {
            log.entries.push(EpochEntry {
                epoch,
                task: t.name.clone(),
                updates: updates[i],
                mean_loss: (updates[i] > 0).then(|| loss_sum[i] / updates[i] as f64),
                dev_f1,
            });
        }
    }
    Ok(log)
}

/// Builds, trains and evaluates one model on `dev`.
pub fn train_and_evaluate(
    model_config: &ModelConfig,
    config: &TrainingConfig,
    dev: &TaggedCorpus,
) -> Result<(Model, TrainLog, EvalReport)> {
    let mut model = build_model(model_config, config)?;
    let log = train(&mut model, config, Some(dev))?;
    let report = evaluate_model(&model, dev, &config.main_task()?.name)?;
    Ok((model, log, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolPoint<K> {
    pub key: K,
    pub log: TrainLog,
    pub report: EvalReport,
}

/// Trains one model per fraction of the main-task corpus; auxiliary
/// corpora stay whole. Dev metrics per point, with no monotonicity
/// expected at small fractions.
pub fn learning_curve(
    model_config: &ModelConfig,
    config: &TrainingConfig,
    dev: &TaggedCorpus,
    fractions: &[f64],
) -> Result<Vec<ProtocolPoint<f64>>> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no learning-curve fractions".into()));
    }
    for w in fractions.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidArgument(
                "fractions must be strictly ascending".into(),
            ));
        }
    }
    config.validate()?;
    let main = config.main_task()?;
    fractions
        .iter()
        .map(|&fraction| {
            let sliced = slice_fraction(&main.corpus, fraction, config.seed)?;
            let cfg = config.with_main_corpus(sliced);
            let (_, log, report) = train_and_evaluate(model_config, &cfg, dev)?;
            Ok(ProtocolPoint {
                key: fraction,
                log,
                report,
            })
        })
        .collect()
}

/// Trains one model per hidden-width factor with identical data and seed.
pub fn capacity_sweep(
    model_config: &ModelConfig,
    config: &TrainingConfig,
    dev: &TaggedCorpus,
    factors: &[usize],
) -> Result<Vec<ProtocolPoint<usize>>> {
    if factors.is_empty() || factors.contains(&0) {
        return Err(Error::InvalidArgument(
            "width factors must be at least 1".into(),
        ));
    }
    factors
        .iter()
        .map(|&factor| {
            let mc = ModelConfig {
                width_factor: factor,
                ..model_config.clone()
            };
            let (_, log, report) = train_and_evaluate(&mc, config, dev)?;
            Ok(ProtocolPoint {
                key: factor,
                log,
                report,
            })
        })
        .collect()
}
