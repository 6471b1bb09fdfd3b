//! `seqmtl` command-line driver.
//!
//! Failures print one line `error<TAB>kind<TAB>message` on stderr and exit
//! with status 1; argument errors use the kind `usage` and status 2.

mod synth;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqmtl::auxgen::{apply_freqbin, fit_freqbin, FreqBinVariant, DEFAULT_UNIFORM_K};
use seqmtl::corpus::{read_conll, word_frequencies, write_conll, ColumnSpec, TaggedCorpus};
use seqmtl::diagnostics::{
    dataset_stats, label_distribution, trigram_frequency_probe, DEFAULT_PROBE_FOLDS,
    DEFAULT_RIDGE_STRENGTH,
};
use seqmtl::evaluation::{bootstrap_significance, evaluate, BOOTSTRAP_ITERATIONS};
use seqmtl::experiment::{
    compare_pos_sources, run_capacity_sweep, run_experiment, run_grid, run_learning_curve,
    ExperimentConfig,
};
use seqmtl::training::LEARNING_CURVE_FRACTIONS;
use seqmtl::{Error, Result};

#[derive(Parser)]
#[command(
    name = "seqmtl",
    version,
    about = "Multi-task sequence labeling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label-distribution statistics and the trigram frequency probe.
    Diagnose(DiagnoseArgs),
    /// Fit a frequency-bin spec on a training corpus, optionally apply it.
    Freqbin(FreqbinArgs),
    /// Train and evaluate one experiment config.
    Train(ExperimentArgs),
    /// Score a prediction column against gold labels.
    Evaluate(EvaluateArgs),
    /// Paired bootstrap test between two prediction columns.
    Significance(SignificanceArgs),
    /// Baseline plus every auxiliary combination of a config.
    Grid(GridArgs),
    /// Dev scores over growing slices of the main-task training data.
    LearningCurve(CurveArgs),
    /// Dev scores over hidden-width factors.
    CapacitySweep(SweepArgs),
    /// One system per auxiliary source, each against one baseline.
    ComparePos(CompareArgs),
    /// Write synthetic desk-scale corpora and a demo config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Column {
    /// Zero-based column holding the token (1 for CoNLL-U).
    #[arg(long, default_value_t = 0)]
    token_column: usize,
}

#[derive(Args)]
struct OLabelArgs {
    /// Out-of-span label; defaults to `O` when present.
    #[arg(long, conflicts_with = "no_o")]
    o_label: Option<String>,
    /// Treat every label as in-span.
    #[arg(long)]
    no_o: bool,
}

impl OLabelArgs {
    fn apply(&self, corpus: &mut TaggedCorpus, task: &str) -> Result<()> {
        if self.no_o {
            corpus.set_o_label(task, None)
        } else if let Some(o) = &self.o_label {
            corpus.set_o_label(task, Some(o))
        } else {
            Ok(())
        }
    }
}

#[derive(Args)]
struct DiagnoseArgs {
    input: PathBuf,
    #[arg(long)]
    label_column: usize,
    #[command(flatten)]
    column: Column,
    #[command(flatten)]
    o: OLabelArgs,
    #[arg(long, default_value_t = DEFAULT_PROBE_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_RIDGE_STRENGTH)]
    ridge: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Skip the regression probe.
    #[arg(long)]
    no_probe: bool,
}

#[derive(Args)]
struct FreqbinArgs {
    /// Training corpus whose word frequencies define the bins.
    train: PathBuf,
    #[command(flatten)]
    column: Column,
    #[arg(long, default_value_t = FreqBinVariant::Uniform)]
    variant: FreqBinVariant,
    /// Quantile count of the uniform variant (default 5).
    #[arg(long)]
    k: Option<usize>,
    /// Where to write the spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Corpus to label with the fitted bins.
    #[arg(long, requires = "output")]
    apply: Option<PathBuf>,
    /// Label column of `--apply` kept next to the bins, if any.
    #[arg(long)]
    apply_label_column: Option<usize>,
    /// Output of `--apply`: token, [kept label], bin.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(o) = &self.output {
            config.output = Some(o.clone());
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(e) = self.epochs {
            config.epochs = e;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct EvaluateArgs {
    gold: PathBuf,
    #[arg(long)]
    gold_column: usize,
    /// Prediction file; defaults to the gold file.
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    pred_column: usize,
    #[command(flatten)]
    column: Column,
    #[command(flatten)]
    o: OLabelArgs,
}

#[derive(Args)]
struct SignificanceArgs {
    gold: PathBuf,
    #[arg(long)]
    gold_column: usize,
    #[arg(long)]
    pred_a: PathBuf,
    #[arg(long)]
    pred_a_column: usize,
    #[arg(long)]
    pred_b: PathBuf,
    #[arg(long)]
    pred_b_column: usize,
    #[command(flatten)]
    column: Column,
    #[command(flatten)]
    o: OLabelArgs,
    #[arg(long, default_value_t = BOOTSTRAP_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Layers for the auxiliary heads.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3])]
    layers: Vec<usize>,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_values_t = LEARNING_CURVE_FRACTIONS)]
    fractions: Vec<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    factors: Vec<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, default_value_t = 1)]
    layer: usize,
}

#[derive(Args)]
struct SynthArgs {
    dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 120)]
    train: usize,
    #[arg(long, default_value_t = 40)]
    dev: usize,
    #[arg(long, default_value_t = 40)]
    test: usize,
    #[arg(long, default_value_t = 120)]
    aux: usize,
}

fn read_column(
    path: &Path,
    token_column: usize,
    label_column: usize,
    task: &str,
) -> Result<TaggedCorpus> {
    read_conll(
        path,
        &ColumnSpec::new([(label_column, task)]).with_token_column(token_column),
    )
}

fn diagnose(a: &DiagnoseArgs) -> Result<String> {
    let mut corpus = read_column(&a.input, a.column.token_column, a.label_column, "task")?;
    a.o.apply(&mut corpus, "task")?;
    let stats = dataset_stats(&corpus, "task", None)?;
    let mut out = stats.to_string();
    for (label, count) in label_distribution(&corpus, "task")? {
        out.push_str(&format!("count.{label}\t{count}\n"));
    }
    if !a.no_probe {
        let probe = trigram_frequency_probe(&corpus, "task", a.folds, a.ridge, a.seed)?;
        out.push_str(&format!("probe_r2_mean\t{:.6}\n", probe.r_squared_mean));
        out.push_str(&format!(
            "probe_train_r2_mean\t{:.6}\n",
            probe.train_r_squared_mean()
        ));
        out.push_str(&format!("probe_samples\t{}\n", probe.n_samples));
    }
    Ok(out)
}

fn freqbin(a: &FreqbinArgs) -> Result<String> {
    let train = read_conll(
        &a.train,
        &ColumnSpec::new::<String>([]).with_token_column(a.column.token_column),
    )?;
    let k =
        a.k.or((a.variant == FreqBinVariant::Uniform).then_some(DEFAULT_UNIFORM_K));
    let spec = fit_freqbin(&word_frequencies(&train), a.variant, k)?;
    if let Some(path) = &a.spec {
        std::fs::write(path, spec.to_text()).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    if let (Some(input), Some(output)) = (&a.apply, &a.output) {
        let columns: Vec<(usize, &str)> = a
            .apply_label_column
            .map(|c| (c, "label"))
            .into_iter()
            .collect();
        let corpus = read_conll(
            input,
            &ColumnSpec::new(columns).with_token_column(a.column.token_column),
        )?;
        write_conll(&apply_freqbin(&spec, &corpus, "freqbin")?, output)?;
    }
    let derived = apply_freqbin(&spec, &train, "freqbin")?;
    let mut out = format!(
        "variant\t{}\nlabels\t{}\nrealized\t{}\n",
        spec.variant(),
        spec.labels().len(),
        spec.realized_label_count()
    );
    for (label, count) in label_distribution(&derived, "freqbin")? {
        out.push_str(&format!("count.{label}\t{count}\n"));
    }
    Ok(out)
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<String> {
    let t = a.column.token_column;
    let mut gold = read_column(&a.gold, t, a.gold_column, "gold")?;
    a.o.apply(&mut gold, "gold")?;
    let pred = read_column(a.pred.as_ref().unwrap_or(&a.gold), t, a.pred_column, "pred")?;
    let inv = gold.inventory("gold")?;
    let report = evaluate(
        &gold.label_sequences("gold")?,
        &pred.label_sequences("pred")?,
        inv.o_label(),
        inv.scheme(),
    )?;
    Ok(report.to_string())
}

fn significance(a: &SignificanceArgs) -> Result<String> {
    let t = a.column.token_column;
    let mut gold = read_column(&a.gold, t, a.gold_column, "gold")?;
    a.o.apply(&mut gold, "gold")?;
    let pa = read_column(&a.pred_a, t, a.pred_a_column, "a")?.label_sequences("a")?;
    let pb = read_column(&a.pred_b, t, a.pred_b_column, "b")?.label_sequences("b")?;
    let gold_labels = gold.label_sequences("gold")?;
    for (g, (x, y)) in gold_labels.iter().zip(pa.iter().zip(&pb)) {
        if g.len() != x.len() || g.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: g.len(),
                right: if g.len() != x.len() { x.len() } else { y.len() },
            });
        }
    }
    let result = bootstrap_significance(
        &gold_labels,
        &pa,
        &pb,
        gold.inventory("gold")?.o_label(),
        a.iterations,
        a.seed,
    )?;
    Ok(result.to_string())
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Diagnose(a) => diagnose(&a),
        Command::Freqbin(a) => freqbin(&a),
        Command::Train(a) => Ok(run_experiment(&a.load()?)?.report_text()),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Significance(a) => significance(&a),
        Command::Grid(a) => {
            let table = run_grid(&a.experiment.load()?, &a.layers)?;
            Ok(format!("{}\n{}", table.to_tsv(), table.summary_tsv()))
        }
        Command::LearningCurve(a) => {
            let points = run_learning_curve(&a.experiment.load()?, &a.fractions)?;
            Ok(seqmtl::experiment::protocol_tsv("fraction", &points))
        }
        Command::CapacitySweep(a) => {
            let points = run_capacity_sweep(&a.experiment.load()?, &a.factors)?;
            Ok(seqmtl::experiment::protocol_tsv("width_factor", &points))
        }
        Command::ComparePos(a) => {
            let table = compare_pos_sources(&a.experiment.load()?, a.layer)?;
            Ok(table.to_tsv())
        }
        Command::Synth(a) => {
            let sizes = synth::SynthSizes {
                train: a.train,
                dev: a.dev,
                test: a.test,
                aux: a.aux,
            };
            synth::write_demo(&a.dir, a.seed, sizes)?;
            Ok(format!("config\t{}\n", a.dir.join("demo.ini").display()))
        }
    }
}

fn one_line(message: &str) -> String {
    message.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let head = text.split("\n\nUsage:").next().unwrap_or("");
            eprintln!(
                "error\tusage\t{}",
                one_line(head.trim_start_matches("error: "))
            );
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error\t{}\t{}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
