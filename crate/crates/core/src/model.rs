//! Hierarchical multi-task bi-LSTM tagger.
//!
//! Each word is represented by its embedding, optionally concatenated
//! with the final forward and backward states of a character-level
//! bi-LSTM. During training Gaussian noise is added to that input vector.
//! A stack of bidirectional LSTM layers follows; layer `l` reads the
//! concatenated forward/backward outputs of layer `l - 1`. Every task has
//! its own softmax head attached to one layer of the stack.
//!
//! LSTM cells use input, forget and output sigmoid gates and a tanh
//! candidate, with one fused weight matrix `[4H, I + H]` in gate order
//! input, forget, output, candidate. The forget-gate bias starts at 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::corpus::{LabelInventory, Scheme, TaggedCorpus};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub word_emb_dim: usize,
    pub char_emb_dim: usize,
    pub char_hidden_dim: usize,
    /// Per direction, before `width_factor`.
    pub hidden_dim: usize,
    pub context_layers: usize,
    pub noise_sigma: f64,
    pub use_char: bool,
    pub width_factor: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_emb_dim: 64,
            char_emb_dim: 100,
            char_hidden_dim: 100,
            hidden_dim: 100,
            context_layers: 3,
            noise_sigma: 0.2,
            use_char: true,
            width_factor: 1,
            seed: 1,
        }
    }
}

fn lstm_param_count(input: usize, hidden: usize) -> usize {
    4 * hidden * (input + hidden) + 4 * hidden
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("word_emb_dim", self.word_emb_dim),
            ("hidden_dim", self.hidden_dim),
            ("context_layers", self.context_layers),
            ("width_factor", self.width_factor),
        ];
        let char_dims = [
            ("char_emb_dim", self.char_emb_dim),
            ("char_hidden_dim", self.char_hidden_dim),
        ];
        for (name, v) in dims
            .iter()
            .chain(if self.use_char { &char_dims[..] } else { &[] })
        {
            if *v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Hidden size per direction in the context stack.
    pub fn context_hidden(&self) -> usize {
        self.hidden_dim * self.width_factor
    }

    /// Width of the per-token vector fed to the first context layer.
    pub fn input_dim(&self) -> usize {
        if self.use_char {
            self.word_emb_dim + 2 * self.char_hidden_dim
        } else {
            self.word_emb_dim
        }
    }

    /// Closed-form number of scalar parameters.
    ///
    /// With `H = hidden_dim · width_factor`, `L(I, H) = 4H(I + H) + 4H`:
    /// `V_w·E_w + [V_c·E_c + 2L(E_c, H_c)] + 2L(D, H) + (layers − 1)·2L(2H, H)
    /// + Σ_heads |Y|(2H + 1)`.
    pub fn parameter_count(
        &self,
        word_vocab: usize,
        char_vocab: usize,
        head_sizes: &[usize],
    ) -> usize {
        let h = self.context_hidden();
        let mut n = word_vocab * self.word_emb_dim;
        if self.use_char {
            n += char_vocab * self.char_emb_dim
                + 2 * lstm_param_count(self.char_emb_dim, self.char_hidden_dim);
        }
        n += 2 * lstm_param_count(self.input_dim(), h);
        n += (self.context_layers - 1) * 2 * lstm_param_count(2 * h, h);
        n += head_sizes.iter().map(|y| y * (2 * h + 1)).sum::<usize>();
        n
    }

    pub(crate) fn to_text(&self) -> String {
        format!(
            "word_emb_dim\t{}\nchar_emb_dim\t{}\nchar_hidden_dim\t{}\nhidden_dim\t{}\ncontext_layers\t{}\n\
             noise_sigma\t{:?}\nuse_char\t{}\nwidth_factor\t{}\nseed\t{}\n",
            self.word_emb_dim,
            self.char_emb_dim,
            self.char_hidden_dim,
            self.hidden_dim,
            self.context_layers,
            self.noise_sigma,
            self.use_char,
            self.width_factor,
            self.seed
        )
    }

    pub(crate) fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        fn p<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        match key {
            "word_emb_dim" => self.word_emb_dim = p(value)?,
            "char_emb_dim" => self.char_emb_dim = p(value)?,
            "char_hidden_dim" => self.char_hidden_dim = p(value)?,
            "hidden_dim" => self.hidden_dim = p(value)?,
            "context_layers" => self.context_layers = p(value)?,
            "noise_sigma" => self.noise_sigma = p(value)?,
            "use_char" => self.use_char = p(value)?,
            "width_factor" => self.width_factor = p(value)?,
            "seed" => self.seed = p(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

const MAX_SIDECAR_DIM: usize = 1 << 12;
const MAX_SIDECAR_PARAMS: usize = 1 << 26;

/// Word and character indices; index 0 is the unknown entry of each.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: BTreeMap<String, usize>,
    chars: BTreeMap<char, usize>,
}

impl Vocabulary {
    pub const UNKNOWN: usize = 0;

    /// Builds from training corpora only.
    pub fn build<'a>(corpora: impl IntoIterator<Item = &'a TaggedCorpus>) -> Self {
        let mut words = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for corpus in corpora {
            for w in corpus.sentences().iter().flat_map(|s| s.surfaces()) {
                chars.extend(w.chars());
                words.insert(w.to_owned());
            }
        }
        Self::from_parts(words, chars)
    }

    fn from_parts(words: BTreeSet<String>, chars: BTreeSet<char>) -> Self {
        Vocabulary {
            words: words
                .into_iter()
                .enumerate()
                .map(|(i, w)| (w, i + 1))
                .collect(),
            chars: chars
                .into_iter()
                .enumerate()
                .map(|(i, c)| (c, i + 1))
                .collect(),
        }
    }

    /// Size including the unknown entry.
    pub fn word_count(&self) -> usize {
        self.words.len() + 1
    }

    pub fn char_count(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn word_index(&self, word: &str) -> usize {
        self.words.get(word).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn char_index(&self, c: char) -> usize {
        self.chars.get(&c).copied().unwrap_or(Self::UNKNOWN)
    }
}

/// One task's output layer declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub task: String,
    /// 1-based layer of the context stack the softmax reads from.
    pub output_layer: usize,
    pub inventory: LabelInventory,
}

impl TaskHead {
    pub fn new(task: impl Into<String>, output_layer: usize, inventory: LabelInventory) -> Self {
        TaskHead {
            task: task.into(),
            output_layer,
            inventory,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LstmParams {
    weight: ParamId,
    bias: ParamId,
    hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BiLstm {
    forward: LstmParams,
    backward: LstmParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeadParams {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CharEncoder {
    embedding: ParamId,
    lstm: BiLstm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    vocab: Vocabulary,
    heads: Vec<TaskHead>,
    params: ParamStore,
    word_embedding: ParamId,
    chars: Option<CharEncoder>,
    context: Vec<BiLstm>,
    head_params: Vec<HeadParams>,
}

fn glorot(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let fan: usize = match shape {
        [r, c] => r + c,
        [n] => 2 * n,
        _ => 2,
    };
    let bound = (6.0 / fan as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
    )
    .expect("shape and data agree")
}

fn new_lstm(
    params: &mut ParamStore,
    rng: &mut Rng,
    name: &str,
    input: usize,
    hidden: usize,
) -> LstmParams {
    let weight = params.add(
        format!("{name}.weight"),
        glorot(rng, &[4 * hidden, input + hidden]),
    );
    let mut b = vec![0.0; 4 * hidden];
    b[hidden..2 * hidden].fill(1.0);
    let bias = params.add(format!("{name}.bias"), Tensor::vector(b));
    LstmParams {
        weight,
        bias,
        hidden,
    }
}

fn new_bilstm(
    params: &mut ParamStore,
    rng: &mut Rng,
    name: &str,
    input: usize,
    hidden: usize,
) -> BiLstm {
    BiLstm {
        forward: new_lstm(params, rng, &format!("{name}.fwd"), input, hidden),
        backward: new_lstm(params, rng, &format!("{name}.bwd"), input, hidden),
    }
}

/// Parameters bound to tape nodes, one node per parameter per tape.
struct Bound {
    vars: Vec<Option<Var>>,
}

impl Bound {
    fn new(n: usize) -> Self {
        Bound {
            vars: vec![None; n],
        }
    }

    fn get(&mut self, tape: &mut Tape<'_>, id: ParamId) -> Var {
        *self.vars[id.index()].get_or_insert_with(|| tape.param(id))
    }
}

/// Per-layer hidden sequences of one sentence; `layers[l - 1][t]` is the
/// concatenated forward/backward state of token `t` at layer `l`.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub inputs: Vec<Var>,
    pub layers: Vec<Vec<Var>>,
}

impl Model {
    pub fn build(config: ModelConfig, vocab: Vocabulary, heads: Vec<TaskHead>) -> Result<Self> {
        config.validate()?;
        if heads.is_empty() {
            return Err(Error::Config("model needs at least one task head".into()));
        }
        let mut seen = BTreeSet::new();
        for head in &heads {
            if !seen.insert(head.task.as_str()) {
                return Err(Error::DuplicateTask(head.task.clone()));
            }
            if head.output_layer == 0 || head.output_layer > config.context_layers {
                return Err(Error::Config(format!(
                    "head `{}` at layer {} outside 1..={}",
                    head.task, head.output_layer, config.context_layers
                )));
            }
            if head.inventory.is_empty() {
                return Err(Error::Config(format!(
                    "head `{}` has an empty inventory",
                    head.task
                )));
            }
        }

        let mut rng = rng::component_rng(config.seed, "init");
        let mut params = ParamStore::new();
        let word_embedding = params.add(
            "word_embedding",
            glorot(&mut rng, &[vocab.word_count(), config.word_emb_dim]),
        );
        let chars = config.use_char.then(|| CharEncoder {
            embedding: params.add(
                "char_embedding",
                glorot(&mut rng, &[vocab.char_count(), config.char_emb_dim]),
            ),
            lstm: new_bilstm(
                &mut params,
                &mut rng,
                "char",
                config.char_emb_dim,
                config.char_hidden_dim,
            ),
        });
        let h = config.context_hidden();
        let context = (0..config.context_layers)
            .map(|l| {
                let input = if l == 0 { config.input_dim() } else { 2 * h };
                new_bilstm(
                    &mut params,
                    &mut rng,
                    &format!("context{}", l + 1),
                    input,
                    h,
                )
            })
            .collect();
        let head_params = heads
            .iter()
            .map(|head| HeadParams {
                weight: params.add(
                    format!("head.{}.weight", head.task),
                    glorot(&mut rng, &[head.inventory.len(), 2 * h]),
                ),
                bias: params.add(
                    format!("head.{}.bias", head.task),
                    Tensor::zeros(&[head.inventory.len()]),
                ),
            })
            .collect();
        Ok(Model {
            config,
            vocab,
            heads,
            params,
            word_embedding,
            chars,
            context,
            head_params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn heads(&self) -> &[TaskHead] {
        &self.heads
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn head_index(&self, task: &str) -> Result<usize> {
        self.heads
            .iter()
            .position(|h| h.task == task)
            .ok_or_else(|| Error::UnknownTask(task.to_owned()))
    }

    pub fn head(&self, task: &str) -> Result<&TaskHead> {
        Ok(&self.heads[self.head_index(task)?])
    }

    /// Softmax projection parameters (weight, bias) of a head.
    pub fn head_param_ids(&self, task: &str) -> Result<(ParamId, ParamId)> {
        let p = self.head_params[self.head_index(task)?];
        Ok((p.weight, p.bias))
    }

    /// Parameters of context layer `layer` (1-based), both directions.
    pub fn layer_param_ids(&self, layer: usize) -> Vec<ParamId> {
        let l = &self.context[layer - 1];
        vec![
            l.forward.weight,
            l.forward.bias,
            l.backward.weight,
            l.backward.bias,
        ]
    }

    /// Parameters shared by every task: embeddings, character encoder and
    /// the first context layer.
    pub fn shared_param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.word_embedding];
        if let Some(c) = &self.chars {
            ids.extend([
                c.embedding,
                c.lstm.forward.weight,
                c.lstm.forward.bias,
                c.lstm.backward.weight,
                c.lstm.backward.bias,
            ]);
        }
        ids.extend(self.layer_param_ids(1));
        ids
    }

    fn lstm_step(
        &self,
        tape: &mut Tape<'_>,
        bound: &mut Bound,
        p: LstmParams,
        x: Var,
        state: (Var, Var),
    ) -> Result<(Var, Var)> {
        let (h_prev, c_prev) = state;
        let w = bound.get(tape, p.weight);
        let b = bound.get(tape, p.bias);
        let xh = tape.concat(&[x, h_prev])?;
        let z = tape.matmul(w, xh)?;
        let z = tape.add(z, b)?;
        let hd = p.hidden;
        let i = tape.slice(z, 0, hd)?;
        let f = tape.slice(z, hd, hd)?;
        let o = tape.slice(z, 2 * hd, hd)?;
        let g = tape.slice(z, 3 * hd, hd)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let o = tape.sigmoid(o);
        let g = tape.tanh(g);
        let keep = tape.hadamard(f, c_prev)?;
        let write = tape.hadamard(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.hadamard(o, tc)?;
        Ok((h, c))
    }

    /// Hidden states of one direction, in input order.
    fn run_lstm(
        &self,
        tape: &mut Tape<'_>,
        bound: &mut Bound,
        p: LstmParams,
        xs: &[Var],
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let zero = tape.constant(Tensor::zeros(&[p.hidden]));
        let mut state = (zero, zero);
        let mut out = vec![zero; xs.len()];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..xs.len()).rev())
        } else {
            Box::new(0..xs.len())
        };
        for t in order {
            state = self.lstm_step(tape, bound, p, xs[t], state)?;
            out[t] = state.0;
        }
        Ok(out)
    }

    fn run_bilstm(
        &self,
        tape: &mut Tape<'_>,
        bound: &mut Bound,
        l: BiLstm,
        xs: &[Var],
    ) -> Result<Vec<Var>> {
        let fwd = self.run_lstm(tape, bound, l.forward, xs, false)?;
        let bwd = self.run_lstm(tape, bound, l.backward, xs, true)?;
        fwd.iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat(&[f, b]))
            .collect()
    }

    fn char_features(
        &self,
        tape: &mut Tape<'_>,
        bound: &mut Bound,
        enc: CharEncoder,
        word: &str,
    ) -> Result<Var> {
        let xs = word
            .chars()
            .map(|c| tape.lookup(enc.embedding, self.vocab.char_index(c)))
            .collect::<Result<Vec<_>>>()?;
        let fwd = self.run_lstm(tape, bound, enc.lstm.forward, &xs, false)?;
        let bwd = self.run_lstm(tape, bound, enc.lstm.backward, &xs, true)?;
        tape.concat(&[*fwd.last().expect("non-empty word"), bwd[0]])
    }

    fn encode_bound(
        &self,
        tape: &mut Tape<'_>,
        bound: &mut Bound,
        words: &[&str],
        mut noise: Option<&mut Rng>,
        up_to_layer: usize,
    ) -> Result<Encoding> {
        if words.is_empty() {
            return Err(Error::Empty("sentence".into()));
        }
        let normal = Normal::new(0.0, self.config.noise_sigma)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        let mut inputs = Vec::with_capacity(words.len());
        for word in words {
            if word.is_empty() {
                return Err(Error::Empty("token surface".into()));
            }
            let emb = tape.lookup(self.word_embedding, self.vocab.word_index(word))?;
            let mut x = match self.chars {
                Some(enc) => {
                    let c = self.char_features(tape, bound, enc, word)?;
                    tape.concat(&[emb, c])?
                }
                None => emb,
            };
            if let Some(rng) = noise.as_deref_mut() {
                if self.config.noise_sigma > 0.0 {
                    let n = self.config.input_dim();
                    let eps =
                        tape.constant(Tensor::vector((0..n).map(|_| normal.sample(rng)).collect()));
                    x = tape.add(x, eps)?;
                }
            }
            inputs.push(x);
        }
        let mut layers: Vec<Vec<Var>> = Vec::with_capacity(up_to_layer);
        for l in 0..up_to_layer {
            let below = if l == 0 { &inputs } else { &layers[l - 1] };
            let below = below.clone();
            layers.push(self.run_bilstm(tape, bound, self.context[l], &below)?);
        }
        Ok(Encoding { inputs, layers })
    }

    /// Runs the character encoder and the context stack. With `noise`,
    /// the per-token input vectors are perturbed (training mode).
    pub fn encode_sentence<'m>(
        &'m self,
        tape: &mut Tape<'m>,
        words: &[&str],
        noise: Option<&mut Rng>,
    ) -> Result<Encoding> {
        let mut bound = Bound::new(self.params.len());
        self.encode_bound(tape, &mut bound, words, noise, self.config.context_layers)
    }

    fn logits_bound(
        &self,
        tape: &mut Tape<'_>,
        bound: &mut Bound,
        words: &[&str],
        head: usize,
        noise: Option<&mut Rng>,
    ) -> Result<Vec<Var>> {
        let layer = self.heads[head].output_layer;
        let enc = self.encode_bound(tape, bound, words, noise, layer)?;
        let hp = self.head_params[head];
        let w = bound.get(tape, hp.weight);
        let b = bound.get(tape, hp.bias);
        enc.layers[layer - 1]
            .iter()
            .map(|&h| {
                let z = tape.matmul(w, h)?;
                tape.add(z, b)
            })
            .collect()
    }

    /// Per-token logits of one head (pre-softmax).
    pub fn logits<'m>(
        &'m self,
        tape: &mut Tape<'m>,
        words: &[&str],
        task: &str,
    ) -> Result<Vec<Var>> {
        let head = self.head_index(task)?;
        let mut bound = Bound::new(self.params.len());
        self.logits_bound(tape, &mut bound, words, head, None)
    }

    /// Summed token cross-entropy of `gold` under one head.
    pub fn task_loss<'m>(
        &'m self,
        tape: &mut Tape<'m>,
        words: &[&str],
        gold: &[&str],
        task: &str,
        noise: Option<&mut Rng>,
    ) -> Result<Var> {
        if words.len() != gold.len() {
            return Err(Error::LengthMismatch {
                left: words.len(),
                right: gold.len(),
            });
        }
        let head = self.head_index(task)?;
        let inventory = &self.heads[head].inventory;
        let targets = gold
            .iter()
            .map(|g| {
                inventory
                    .index_of(g)
                    .ok_or_else(|| Error::LabelNotInInventory {
                        task: task.to_owned(),
                        label: (*g).to_owned(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bound = Bound::new(self.params.len());
        let logits = self.logits_bound(tape, &mut bound, words, head, noise)?;
        let losses = logits
            .iter()
            .zip(&targets)
            .map(|(&z, &y)| tape.cross_entropy(z, y))
            .collect::<Result<Vec<_>>>()?;
        tape.sum(&losses)
    }

    /// Greedy per-token argmax; ties go to the lowest label index.
    pub fn predict(&self, words: &[&str], task: &str) -> Result<Vec<String>> {
        let head = self.head_index(task)?;
        let mut tape = Tape::new(&self.params);
        let logits = self.logits(&mut tape, words, task)?;
        let inventory = &self.heads[head].inventory;
        Ok(logits
            .iter()
            .map(|&z| inventory.label(tape.value(z).argmax()).to_owned())
            .collect())
    }

    /// Predictions for every sentence of a corpus.
    pub fn predict_corpus(&self, corpus: &TaggedCorpus, task: &str) -> Result<Vec<Vec<String>>> {
        corpus
            .sentences()
            .iter()
            .map(|s| self.predict(&s.surfaces().collect::<Vec<_>>(), task))
            .collect()
    }

    /// Plain-text sidecar describing config, vocabulary and heads.
    pub fn sidecar_text(&self) -> String {
        let mut out = String::from("[config]\n");
        out.push_str(&self.config.to_text());
        out.push_str("[heads]\n");
        for head in &self.heads {
            let scheme = match head.inventory.scheme() {
                Scheme::Bio => "bio",
                Scheme::Plain => "plain",
                Scheme::None => "none",
            };
            let _ = writeln!(
                out,
                "head\t{}\t{}\t{}\t{}",
                head.task,
                head.output_layer,
                scheme,
                head.inventory.o_label().unwrap_or("")
            );
            for label in head.inventory.labels() {
                let _ = writeln!(out, "label\t{}\t{}", head.task, label);
            }
        }
        out.push_str("[vocab]\n");
        for w in self.vocab.words.keys() {
            let _ = writeln!(out, "word\t{w}");
        }
        for c in self.vocab.chars.keys() {
            let _ = writeln!(out, "char\t{}", *c as u32);
        }
        out
    }

    /// Rebuilds an untrained model with the architecture a sidecar describes.
    pub fn from_sidecar(text: &str) -> Result<Self> {
        let mut config = ModelConfig::default();
        let mut section = "";
        let mut heads: Vec<(String, usize, String)> = Vec::new();
        let mut labels: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut words = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = match &line[1..line.len() - 1] {
                    s @ ("config" | "heads" | "vocab") => s,
                    s => return Err(Error::parse(line_no, format!("unknown section `{s}`"))),
                };
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match (section, fields.as_slice()) {
                ("config", [key, value]) => {
                    if !config
                        .set(key, value)
                        .map_err(|m| Error::parse(line_no, m))?
                    {
                        return Err(Error::parse(line_no, format!("unknown config key `{key}`")));
                    }
                }
                ("heads", ["head", task, layer, _scheme, o]) => {
                    let layer = layer
                        .parse()
                        .map_err(|_| Error::parse(line_no, "bad head layer"))?;
                    heads.push(((*task).to_owned(), layer, (*o).to_owned()));
                }
                ("heads", ["label", task, label]) if !label.is_empty() => {
                    labels
                        .entry((*task).to_owned())
                        .or_default()
                        .push((*label).to_owned());
                }
                ("vocab", ["word", w]) if !w.is_empty() => {
                    words.insert((*w).to_owned());
                }
                ("vocab", ["char", code]) => {
                    let c = code
                        .parse::<u32>()
                        .ok()
                        .and_then(char::from_u32)
                        .ok_or_else(|| Error::parse(line_no, "bad char code"))?;
                    chars.insert(c);
                }
                _ => return Err(Error::parse(line_no, "unexpected line")),
            }
        }
        // Rebuilding allocates every parameter, so refuse absurd sizes
        // before doing so. The dimension cap keeps the count below from
        // overflowing.
        config.validate()?;
        let dims = [
            config.word_emb_dim,
            config.char_emb_dim,
            config.char_hidden_dim,
            config.hidden_dim.saturating_mul(config.width_factor),
            config.context_layers,
        ];
        let head_sizes: Vec<usize> = heads
            .iter()
            .map(|(t, _, _)| labels.get(t).map_or(0, Vec::len))
            .collect();
        if dims.iter().any(|&d| d > MAX_SIDECAR_DIM)
            || config.parameter_count(words.len() + 1, chars.len() + 1, &head_sizes)
                > MAX_SIDECAR_PARAMS
        {
            return Err(Error::Config(
                "model described by sidecar is too large".into(),
            ));
        }
        let heads = heads
            .into_iter()
            .map(|(task, layer, o)| {
                let inv = LabelInventory::from_labels(labels.remove(&task).unwrap_or_default());
                let inv = if o.is_empty() {
                    if inv.o_label().is_some() {
                        inv.with_o_label(None)?
                    } else {
                        inv
                    }
                } else {
                    inv.with_o_label(Some(&o))?
                };
                Ok(TaskHead::new(task, layer, inv))
            })
            .collect::<Result<Vec<_>>>()?;
        Model::build(config, Vocabulary::from_parts(words, chars), heads)
    }

    /// Writes `<prefix>.params` and `<prefix>.model`.
    pub fn save(&self, prefix: impl AsRef<Path>) -> Result<()> {
        let prefix = prefix.as_ref();
        self.params.save(prefix.with_extension("params"))?;
        let meta = prefix.with_extension("model");
        std::fs::write(&meta, self.sidecar_text()).map_err(|e| Error::io(&meta, e))
    }

    pub fn load(prefix: impl AsRef<Path>) -> Result<Self> {
        let prefix = prefix.as_ref();
        let meta = prefix.with_extension("model");
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let mut model = Model::from_sidecar(&text)?;
        model.params.load(prefix.with_extension("params"))?;
        Ok(model)
    }
}
