//! Multi-label classifier for the explanation categories.
//!
//! Text goes through a tokenizer and a TF-IDF featurizer into a small dense
//! network (ReLU hidden layers, sigmoid outputs) trained with Adam on mean
//! binary cross-entropy, with early stopping on validation loss.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelTable;
use crate::rubric::{CategoryId, CategoryVector};

/// Bumped whenever the model file layout changes.
pub const FORMAT_VERSION: u32 = 1;

pub const LABEL_IDS: [u16; 8] = [14, 15, 16, 17, 18, 19, 20, 21];
pub const N_LABELS: usize = LABEL_IDS.len();

pub fn label_ids() -> Vec<CategoryId> {
    LABEL_IDS.iter().map(|&i| CategoryId(i)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub max_len: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer { max_len: 128 }
    }
}

impl Tokenizer {
    /// Lowercased maximal alphanumeric runs, at most `max_len` of them.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .take(self.max_len)
            .map(str::to_string)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct FeaturizerRepr {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    min_df: usize,
}

/// TF-IDF over a fixed vocabulary; rows are L2-normalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeaturizerRepr", into = "FeaturizerRepr")]
pub struct Featurizer {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    min_df: usize,
    index: HashMap<String, usize>,
}

impl TryFrom<FeaturizerRepr> for Featurizer {
    type Error = Error;

    fn try_from(r: FeaturizerRepr) -> Result<Self> {
        if r.vocabulary.len() != r.idf.len() {
            return Err(Error::VersionMismatch(format!(
                "featurizer has {} terms but {} idf weights",
                r.vocabulary.len(),
                r.idf.len()
            )));
        }
        let index: HashMap<String, usize> = r.vocabulary.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        if index.len() != r.vocabulary.len() {
            return Err(Error::VersionMismatch(
                "featurizer vocabulary has duplicate terms".into(),
            ));
        }
        Ok(Featurizer {
            vocabulary: r.vocabulary,
            idf: r.idf,
            min_df: r.min_df,
            index,
        })
    }
}

impl From<Featurizer> for FeaturizerRepr {
    fn from(f: Featurizer) -> Self {
        FeaturizerRepr {
            vocabulary: f.vocabulary,
            idf: f.idf,
            min_df: f.min_df,
        }
    }
}

impl Featurizer {
    /// Vocabulary in first-appearance order over terms with document
    /// frequency >= `min_df`; `idf = ln((1 + N) / (1 + df)) + 1`.
    pub fn fit(docs: &[Vec<String>], min_df: usize) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut order: Vec<&str> = Vec::new();
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
            for t in doc {
                if !df.contains_key(t.as_str()) {
                    order.push(t);
                    df.insert(t, 0);
                }
            }
            for t in unique {
                *df.get_mut(t).expect("inserted above") += 1;
            }
        }
        let n = docs.len() as f64;
        let vocabulary: Vec<String> = order
            .into_iter()
            .filter(|t| df[t] >= min_df)
            .map(str::to_string)
            .collect();
        if vocabulary.is_empty() {
            return Err(Error::EmptyVocabulary(min_df));
        }
        let idf = vocabulary
            .iter()
            .map(|t| ((1.0 + n) / (1.0 + df[t.as_str()] as f64)).ln() + 1.0)
            .collect();
        FeaturizerRepr {
            vocabulary,
            idf,
            min_df,
        }
        .try_into()
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// All-zero when no token is in the vocabulary.
    pub fn transform(&self, tokens: &[String]) -> Vec<f64> {
        let mut row = vec![0.0; self.dim()];
        for t in tokens {
            if let Some(&j) = self.index.get(t) {
                row[j] += self.idf[j];
            }
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
        row
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub hidden_sizes: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden_sizes: vec![64],
            dropout_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub patience: usize,
    pub seed: u64,
    pub min_df: usize,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 10,
            batch_size: 16,
            train_fraction: 0.8,
            patience: 2,
            seed: 0,
            min_df: 1,
            max_len: 128,
        }
    }
}

/// Learning rate used when fine-tuning a pretrained encoder; selectable but
/// too small for a head trained from scratch.
pub const ENCODER_LEARNING_RATE: f64 = 2e-5;

impl TrainConfig {
    pub fn check(&self, head: &HeadConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&head.dropout_rate) {
            return bad(format!("dropout_rate {} must lie in [0, 1)", head.dropout_rate));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} must lie in (0, 1)", self.train_fraction));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_len == 0 {
            return bad("batch_size, max_epochs and max_len must be at least 1".into());
        }
        if head.hidden_sizes.contains(&0) {
            return bad("hidden layer sizes must be at least 1".into());
        }
        Ok(())
    }
}

/// Forward-pass mode. Training applies inverted dropout to hidden activations.
pub enum Mode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut dyn RngCore },
}

/// Dense network with all parameters in one flat vector. Each layer stores
/// its weights row-major (`out x in`) followed by its biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy from a logit, without forming the probability.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(input_dim: usize, head: &HeadConfig, output_dim: usize, rng: &mut impl Rng) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(&head.hidden_sizes);
        sizes.push(output_dim);
        let mut params = Vec::with_capacity(param_count(&sizes));
        for w in sizes.windows(2) {
            let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-a..=a)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Mlp { sizes, params }
    }

    pub fn zeros(sizes: Vec<usize>) -> Self {
        let params = vec![0.0; param_count(&sizes)];
        Mlp { sizes, params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_shape(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) || self.params.len() != param_count(&self.sizes) {
            return Err(Error::VersionMismatch(format!(
                "network layout {:?} does not match {} parameters",
                self.sizes,
                self.params.len()
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer, and post-dropout activations of every
    /// layer input (index 0 is `x`).
    fn run(&self, x: &[f64], mode: &mut Mode) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n_layers = self.sizes.len() - 1;
        let mut zs = Vec::with_capacity(n_layers);
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let a = &acts[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    b[o] + w[o * n_in..(o + 1) * n_in]
                        .iter()
                        .zip(a)
                        .map(|(wi, ai)| wi * ai)
                        .sum::<f64>()
                })
                .collect();
            if l + 1 < n_layers {
                let mut h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
                if let Mode::Train { dropout, rng } = mode {
                    if *dropout > 0.0 {
                        let scale = 1.0 / (1.0 - *dropout);
                        for v in h.iter_mut() {
                            *v *= if rng.gen::<f64>() < *dropout { 0.0 } else { scale };
                        }
                    }
                }
                acts.push(h);
            }
            zs.push(z);
        }
        (zs, acts)
    }

    pub fn logits(&self, x: &[f64], mut mode: Mode) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let (mut zs, _) = self.run(x, &mut mode);
        Ok(zs.pop().expect("at least one layer"))
    }

    /// Sigmoid outputs.
    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<Vec<f64>> {
        Ok(self.logits(x, mode)?.into_iter().map(sigmoid).collect())
    }

    /// Mean binary cross-entropy over examples and outputs, dropout off.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
        Ok(self.loss_and_grad(xs, ys, Mode::Eval)?.0)
    }

    /// Mean binary cross-entropy and its gradient with respect to `params`.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[Vec<f64>], mut mode: Mode) -> Result<(f64, Vec<f64>)> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch(xs.len(), ys.len()));
        }
        if xs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n_layers = self.sizes.len() - 1;
        let n_out = self.output_dim();
        let scale = 1.0 / (xs.len() * n_out) as f64;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }

        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (x, y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            if y.len() != n_out {
                return Err(Error::DimensionMismatch {
                    expected: n_out,
                    found: y.len(),
                });
            }
            let (zs, acts) = self.run(x, &mut mode);
            let logits = &zs[n_layers - 1];
            loss += logits.iter().zip(y).map(|(&z, &t)| bce_with_logit(z, t)).sum::<f64>();
            let mut delta: Vec<f64> = logits.iter().zip(y).map(|(&z, &t)| (sigmoid(z) - t) * scale).collect();
            for l in (0..n_layers).rev() {
                let (n_in, n_o) = (self.sizes[l], self.sizes[l + 1]);
                let off = offsets[l];
                let a = &acts[l];
                for o in 0..n_o {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                        row.iter_mut().zip(a).for_each(|(g, ai)| *g += d * ai);
                    }
                    grad[off + n_in * n_o + o] += d;
                }
                if l > 0 {
                    let w = &self.params[off..off + n_in * n_o];
                    let z_prev = &zs[l - 1];
                    let a_prev = &acts[l];
                    delta = (0..n_in)
                        .map(|i| {
                            if z_prev[i] <= 0.0 {
                                return 0.0;
                            }
                            // a_prev = relu(z) * mask, so mask = a_prev / z on the active side.
                            let mask = a_prev[i] / z_prev[i];
                            mask * (0..n_o).map(|o| w[o * n_in + i] * delta[o]).sum::<f64>()
                        })
                        .collect();
                }
            }
        }
        Ok((loss * scale, grad))
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Tracks the best validation loss. A tie with the best is not an improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Returns true when `loss` is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        let improved = match self.best {
            None => !loss.is_nan(),
            Some((_, best)) => loss < best,
        };
        if improved {
            self.best = Some((epoch, loss));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        improved
    }

    pub fn should_stop(&self) -> bool {
        self.stale > 0 && self.stale >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Pre-featurized examples with one target per output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Encoded {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub mlp: Mlp,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Mini-batch Adam from `mlp` until `max_epochs` or early stop. Returns the
/// parameters of the epoch with the lowest validation loss.
pub fn fit(
    mut mlp: Mlp,
    train: &Encoded,
    val: &Encoded,
    head: &HeadConfig,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<FitResult> {
    cfg.check(head)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::TooFewExamples {
            needed: 2,
            found: train.len() + val.len(),
        });
    }
    let mut adam = Adam::new(mlp.params.len(), cfg);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = mlp.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| train.features[i].clone()).collect();
            let ys: Vec<Vec<f64>> = chunk.iter().map(|&i| train.targets[i].clone()).collect();
            let mode = Mode::Train {
                dropout: head.dropout_rate,
                rng: &mut *rng as &mut dyn RngCore,
            };
            let (_, grad) = mlp.loss_and_grad(&xs, &ys, mode)?;
            adam.step(&mut mlp.params, &grad);
        }
        let train_loss = mlp.loss(&train.features, &train.targets)?;
        let val_loss = mlp.loss(&val.features, &val.targets)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if stopper.observe(epoch, val_loss) {
            best = mlp.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    let best_epoch = stopper.best().map_or(0, |(e, _)| e);
    Ok(FitResult {
        mlp: best,
        history,
        best_epoch,
    })
}

/// One line of the training/prediction JSON Lines format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub response_id: String,
    #[serde(default)]
    pub explanation: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, Option<u8>>,
}

pub fn read_jsonl<R: Read>(reader: R, source_name: &str) -> Result<Vec<TextRecord>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source_name, Some(i + 1), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TextRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(source_name, Some(i + 1), e.to_string()))?;
        if !seen.insert(rec.response_id.clone()) {
            return Err(Error::parse(
                source_name,
                Some(i + 1),
                format!("duplicate response_id {}", rec.response_id),
            ));
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<TextRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(file, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub response_id: String,
    pub text: String,
    pub labels: [u8; N_LABELS],
}

/// Splits records into usable examples and the ids of records with a
/// missing or null label, which are rejected rather than imputed.
pub fn training_examples(records: &[TextRecord]) -> Result<(Vec<TrainingExample>, Vec<String>)> {
    let mut examples = Vec::new();
    let mut rejected = Vec::new();
    'records: for r in records {
        let mut labels = [0u8; N_LABELS];
        for (slot, id) in labels.iter_mut().zip(LABEL_IDS) {
            match r.labels.get(&format!("c{id}")).copied().flatten() {
                Some(v) if v > 1 => {
                    return Err(Error::NonBinaryLabel {
                        example: r.response_id.clone(),
                        value: v,
                    })
                }
                Some(v) => *slot = v,
                None => {
                    rejected.push(r.response_id.clone());
                    continue 'records;
                }
            }
        }
        examples.push(TrainingExample {
            response_id: r.response_id.clone(),
            text: r.explanation.clone(),
            labels,
        });
    }
    Ok((examples, rejected))
}

/// Decision thresholds, with optional per-category overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub default: f64,
    pub per_category: BTreeMap<CategoryId, f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds::uniform(0.5)
    }
}

impl Thresholds {
    pub fn uniform(t: f64) -> Self {
        Thresholds {
            default: t,
            per_category: BTreeMap::new(),
        }
    }

    pub fn get(&self, id: CategoryId) -> f64 {
        self.per_category.get(&id).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextClassifierModel {
    pub format_version: u32,
    pub label_ids: Vec<CategoryId>,
    pub tokenizer: Tokenizer,
    pub featurizer: Featurizer,
    pub head: HeadConfig,
    pub train_config: TrainConfig,
    pub network: Mlp,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub split: DataSplit,
}

fn targets(labels: &[u8; N_LABELS]) -> Vec<f64> {
    labels.iter().map(|&b| f64::from(b)).collect()
}

/// Seeded shuffle, train/validation split, featurizer fit on the training
/// side, then [`fit`].
pub fn train(data: &[TrainingExample], head: &HeadConfig, cfg: &TrainConfig) -> Result<TextClassifierModel> {
    cfg.check(head)?;
    if data.len() < 2 {
        return Err(Error::TooFewExamples {
            needed: 2,
            found: data.len(),
        });
    }
    for ex in data {
        if let Some(&v) = ex.labels.iter().find(|&&v| v > 1) {
            return Err(Error::NonBinaryLabel {
                example: ex.response_id.clone(),
                value: v,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_train = ((data.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, data.len() - 1);
    let (train_idx, val_idx) = order.split_at(n_train);

    for (j, id) in LABEL_IDS.iter().enumerate() {
        let pos = train_idx.iter().filter(|&&i| data[i].labels[j] == 1).count();
        if pos == 0 || pos == train_idx.len() {
            log::warn!("category {id} has only one class in the training split");
        }
    }

    let tokenizer = Tokenizer { max_len: cfg.max_len };
    let tokens: Vec<Vec<String>> = data.iter().map(|ex| tokenizer.tokenize(&ex.text)).collect();
    let train_docs: Vec<Vec<String>> = train_idx.iter().map(|&i| tokens[i].clone()).collect();
    let featurizer = Featurizer::fit(&train_docs, cfg.min_df)?;
    let encode = |idx: &[usize]| Encoded {
        features: idx.iter().map(|&i| featurizer.transform(&tokens[i])).collect(),
        targets: idx.iter().map(|&i| targets(&data[i].labels)).collect(),
    };
    let train_set = encode(train_idx);
    let val_set = encode(val_idx);

    let mlp = Mlp::new(featurizer.dim(), head, N_LABELS, &mut rng);
    let result = fit(mlp, &train_set, &val_set, head, cfg, &mut rng)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| data[i].response_id.clone()).collect();
    Ok(TextClassifierModel {
        format_version: FORMAT_VERSION,
        label_ids: label_ids(),
        tokenizer,
        featurizer,
        head: head.clone(),
        train_config: cfg.clone(),
        network: result.mlp,
        history: result.history,
        best_epoch: result.best_epoch,
        split: DataSplit {
            train: ids(train_idx),
            validation: ids(val_idx),
        },
    })
}

impl TextClassifierModel {
    pub fn features(&self, text: &str) -> Vec<f64> {
        self.featurizer.transform(&self.tokenizer.tokenize(text))
    }

    pub fn predict_proba(&self, text: &str) -> Vec<f64> {
        self.network
            .forward(&self.features(text), Mode::Eval)
            .expect("featurizer and network dimensions are checked on construction")
    }

    /// Bit is 1 iff probability >= threshold, attached to ids 14-21.
    pub fn predict(&self, texts: &[&str], thresholds: &Thresholds) -> Vec<CategoryVector> {
        texts
            .iter()
            .map(|t| {
                let p = self.predict_proba(t);
                CategoryVector::from_scores(
                    self.label_ids
                        .iter()
                        .zip(p)
                        .map(|(&id, p)| (id, u8::from(p >= thresholds.get(id)))),
                )
            })
            .collect()
    }

    /// Predictions for each record as a label table over ids 14-21.
    pub fn predict_table(&self, records: &[TextRecord], thresholds: &Thresholds) -> Result<LabelTable> {
        let mut table = LabelTable::new(self.label_ids.clone());
        for r in records {
            let p = self.predict_proba(&r.explanation);
            let bits = self
                .label_ids
                .iter()
                .zip(p)
                .map(|(&id, p)| Some(u8::from(p >= thresholds.get(id))))
                .collect();
            table.push(r.response_id.clone(), bits)?;
        }
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(src).map_err(|e| Error::parse("model", Some(1), e.to_string()))?;
        let version = value.get("format_version").and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(FORMAT_VERSION)) {
            return Err(Error::VersionMismatch(format!(
                "model format {} is not supported (expected {FORMAT_VERSION})",
                version.map_or("missing".to_string(), |v| v.to_string())
            )));
        }
        let model: TextClassifierModel =
            serde_json::from_value(value).map_err(|e| Error::VersionMismatch(format!("unreadable model: {e}")))?;
        model.network.check_shape()?;
        if model.label_ids != label_ids() || model.network.output_dim() != N_LABELS {
            return Err(Error::VersionMismatch("model labels are not categories 14-21".into()));
        }
        if model.network.input_dim() != model.featurizer.dim() {
            return Err(Error::VersionMismatch(format!(
                "network expects {} features but the vocabulary has {} terms",
                model.network.input_dim(),
                model.featurizer.dim()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&src).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::parse(path.display().to_string(), line, message),
            other => other,
        })
    }
}
