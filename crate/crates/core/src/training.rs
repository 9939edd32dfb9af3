//! Losses, the Adam optimizer, the MLP baseline, the training loop with
//! early stopping, and model checkpoints.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{flatten_mlp, make_windows, mlp_input_dim, prepare, DataError, SequenceDataset, Window};
use crate::hgnn::{init_model, GraphSample, HgnnConfig, HgnnError, HgnnModel, Labels};
use crate::morphology::{GraphDump, MorphologyGraph};
use crate::numcore::{Matrix, Tape, TensorError, TensorId};
use crate::params::{ParamSet, StoredArray};
use crate::Task;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("loss became non-finite ({loss}) at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("label kind does not match the model's task")]
    LabelMismatch,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Hgnn(#[from] HgnnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Sum over feet of the softmax cross-entropy; `logits` is `n x 2`.
pub fn foot_ce_loss(tape: &mut Tape, logits: TensorId, labels: &[usize]) -> Result<TensorId, TensorError> {
    tape.cross_entropy(logits, labels)
}

/// Sum over feet of the squared error; `pred` is `n x 1`.
pub fn foot_mse_loss(tape: &mut Tape, pred: TensorId, targets: &[f64]) -> Result<TensorId, TensorError> {
    let t = tape.constant(Array2::from_shape_vec((targets.len(), 1), targets.to_vec()).expect("column vector"));
    tape.sum_squared_error(pred, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one pair per parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: i32,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.value.dim())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ParamSet, grads: &[Matrix], state: &mut AdamState, lr: f64, cfg: &AdamConfig) {
    state.step += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.step);
    let c2 = 1.0 - cfg.beta2.powi(state.step);
    for (((p, g), m), v) in params.values_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        });
    }
}

/// Fully connected ReLU network; `num_layers` counts affine maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl MlpConfig {
    /// The force-estimation baseline: 10 affine maps of width 200.
    pub fn grf_baseline(seed: u64) -> Self {
        Self { input_dim: mlp_input_dim(Task::Grf), hidden_size: 200, num_layers: 10, output_dim: 4, seed }
    }

    pub fn num_params(&self) -> usize {
        let (d, h, o) = (self.input_dim, self.hidden_size, self.output_dim);
        (d + 1) * h + (self.num_layers - 2) * (h + 1) * h + (h + 1) * o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub params: ParamSet,
}

/// Input and per-foot regression targets for the MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

pub fn build_mlp(cfg: &MlpConfig) -> Result<MlpModel, TrainError> {
    if cfg.num_layers < 2 || cfg.input_dim == 0 || cfg.hidden_size == 0 || cfg.output_dim == 0 {
        return Err(TrainError::InvalidConfig("MLP needs at least 2 layers and positive sizes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParamSet::new();
    for i in 0..cfg.num_layers {
        let fan_in = if i == 0 { cfg.input_dim } else { cfg.hidden_size };
        let fan_out = if i + 1 == cfg.num_layers { cfg.output_dim } else { cfg.hidden_size };
        params.push_uniform(format!("l{i}.W"), fan_in, fan_out, fan_in, &mut rng);
        params.push_uniform(format!("l{i}.b"), 1, fan_out, fan_in, &mut rng);
    }
    Ok(MlpModel { config: cfg.clone(), params })
}

impl MlpModel {
    /// Records the forward pass for a `batch x input_dim` input.
    pub fn forward_tape(&self, tape: &mut Tape, bound: &[TensorId], x: Matrix) -> Result<TensorId, TrainError> {
        if x.ncols() != self.config.input_dim {
            return Err(TensorError::ShapeMismatch { op: "mlp_forward", lhs: x.dim(), rhs: (x.nrows(), self.config.input_dim) }.into());
        }
        let mut h = tape.constant(x);
        for i in 0..self.config.num_layers {
            h = tape.matmul(h, bound[2 * i])?;
            h = tape.add_row(h, bound[2 * i + 1])?;
            if i + 1 < self.config.num_layers {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

pub fn mlp_forward(model: &MlpModel, input: &[f64]) -> Result<Vec<f64>, TrainError> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, false);
    let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
    let y = model.forward_tape(&mut tape, &bound, x)?;
    Ok(tape.value(y).iter().copied().collect())
}

/// Random-access collection of training samples.
pub trait SampleSource {
    type Item;
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> Self::Item;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<T: Clone> SampleSource for Vec<T> {
    type Item = T;
    fn len(&self) -> usize {
        <[T]>::len(self)
    }
    fn get(&self, i: usize) -> T {
        self[i].clone()
    }
}

/// Windows turned into normalized per-node samples on demand.
pub struct GraphWindows<'a> {
    pub windows: Vec<Window<'a>>,
    pub task: Task,
    pub graph: &'a MorphologyGraph,
}

impl SampleSource for GraphWindows<'_> {
    type Item = GraphSample;
    fn len(&self) -> usize {
        self.windows.len()
    }
    fn get(&self, i: usize) -> GraphSample {
        prepare(&self.windows[i], self.task, self.graph).expect("graph checked when the source was built")
    }
}

impl<'a> GraphWindows<'a> {
    pub fn new(windows: Vec<Window<'a>>, task: Task, graph: &'a MorphologyGraph) -> Result<Self, TrainError> {
        if let Some(w) = windows.first() {
            prepare(w, task, graph)?;
        }
        Ok(Self { windows, task, graph })
    }
}

/// Windows flattened for the MLP on demand (force targets).
pub struct FlatWindows<'a> {
    pub windows: Vec<Window<'a>>,
}

impl SampleSource for FlatWindows<'_> {
    type Item = MlpSample;
    fn len(&self) -> usize {
        self.windows.len()
    }
    fn get(&self, i: usize) -> MlpSample {
        let w = &self.windows[i];
        let target = match w.labels(Task::Grf) {
            Labels::Grf(v) => v,
            Labels::Contact(_) => unreachable!("force labels requested"),
        };
        MlpSample { input: flatten_mlp(w, Task::Grf), target }
    }
}

/// A model the training loop can optimize.
pub trait Trainable {
    type Sample;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Mean over the batch of each sample's foot-summed loss.
    fn batch_loss(&self, tape: &mut Tape, bound: &[TensorId], batch: &[Self::Sample]) -> Result<TensorId, TrainError>;
}

impl Trainable for HgnnModel {
    type Sample = GraphSample;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn batch_loss(&self, tape: &mut Tape, bound: &[TensorId], batch: &[GraphSample]) -> Result<TensorId, TrainError> {
        let refs: Vec<&GraphSample> = batch.iter().collect();
        let y = self.forward_tape(tape, bound, &refs)?;
        let total = match self.config.task {
            Task::Contact => {
                let mut labels = Vec::with_capacity(batch.len() * self.num_feet());
                for s in batch {
                    match &s.labels {
                        Labels::Contact(c) => labels.extend_from_slice(c),
                        Labels::Grf(_) => return Err(TrainError::LabelMismatch),
                    }
                }
                foot_ce_loss(tape, y, &labels)?
            }
            Task::Grf => {
                let mut targets = Vec::with_capacity(batch.len() * self.num_feet());
                for s in batch {
                    match &s.labels {
                        Labels::Grf(c) => targets.extend_from_slice(c),
                        Labels::Contact(_) => return Err(TrainError::LabelMismatch),
                    }
                }
                foot_mse_loss(tape, y, &targets)?
            }
        };
        Ok(tape.scale(total, 1.0 / batch.len() as f64))
    }
}

impl Trainable for MlpModel {
    type Sample = MlpSample;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn batch_loss(&self, tape: &mut Tape, bound: &[TensorId], batch: &[MlpSample]) -> Result<TensorId, TrainError> {
        let d = self.config.input_dim;
        let o = self.config.output_dim;
        let mut x = Matrix::zeros((batch.len(), d));
        let mut t = Matrix::zeros((batch.len(), o));
        for (i, s) in batch.iter().enumerate() {
            if s.input.len() != d || s.target.len() != o {
                return Err(TensorError::ShapeMismatch { op: "mlp_batch", lhs: (s.input.len(), s.target.len()), rhs: (d, o) }.into());
            }
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&s.input[..]));
            t.row_mut(i).assign(&ndarray::ArrayView1::from(&s.target[..]));
        }
        let y = self.forward_tape(tape, bound, x)?;
        let t = tape.constant(t);
        let total = tape.sum_squared_error(y, t)?;
        Ok(tape.scale(total, 1.0 / batch.len() as f64))
    }
}

/// Loss value and parameter gradients for one batch.
pub fn loss_and_grads<M: Trainable>(model: &M, batch: &[M::Sample]) -> Result<(f64, Vec<Matrix>), TrainError> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape, true);
    let loss = model.batch_loss(&mut tape, &bound, batch)?;
    tape.backward(loss)?;
    let grads = bound.iter().map(|&id| tape.grad(id)).collect();
    Ok((tape.scalar(loss), grads))
}

/// Mean per-sample loss over a whole source.
pub fn mean_loss<M: Trainable, S: SampleSource<Item = M::Sample>>(model: &M, src: &S, batch_size: usize) -> Result<f64, TrainError> {
    let n = src.len();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        let batch: Vec<M::Sample> = (start..end).map(|i| src.get(i)).collect();
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, false);
        let loss = model.batch_loss(&mut tape, &bound, &batch)?;
        total += tape.scalar(loss) * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hgnn,
    Mlp,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    30
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    5
}
fn default_stride() -> usize {
    1
}
fn default_model() -> ModelKind {
    ModelKind::Hgnn
}

/// Optimization settings, plus the model shape and window stride used by
/// the command-line trainer. Every key except `task` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// Model width; unset means the model's standard size (128 for the
    /// graph network, 200 for the MLP).
    #[serde(default)]
    pub hidden_size: Option<usize>,
    /// Message-passing layers (graph network) or affine maps (MLP); unset
    /// means 8 or 10 respectively.
    #[serde(default)]
    pub num_layers: Option<usize>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl TrainConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            adam: AdamConfig::default(),
            seed: 0,
            model: default_model(),
            hidden_size: None,
            num_layers: None,
            stride: default_stride(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        // A zero rate is allowed: it trains nothing, which is a useful baseline.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.stride == 0 {
            return bad("stride must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) || !(self.adam.eps > 0.0) {
            return bad("adam betas must be in [0, 1) and eps positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A freshly initialized model of the configured kind and size.
    pub fn build_model(&self, graph: &MorphologyGraph) -> Result<TrainedModel, TrainError> {
        match self.model {
            ModelKind::Hgnn => {
                let c = HgnnConfig::new(self.task, self.hidden_size.unwrap_or(128), self.num_layers.unwrap_or(8), self.seed);
                Ok(TrainedModel::Hgnn(init_model(graph, &c)?))
            }
            ModelKind::Mlp => {
                if self.task != Task::Grf {
                    return Err(TrainError::InvalidConfig("the MLP baseline is only defined for force estimation".into()));
                }
                let mut c = MlpConfig::grf_baseline(self.seed);
                c.hidden_size = self.hidden_size.unwrap_or(c.hidden_size);
                c.num_layers = self.num_layers.unwrap_or(c.num_layers);
                Ok(TrainedModel::Mlp(build_mlp(&c)?))
            }
        }
    }

    /// Hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("serializable").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_time_s: f64,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            s.push_str(&format!("{},{},{}\n", e + 1, t, v));
        }
        s
    }
}

/// Minibatch Adam with early stopping on validation loss. The model is left
/// holding the parameters of the best validation epoch.
pub fn train<M, S, V>(model: &mut M, train_set: &S, val_set: &V, cfg: &TrainConfig) -> Result<TrainReport, TrainError>
where
    M: Trainable,
    S: SampleSource<Item = M::Sample>,
    V: SampleSource<Item = M::Sample>,
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        wall_time_s: 0.0,
        checkpoint: None,
    };
    let mut best = model.params().clone();
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<M::Sample> = chunk.iter().map(|&i| train_set.get(i)).collect();
            let (loss, grads) = loss_and_grads(model, &batch)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b, loss });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam_step(model.params_mut(), &grads, &mut state, cfg.learning_rate, &cfg.adam);
        }
        let val = mean_loss(model, val_set, cfg.batch_size.max(64))?;
        if !val.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: usize::MAX, loss: val });
        }
        report.train_loss.push(epoch_loss / train_set.len() as f64);
        report.val_loss.push(val);
        if val < report.best_val_loss {
            report.best_val_loss = val;
            report.best_epoch = epoch;
            best = model.params().clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    *model.params_mut() = best;
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Sliding windows over several recordings, in order.
pub fn windows_of(sequences: &[SequenceDataset], stride: usize) -> Result<Vec<Window<'_>>, TrainError> {
    let mut out = Vec::new();
    for ds in sequences {
        out.extend(make_windows(ds, stride)?);
    }
    Ok(out)
}

/// A seeded random subset holding `fraction` of the windows (at least one),
/// in their original order.
pub fn subsample<'a>(windows: &[Window<'a>], fraction: f64, seed: u64) -> Vec<Window<'a>> {
    let n = ((windows.len() as f64 * fraction).round() as usize).clamp(1, windows.len().max(1));
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| windows[i]).collect()
}

/// Builds the model `cfg` describes and trains it on the given windows.
pub fn fit(
    cfg: &TrainConfig,
    graph: &MorphologyGraph,
    train_windows: Vec<Window<'_>>,
    val_windows: Vec<Window<'_>>,
) -> Result<(TrainedModel, TrainReport), TrainError> {
    let mut model = cfg.build_model(graph)?;
    let report = match &mut model {
        TrainedModel::Hgnn(m) => train(
            m,
            &GraphWindows::new(train_windows, cfg.task, graph)?,
            &GraphWindows::new(val_windows, cfg.task, graph)?,
            cfg,
        )?,
        TrainedModel::Mlp(m) => {
            train(m, &FlatWindows { windows: train_windows }, &FlatWindows { windows: val_windows }, cfg)?
        }
    };
    Ok((model, report))
}

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Hgnn(HgnnModel),
    Mlp(MlpModel),
}

/// On-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Checkpoint {
    Hgnn {
        config: HgnnConfig,
        graph: GraphDump,
        graph_fingerprint: String,
        params: BTreeMap<String, StoredArray>,
    },
    Mlp {
        config: MlpConfig,
        params: BTreeMap<String, StoredArray>,
    },
}

impl TrainedModel {
    pub fn task(&self) -> Task {
        match self {
            TrainedModel::Hgnn(m) => m.config.task,
            TrainedModel::Mlp(_) => Task::Grf,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            TrainedModel::Hgnn(m) => Checkpoint::Hgnn {
                config: m.config.clone(),
                graph: m.graph.dump(),
                graph_fingerprint: m.graph.fingerprint(),
                params: m.params.to_stored(),
            },
            TrainedModel::Mlp(m) => Checkpoint::Mlp { config: m.config.clone(), params: m.params.to_stored() },
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TrainError> {
        match ck {
            Checkpoint::Hgnn { config, graph, graph_fingerprint, params } => {
                let graph = MorphologyGraph::from_dump(graph).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
                if &graph.fingerprint() != graph_fingerprint {
                    return Err(TrainError::Checkpoint("graph fingerprint mismatch".into()));
                }
                let mut model = init_model(&graph, config)?;
                model.params.load_stored(params).map_err(TrainError::Checkpoint)?;
                Ok(TrainedModel::Hgnn(model))
            }
            Checkpoint::Mlp { config, params } => {
                let mut model = build_mlp(config)?;
                model.params.load_stored(params).map_err(TrainError::Checkpoint)?;
                Ok(TrainedModel::Mlp(model))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<String, TrainError> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, &text)?;
        Ok(sha256_hex(text.as_bytes()))
    }

    /// Loads a checkpoint and returns it with the hash of the file contents.
    pub fn load(path: &Path) -> Result<(Self, String), TrainError> {
        let text = std::fs::read(path)?;
        let ck: Checkpoint = serde_json::from_slice(&text)?;
        Ok((Self::from_checkpoint(&ck)?, sha256_hex(&text)))
    }
}
