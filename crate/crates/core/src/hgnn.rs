//! Morphology-informed heterogeneous graph network.
//!
//! Every node type has its own affine encoder. Each message-passing layer
//! holds one `{W1, W2, b}` triple per relation (ordered pair of node types),
//! shared by every edge of that relation, so identical limbs use identical
//! weights. For a node `i` of type `D` a layer computes
//!
//! ```text
//! v_i' = relu( sum over relations R = (S, D) of  W1_R v_i + W2_R sum_{j in N_S(i)} v_j + b_R )
//! ```
//!
//! where the inner sum is empty (zero) when `i` has no neighbours of type `S`.
//! A single affine decoder maps the final foot embeddings to outputs.
//!
//! Internally embeddings are stored row-wise, so an encoder `E` is applied as
//! `x E + b` with `E` of shape `input_dim x hidden`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morphology::{MorphologyGraph, NodeType, Relation};
use crate::numcore::{Matrix, Tape, TensorError, TensorId};
use crate::params::ParamSet;
use crate::Task;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HgnnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("node {node} expects an input of length {expected}, got {got}")]
    InputMismatch { node: usize, expected: usize, got: usize },
    #[error("sample has {got} node inputs, graph has {expected} nodes")]
    NodeCountMismatch { expected: usize, got: usize },
}

/// Input vector length per node type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub base: usize,
    pub joint: usize,
    pub foot: usize,
}

impl InputDims {
    pub fn get(&self, t: NodeType) -> usize {
        match t {
            NodeType::Base => self.base,
            NodeType::Joint => self.joint,
            NodeType::Foot => self.foot,
        }
    }

    /// Dimensions of a 150-step window regrouped for `task`.
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Contact => Self { base: 900, joint: 300, foot: 900 },
            Task::Grf => Self { base: 900, joint: 450, foot: 1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgnnConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub task: Task,
    pub input_dims: InputDims,
    pub output_dim: usize,
    pub seed: u64,
}

impl HgnnConfig {
    pub fn new(task: Task, hidden_size: usize, num_layers: usize, seed: u64) -> Self {
        Self {
            hidden_size,
            num_layers,
            task,
            input_dims: InputDims::for_task(task),
            output_dim: task.output_dim(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), HgnnError> {
        let bad = |m: &str| Err(HgnnError::InvalidConfig(m.into()));
        if self.hidden_size == 0 {
            return bad("hidden_size must be at least 1");
        }
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if !(1..=2).contains(&self.output_dim) {
            return bad("output_dim must be 1 or 2");
        }
        if NodeType::ALL.iter().any(|&t| self.input_dims.get(t) == 0) {
            return bad("input dimensions must be positive");
        }
        Ok(())
    }
}

/// Per-foot supervision, ordered like `graph.foot_order`.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Contact(Vec<usize>),
    Grf(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Contact(v) => v.len(),
            Labels::Grf(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One model input: a vector per graph node (indexed by node id) plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Labels,
}

impl GraphSample {
    /// Applies a node permutation: the input of node `i` moves to `perm[i]`,
    /// and foot labels follow their feet.
    pub fn permuted(&self, graph: &MorphologyGraph, perm: &[usize]) -> Self {
        let mut inputs = vec![Vec::new(); self.inputs.len()];
        for (i, x) in self.inputs.iter().enumerate() {
            inputs[perm[i]] = x.clone();
        }
        let foot_map = foot_permutation(graph, perm);
        let labels = match &self.labels {
            Labels::Contact(c) => {
                let mut out = c.clone();
                for (k, &to) in foot_map.iter().enumerate() {
                    out[to] = c[k];
                }
                Labels::Contact(out)
            }
            Labels::Grf(c) => {
                let mut out = c.clone();
                for (k, &to) in foot_map.iter().enumerate() {
                    out[to] = c[k];
                }
                Labels::Grf(out)
            }
        };
        Self { inputs, labels }
    }
}

/// Maps foot position `k` (in `foot_order`) to the foot position its image occupies.
pub fn foot_permutation(graph: &MorphologyGraph, perm: &[usize]) -> Vec<usize> {
    graph
        .foot_order
        .iter()
        .map(|&f| graph.foot_order.iter().position(|&g| g == perm[f]).expect("feet map to feet"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct RelationParams {
    relation: Relation,
    w1: usize,
    w2: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HgnnModel {
    pub config: HgnnConfig,
    pub graph: MorphologyGraph,
    pub params: ParamSet,
    encoders: [Option<(usize, usize)>; 3],
    layers: Vec<Vec<RelationParams>>,
    decoder: (usize, usize),
    type_nodes: [Vec<usize>; 3],
    // For each relation, the neighbour lists of every destination node (in
    // type-local indices of the source type).
    neighbor_lists: BTreeMap<Relation, Vec<Vec<usize>>>,
}

/// Closed-form parameter count of the model `init_model(graph, cfg)` builds.
pub fn count_params(graph: &MorphologyGraph, cfg: &HgnnConfig) -> usize {
    let h = cfg.hidden_size;
    let encoders: usize = NodeType::ALL
        .iter()
        .filter(|&&t| !graph.nodes_of_type(t).is_empty())
        .map(|&t| h * (cfg.input_dims.get(t) + 1))
        .sum();
    let relations = graph.relations().len();
    encoders + cfg.num_layers * relations * (2 * h * h + h) + (h + 1) * cfg.output_dim
}

/// Builds a model with parameters drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_model(graph: &MorphologyGraph, cfg: &HgnnConfig) -> Result<HgnnModel, HgnnError> {
    cfg.validate()?;
    let h = cfg.hidden_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParamSet::new();
    let type_nodes = NodeType::ALL.map(|t| graph.nodes_of_type(t));

    let mut encoders = [None; 3];
    for t in NodeType::ALL {
        if type_nodes[t.index()].is_empty() {
            continue;
        }
        let d = cfg.input_dims.get(t);
        let w = params.push_uniform(format!("enc.{t}.W"), d, h, d, &mut rng);
        let b = params.push_uniform(format!("enc.{t}.b"), 1, h, d, &mut rng);
        encoders[t.index()] = Some((w, b));
    }

    let relations = graph.relations();
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for layer in 0..cfg.num_layers {
        let mut rp = Vec::with_capacity(relations.len());
        for &relation in &relations {
            let key = relation.key();
            let w1 = params.push_uniform(format!("mp.{layer}.{key}.W1"), h, h, h, &mut rng);
            let w2 = params.push_uniform(format!("mp.{layer}.{key}.W2"), h, h, h, &mut rng);
            let b = params.push_uniform(format!("mp.{layer}.{key}.b"), 1, h, h, &mut rng);
            rp.push(RelationParams { relation, w1, w2, b });
        }
        layers.push(rp);
    }

    let dw = params.push_uniform("dec.W".into(), h, cfg.output_dim, h, &mut rng);
    let db = params.push_uniform("dec.b".into(), 1, cfg.output_dim, h, &mut rng);

    let mut neighbor_lists = BTreeMap::new();
    for &relation in &relations {
        let lists = type_nodes[relation.dst.index()]
            .iter()
            .map(|&i| {
                let mut srcs: Vec<usize> = graph
                    .edges
                    .iter()
                    .filter(|e| e.dst == i && e.relation == relation)
                    .map(|e| graph.type_index(e.src))
                    .collect();
                srcs.sort_unstable();
                srcs
            })
            .collect();
        neighbor_lists.insert(relation, lists);
    }

    Ok(HgnnModel {
        config: cfg.clone(),
        graph: graph.clone(),
        params,
        encoders,
        layers,
        decoder: (dw, db),
        type_nodes,
        neighbor_lists,
    })
}

impl HgnnModel {
    pub fn num_feet(&self) -> usize {
        self.graph.foot_order.len()
    }

    fn check_sample(&self, sample: &GraphSample) -> Result<(), HgnnError> {
        if sample.inputs.len() != self.graph.num_nodes() {
            return Err(HgnnError::NodeCountMismatch { expected: self.graph.num_nodes(), got: sample.inputs.len() });
        }
        for (node, x) in sample.inputs.iter().enumerate() {
            let expected = self.config.input_dims.get(self.graph.node_type(node));
            if x.len() != expected {
                return Err(HgnnError::InputMismatch { node, expected, got: x.len() });
            }
        }
        Ok(())
    }

    /// Records the forward pass for a minibatch, evaluated as one disjoint
    /// union of graphs. Returns a `(batch * n_f) x n_y` tensor whose rows are
    /// sample-major, feet in `foot_order` within each sample.
    pub fn forward_tape(&self, tape: &mut Tape, bound: &[TensorId], batch: &[&GraphSample]) -> Result<TensorId, HgnnError> {
        for s in batch {
            self.check_sample(s)?;
        }
        let nb = batch.len();
        let h = self.config.hidden_size;

        let mut emb: [Option<TensorId>; 3] = [None; 3];
        for t in NodeType::ALL {
            let Some((w, b)) = self.encoders[t.index()] else { continue };
            let nodes = &self.type_nodes[t.index()];
            let d = self.config.input_dims.get(t);
            let mut x = Matrix::zeros((nb * nodes.len(), d));
            for (bi, s) in batch.iter().enumerate() {
                for (k, &node) in nodes.iter().enumerate() {
                    x.row_mut(bi * nodes.len() + k)
                        .assign(&ndarray::ArrayView1::from(&s.inputs[node][..]));
                }
            }
            let x = tape.constant(x);
            let z = tape.matmul(x, bound[w])?;
            let z = tape.add_row(z, bound[b])?;
            emb[t.index()] = Some(tape.relu(z));
        }

        let batched_lists: BTreeMap<Relation, Arc<Vec<Vec<usize>>>> = self
            .neighbor_lists
            .iter()
            .map(|(&rel, lists)| {
                let n_src = self.type_nodes[rel.src.index()].len();
                let mut out = Vec::with_capacity(nb * lists.len());
                for bi in 0..nb {
                    for l in lists {
                        out.push(l.iter().map(|&j| bi * n_src + j).collect());
                    }
                }
                (rel, Arc::new(out))
            })
            .collect();

        for layer in &self.layers {
            let mut next: [Option<TensorId>; 3] = [None; 3];
            for dst in NodeType::ALL {
                let Some(v_dst) = emb[dst.index()] else { continue };
                let mut total: Option<TensorId> = None;
                for rp in layer.iter().filter(|rp| rp.relation.dst == dst) {
                    let v_src = emb[rp.relation.src.index()].expect("relation endpoints exist");
                    let own = tape.matmul(v_dst, bound[rp.w1])?;
                    let agg = tape.gather_sum(v_src, batched_lists[&rp.relation].clone())?;
                    let msg = tape.matmul(agg, bound[rp.w2])?;
                    let term = tape.add(own, msg)?;
                    let term = tape.add_row(term, bound[rp.b])?;
                    total = Some(match total {
                        Some(acc) => tape.add(acc, term)?,
                        None => term,
                    });
                }
                let total = match total {
                    Some(t) => t,
                    None => tape.constant(Matrix::zeros((nb * self.type_nodes[dst.index()].len(), h))),
                };
                next[dst.index()] = Some(tape.relu(total));
            }
            emb = next;
        }

        let feet = emb[NodeType::Foot.index()].expect("graph has feet");
        // Foot nodes are already in foot_order within each sample.
        let y = tape.matmul(feet, bound[self.decoder.0])?;
        Ok(tape.add_row(y, bound[self.decoder.1])?)
    }

    /// Outputs for a batch, one `n_f x n_y` matrix per sample.
    pub fn forward_batch(&self, batch: &[&GraphSample]) -> Result<Vec<Matrix>, HgnnError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let y = self.forward_tape(&mut tape, &bound, batch)?;
        let nf = self.num_feet();
        let y = tape.value(y);
        Ok((0..batch.len())
            .map(|b| y.slice(ndarray::s![b * nf..(b + 1) * nf, ..]).to_owned())
            .collect())
    }

    /// Per-foot outputs (`n_f x n_y`, raw logits for contact).
    pub fn forward(&self, sample: &GraphSample) -> Result<Matrix, HgnnError> {
        Ok(self.forward_batch(&[sample])?.remove(0))
    }
}
