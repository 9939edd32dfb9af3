use serde::{Deserialize, Serialize};

use super::{col, DataError, GenParams, NoiseStd, SequenceDataset, NUM_JOINTS, NUM_LEGS};
use crate::hgnn::{GraphSample, Labels};
use crate::morphology::MorphologyGraph;
use crate::Task;

/// Samples of history per model input.
pub const WINDOW_LEN: usize = 150;

/// A view of `WINDOW_LEN` consecutive samples; the label is the last sample's.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub ds: &'a SequenceDataset,
    pub start: usize,
}

impl<'a> Window<'a> {
    pub fn last(&self) -> usize {
        self.start + WINDOW_LEN - 1
    }

    pub fn channel(&self, c: usize) -> &'a [f64] {
        &self.ds.columns[c][self.start..self.start + WINDOW_LEN]
    }

    pub fn labels(&self, task: Task) -> Labels {
        let i = self.last();
        match task {
            Task::Contact => Labels::Contact((0..NUM_LEGS).map(|l| self.ds.contact(l, i)).collect()),
            Task::Grf => Labels::Grf((0..NUM_LEGS).map(|l| self.ds.grf(l, i)).collect()),
        }
    }
}

pub fn make_windows(ds: &SequenceDataset, stride: usize) -> Result<Vec<Window<'_>>, DataError> {
    if stride == 0 {
        return Err(DataError::InvalidParams("stride must be at least 1".into()));
    }
    if ds.len() < WINDOW_LEN {
        return Err(DataError::TooShort { len: ds.len(), need: WINDOW_LEN });
    }
    Ok((0..=ds.len() - WINDOW_LEN).step_by(stride).map(|start| Window { ds, start }).collect())
}

fn base_channels() -> Vec<usize> {
    (0..3).map(|k| col::AB + k).chain((0..3).map(|k| col::WB + k)).collect()
}

fn joint_channels(j: usize, task: Task) -> Vec<usize> {
    match task {
        Task::Contact => vec![col::q(j), col::dq(j)],
        Task::Grf => vec![col::q(j), col::dq(j), col::tau(j)],
    }
}

fn foot_channels(leg: usize) -> Vec<usize> {
    (0..3).map(|k| col::p(leg, k)).chain((0..3).map(|k| col::v(leg, k))).collect()
}

fn gather(w: &Window, channels: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(channels.len() * WINDOW_LEN);
    for &c in channels {
        out.extend_from_slice(w.channel(c));
    }
    out
}

/// Per-node inputs for one window: each node receives the histories of its
/// own sensors, one 150-step block per signal.
///
/// Base: IMU acceleration and angular velocity. Joint: angle and velocity,
/// plus torque for force estimation. Foot: position and velocity for contact
/// estimation; a constant placeholder for force estimation.
pub fn regroup(w: &Window, task: Task, graph: &MorphologyGraph) -> Result<GraphSample, DataError> {
    if graph.joint_order.len() != NUM_JOINTS || graph.foot_order.len() != NUM_LEGS {
        return Err(DataError::TaskMismatch(format!(
            "dataset has {NUM_JOINTS} joints and {NUM_LEGS} feet, graph has {} and {}",
            graph.joint_order.len(),
            graph.foot_order.len()
        )));
    }
    let mut inputs = vec![Vec::new(); graph.num_nodes()];
    inputs[graph.base()] = gather(w, &base_channels());
    for (j, &node) in graph.joint_order.iter().enumerate() {
        inputs[node] = gather(w, &joint_channels(j, task));
    }
    for (l, &node) in graph.foot_order.iter().enumerate() {
        inputs[node] = match task {
            Task::Contact => gather(w, &foot_channels(l)),
            Task::Grf => vec![1.0],
        };
    }
    Ok(GraphSample { inputs, labels: w.labels(task) })
}

/// Z-scores a series in place; near-constant series are only centered.
pub fn normalize_series(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in x.iter_mut() {
        *v -= mean;
        if std >= 1e-8 {
            *v /= std;
        }
    }
}

/// Normalizes every 150-step block of every node input independently.
/// Inputs shorter than a block (placeholders) are left alone.
pub fn normalize(sample: &GraphSample) -> GraphSample {
    let mut out = sample.clone();
    for x in &mut out.inputs {
        if x.len() % WINDOW_LEN == 0 {
            for block in x.chunks_mut(WINDOW_LEN) {
                normalize_series(block);
            }
        }
    }
    out
}

/// `normalize(regroup(..))`, the model-ready sample.
pub fn prepare(w: &Window, task: Task, graph: &MorphologyGraph) -> Result<GraphSample, DataError> {
    Ok(normalize(&regroup(w, task, graph)?))
}

fn mlp_channels(task: Task) -> Vec<usize> {
    let mut c: Vec<usize> = (0..NUM_JOINTS).map(col::q).collect();
    c.extend((0..NUM_JOINTS).map(col::dq));
    if task == Task::Grf {
        c.extend((0..NUM_JOINTS).map(col::tau));
    }
    c.extend(base_channels());
    if task == Task::Contact {
        for l in 0..NUM_LEGS {
            c.extend(foot_channels(l));
        }
    }
    c
}

pub fn mlp_input_dim(task: Task) -> usize {
    mlp_channels(task).len() * WINDOW_LEN
}

/// All input channels of a window, normalized and concatenated into one
/// vector for the MLP baseline.
pub fn flatten_mlp(w: &Window, task: Task) -> Vec<f64> {
    let mut x = gather(w, &mlp_channels(task));
    for block in x.chunks_mut(WINDOW_LEN) {
        normalize_series(block);
    }
    x
}

/// Which sequences go to training, validation and testing, by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Indices into the sequence list for each split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split(names: &[String], spec: &SplitSpec) -> Result<SplitAssignment, DataError> {
    let mut role: Vec<Option<usize>> = vec![None; names.len()];
    for (r, list) in [&spec.train, &spec.val, &spec.test].into_iter().enumerate() {
        for name in list {
            let i = names.iter().position(|n| n == name).ok_or_else(|| DataError::UnknownSequence(name.clone()))?;
            if role[i].is_some() {
                return Err(DataError::OverlappingSpec(name.clone()));
            }
            role[i] = Some(r);
        }
    }
    let mut out = SplitAssignment { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (i, r) in role.iter().enumerate() {
        match r {
            Some(0) => out.train.push(i),
            Some(1) => out.val.push(i),
            Some(_) => out.test.push(i),
            None => return Err(DataError::Unassigned(names[i].clone())),
        }
    }
    for (list, label) in [(&out.train, "train"), (&out.val, "val"), (&out.test, "test")] {
        if list.is_empty() {
            return Err(DataError::EmptySplit(label));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub name: String,
    pub params: GenParams,
}

/// Rough-terrain jitter amplitude used by the standard design, m.
pub const ROUGH_JITTER: f64 = 0.02;

/// Eight training/validation sequences over two frictions, two slopes and
/// two speeds, and thirteen test sequences with unseen friction, speed or
/// terrain (and one with all three unseen).
pub fn standard_design(duration: f64, seed: u64) -> (Vec<SequenceSpec>, SplitSpec) {
    let mut specs = Vec::new();
    let mut add = |name: String, mu: f64, slope: f64, speed: f64, rough: bool| {
        let params = GenParams {
            mu,
            slope_deg: slope,
            speed,
            terrain_jitter: if rough { ROUGH_JITTER } else { 0.0 },
            duration,
            noise: NoiseStd::scaled(1.0),
            seed: seed + specs.len() as u64,
            ..GenParams::default()
        };
        specs.push(SequenceSpec { name, params });
    };
    let terrain = |slope: f64| if slope == 0.0 { "flat".to_string() } else { format!("slope{slope:.0}") };
    for mu in [0.75, 1.0] {
        for slope in [0.0, 20.0] {
            for speed in [0.5, 0.75] {
                add(format!("seen_mu{mu:.2}_{}_v{speed:.2}", terrain(slope)), mu, slope, speed, false);
            }
        }
    }
    for slope in [0.0, 20.0] {
        for speed in [0.5, 0.75] {
            add(format!("unseen_friction_{}_v{speed:.2}", terrain(slope)), 0.5, slope, speed, false);
        }
    }
    for mu in [0.75, 1.0] {
        for slope in [0.0, 20.0] {
            add(format!("unseen_speed_mu{mu:.2}_{}", terrain(slope)), mu, slope, 1.0, false);
        }
    }
    for mu in [0.75, 1.0] {
        for speed in [0.5, 0.75] {
            add(format!("unseen_terrain_mu{mu:.2}_v{speed:.2}"), mu, 0.0, speed, true);
        }
    }
    add("unseen_all".into(), 0.5, 0.0, 1.0, true);

    let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let val = "seen_mu1.00_slope20_v0.75".to_string();
    let split = SplitSpec {
        train: names[..8].iter().filter(|n| **n != val).cloned().collect(),
        val: vec![val],
        test: names[8..].to_vec(),
    };
    (specs, split)
}
