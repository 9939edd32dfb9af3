//! Contact and force metrics, batch prediction, sequence-level FBD
//! estimates, and evaluation reports.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{col, make_windows, DataError, SequenceDataset, Window, NUM_LEGS};
use crate::dynamics::{estimate_derivatives, fbd_grf, BaseState, DynamicsError, LegChain};
use crate::hgnn::{GraphSample, HgnnModel};
use crate::morphology::{build_graph, RobotModel};
use crate::numcore::{Matrix, Tape};
use crate::training::{FlatWindows, GraphWindows, MlpModel, MlpSample, SampleSource, TrainError, TrainedModel};
use crate::Task;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Binary F1 with contact as the positive class. A leg that is never in
    /// contact and never predicted in contact scores 1.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.tp + self.fp + self.tn + self.fn_;
        if n == 0 {
            1.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactMetrics {
    pub f1_per_leg: Vec<f64>,
    pub f1_avg: f64,
    pub state_accuracy_16: f64,
    pub accuracy_per_leg: Vec<f64>,
    pub confusion: Vec<Confusion>,
}

/// Predicted class of a 2-logit row; ties go to "no contact".
pub fn argmax_class(logits: &[f64]) -> usize {
    usize::from(logits[1] > logits[0])
}

/// Index of a joint contact state among the 16, with the first foot as the
/// most significant bit.
pub fn state_index(contacts: &[usize]) -> usize {
    contacts.iter().fold(0, |acc, &c| acc * 2 + c)
}

/// `pred_logits[s]` is an `n_f x 2` matrix, `labels[s]` has `n_f` entries.
pub fn contact_metrics(pred_logits: &[Matrix], labels: &[Vec<usize>]) -> Result<ContactMetrics, EvalError> {
    if pred_logits.len() != labels.len() {
        return Err(EvalError::ShapeMismatch(format!("{} predictions, {} labels", pred_logits.len(), labels.len())));
    }
    let nf = labels.first().map_or(NUM_LEGS, Vec::len);
    let mut confusion = vec![Confusion::default(); nf];
    let mut all_right = 0;
    for (p, l) in pred_logits.iter().zip(labels) {
        if p.dim() != (nf, 2) || l.len() != nf {
            return Err(EvalError::ShapeMismatch(format!("prediction {:?} vs {} labels", p.dim(), l.len())));
        }
        let pred: Vec<usize> = (0..nf).map(|f| argmax_class(&[p[(f, 0)], p[(f, 1)]])).collect();
        for f in 0..nf {
            let c = &mut confusion[f];
            match (pred[f], l[f]) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        if state_index(&pred) == state_index(l) {
            all_right += 1;
        }
    }
    let f1_per_leg: Vec<f64> = confusion.iter().map(Confusion::f1).collect();
    let accuracy_per_leg: Vec<f64> = confusion.iter().map(Confusion::accuracy).collect();
    let state_accuracy_16 = if labels.is_empty() { 1.0 } else { all_right as f64 / labels.len() as f64 };
    // A state is right only if every leg is right.
    assert!(accuracy_per_leg.iter().all(|&a| state_accuracy_16 <= a));
    Ok(ContactMetrics {
        f1_avg: f1_per_leg.iter().sum::<f64>() / nf as f64,
        f1_per_leg,
        state_accuracy_16,
        accuracy_per_leg,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRmse {
    pub name: String,
    pub rmse: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfMetrics {
    pub rmse_per_sequence: Vec<SequenceRmse>,
    pub rmse_total: f64,
}

fn sum_sq(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<(f64, usize), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::ShapeMismatch(format!("{} predictions, {} targets", pred.len(), truth.len())));
    }
    let mut se = 0.0;
    let mut n = 0;
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(EvalError::ShapeMismatch(format!("{} vs {} feet", p.len(), t.len())));
        }
        se += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        n += p.len();
    }
    Ok((se, n))
}

/// RMSE over all feet and samples of one sequence.
pub fn grf_rmse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64, EvalError> {
    let (se, n) = sum_sq(pred, truth)?;
    Ok(if n == 0 { 0.0 } else { (se / n as f64).sqrt() })
}

/// Per-sequence RMSE and the RMSE pooled over every sequence.
pub fn grf_metrics(sequences: &[(String, Vec<Vec<f64>>, Vec<Vec<f64>>)]) -> Result<GrfMetrics, EvalError> {
    let mut total_se = 0.0;
    let mut total_n = 0;
    let mut per = Vec::new();
    for (name, pred, truth) in sequences {
        let (se, n) = sum_sq(pred, truth)?;
        total_se += se;
        total_n += n;
        per.push(SequenceRmse { name: name.clone(), rmse: if n == 0 { 0.0 } else { (se / n as f64).sqrt() }, samples: pred.len() });
    }
    Ok(GrfMetrics { rmse_per_sequence: per, rmse_total: if total_n == 0 { 0.0 } else { (total_se / total_n as f64).sqrt() } })
}

/// Model outputs for every sample of a source, one `n_f x n_y` matrix each.
pub fn predict_hgnn<S: SampleSource<Item = GraphSample>>(model: &HgnnModel, src: &S, batch_size: usize) -> Result<Vec<Matrix>, EvalError> {
    let mut out = Vec::with_capacity(src.len());
    let mut start = 0;
    while start < src.len() {
        let end = (start + batch_size).min(src.len());
        let batch: Vec<GraphSample> = (start..end).map(|i| src.get(i)).collect();
        let refs: Vec<&GraphSample> = batch.iter().collect();
        out.extend(model.forward_batch(&refs).map_err(TrainError::from)?);
        start = end;
    }
    Ok(out)
}

pub fn predict_mlp<S: SampleSource<Item = MlpSample>>(model: &MlpModel, src: &S, batch_size: usize) -> Result<Vec<Vec<f64>>, EvalError> {
    let mut out = Vec::with_capacity(src.len());
    let mut start = 0;
    while start < src.len() {
        let end = (start + batch_size).min(src.len());
        let mut x = Matrix::zeros((end - start, model.config.input_dim));
        for (r, i) in (start..end).enumerate() {
            x.row_mut(r).assign(&ndarray::ArrayView1::from(&src.get(i).input[..]));
        }
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape, false);
        let y = model.forward_tape(&mut tape, &bound, x)?;
        out.extend(tape.value(y).rows().into_iter().map(|r| r.to_vec()));
        start = end;
    }
    Ok(out)
}

/// Force estimate for one leg at one sample, world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbdEstimate {
    pub t: f64,
    pub leg: usize,
    /// `None` when the contact Jacobian is near-singular.
    pub force: Option<Vector3<f64>>,
}

/// Floating-base estimates for every sample and leg of a recording. Joint
/// and base angular accelerations come from differentiating the measured
/// velocities; the base orientation from the recorded pose.
pub fn fbd_sequence(ds: &SequenceDataset, robot: &RobotModel) -> Result<Vec<FbdEstimate>, EvalError> {
    let graph = build_graph(robot).map_err(|e| DataError::InvalidParams(e.to_string()))?;
    let chains: Vec<LegChain> = (0..NUM_LEGS).map(|l| LegChain::from_model(robot, &graph, l)).collect::<Result<_, _>>()?;
    let dt = 1.0 / ds.meta.sample_rate;
    let dw: Vec<Vec<f64>> = (0..3).map(|k| estimate_derivatives(ds.column(col::WB + k), dt)).collect::<Result<_, _>>()?;
    let qdd: Vec<Vec<f64>> = (0..3 * NUM_LEGS).map(|j| estimate_derivatives(ds.column(col::dq(j)), dt)).collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(ds.len() * NUM_LEGS);
    for i in 0..ds.len() {
        let get = |c: usize| ds.column(c)[i];
        let quat = UnitQuaternion::from_quaternion(Quaternion::new(get(col::QUAT), get(col::QUAT + 1), get(col::QUAT + 2), get(col::QUAT + 3)));
        let rot = *quat.to_rotation_matrix().matrix();
        let base = BaseState::from_imu(
            rot,
            Vector3::new(get(col::AB), get(col::AB + 1), get(col::AB + 2)),
            Vector3::new(get(col::WB), get(col::WB + 1), get(col::WB + 2)),
            Vector3::new(dw[0][i], dw[1][i], dw[2][i]),
        );
        for (leg, chain) in chains.iter().enumerate() {
            let j = |k: usize| 3 * leg + k;
            let q: Vec<f64> = (0..3).map(|k| get(col::q(j(k)))).collect();
            let qd: Vec<f64> = (0..3).map(|k| get(col::dq(j(k)))).collect();
            let acc: Vec<f64> = (0..3).map(|k| qdd[j(k)][i]).collect();
            let tau: Vec<f64> = (0..3).map(|k| get(col::tau(j(k)))).collect();
            let force = match fbd_grf(chain, &q, &qd, &acc, &tau, &base) {
                Ok(f) => Some(rot * f),
                Err(DynamicsError::NearSingularJacobian(_)) => None,
                Err(e) => return Err(e.into()),
            };
            out.push(FbdEstimate { t: get(col::T), leg, force });
        }
    }
    Ok(out)
}

/// Vertical force per sample (rows) and leg, holding the last valid
/// estimate over near-singular samples (zero before the first).
pub fn fbd_vertical(estimates: &[FbdEstimate]) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(estimates.len() / NUM_LEGS);
    let mut last = [0.0; NUM_LEGS];
    for chunk in estimates.chunks(NUM_LEGS) {
        let mut row = vec![0.0; NUM_LEGS];
        for e in chunk {
            if let Some(f) = e.force {
                last[e.leg] = f.z;
            }
            row[e.leg] = last[e.leg];
        }
        rows.push(row);
    }
    rows
}

fn grf_truth(ds: &SequenceDataset, windows: &[Window]) -> Vec<Vec<f64>> {
    windows.iter().map(|w| (0..NUM_LEGS).map(|l| ds.grf(l, w.last())).collect()).collect()
}

/// Scores a model on windows of the given recordings: contact metrics
/// pooled over all windows, or force RMSE per recording and in total.
pub fn evaluate(model: &TrainedModel, sequences: &[(String, SequenceDataset)], stride: usize) -> Result<Metrics, EvalError> {
    const BATCH: usize = 256;
    if let TrainedModel::Hgnn(m) = model {
        if m.config.task == Task::Contact {
            let mut logits = Vec::new();
            let mut labels = Vec::new();
            for (_, ds) in sequences {
                let windows = make_windows(ds, stride)?;
                labels.extend(windows.iter().map(|w| (0..NUM_LEGS).map(|l| ds.contact(l, w.last())).collect::<Vec<_>>()));
                logits.extend(predict_hgnn(m, &GraphWindows::new(windows, Task::Contact, &m.graph)?, BATCH)?);
            }
            return Ok(Metrics::Contact(contact_metrics(&logits, &labels)?));
        }
    }
    let mut rows = Vec::with_capacity(sequences.len());
    for (name, ds) in sequences {
        let windows = make_windows(ds, stride)?;
        let truth = grf_truth(ds, &windows);
        let pred = match model {
            TrainedModel::Hgnn(m) => predict_hgnn(m, &GraphWindows::new(windows, Task::Grf, &m.graph)?, BATCH)?
                .iter()
                .map(|y| y.iter().copied().collect())
                .collect(),
            TrainedModel::Mlp(m) => predict_mlp(m, &FlatWindows { windows }, BATCH)?,
        };
        rows.push((name.clone(), pred, truth));
    }
    Ok(Metrics::Grf(grf_metrics(&rows)?))
}

/// Force RMSE of the floating-base estimator, scored on the same windows
/// (final samples) a learned model would be.
pub fn fbd_metrics(robot: &RobotModel, sequences: &[(String, SequenceDataset)], stride: usize) -> Result<GrfMetrics, EvalError> {
    let mut rows = Vec::with_capacity(sequences.len());
    for (name, ds) in sequences {
        let vertical = fbd_vertical(&fbd_sequence(ds, robot)?);
        let windows = make_windows(ds, stride)?;
        let pred = windows.iter().map(|w| vertical[w.last()].clone()).collect();
        rows.push((name.clone(), pred, grf_truth(ds, &windows)));
    }
    grf_metrics(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metrics {
    Contact(ContactMetrics),
    Grf(GrfMetrics),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: crate::Task,
    pub dataset: String,
    pub metrics: Metrics,
    pub config_hash: String,
    pub checkpoint_hash: String,
}

impl Report {
    /// Flat `metric,value` lines for plotting tools.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        match &self.metrics {
            Metrics::Contact(m) => {
                for (l, f) in m.f1_per_leg.iter().enumerate() {
                    s.push_str(&format!("f1_leg{l},{f}\n"));
                }
                s.push_str(&format!("f1_avg,{}\nstate_accuracy_16,{}\n", m.f1_avg, m.state_accuracy_16));
            }
            Metrics::Grf(m) => {
                for r in &m.rmse_per_sequence {
                    s.push_str(&format!("rmse_{},{}\n", r.name, r.rmse));
                }
                s.push_str(&format!("rmse_total,{}\n", m.rmse_total));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ties_mean_no_contact() {
        assert_eq!(argmax_class(&[0.3, 0.3]), 0);
        assert_eq!(argmax_class(&[0.3, 0.4]), 1);
    }

    #[test]
    fn state_bits() {
        assert_eq!(state_index(&[1, 0, 0, 0]), 8);
        assert_eq!(state_index(&[0, 1, 0, 1]), 5);
        assert_eq!(state_index(&[1, 1, 1, 1]), 15);
    }

    #[test]
    fn shape_errors() {
        let p = vec![array![[0.0, 1.0], [1.0, 0.0]]];
        assert!(contact_metrics(&p, &[vec![1, 0, 1]]).is_err());
        assert!(contact_metrics(&p, &[]).is_err());
        assert!(grf_rmse(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
    }
}
