#![allow(dead_code)]

pub mod dynamics_oracles;

use mihgnn::hgnn::{GraphSample, InputDims, Labels};
use mihgnn::morphology::{build_graph, parse_urdf, MorphologyGraph, A1_LIKE_URDF};
use mihgnn::numcore::{Matrix, Tape, TensorError, TensorId};
use mihgnn::training::{mean_loss, Trainable};
use mihgnn::Task;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Output rows moved to where their feet went.
pub fn permute_outputs(y: &Matrix, foot_map: &[usize]) -> Matrix {
    let mut out = y.clone();
    for (k, &to) in foot_map.iter().enumerate() {
        out.row_mut(to).assign(&y.row(k));
    }
    out
}

pub fn quad_graph() -> MorphologyGraph {
    build_graph(&parse_urdf(A1_LIKE_URDF).unwrap()).unwrap()
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

pub fn random_sample<R: Rng>(graph: &MorphologyGraph, dims: InputDims, task: Task, rng: &mut R) -> GraphSample {
    let inputs = (0..graph.num_nodes())
        .map(|i| (0..dims.get(graph.node_type(i))).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let n = graph.foot_order.len();
    let labels = match task {
        Task::Contact => Labels::Contact((0..n).map(|_| rng.gen_range(0..2)).collect()),
        Task::Grf => Labels::Grf((0..n).map(|_| rng.gen_range(-50.0..150.0)).collect()),
    };
    GraphSample { inputs, labels }
}

/// `|a - b| / max(|a|, |b|)` over whole vectors (0 when both vanish).
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` at `x`.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error between the tape gradient of a scalar expression of
/// `inputs` and central differences.
pub fn op_gradient_error(inputs: &[Matrix], build: impl Fn(&mut Tape, &[TensorId]) -> Result<TensorId, TensorError>) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let out = build(&mut tape, &ids).unwrap();
    tape.backward(out).unwrap();
    let analytic: Vec<f64> = ids.iter().flat_map(|&id| tape.grad(id).iter().copied().collect::<Vec<_>>()).collect();

    let flat: Vec<f64> = inputs.iter().flat_map(|m| m.iter().copied()).collect();
    let eval = |x: &[f64]| {
        let mut tape = Tape::new();
        let mut off = 0;
        let ids: Vec<TensorId> = inputs
            .iter()
            .map(|m| {
                let v = Matrix::from_shape_vec(m.dim(), x[off..off + m.len()].to_vec()).unwrap();
                off += m.len();
                tape.constant(v)
            })
            .collect();
        let out = build(&mut tape, &ids).unwrap();
        tape.scalar(out)
    };
    rel_err(&analytic, &fd_gradient(eval, &flat, 1e-6))
}

/// Relative error between the backpropagated parameter gradient of a
/// model's batch loss and central differences over every parameter.
pub fn model_gradient_error<M: Trainable>(model: &mut M, batch: &[M::Sample]) -> f64
where
    M::Sample: Clone,
{
    let (_, grads) = mihgnn::training::loss_and_grads(model, batch).unwrap();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
    let flat: Vec<f64> = model.params().iter().flat_map(|p| p.value.iter().copied()).collect();
    let samples = batch.to_vec();
    let numeric = fd_gradient(
        |x| {
            let mut off = 0;
            for v in model.params_mut().values_mut() {
                for (d, s) in v.iter_mut().zip(&x[off..]) {
                    *d = *s;
                }
                off += v.len();
            }
            mean_loss(model, &samples, samples.len()).unwrap()
        },
        &flat,
        1e-6,
    );
    rel_err(&analytic, &numeric)
}

/// Reduces any tensor to a scalar with fixed, uneven row and column weights,
/// so every entry's gradient is distinct.
pub fn project(tape: &mut Tape, x: TensorId) -> Result<TensorId, TensorError> {
    let (r, c) = tape.shape(x);
    let left = tape.constant(Matrix::from_shape_fn((1, r), |(_, i)| 0.6 + (1.3 * i as f64 + 0.2).sin()));
    let right = tape.constant(Matrix::from_shape_fn((c, 1), |(j, _)| 0.4 + (0.7 * j as f64 + 1.1).cos()));
    let y = tape.matmul(x, right)?;
    tape.matmul(left, y)
}

pub type OpBuilder = Box<dyn Fn(&mut Tape, &[TensorId]) -> Result<TensorId, TensorError>>;

/// One differentiable expression per tape operation, with random inputs.
pub fn op_cases<R: Rng>(rng: &mut R) -> Vec<(&'static str, Vec<Matrix>, OpBuilder)> {
    let m = rng.gen_range(1..5);
    let n = rng.gen_range(1..5);
    let k = rng.gen_range(1..5);
    let mut mat = |r: usize, c: usize| random_matrix(r, c, rng);
    let labels: Vec<usize> = (0..m).map(|i| (i * 7 + k) % 3).collect();
    let label = labels[0];
    vec![
        ("matmul", vec![mat(m, k), mat(k, n)], Box::new(|t, x| {
            let y = t.matmul(x[0], x[1])?;
            project(t, y)
        })),
        ("add", vec![mat(m, n), mat(m, n)], Box::new(|t, x| {
            let y = t.add(x[0], x[1])?;
            project(t, y)
        })),
        ("add_row", vec![mat(m, n), mat(1, n)], Box::new(|t, x| {
            let y = t.add_row(x[0], x[1])?;
            project(t, y)
        })),
        ("relu", vec![mat(m, n)], Box::new(|t, x| {
            let y = t.relu(x[0]);
            project(t, y)
        })),
        ("scale", vec![mat(m, n)], Box::new(|t, x| {
            let y = t.scale(x[0], -1.7);
            project(t, y)
        })),
        ("row_sum", vec![mat(m, n)], Box::new(|t, x| {
            let y = t.row_sum(x[0]);
            project(t, y)
        })),
        ("sum", vec![mat(m, n)], Box::new(|t, x| Ok(t.sum(x[0])))),
        ("concat_rows", vec![mat(m, n), mat(k, n)], Box::new(|t, x| {
            let y = t.concat_rows(&[x[0], x[1], x[0]])?;
            project(t, y)
        })),
        ("select_rows", vec![mat(3, n)], Box::new(|t, x| {
            let y = t.select_rows(x[0], vec![2, 0, 2, 1])?;
            project(t, y)
        })),
        ("gather_sum", vec![mat(3, n)], Box::new(|t, x| {
            let y = t.gather_sum(x[0], std::sync::Arc::new(vec![vec![0, 2], vec![], vec![1, 1, 2]]))?;
            project(t, y)
        })),
        ("softmax_cross_entropy", vec![mat(1, 3)], Box::new(move |t, x| t.softmax_cross_entropy(x[0], label))),
        ("cross_entropy", vec![mat(m, 3)], Box::new(move |t, x| t.cross_entropy(x[0], &labels))),
        ("mse", vec![mat(m, n), mat(m, n)], Box::new(|t, x| t.mse(x[0], x[1]))),
        ("sum_squared_error", vec![mat(m, n), mat(m, n)], Box::new(|t, x| t.sum_squared_error(x[0], x[1]))),
    ]
}
