//! Closed-form and finite-difference references for the dynamics routines.
//! Each check returns its worst error so callers pick the tolerance.

use mihgnn::dynamics::*;
use mihgnn::morphology::{build_graph, parse_urdf, A1_LIKE_URDF};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const M1: f64 = 1.2;
pub const M2: f64 = 0.8;
pub const L1: f64 = 0.5;
pub const L2: f64 = 0.35;
pub const G: f64 = 9.81;

pub fn point(offset: f64, length: f64, mass: f64) -> ChainLink {
    ChainLink {
        name: format!("l{offset}"),
        origin_rotation: Matrix3::identity(),
        origin_translation: Vector3::new(offset, 0.0, 0.0),
        axis: Vector3::new(0.0, -1.0, 0.0),
        mass,
        com: Vector3::new(length, 0.0, 0.0),
        inertia: Matrix3::zeros(),
    }
}

pub fn pendulum() -> LegChain {
    LegChain::new(vec![point(0.0, L1, M1), point(L1, L2, M2)], Vector3::new(L2, 0.0, 0.0)).unwrap()
}

// Closed-form Lagrangian terms for a planar double pendulum with point masses at the link tips.
pub fn analytic_mass(q: &[f64]) -> [[f64; 2]; 2] {
    let c2 = q[1].cos();
    let m11 = M1 * L1 * L1 + M2 * (L1 * L1 + L2 * L2 + 2.0 * L1 * L2 * c2);
    let m12 = M2 * (L2 * L2 + L1 * L2 * c2);
    [[m11, m12], [m12, M2 * L2 * L2]]
}

pub fn analytic_bias(q: &[f64], qd: &[f64]) -> [f64; 2] {
    let h = M2 * L1 * L2 * q[1].sin();
    let g1 = (M1 + M2) * L1 * G * q[0].cos() + M2 * L2 * G * (q[0] + q[1]).cos();
    let g2 = M2 * L2 * G * (q[0] + q[1]).cos();
    [-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]) + g1, h * qd[0] * qd[0] + g2]
}

pub fn a1_chains() -> Vec<LegChain> {
    let model = parse_urdf(A1_LIKE_URDF).unwrap();
    let g = build_graph(&model).unwrap();
    (0..4).map(|i| LegChain::from_model(&model, &g, i).unwrap()).collect()
}

pub fn standing_q(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(-0.3..0.3), rng.gen_range(0.4..1.2), rng.gen_range(-2.2..-1.0)]
}

/// Worst entry error of the mass matrix and of the Coriolis-plus-gravity
/// vector against the closed form, over random states.
pub fn pendulum_closed_form_error(states: usize, seed: u64) -> f64 {
    let chain = pendulum();
    let base = BaseState::at_rest();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let q = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let qd = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
        let m = leg_mass_matrix(&chain, &q);
        let ma = analytic_mass(&q);
        let b = leg_bias(&chain, &q, &qd, &base).unwrap();
        let ba = analytic_bias(&q, &qd);
        for i in 0..2 {
            worst = worst.max((b[i] - ba[i]).abs());
            for j in 0..2 {
                worst = worst.max((m[(i, j)] - ma[i][j]).abs());
            }
        }
    }
    worst
}

/// Relative change of total energy of the unforced pendulum after `steps`
/// RK4 steps of length `dt`.
pub fn pendulum_energy_drift(steps: usize, dt: f64) -> f64 {
    let chain = pendulum();
    let base = BaseState::at_rest();
    let accel = |q: &[f64], qd: &[f64]| -> DVector<f64> {
        let m = leg_mass_matrix(&chain, q);
        let b = leg_bias(&chain, q, qd, &base).unwrap();
        m.lu().solve(&(-b)).unwrap()
    };
    let energy = |q: &[f64], qd: &[f64]| -> f64 {
        let m: DMatrix<f64> = leg_mass_matrix(&chain, q);
        let v = DVector::from_column_slice(qd);
        0.5 * (v.transpose() * m * &v)[0] + potential_energy(&chain, q, &base.gravity)
    };
    let mut q = vec![0.4, -0.9];
    let mut qd = vec![0.0, 0.5];
    let e0 = energy(&q, &qd);
    for _ in 0..steps {
        let step = |q: &[f64], qd: &[f64]| -> (Vec<f64>, Vec<f64>) { (qd.to_vec(), accel(q, qd).as_slice().to_vec()) };
        let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let (k1q, k1v) = step(&q, &qd);
        let (k2q, k2v) = step(&add(&q, &k1q, dt / 2.0), &add(&qd, &k1v, dt / 2.0));
        let (k3q, k3v) = step(&add(&q, &k2q, dt / 2.0), &add(&qd, &k2v, dt / 2.0));
        let (k4q, k4v) = step(&add(&q, &k3q, dt), &add(&qd, &k3v, dt));
        for i in 0..2 {
            q[i] += dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
            qd[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
    }
    (energy(&q, &qd) - e0).abs() / e0.abs()
}

/// Worst entry error of the foot Jacobian against central differences of
/// forward kinematics, over every leg of the quadruped.
pub fn jacobian_fd_error(per_leg: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for chain in a1_chains() {
        for _ in 0..per_leg {
            let q = standing_q(&mut rng);
            let j = foot_jacobian(&chain, &q);
            let h = 1e-6;
            for k in 0..3 {
                let (mut qp, mut qm) = (q, q);
                qp[k] += h;
                qm[k] -= h;
                let col = (chain.foot_position(&qp) - chain.foot_position(&qm)) / (2.0 * h);
                for r in 0..3 {
                    worst = worst.max((j[(r, k)] - col[r]).abs());
                }
            }
        }
    }
    worst
}

/// Worst error of the estimator on torques synthesized from a known static
/// foot force, over every leg of the quadruped.
pub fn static_force_error(per_leg: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = BaseState::at_rest();
    let mut worst: f64 = 0.0;
    for chain in a1_chains() {
        for _ in 0..per_leg {
            let q = standing_q(&mut rng);
            let f = Vector3::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(0.0..80.0));
            let j = foot_jacobian(&chain, &q);
            let gravity_torque = inverse_dynamics(&chain, &q, &[0.0; 3], &[0.0; 3], &SupportMotion::translational(&base)).unwrap();
            let tau = gravity_torque - j.transpose() * DVector::from_column_slice(f.as_slice());
            let est = fbd_grf(&chain, &q, &[0.0; 3], &[0.0; 3], tau.as_slice(), &base).unwrap();
            worst = worst.max((est - f).norm());
        }
    }
    worst
}
