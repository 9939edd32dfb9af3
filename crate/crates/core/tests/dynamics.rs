mod common;

use common::dynamics_oracles::*;
use mihgnn::dynamics::*;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn double_pendulum_matches_closed_form() {
    let err = pendulum_closed_form_error(50, 11);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn double_pendulum_energy_is_conserved() {
    let drift = pendulum_energy_drift(10_000, 1e-4);
    assert!(drift < 1e-5, "relative drift {drift}");
}

#[test]
fn mass_matrix_matches_unit_acceleration_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let support = SupportMotion::zero();
    for chain in a1_chains() {
        for _ in 0..10 {
            let q = standing_q(&mut rng);
            let m = leg_mass_matrix(&chain, &q);
            for j in 0..3 {
                let mut e = [0.0; 3];
                e[j] = 1.0;
                let col = inverse_dynamics(&chain, &q, &[0.0; 3], &e, &support).unwrap();
                for i in 0..3 {
                    assert!((m[(i, j)] - col[i]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let err = jacobian_fd_error(20, 5);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn stretched_chain_jacobian_column_norms() {
    // Axes along y, links along x: column norm is the distance from each joint to the tip.
    let chain = LegChain::new(
        vec![point(0.0, 0.3, 1.0), point(0.3, 0.2, 1.0), point(0.2, 0.1, 1.0)],
        Vector3::new(0.25, 0.0, 0.0),
    )
    .unwrap();
    let j = foot_jacobian(&chain, &[0.0; 3]);
    let expect = [0.75, 0.45, 0.25];
    for k in 0..3 {
        assert!((j.column(k).norm() - expect[k]).abs() < 1e-12);
    }
}

#[test]
fn static_force_is_recovered() {
    let err = static_force_error(20, 9);
    assert!(err < 1e-9, "{err}");
}

#[test]
fn dynamic_force_is_recovered_without_base_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut base = BaseState::at_rest();
    base.lin_acc = Vector3::new(0.4, -0.2, 1.1);
    base.rotation = *nalgebra::Rotation3::from_euler_angles(0.05, -0.08, 0.3).matrix();
    for chain in a1_chains() {
        for _ in 0..10 {
            let q = standing_q(&mut rng);
            let qd: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let qdd: Vec<f64> = (0..3).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let f = DVector::from_vec(vec![3.0, -4.0, 60.0]);
            let id = inverse_dynamics(&chain, &q, &qd, &qdd, &SupportMotion::translational(&base)).unwrap();
            let tau = id - foot_jacobian(&chain, &q).transpose() * &f;
            let est = fbd_grf(&chain, &q, &qd, &qdd, tau.as_slice(), &base).unwrap();
            assert!((est - Vector3::new(3.0, -4.0, 60.0)).norm() < 1e-8);
        }
    }
}

#[test]
fn straight_leg_is_singular() {
    let chain = &a1_chains()[0];
    let r = fbd_grf(chain, &[0.0; 3], &[0.0; 3], &[0.0; 3], &[1.0, 1.0, 1.0], &BaseState::at_rest());
    assert!(matches!(r, Err(DynamicsError::NearSingularJacobian(c)) if c > DEFAULT_COND_LIMIT));
}

#[test]
fn imu_state_cancels_gravity_for_free_fall() {
    // A free-falling accelerometer reads zero; the support frame then carries no load.
    let base = BaseState::from_imu(Matrix3::identity(), Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
    assert!(base.support_acceleration().norm() < 1e-15);
    let chain = &a1_chains()[1];
    let b = leg_bias(chain, &[0.1, 0.8, -1.5], &[0.0; 3], &base).unwrap();
    assert!(b.norm() < 1e-12);
}

#[test]
fn accelerating_base_equals_extra_gravity() {
    let chain = &a1_chains()[2];
    let q = [0.05, 0.9, -1.7];
    let mut moving = BaseState::at_rest();
    moving.lin_acc = Vector3::new(1.0, 0.5, -2.0);
    let mut heavier = BaseState::at_rest();
    heavier.gravity = Vector3::new(-1.0, -0.5, -G + 2.0);
    let a = leg_bias(chain, &q, &[0.0; 3], &moving).unwrap();
    let b = leg_bias(chain, &q, &[0.0; 3], &heavier).unwrap();
    assert!((a - b).norm() < 1e-12);
}

fn assert_spd(m: &DMatrix<f64>) {
    assert!((m - m.transpose()).abs().max() < 1e-12);
    assert!(m.clone().cholesky().is_some());
}

proptest! {
    #[test]
    fn mass_matrix_is_symmetric_positive_definite(a in -0.8f64..0.8, b in -1.0f64..3.0, c in -2.7f64..-0.3, leg in 0usize..4) {
        let chains = a1_chains();
        assert_spd(&leg_mass_matrix(&chains[leg], &[a, b, c]));
    }

    #[test]
    fn inverse_dynamics_is_affine_in_acceleration(
        q in prop::array::uniform3(-1.5f64..1.5),
        qd in prop::array::uniform3(-5.0f64..5.0),
        x in prop::array::uniform3(-30.0f64..30.0),
        y in prop::array::uniform3(-30.0f64..30.0),
    ) {
        let chain = &a1_chains()[3];
        let s = SupportMotion::translational(&BaseState::at_rest());
        let zero = inverse_dynamics(chain, &q, &qd, &[0.0; 3], &s).unwrap();
        let tx = inverse_dynamics(chain, &q, &qd, &x, &s).unwrap() - &zero;
        let ty = inverse_dynamics(chain, &q, &qd, &y, &s).unwrap() - &zero;
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let txy = inverse_dynamics(chain, &q, &qd, &xy, &s).unwrap() - &zero;
        prop_assert!((txy - tx - ty).norm() < 1e-9);
    }
}

#[test]
fn full_base_motion_matches_point_mass_trajectories() {
    // Point-mass 3-link chain with mixed axes; torques from finite-differenced world accelerations.
    let mk = |t: [f64; 3], axis: [f64; 3], com: [f64; 3], mass: f64| ChainLink {
        name: String::new(),
        origin_rotation: Matrix3::identity(),
        origin_translation: Vector3::from(t),
        axis: Vector3::from(axis).normalize(),
        mass,
        com: Vector3::from(com),
        inertia: Matrix3::zeros(),
    };
    let chain = LegChain::new(
        vec![
            mk([0.2, 0.05, 0.0], [1.0, 0.0, 0.0], [0.0, 0.06, 0.0], 0.7),
            mk([0.0, 0.08, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -0.1], 1.0),
            mk([0.0, 0.0, -0.2], [0.0, 1.0, 0.2], [0.01, 0.0, -0.12], 0.2),
        ],
        Vector3::new(0.0, 0.0, -0.2),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let gravity = Vector3::new(0.0, 0.0, -G);
    for _ in 0..20 {
        let r = |rng: &mut ChaCha8Rng, s: f64| Vector3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s));
        let (a, w, dw) = (r(&mut rng, 3.0), r(&mut rng, 2.0), r(&mut rng, 5.0));
        let (q0, qd, qdd) = (r(&mut rng, 1.0), r(&mut rng, 3.0), r(&mut rng, 20.0));
        let world = |t: f64| -> Vec<Vector3<f64>> {
            let rot = nalgebra::Rotation3::new(w * t + dw * (0.5 * t * t));
            let q: Vec<f64> = (0..3).map(|i| q0[i] + qd[i] * t + 0.5 * qdd[i] * t * t).collect();
            chain.kinematics(&q).coms.iter().map(|c| a * (0.5 * t * t) + rot * c).collect()
        };
        let h = 1e-4;
        let (p, c, m) = (world(h), world(0.0), world(-h));
        let kin = chain.kinematics(q0.as_slice());
        let mut expect = [0.0; 3];
        for k in 0..3 {
            for i in k..3 {
                let acc = (p[i] - 2.0 * c[i] + m[i]) / (h * h);
                let force = chain.links[i].mass * (acc - gravity);
                expect[k] += kin.axes[k].dot(&(c[i] - kin.origins[k]).cross(&force));
            }
        }
        let base = BaseState { lin_acc: a, ang_vel: w, ang_acc: dw, ..BaseState::at_rest() };
        let tau = inverse_dynamics(&chain, q0.as_slice(), qd.as_slice(), qdd.as_slice(), &SupportMotion::full(&base)).unwrap();
        for k in 0..3 {
            assert!((tau[k] - expect[k]).abs() < 1e-5 * (1.0 + expect[k].abs()), "{tau} vs {expect:?}");
        }
    }
}
