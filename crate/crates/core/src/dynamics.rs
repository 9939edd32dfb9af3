//! Rigid-body dynamics of a single leg and the floating-base-dynamics (FBD)
//! ground-reaction-force estimator.
//!
//! A leg is a serial chain of revolute joints attached to the base body. All
//! quantities are expressed in the base frame. The base may accelerate: its
//! motion enters the recursion as the acceleration of the support frame, with
//! gravity folded in as a fictitious upward acceleration.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit, Vector3};
use thiserror::Error;

use crate::morphology::{JointKind, MorphologyGraph, RobotModel};

/// Condition-number limit above which the contact Jacobian is treated as singular.
pub const DEFAULT_COND_LIMIT: f64 = 1e6;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("foot {0} does not hang off a chain of revolute joints")]
    NotAChain(usize),
    #[error("chain has {0} joints, this operation needs exactly 3")]
    WrongDof(usize),
    #[error("link '{0}' has non-positive mass or an invalid inertia")]
    BadInertia(String),
    #[error("contact Jacobian is near-singular (condition number {0:.3e})")]
    NearSingularJacobian(f64),
    #[error("need at least 3 samples, got {0}")]
    TooShort(usize),
    #[error("expected {expected} joint values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// One revolute joint and the rigid body it moves.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLink {
    pub name: String,
    /// Joint frame relative to the previous link frame.
    pub origin_rotation: Matrix3<f64>,
    pub origin_translation: Vector3<f64>,
    /// Unit axis in the joint frame.
    pub axis: Vector3<f64>,
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, link frame.
    pub inertia: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegChain {
    pub links: Vec<ChainLink>,
    /// Foot frame position in the last link frame.
    pub foot_translation: Vector3<f64>,
}

/// Positions and orientations of every joint frame for one configuration.
#[derive(Debug, Clone)]
pub struct ChainKinematics {
    pub rotations: Vec<Matrix3<f64>>,
    pub origins: Vec<Vector3<f64>>,
    pub axes: Vec<Vector3<f64>>,
    pub coms: Vec<Vector3<f64>>,
    pub foot: Vector3<f64>,
}

/// State of the base body.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseState {
    /// Orientation, world from base.
    pub rotation: Matrix3<f64>,
    /// Linear acceleration of the base origin, base frame (m/s^2), gravity excluded.
    pub lin_acc: Vector3<f64>,
    /// Angular velocity, base frame (rad/s).
    pub ang_vel: Vector3<f64>,
    /// Angular acceleration, base frame (rad/s^2).
    pub ang_acc: Vector3<f64>,
    /// Gravity in the world frame.
    pub gravity: Vector3<f64>,
}

impl Default for BaseState {
    fn default() -> Self {
        Self::at_rest()
    }
}

impl BaseState {
    pub fn at_rest() -> Self {
        Self {
            rotation: Matrix3::identity(),
            lin_acc: Vector3::zeros(),
            ang_vel: Vector3::zeros(),
            ang_acc: Vector3::zeros(),
            gravity: Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
        }
    }

    /// Builds the state from IMU readings: `specific_force` is what an
    /// accelerometer at the base origin measures (acceleration minus gravity).
    pub fn from_imu(rotation: Matrix3<f64>, specific_force: Vector3<f64>, ang_vel: Vector3<f64>, ang_acc: Vector3<f64>) -> Self {
        let gravity = Vector3::new(0.0, 0.0, -STANDARD_GRAVITY);
        Self { rotation, lin_acc: specific_force + rotation.transpose() * gravity, ang_vel, ang_acc, gravity }
    }

    /// Acceleration of the support frame with gravity folded in, base frame.
    pub fn support_acceleration(&self) -> Vector3<f64> {
        self.lin_acc - self.rotation.transpose() * self.gravity
    }
}

/// Motion of the support frame as seen by the leg recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportMotion {
    pub lin_acc: Vector3<f64>,
    pub ang_vel: Vector3<f64>,
    pub ang_acc: Vector3<f64>,
}

impl SupportMotion {
    pub fn zero() -> Self {
        Self { lin_acc: Vector3::zeros(), ang_vel: Vector3::zeros(), ang_acc: Vector3::zeros() }
    }

    /// Gravity and linear base acceleration only; base rotation is neglected.
    pub fn translational(base: &BaseState) -> Self {
        Self { lin_acc: base.support_acceleration(), ..Self::zero() }
    }

    /// Full rigid-body motion of the base.
    pub fn full(base: &BaseState) -> Self {
        Self { lin_acc: base.support_acceleration(), ang_vel: base.ang_vel, ang_acc: base.ang_acc }
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn valid_inertia(m: &Matrix3<f64>) -> bool {
    let sym = (m - m.transpose()).abs().max() <= 1e-12 * (1.0 + m.abs().max());
    sym && m.symmetric_eigenvalues().iter().all(|&e| e >= -1e-12)
}

struct Body {
    mass: f64,
    com: Vector3<f64>,
    inertia: Matrix3<f64>,
}

impl Body {
    fn empty() -> Self {
        Self { mass: 0.0, com: Vector3::zeros(), inertia: Matrix3::zeros() }
    }

    /// Adds a body whose frame sits at `(rot, trans)` in this body's frame.
    fn merge(&mut self, rot: &Matrix3<f64>, trans: &Vector3<f64>, mass: f64, com: &Vector3<f64>, inertia: &Matrix3<f64>) {
        if mass == 0.0 && inertia.abs().max() == 0.0 {
            return;
        }
        let other_com = trans + rot * com;
        let other_inertia = rot * inertia * rot.transpose();
        let total = self.mass + mass;
        let new_com = if total > 0.0 { (self.com * self.mass + other_com * mass) / total } else { self.com };
        let shift = |m: f64, c: &Vector3<f64>| {
            let d = c - new_com;
            m * (Matrix3::identity() * d.norm_squared() - d * d.transpose())
        };
        self.inertia = self.inertia + shift(self.mass, &self.com) + other_inertia + shift(mass, &other_com);
        self.com = new_com;
        self.mass = total;
    }
}

impl LegChain {
    pub fn new(links: Vec<ChainLink>, foot_translation: Vector3<f64>) -> Result<Self, DynamicsError> {
        for l in &links {
            if !(l.mass > 0.0) || !valid_inertia(&l.inertia) {
                return Err(DynamicsError::BadInertia(l.name.clone()));
            }
        }
        Ok(Self { links, foot_translation })
    }

    /// Extracts the leg ending at `foot_order[foot_pos]`. Fixed joints on the
    /// way are folded into the neighbouring transforms, and links attached by
    /// fixed joints (including the foot link) are merged into the inertia of
    /// the link they hang from.
    pub fn from_model(model: &RobotModel, graph: &MorphologyGraph, foot_pos: usize) -> Result<Self, DynamicsError> {
        let foot_joint = model
            .joint(&graph.nodes[graph.foot_order[foot_pos]].name)
            .ok_or(DynamicsError::NotAChain(foot_pos))?;
        let root = model.roots()[0].name.clone();
        // Path from the root to the foot frame.
        let mut path = vec![foot_joint];
        let mut link = foot_joint.parent_link.as_str();
        while link != root {
            let j = model.parent_joint(link).ok_or(DynamicsError::NotAChain(foot_pos))?;
            path.push(j);
            link = &j.parent_link;
        }
        path.reverse();

        let mut links: Vec<ChainLink> = Vec::new();
        let mut pending_rot = Matrix3::identity();
        let mut pending_trans = Vector3::zeros();
        for j in &path {
            let r = j.origin_rotation_matrix();
            // Compose pending transform with this joint's origin.
            let trans = pending_trans + pending_rot * j.origin_translation;
            let rot = pending_rot * r;
            match j.kind {
                JointKind::Revolute => {
                    let mut body = Body::empty();
                    collect_fixed_subtree(model, &j.child_link, &Matrix3::identity(), &Vector3::zeros(), &mut body);
                    links.push(ChainLink {
                        name: j.name.clone(),
                        origin_rotation: rot,
                        origin_translation: trans,
                        axis: j.axis,
                        mass: body.mass,
                        com: body.com,
                        inertia: body.inertia,
                    });
                    pending_rot = Matrix3::identity();
                    pending_trans = Vector3::zeros();
                }
                JointKind::Fixed => {
                    pending_rot = rot;
                    pending_trans = trans;
                }
            }
        }
        if links.is_empty() {
            return Err(DynamicsError::NotAChain(foot_pos));
        }
        Self::new(links, pending_trans)
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    fn check_len(&self, v: &[f64]) -> Result<(), DynamicsError> {
        if v.len() != self.dof() {
            return Err(DynamicsError::LengthMismatch { expected: self.dof(), got: v.len() });
        }
        Ok(())
    }

    pub fn kinematics(&self, q: &[f64]) -> ChainKinematics {
        let n = self.dof();
        let mut rotations = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut coms = Vec::with_capacity(n);
        let mut rot = Matrix3::identity();
        let mut pos = Vector3::zeros();
        for (l, &qi) in self.links.iter().zip(q) {
            pos += rot * l.origin_translation;
            let joint_rot = rot * l.origin_rotation;
            let axis = joint_rot * l.axis;
            rot = joint_rot * Rotation3::from_axis_angle(&Unit::new_unchecked(l.axis), qi).into_inner();
            rotations.push(rot);
            origins.push(pos);
            axes.push(axis);
            coms.push(pos + rot * l.com);
        }
        let foot = pos + rot * self.foot_translation;
        ChainKinematics { rotations, origins, axes, coms, foot }
    }

    pub fn foot_position(&self, q: &[f64]) -> Vector3<f64> {
        self.kinematics(q).foot
    }

    /// Total mass of the chain.
    pub fn mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }
}

fn collect_fixed_subtree(model: &RobotModel, link: &str, rot: &Matrix3<f64>, trans: &Vector3<f64>, body: &mut Body) {
    if let Some(l) = model.link(link) {
        body.merge(rot, trans, l.mass, &l.com_offset, &l.inertia);
    }
    for j in model.child_joints(link).filter(|j| j.kind == JointKind::Fixed) {
        let r = rot * j.origin_rotation_matrix();
        let t = trans + rot * j.origin_translation;
        collect_fixed_subtree(model, &j.child_link, &r, &t, body);
    }
}

/// Inverse dynamics by the recursive Newton-Euler method: joint torques
/// needed for accelerations `qdd` given the support-frame motion, with no
/// external force at the foot.
pub fn inverse_dynamics(chain: &LegChain, q: &[f64], qd: &[f64], qdd: &[f64], support: &SupportMotion) -> Result<DVector<f64>, DynamicsError> {
    chain.check_len(q)?;
    chain.check_len(qd)?;
    chain.check_len(qdd)?;
    let n = chain.dof();
    let kin = chain.kinematics(q);
    let mut omega = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut acc_com = Vec::with_capacity(n);

    let (mut w, mut dw) = (support.ang_vel, support.ang_acc);
    let mut a_prev = support.lin_acc;
    let mut o_prev = Vector3::zeros();
    for i in 0..n {
        let z = kin.axes[i];
        let r = kin.origins[i] - o_prev;
        let a_o = a_prev + dw.cross(&r) + w.cross(&w.cross(&r));
        let w_i = w + z * qd[i];
        let dw_i = dw + z * qdd[i] + w.cross(&(z * qd[i]));
        let rc = kin.coms[i] - kin.origins[i];
        acc_com.push(a_o + dw_i.cross(&rc) + w_i.cross(&w_i.cross(&rc)));
        omega.push(w_i);
        alpha.push(dw_i);
        w = w_i;
        dw = dw_i;
        a_prev = a_o;
        o_prev = kin.origins[i];
    }

    let mut tau = DVector::zeros(n);
    let mut f_next = Vector3::zeros();
    let mut n_next = Vector3::zeros();
    for i in (0..n).rev() {
        let l = &chain.links[i];
        let inertia = kin.rotations[i] * l.inertia * kin.rotations[i].transpose();
        let f = l.mass * acc_com[i] + f_next;
        let rc = kin.coms[i] - kin.origins[i];
        let mut moment = inertia * alpha[i] + omega[i].cross(&(inertia * omega[i])) + rc.cross(&(l.mass * acc_com[i])) + n_next;
        if i + 1 < n {
            moment += (kin.origins[i + 1] - kin.origins[i]).cross(&f_next);
        }
        tau[i] = kin.axes[i].dot(&moment);
        f_next = f;
        n_next = moment;
    }
    Ok(tau)
}

/// Joint-space mass matrix by the composite-rigid-body algorithm, base fixed.
pub fn leg_mass_matrix(chain: &LegChain, q: &[f64]) -> DMatrix<f64> {
    let n = chain.dof();
    let kin = chain.kinematics(&q[..n]);
    let mut m = DMatrix::zeros(n, n);
    // Composite body of links j..n: mass, first moment and inertia about the base origin.
    let mut mass = 0.0;
    let mut first = Vector3::zeros();
    let mut inertia_o = Matrix3::zeros();
    for j in (0..n).rev() {
        let l = &chain.links[j];
        let c = kin.coms[j];
        let r = kin.rotations[j];
        mass += l.mass;
        first += l.mass * c;
        inertia_o += r * l.inertia * r.transpose() + l.mass * (Matrix3::identity() * c.norm_squared() - c * c.transpose());

        // Unit rate about joint j's axis: angular velocity z, origin velocity o_j x z.
        let z = kin.axes[j];
        let v_origin = kin.origins[j].cross(&z);
        let momentum = mass * v_origin + z.cross(&first);
        let ang_momentum = inertia_o * z + first.cross(&v_origin);
        for i in 0..=j {
            let about_i = ang_momentum - kin.origins[i].cross(&momentum);
            let v = kin.axes[i].dot(&about_i);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Coriolis, centrifugal and gravity torques `C(q, qd) qd + g(q)`.
///
/// The support frame carries gravity and the base's linear acceleration;
/// base rotation terms are neglected.
pub fn leg_bias(chain: &LegChain, q: &[f64], qd: &[f64], base: &BaseState) -> Result<DVector<f64>, DynamicsError> {
    let zeros = vec![0.0; chain.dof()];
    inverse_dynamics(chain, q, qd, &zeros, &SupportMotion::translational(base))
}

/// Linear-velocity Jacobian of the foot position in the base frame.
pub fn foot_jacobian(chain: &LegChain, q: &[f64]) -> DMatrix<f64> {
    let kin = chain.kinematics(q);
    let mut j = DMatrix::zeros(3, chain.dof());
    for i in 0..chain.dof() {
        let col = kin.axes[i].cross(&(kin.foot - kin.origins[i]));
        j.set_column(i, &col);
    }
    j
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Per-leg contact force from measured joint torques, assuming the other
/// legs do not affect this one: `F = -(J^T)^-1 (tau - M qdd - bias)`.
/// Returned in the base frame (N).
pub fn fbd_grf(chain: &LegChain, q: &[f64], qd: &[f64], qdd: &[f64], tau: &[f64], base: &BaseState) -> Result<Vector3<f64>, DynamicsError> {
    fbd_grf_with_limit(chain, q, qd, qdd, tau, base, DEFAULT_COND_LIMIT)
}

pub fn fbd_grf_with_limit(
    chain: &LegChain,
    q: &[f64],
    qd: &[f64],
    qdd: &[f64],
    tau: &[f64],
    base: &BaseState,
    cond_limit: f64,
) -> Result<Vector3<f64>, DynamicsError> {
    if chain.dof() != 3 {
        return Err(DynamicsError::WrongDof(chain.dof()));
    }
    chain.check_len(tau)?;
    let jt = foot_jacobian(chain, q).transpose();
    let cond = condition_number(&jt);
    if !(cond <= cond_limit) {
        return Err(DynamicsError::NearSingularJacobian(cond));
    }
    let m = leg_mass_matrix(chain, q);
    let bias = leg_bias(chain, q, qd, base)?;
    let rhs = DVector::from_column_slice(tau) - m * DVector::from_column_slice(qdd) - bias;
    let f = jt.lu().solve(&rhs).ok_or(DynamicsError::NearSingularJacobian(f64::INFINITY))?;
    Ok(-Vector3::new(f[0], f[1], f[2]))
}

/// Time derivative of a uniformly sampled signal: central differences inside,
/// second-order one-sided differences at both ends.
pub fn estimate_derivatives(series: &[f64], dt: f64) -> Result<Vec<f64>, DynamicsError> {
    let n = series.len();
    if n < 3 {
        return Err(DynamicsError::TooShort(n));
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (series[i + 1] - series[i - 1]) / (2.0 * dt);
    }
    out[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * dt);
    out[n - 1] = (3.0 * series[n - 1] - 4.0 * series[n - 2] + series[n - 3]) / (2.0 * dt);
    Ok(out)
}

/// Potential energy of the chain in the support frame's gravity field.
pub fn potential_energy(chain: &LegChain, q: &[f64], gravity: &Vector3<f64>) -> f64 {
    let kin = chain.kinematics(q);
    chain.links.iter().zip(&kin.coms).map(|(l, c)| -l.mass * gravity.dot(c)).sum()
}

/// Skew-symmetric cross-product matrix, exposed for frame conversions.
pub fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    skew(v)
}
