//! Synthetic trotting-quadruped recordings.
//!
//! Foot trajectories are prescribed in a ground-aligned frame: stance feet
//! press into a spring-damper ground along a smooth penetration profile and
//! swing feet follow a lifted smoothstep arc. The base moves forward at
//! constant speed, bounces vertically as driven by the net normal force and
//! rocks slightly in roll and pitch. Joint angles follow from inverse
//! kinematics, joint torques from full-base inverse dynamics minus the
//! contact-force term plus actuator effects the rigid-body model
//! does not capture (rotor inertia and friction). Measurement channels
//! get seeded Gaussian noise; labels never do.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{col, DataError, Metadata, SequenceDataset, NUM_LEGS};
use crate::dynamics::{foot_jacobian, inverse_dynamics, BaseState, LegChain, SupportMotion, STANDARD_GRAVITY};
use crate::morphology::{build_graph, RobotModel};

/// Standard deviations of the Gaussian noise added to each measured channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStd {
    pub q: f64,
    pub dq: f64,
    pub tau: f64,
    pub ab: f64,
    pub wb: f64,
}

impl NoiseStd {
    pub const ZERO: NoiseStd = NoiseStd { q: 0.0, dq: 0.0, tau: 0.0, ab: 0.0, wb: 0.0 };

    /// Typical encoder / IMU / current-sensor noise multiplied by `scale`.
    pub fn scaled(scale: f64) -> Self {
        Self { q: 0.005 * scale, dq: 0.1 * scale, tau: 0.3 * scale, ab: 0.2 * scale, wb: 0.02 * scale }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Ground friction coefficient.
    pub mu: f64,
    /// Ground slope, degrees; the robot walks uphill.
    pub slope_deg: f64,
    /// Forward speed, m/s; 0 gives a standing robot.
    pub speed: f64,
    /// Amplitude of the per-footstep ground height jitter, m; 0 is smooth ground.
    /// Rough ground also widens the per-footstep load variation by `10 * terrain_jitter`.
    pub terrain_jitter: f64,
    /// Relative stride-to-stride variation of each footstep's load.
    pub load_variation: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub noise: NoiseStd,
    pub seed: u64,
    /// Ground stiffness, N/m.
    pub k_p: f64,
    /// Ground damping, N·s/m.
    pub k_d: f64,
    /// Vertical force above which a foot counts as in contact, N.
    pub contact_threshold: f64,
    pub gait_period: f64,
    pub stand_height: f64,
    pub swing_height: f64,
    /// Peak braking/propulsion force ratio per m/s of speed.
    pub tangential_ratio: f64,
    /// Actuator viscous friction, N·m·s/rad.
    pub viscous_friction: f64,
    /// Actuator Coulomb friction, N·m.
    pub coulomb_friction: f64,
    /// Reflected rotor inertia of each actuator, kg·m².
    pub armature: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            slope_deg: 0.0,
            speed: 0.5,
            terrain_jitter: 0.0,
            load_variation: 0.1,
            duration: 10.0,
            sample_rate: 500.0,
            noise: NoiseStd::scaled(1.0),
            seed: 0,
            k_p: 1e4,
            k_d: 20.0,
            contact_threshold: 1.0,
            gait_period: 0.5,
            stand_height: 0.30,
            swing_height: 0.06,
            tangential_ratio: 0.3,
            viscous_friction: 0.02,
            coulomb_friction: 0.1,
            armature: 0.009,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidParams(m.into()));
        if !(self.mu > 0.0) {
            return bad("mu must be positive");
        }
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.sample_rate > 0.0) {
            return bad("sample rate must be positive");
        }
        if !(self.speed >= 0.0) {
            return bad("speed must be non-negative");
        }
        if !(self.slope_deg.abs() < 45.0) {
            return bad("slope must be within (-45, 45) degrees");
        }
        if !(self.k_p > 0.0 && self.k_d >= 0.0 && self.gait_period > 0.0 && self.stand_height > 0.0) {
            return bad("ground and gait constants must be positive");
        }
        if !(self.terrain_jitter >= 0.0 && self.terrain_jitter < 0.05) {
            return bad("terrain jitter must be in [0, 0.05) m");
        }
        if !(self.load_variation >= 0.0 && self.load_variation + 10.0 * self.terrain_jitter < 1.0) {
            return bad("load variation must keep every footstep load positive");
        }
        let n = &self.noise;
        if [n.q, n.dq, n.tau, n.ab, n.wb].iter().any(|&s| !(s >= 0.0)) {
            return bad("noise levels must be non-negative");
        }
        Ok(())
    }
}

/// Hip-roll / hip-pitch / knee leg with a lateral thigh offset and straight links.
struct LegGeometry {
    hip: Vector3<f64>,
    lateral: f64,
    thigh: f64,
    calf: f64,
}

impl LegGeometry {
    fn from_chain(chain: &LegChain) -> Result<Self, DataError> {
        let unsupported = || DataError::InvalidParams("leg geometry is not hip-x / thigh-y / knee-y".into());
        if chain.dof() != 3 {
            return Err(unsupported());
        }
        let near = |a: &Vector3<f64>, b: Vector3<f64>| (a - b).norm() < 1e-9;
        let l = &chain.links;
        let axes_ok = near(&l[0].axis, Vector3::x()) && near(&l[1].axis, Vector3::y()) && near(&l[2].axis, Vector3::y());
        let frames_ok = l.iter().all(|k| (k.origin_rotation - Matrix3::identity()).norm() < 1e-12);
        let t1 = l[1].origin_translation;
        let t2 = l[2].origin_translation;
        let tf = chain.foot_translation;
        let straight = t1.x == 0.0 && t1.z == 0.0 && t2.x == 0.0 && t2.y == 0.0 && tf.x == 0.0 && tf.y == 0.0;
        if !(axes_ok && frames_ok && straight && t2.z < 0.0 && tf.z < 0.0) {
            return Err(unsupported());
        }
        Ok(Self { hip: l[0].origin_translation, lateral: t1.y, thigh: -t2.z, calf: -tf.z })
    }

    /// Joint angles placing the foot at `p` (base frame), knee bent backwards.
    fn inverse(&self, p: &Vector3<f64>) -> Option<[f64; 3]> {
        let d = p - self.hip;
        let rho2 = d.y * d.y + d.z * d.z - self.lateral * self.lateral;
        if rho2 <= 0.0 {
            return None;
        }
        let zp = -rho2.sqrt();
        let xp = d.x;
        let q1 = d.z.atan2(d.y) - zp.atan2(self.lateral);
        let (l1, l2) = (self.thigh, self.calf);
        let c3 = (xp * xp + zp * zp - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if !(c3.abs() < 1.0) {
            return None;
        }
        let q3 = -c3.acos();
        let q2 = (-xp).atan2(-zp) - (l2 * q3.sin()).atan2(l1 + l2 * q3.cos());
        Some([q1, q2, q3])
    }
}

fn wrap_to_pi(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    a - t * ((a + std::f64::consts::PI) / t).floor()
}

struct Gait<'a> {
    p: &'a GenParams,
    slope: f64,
    stance: f64,
    delta_max: f64,
    standing_delta: f64,
    nominal: Vec<Vector3<f64>>,
    phase_offset: [f64; NUM_LEGS],
    /// Fourier coefficients (k, a_k, b_k) of the base's vertical acceleration.
    bounce: Vec<(f64, f64, f64)>,
    rock: f64,
    // Per-leg footstep ground heights and load factors, indexed from footstep -1.
    heights: Vec<Vec<f64>>,
    loads: Vec<Vec<f64>>,
}

const TWO_PI: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

impl<'a> Gait<'a> {
    fn walking(&self) -> bool {
        self.p.speed > 0.0
    }

    /// Normal-force shape per unit penetration amplitude, at stance phase `s`.
    fn force_shape(&self, s: f64) -> f64 {
        let rate = PI / self.stance;
        (self.p.k_p * (PI * s).sin().powi(2) + self.p.k_d * rate * (TWO_PI * s).sin()).max(0.0)
    }

    fn step_of(&self, leg: usize, t: f64) -> (i64, f64) {
        let tau = (t - self.phase_offset[leg]) / self.p.gait_period;
        let k = tau.floor();
        (k as i64, tau - k)
    }

    fn step_value(table: &[f64], k: i64) -> f64 {
        let i = (k + 1).clamp(0, table.len() as i64 - 1) as usize;
        table[i]
    }

    /// Foot position in the ground frame and the ground's force on it.
    fn foot(&self, leg: usize, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let nominal = self.nominal[leg];
        if !self.walking() {
            let fnormal = self.p.k_p * self.standing_delta;
            let pos = Vector3::new(nominal.x, nominal.y, -self.standing_delta);
            return (pos, self.contact_force(fnormal, 0.0));
        }
        let (k, u) = self.step_of(leg, t);
        let period = self.p.gait_period;
        let v = self.p.speed;
        let foothold = |k: i64| nominal.x + v * (k as f64 * period + self.phase_offset[leg] + self.stance / 2.0);
        let h = Self::step_value(&self.heights[leg], k);
        if u < 0.5 {
            let s = u / 0.5;
            let amp = self.delta_max * Self::step_value(&self.loads[leg], k);
            let delta = amp * (PI * s).sin().powi(2);
            let fnormal = amp * self.force_shape(s);
            let pos = Vector3::new(foothold(k), nominal.y, h - delta);
            (pos, self.contact_force(fnormal, s))
        } else {
            let s = (u - 0.5) / 0.5;
            let smooth = s * s * (3.0 - 2.0 * s);
            let h_next = Self::step_value(&self.heights[leg], k + 1);
            let x = foothold(k) + (foothold(k + 1) - foothold(k)) * smooth;
            let z = h + (h_next - h) * smooth + self.p.swing_height * (PI * s).sin().powi(2);
            (Vector3::new(x, nominal.y, z), Vector3::zeros())
        }
    }

    /// Ground-frame force: normal load plus braking/propulsion and slope
    /// holding, limited by the friction cone.
    fn contact_force(&self, fnormal: f64, s: f64) -> Vector3<f64> {
        if fnormal <= 0.0 {
            return Vector3::zeros();
        }
        let ratio = -self.p.tangential_ratio * self.p.speed * (PI * s).cos() + self.slope.tan();
        let ft = (ratio * fnormal).clamp(-self.p.mu * fnormal, self.p.mu * fnormal);
        Vector3::new(ft, 0.0, fnormal)
    }

    fn base_height(&self, t: f64) -> (f64, f64) {
        let omega = TWO_PI / (self.p.gait_period / 2.0);
        let mut z = self.p.stand_height;
        let mut zdd = 0.0;
        for &(k, a, b) in &self.bounce {
            let (s, c) = (k * omega * t).sin_cos();
            zdd += a * c + b * s;
            z -= (a * c + b * s) / (k * omega).powi(2);
        }
        (z, zdd)
    }

    /// Roll and pitch of the base relative to the ground frame.
    fn attitude(&self, t: f64) -> (f64, f64) {
        let w = TWO_PI / self.p.gait_period;
        (self.rock * (w * t).sin(), 0.5 * self.rock * (2.0 * w * t + 0.3).sin())
    }

    fn rotation_gb(&self, t: f64) -> Matrix3<f64> {
        let (roll, pitch) = self.attitude(t);
        (Rotation3::from_axis_angle(&Vector3::y_axis(), pitch) * Rotation3::from_axis_angle(&Vector3::x_axis(), roll)).into_inner()
    }

    fn body_rate(&self, t: f64) -> Vector3<f64> {
        let h = 1e-6;
        let (r1, p1) = self.attitude(t + h);
        let (r0, p0) = self.attitude(t - h);
        let (roll, _) = self.attitude(t);
        let droll = (r1 - r0) / (2.0 * h);
        let dpitch = (p1 - p0) / (2.0 * h);
        Vector3::new(droll, 0.0, 0.0) + Rotation3::from_axis_angle(&Vector3::x_axis(), roll).inverse() * Vector3::new(0.0, dpitch, 0.0)
    }

    fn base_position(&self, t: f64) -> Vector3<f64> {
        Vector3::new(self.p.speed * t, 0.0, self.base_height(t).0)
    }
}

fn build_gait<'a>(p: &'a GenParams, robot: &RobotModel, chains: &[LegChain]) -> Result<Gait<'a>, DataError> {
    let mass = robot.total_mass();
    let slope = p.slope_deg.to_radians();
    let weight_normal = mass * STANDARD_GRAVITY * slope.cos();
    let stance = p.gait_period / 2.0;
    let nominal: Vec<Vector3<f64>> = chains
        .iter()
        .map(|c| {
            let f = c.foot_position(&[0.0; 3]);
            Vector3::new(f.x, f.y, -p.stand_height)
        })
        .collect();

    let mut gait = Gait {
        p,
        slope,
        stance,
        delta_max: 0.0,
        standing_delta: weight_normal / (4.0 * p.k_p),
        nominal,
        // Diagonal pairs: LF with RH, LH with RF.
        phase_offset: [0.0, stance, stance, 0.0],
        bounce: Vec::new(),
        rock: 0.0,
        heights: Vec::new(),
        loads: Vec::new(),
    };
    if !gait.walking() {
        return Ok(gait);
    }

    // Two stance feet at any time: choose the amplitude so the mean normal load carries the weight.
    let n = 4096;
    let mean_shape = (0..n).map(|i| gait.force_shape((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
    gait.delta_max = weight_normal / (2.0 * mean_shape);
    gait.rock = 0.02;

    // Vertical bounce: Fourier series of (net normal force / mass - g cos(slope)) over half a gait period.
    let half = p.gait_period / 2.0;
    let omega = TWO_PI / half;
    for k in 1..=24 {
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            let acc = 2.0 * gait.delta_max * gait.force_shape(s) / mass - STANDARD_GRAVITY * slope.cos();
            let (sn, cs) = (k as f64 * omega * s * half).sin_cos();
            a += acc * cs;
            b += acc * sn;
        }
        gait.bounce.push((k as f64, 2.0 * a / n as f64, 2.0 * b / n as f64));
    }

    let steps = (p.duration / p.gait_period).ceil() as usize + 3;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(1);
    let unit = Uniform::new_inclusive(-1.0, 1.0);
    for _ in 0..NUM_LEGS {
        let mut hs = Vec::with_capacity(steps);
        let mut ls = Vec::with_capacity(steps);
        for _ in 0..steps {
            hs.push(p.terrain_jitter * unit.sample(&mut rng));
            ls.push(1.0 + (p.load_variation + 10.0 * p.terrain_jitter) * unit.sample(&mut rng));
        }
        gait.heights.push(hs);
        gait.loads.push(ls);
    }
    Ok(gait)
}

/// Generates one recording for a quadruped whose legs are hip-roll,
/// hip-pitch, knee chains.
pub fn generate_sequence(params: &GenParams, robot: &RobotModel) -> Result<SequenceDataset, DataError> {
    params.validate()?;
    let graph = build_graph(robot).map_err(|e| DataError::InvalidParams(e.to_string()))?;
    if graph.foot_order.len() != NUM_LEGS {
        return Err(DataError::TaskMismatch(format!("expected {NUM_LEGS} feet, found {}", graph.foot_order.len())));
    }
    let chains: Vec<LegChain> = (0..NUM_LEGS).map(|l| LegChain::from_model(robot, &graph, l)).collect::<Result<_, _>>()?;
    let legs: Vec<LegGeometry> = chains.iter().map(LegGeometry::from_chain).collect::<Result<_, _>>()?;
    let gait = build_gait(params, robot, &chains)?;

    let r_wg = Rotation3::from_axis_angle(&Vector3::y_axis(), -gait.slope).into_inner();
    let gravity = Vector3::new(0.0, 0.0, -STANDARD_GRAVITY);
    let n = (params.duration * params.sample_rate).round() as usize;
    let dt = 1.0 / params.sample_rate;
    let h = 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(2);
    let noise = |std: f64| Normal::new(0.0, std).expect("non-negative std");
    let (nq, ndq, ntau, nab, nwb) =
        (noise(params.noise.q), noise(params.noise.dq), noise(params.noise.tau), noise(params.noise.ab), noise(params.noise.wb));

    let mut columns = vec![Vec::with_capacity(n); col::COUNT];
    for i in 0..n {
        let t = i as f64 * dt;
        let r_gb = gait.rotation_gb(t);
        let r_wb = r_wg * r_gb;
        let w_b = gait.body_rate(t);
        let alpha_b = (gait.body_rate(t + h) - gait.body_rate(t - h)) / (2.0 * h);
        let (_, zdd) = gait.base_height(t);
        let acc_b = r_gb.transpose() * Vector3::new(0.0, 0.0, zdd);
        let base = BaseState { rotation: r_wb, lin_acc: acc_b, ang_vel: w_b, ang_acc: alpha_b, gravity };
        let specific = acc_b - r_wb.transpose() * gravity;

        columns[col::T].push(t);
        for k in 0..3 {
            columns[col::AB + k].push(specific[k] + nab.sample(&mut rng));
        }
        for k in 0..3 {
            columns[col::WB + k].push(w_b[k] + nwb.sample(&mut rng));
        }
        let pos_w = r_wg * gait.base_position(t);
        let quat = UnitQuaternion::from_matrix(&r_wb);
        for k in 0..3 {
            columns[col::POS + k].push(pos_w[k]);
        }
        for (k, v) in [quat.w, quat.i, quat.j, quat.k].into_iter().enumerate() {
            columns[col::QUAT + k].push(v);
        }

        for leg in 0..NUM_LEGS {
            let solve = |tt: f64| -> Result<[f64; 3], DataError> {
                let (foot_g, _) = gait.foot(leg, tt);
                let p_b = gait.rotation_gb(tt).transpose() * (foot_g - gait.base_position(tt));
                legs[leg].inverse(&p_b).ok_or(DataError::IkUnreachable { leg, t: tt })
            };
            let (q, qp, qm) = (solve(t)?, solve(t + h)?, solve(t - h)?);
            let qd: Vec<f64> = (0..3).map(|k| wrap_to_pi(qp[k] - qm[k]) / (2.0 * h)).collect();
            let qdd: Vec<f64> = (0..3).map(|k| (wrap_to_pi(qp[k] - q[k]) - wrap_to_pi(q[k] - qm[k])) / (h * h)).collect();

            let (_, force_g) = gait.foot(leg, t);
            let force_b = r_gb.transpose() * force_g;
            let chain = &chains[leg];
            let id = inverse_dynamics(chain, &q, &qd, &qdd, &SupportMotion::full(&base))?;
            let jt_f = foot_jacobian(chain, &q).transpose() * force_b;
            let grf_z = (r_wg * force_g).z;

            let mut q_meas = [0.0; 3];
            let mut qd_meas = [0.0; 3];
            for k in 0..3 {
                let j = 3 * leg + k;
                let actuator = params.armature * qdd[k]
                    + params.viscous_friction * qd[k]
                    + params.coulomb_friction * (qd[k] / 0.05).tanh();
                let tau = id[k] - jt_f[k] + actuator;
                q_meas[k] = q[k] + nq.sample(&mut rng);
                qd_meas[k] = qd[k] + ndq.sample(&mut rng);
                columns[col::q(j)].push(q_meas[k]);
                columns[col::dq(j)].push(qd_meas[k]);
                columns[col::tau(j)].push(tau + ntau.sample(&mut rng));
            }
            // Foot states as forward kinematics of the measured joints.
            let p = chain.foot_position(&q_meas);
            let v = foot_jacobian(chain, &q_meas) * nalgebra::Vector3::from(qd_meas);
            for k in 0..3 {
                columns[col::p(leg, k)].push(p[k]);
                columns[col::v(leg, k)].push(v[k]);
            }
            columns[col::GRF + leg].push(grf_z);
            columns[col::C + leg].push(if grf_z > params.contact_threshold { 1.0 } else { 0.0 });
        }
    }
    let meta = Metadata {
        robot: robot.name.clone(),
        sample_rate: params.sample_rate,
        contact_threshold: params.contact_threshold,
        params: Some(params.clone()),
    };
    SequenceDataset::new(meta, columns)
}
