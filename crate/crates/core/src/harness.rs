//! Closed-loop episode runner over a toy quadruped plant.
//!
//! The plant is a deliberately crude surrogate: first-order forward-velocity
//! response to slip-limited stance-foot sweeps, critically damped joint
//! servos, and an open-loop-unstable body attitude that the controller has to
//! hold level through leg extension. It is not a model of any real robot. It
//! exists to exercise zero-order hold, reward accounting, domain
//! randomization, the wire codec and update-rate sweeps deterministically.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gait::{classify_gait, GaitRegime, GaitTable};
use crate::kernel::{infer_int8, quantize_obs};
use crate::policy::{Action, Fp32Policy, Observation};
use crate::quant::{dequantize_action, QuantizedPolicy};
use crate::wire::{DeviceSession, HostSession, Loopback, WireVector};

pub const NUM_FEET: usize = 4;
pub const NUM_JOINTS: usize = 8;
pub const OBS_DIM: usize = 24;

/// Leg order is FL, FR, RL, RR.
const FRONT: [f64; NUM_FEET] = [1.0, 1.0, -1.0, -1.0];
const SIDE: [f64; NUM_FEET] = [1.0, -1.0, 1.0, -1.0];

/// Commanded forward speed (m/s) and yaw rate (rad/s).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Command {
    pub v_x: f64,
    pub w_z: f64,
}

impl Command {
    pub fn forward(v_x: f64) -> Self {
        Command { v_x, w_z: 0.0 }
    }
}

/// Term weights; each is multiplied by `dt` when applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights {
    pub dt: f64,
    pub lin_track: f64,
    pub ang_track: f64,
    pub lin_penalty: f64,
    pub ang_penalty: f64,
    pub air_time: f64,
    /// Squared width of the tracking kernel.
    pub sigma_sq: f64,
    /// Air time (s) at which a landing earns nothing.
    pub air_target: f64,
}

impl RewardWeights {
    pub fn new(dt: f64) -> Result<Self> {
        let w = RewardWeights {
            dt,
            lin_track: 1.0,
            ang_track: 0.5,
            lin_penalty: 0.5,
            ang_penalty: 0.05,
            air_time: 1.0,
            sigma_sq: 0.25,
            air_target: 0.5,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.sigma_sq > 0.0 && self.dt.is_finite() && self.sigma_sq.is_finite()) {
            return Err(Error::invalid(
                "reward weights",
                format!("dt={} sigma_sq={}", self.dt, self.sigma_sq),
            ));
        }
        Ok(())
    }
}

/// Tracking kernel `exp(-e^2 / sigma^2)`.
pub fn phi(e: f64, sigma_sq: f64) -> f64 {
    (-e * e / sigma_sq).exp()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardBreakdown {
    pub lin: f64,
    pub ang: f64,
    pub pen_lin: f64,
    pub pen_ang: f64,
    pub air: f64,
    pub total: f64,
}

impl std::ops::AddAssign for RewardBreakdown {
    fn add_assign(&mut self, r: Self) {
        self.lin += r.lin;
        self.ang += r.ang;
        self.pen_lin += r.pen_lin;
        self.pen_ang += r.pen_ang;
        self.air += r.air;
        self.total += r.total;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantState {
    /// Base linear velocity, body frame (m/s).
    pub v_b: [f64; 3],
    /// Base angular velocity, body frame (rad/s).
    pub w_b: [f64; 3],
    /// Pitch and roll (rad).
    pub a_b: [f64; 2],
    pub q: [f64; NUM_JOINTS],
    pub qd: [f64; NUM_JOINTS],
    pub q_target: [f64; NUM_JOINTS],
    /// Time since each foot left the ground. Holds the full flight time on
    /// the step a foot lands, then resets.
    pub t_air: [f64; NUM_FEET],
    pub contact: [bool; NUM_FEET],
}

impl Default for PlantState {
    fn default() -> Self {
        PlantState {
            v_b: [0.0; 3],
            w_b: [0.0; 3],
            a_b: [0.0; 2],
            q: [0.0; NUM_JOINTS],
            qd: [0.0; NUM_JOINTS],
            q_target: [0.0; NUM_JOINTS],
            t_air: [0.0; NUM_FEET],
            contact: [true; NUM_FEET],
        }
    }
}

impl PlantState {
    pub fn validate(&self) -> Result<()> {
        let finite = self
            .v_b
            .iter()
            .chain(&self.w_b)
            .chain(&self.a_b)
            .chain(&self.q)
            .chain(&self.qd)
            .chain(&self.q_target)
            .chain(&self.t_air)
            .all(|v| v.is_finite());
        if !finite || self.t_air.iter().any(|&t| t < 0.0) {
            return Err(Error::invalid("plant state", "non-finite value or negative air timer"));
        }
        Ok(())
    }

    /// A foot that touched down this step.
    pub fn just_landed(&self, f: usize) -> bool {
        self.contact[f] && self.t_air[f] > 0.0
    }
}

/// Per-step reward with its five terms.
pub fn reward_step(s: &PlantState, cmd: Command, w: &RewardWeights) -> RewardBreakdown {
    let dt = w.dt;
    let lin = w.lin_track * dt * phi(cmd.v_x - s.v_b[0], w.sigma_sq);
    let ang = w.ang_track * dt * phi(cmd.w_z - s.w_b[2], w.sigma_sq);
    let pen_lin = -w.lin_penalty * dt * s.v_b[1] * s.v_b[1];
    let pen_ang = -w.ang_penalty * dt * (s.w_b[0] * s.w_b[0] + s.w_b[1] * s.w_b[1]);
    let air_sum: f64 = (0..NUM_FEET)
        .filter(|&f| s.just_landed(f))
        .map(|f| s.t_air[f] - w.air_target)
        .sum();
    let air = w.air_time * dt * air_sum;
    RewardBreakdown {
        lin,
        ang,
        pen_lin,
        pen_ang,
        air,
        total: lin + ang + pen_lin + pen_ang + air,
    }
}

/// Additive Gaussian perturbation, `N(mean, std)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianRow {
    pub mean: f64,
    pub std: f64,
}

/// Multiplicative factor drawn uniformly from `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleRow {
    pub lo: f64,
    pub hi: f64,
}

impl ScaleRow {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

fn gaussian(mean: f64, std: f64) -> GaussianRow {
    GaussianRow { mean, std }
}

fn scale(lo: f64, hi: f64) -> ScaleRow {
    ScaleRow { lo, hi }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DRConfig {
    pub observation: GaussianRow,
    pub action: GaussianRow,
    pub gravity: GaussianRow,
    pub dof_lower: GaussianRow,
    pub dof_upper: GaussianRow,
    pub mass: ScaleRow,
    pub friction: ScaleRow,
    pub restitution: ScaleRow,
    pub damping: ScaleRow,
    pub stiffness: ScaleRow,
}

impl Default for DRConfig {
    fn default() -> Self {
        DRConfig {
            observation: gaussian(0.0, 0.002),
            action: gaussian(0.0, 0.02),
            gravity: gaussian(0.0, 0.4),
            dof_lower: gaussian(0.0, 0.01),
            dof_upper: gaussian(0.0, 0.01),
            mass: scale(0.05, 0.15),
            friction: scale(0.07, 0.13),
            restitution: scale(0.0, 0.7),
            damping: scale(0.5, 1.5),
            stiffness: scale(0.5, 1.5),
        }
    }
}

impl DRConfig {
    /// No noise, every factor fixed at 1.
    pub fn disabled() -> Self {
        let z = gaussian(0.0, 0.0);
        let one = scale(1.0, 1.0);
        DRConfig {
            observation: z,
            action: z,
            gravity: z,
            dof_lower: z,
            dof_upper: z,
            mass: one,
            friction: one,
            restitution: one,
            damping: one,
            stiffness: one,
        }
    }

    fn gaussian_rows(&self) -> [(&'static str, GaussianRow); 5] {
        [
            ("observation", self.observation),
            ("action", self.action),
            ("gravity", self.gravity),
            ("dof_lower", self.dof_lower),
            ("dof_upper", self.dof_upper),
        ]
    }

    fn scale_rows(&self) -> [(&'static str, ScaleRow); 5] {
        [
            ("mass", self.mass),
            ("friction", self.friction),
            ("restitution", self.restitution),
            ("damping", self.damping),
            ("stiffness", self.stiffness),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in self.gaussian_rows() {
            if !(g.mean.is_finite() && g.std.is_finite() && g.std >= 0.0) {
                return Err(Error::invalid("domain randomization", format!("{name}: {g:?}")));
            }
        }
        for (name, s) in self.scale_rows() {
            if !(s.lo.is_finite() && s.hi.is_finite() && s.lo <= s.hi && s.lo >= 0.0) {
                return Err(Error::invalid("domain randomization", format!("{name}: {s:?}")));
            }
            if s.mid() == 0.0 {
                return Err(Error::invalid(
                    "domain randomization",
                    format!("{name}: zero-centred range"),
                ));
            }
        }
        Ok(())
    }
}

/// One draw of the per-episode randomization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub gravity: [f64; 3],
    pub dof_lower: [f64; NUM_JOINTS],
    pub dof_upper: [f64; NUM_JOINTS],
    pub mass: f64,
    pub friction: f64,
    pub restitution: f64,
    pub damping: f64,
    pub stiffness: f64,
}

pub(crate) fn draw_gaussian(rng: &mut impl Rng, g: GaussianRow) -> f64 {
    if g.std == 0.0 {
        return g.mean;
    }
    Normal::new(g.mean, g.std).expect("validated std").sample(rng)
}

pub(crate) fn draw_scale(rng: &mut impl Rng, s: ScaleRow) -> f64 {
    if s.lo == s.hi {
        return s.lo;
    }
    rng.gen_range(s.lo..=s.hi)
}

pub fn sample_dr(cfg: &DRConfig, seed: u64) -> Result<Perturbation> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Perturbation {
        gravity: [0.0; 3],
        dof_lower: [0.0; NUM_JOINTS],
        dof_upper: [0.0; NUM_JOINTS],
        mass: 1.0,
        friction: 1.0,
        restitution: 1.0,
        damping: 1.0,
        stiffness: 1.0,
    };
    for g in &mut p.gravity {
        *g = draw_gaussian(&mut rng, cfg.gravity);
    }
    for v in &mut p.dof_lower {
        *v = draw_gaussian(&mut rng, cfg.dof_lower);
    }
    for v in &mut p.dof_upper {
        *v = draw_gaussian(&mut rng, cfg.dof_upper);
    }
    p.mass = draw_scale(&mut rng, cfg.mass);
    p.friction = draw_scale(&mut rng, cfg.friction);
    p.restitution = draw_scale(&mut rng, cfg.restitution);
    p.damping = draw_scale(&mut rng, cfg.damping);
    p.stiffness = draw_scale(&mut rng, cfg.stiffness);
    Ok(p)
}

/// Toy plant constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantParams {
    /// Effective leg length turning joint rate into foot speed (m).
    pub leg_len: f64,
    /// Forward-velocity time constant (s).
    pub tau_v: f64,
    /// Largest propulsive foot speed before slipping (m/s).
    pub slip_speed: f64,
    /// Joint servo natural frequency (rad/s).
    pub joint_omega: f64,
    /// Joint servo damping ratio; 1 is critical.
    pub joint_zeta: f64,
    /// Attitude divergence rate squared (1/s^2).
    pub tip_gain: f64,
    /// Attitude rate damping (1/s).
    pub tip_damping: f64,
    /// Angular acceleration per radian of leg-extension asymmetry.
    pub posture_gain: f64,
    /// Attitude-rate kick per unit joint speed at touchdown.
    pub landing_kick: f64,
    /// Lateral drift speed per radian of roll (m/s).
    pub roll_drift: f64,
    /// Lateral foot spacing (m), for yaw from left/right drive imbalance.
    pub track_width: f64,
    /// Joint limits before randomization (rad).
    pub joint_limit: f64,
    /// Integration substeps per plant step.
    pub substeps: usize,
    /// Constant pitch/roll disturbance (rad of equivalent tilt) from a
    /// perturbed gravity vector.
    pub tilt_bias: [f64; 2],
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            leg_len: 0.008,
            tau_v: 0.1,
            slip_speed: 0.15,
            joint_omega: 60.0,
            joint_zeta: 1.0,
            tip_gain: 16.0,
            tip_damping: 2.0,
            posture_gain: 150.0,
            landing_kick: 0.002,
            roll_drift: 0.5,
            track_width: 0.01,
            joint_limit: FRAC_PI_2,
            substeps: 4,
            tilt_bias: [0.0; 2],
        }
    }
}

impl PlantParams {
    /// Apply a perturbation. Scaling factors act relative to the centre of
    /// their configured range, so the mean randomized plant is nominal.
    pub fn perturbed(&self, dr: &DRConfig, p: &Perturbation) -> Self {
        let mass = p.mass / dr.mass.mid();
        let friction = p.friction / dr.friction.mid();
        let restitution = p.restitution / dr.restitution.mid();
        let damping = p.damping / dr.damping.mid();
        let stiffness = p.stiffness / dr.stiffness.mid();
        PlantParams {
            tau_v: self.tau_v * mass,
            slip_speed: self.slip_speed * friction,
            joint_omega: self.joint_omega * stiffness.sqrt(),
            joint_zeta: self.joint_zeta * damping,
            tip_gain: self.tip_gain / mass,
            posture_gain: self.posture_gain / mass,
            landing_kick: self.landing_kick * restitution,
            tilt_bias: [p.gravity[0], p.gravity[1]],
            ..*self
        }
    }
}

/// Advance the plant by `dt` toward `joint_targets`.
pub fn plant_step(s: &PlantState, joint_targets: &[f64; NUM_JOINTS], dt: f64, pp: &PlantParams) -> PlantState {
    let mut n = *s;
    n.q_target = *joint_targets;
    let h = dt / pp.substeps as f64;
    let wn = pp.joint_omega;
    let mut sweep = [0.0; NUM_FEET];
    for _ in 0..pp.substeps {
        for j in 0..NUM_JOINTS {
            let acc = wn * wn * (n.q_target[j] - n.q[j]) - 2.0 * pp.joint_zeta * wn * n.qd[j];
            n.qd[j] += acc * h;
            n.q[j] += n.qd[j] * h;
        }
        let (mut up, mut ur) = (0.0, 0.0);
        for f in 0..NUM_FEET {
            up += FRONT[f] * n.q[2 * f];
            ur += SIDE[f] * n.q[2 * f];
            sweep[f] += n.qd[2 * f + 1] * h;
        }
        up /= NUM_FEET as f64;
        ur /= NUM_FEET as f64;
        // pitch then roll
        let wy = pp.tip_gain * (n.a_b[0] + pp.tilt_bias[0]) - pp.tip_damping * n.w_b[1] + pp.posture_gain * up;
        let wx = pp.tip_gain * (n.a_b[1] + pp.tilt_bias[1]) - pp.tip_damping * n.w_b[0] + pp.posture_gain * ur;
        n.w_b[1] += wy * h;
        n.w_b[0] += wx * h;
        n.a_b[0] += n.w_b[1] * h;
        n.a_b[1] += n.w_b[0] * h;
    }

    // stance feet push the body with the mean sweep rate over this step
    let mut drive = [0.0; NUM_FEET];
    let mut stance = 0usize;
    for f in 0..NUM_FEET {
        let contact = n.q[2 * f] <= 0.0;
        if contact {
            let foot_speed = -pp.leg_len * sweep[f] / dt;
            drive[f] = foot_speed.clamp(-pp.slip_speed, pp.slip_speed);
            stance += 1;
        }
    }
    let alpha = 1.0 - (-dt / pp.tau_v).exp();
    if stance > 0 {
        let target = drive.iter().sum::<f64>() / stance as f64;
        n.v_b[0] += (target - n.v_b[0]) * alpha;
    }
    let left = drive[0] + drive[2];
    let right = drive[1] + drive[3];
    n.w_b[2] += ((right - left) / pp.track_width - n.w_b[2]) * alpha;
    n.v_b[1] += (pp.roll_drift * n.a_b[1].sin() - n.v_b[1]) * alpha;

    for f in 0..NUM_FEET {
        let was_landed = s.just_landed(f);
        let contact = n.q[2 * f] <= 0.0;
        if was_landed {
            n.t_air[f] = 0.0;
        }
        if !contact {
            n.t_air[f] += dt;
        } else if !s.contact[f] {
            let kick = pp.landing_kick * n.qd[2 * f].abs();
            n.w_b[1] += FRONT[f] * kick;
            n.w_b[0] += SIDE[f] * kick;
        }
        n.contact[f] = contact;
    }
    n
}

/// Simulation timing. Control updates follow a phase accumulator, which
/// reduces to "every `f_sim / f_update` steps" when that ratio is whole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub f_sim_hz: f64,
    pub episode_s: f64,
    pub f_update_hz: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(f_update_hz: f64, seed: u64) -> Result<Self> {
        let c = SimConfig {
            f_sim_hz: 120.0,
            episode_s: 10.0,
            f_update_hz,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_sim_hz > 0.0 && self.episode_s > 0.0 && self.f_sim_hz.is_finite() && self.episode_s.is_finite()) {
            return Err(Error::invalid("sim config", format!("{self:?}")));
        }
        if !(self.f_update_hz > 0.0 && self.f_update_hz <= self.f_sim_hz) {
            return Err(Error::invalid(
                "sim config",
                format!("f_update {} must be in (0, {}]", self.f_update_hz, self.f_sim_hz),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.f_sim_hz
    }

    pub fn steps(&self) -> usize {
        (self.episode_s * self.f_sim_hz).round() as usize
    }

    /// Whether the controller runs before plant step `k`.
    pub fn is_update_step(&self, k: usize) -> bool {
        if k == 0 {
            return true;
        }
        let tick = |k: usize| (k as f64 * self.f_update_hz / self.f_sim_hz).floor();
        tick(k) != tick(k - 1)
    }
}

/// Anything that turns an observation into an action.
pub trait Runtime {
    fn act(&mut self, t: f64, obs: &Observation) -> Result<Action>;
}

impl<R: Runtime + ?Sized> Runtime for Box<R> {
    fn act(&mut self, t: f64, obs: &Observation) -> Result<Action> {
        (**self).act(t, obs)
    }
}

pub struct Fp32Runtime(pub Fp32Policy);

impl Runtime for Fp32Runtime {
    fn act(&mut self, _t: f64, obs: &Observation) -> Result<Action> {
        self.0.infer(obs)
    }
}

pub struct Int8Runtime(pub QuantizedPolicy);

impl Runtime for Int8Runtime {
    fn act(&mut self, _t: f64, obs: &Observation) -> Result<Action> {
        crate::kernel::fused_infer_dequant(&self.0, obs)
    }
}

/// What sits on the far side of the wire.
pub enum Device {
    /// FP32 frames in both directions.
    Fp32(Box<dyn Runtime + Send>),
    /// Int8 frames; the host quantizes observations and dequantizes actions.
    Int8(QuantizedPolicy),
}

/// Routes every update through the framed protocol over a loopback link.
pub struct CodecRuntime {
    device: Device,
    host: HostSession,
    dev: DeviceSession,
    link: Loopback,
    pub frames: u64,
    pub bytes: u64,
}

impl CodecRuntime {
    pub fn new(device: Device) -> Self {
        CodecRuntime {
            device,
            host: HostSession::new(),
            dev: DeviceSession::new(),
            link: Loopback::new(),
            frames: 0,
            bytes: 0,
        }
    }

    fn exchange(&mut self, obs: WireVector, t: f64) -> Result<WireVector> {
        let up = self.host.session_step(&obs)?;
        self.bytes += up.len() as u64;
        self.link.host_send(&up);
        let frame = self
            .link
            .device_recv()
            .ok_or_else(|| Error::Protocol("observation frame lost".into()))??;
        let received = self.dev.receive_observation(&frame)?;
        let reply = match (&mut self.device, received) {
            (Device::Fp32(rt), WireVector::Fp32(v)) => WireVector::Fp32(rt.act(t, &Observation::new(v)?)?.into_inner()),
            (Device::Int8(qp), WireVector::Int8(v)) => WireVector::Int8(infer_int8(qp, &v)?.0),
            _ => return Err(Error::Protocol("device received the wrong precision".into())),
        };
        let down = self.dev.reply(&reply)?;
        self.bytes += down.len() as u64;
        self.link.device_send(&down);
        let frame = self
            .link
            .host_recv()
            .ok_or_else(|| Error::Protocol("action frame lost".into()))??;
        self.frames += 2;
        self.host.receive_action(&frame)
    }
}

impl Runtime for CodecRuntime {
    fn act(&mut self, t: f64, obs: &Observation) -> Result<Action> {
        match &self.device {
            Device::Fp32(_) => match self.exchange(WireVector::Fp32(obs.as_slice().to_vec()), t)? {
                WireVector::Fp32(v) => Action::new(v),
                WireVector::Int8(_) => Err(Error::Protocol("fp32 request got an int8 reply".into())),
            },
            Device::Int8(qp) => {
                let (s_in, z_in) = qp.observation_params();
                let (s_out, z_out) = qp.output_params();
                match self.exchange(WireVector::Int8(quantize_obs(obs, s_in, z_in)), t)? {
                    WireVector::Int8(v) => Action::new(dequantize_action(&v, s_out, z_out)),
                    WireVector::Fp32(_) => Err(Error::Protocol("int8 request got an fp32 reply".into())),
                }
            }
        }
    }
}

/// Closed-loop attitude bandwidth (rad/s) and damping the controller aims for.
const ATTITUDE_OMEGA: f64 = 12.0;
const ATTITUDE_ZETA: f64 = 0.7;

/// Hand-written gait generator with attitude feedback, standing in for a
/// trained policy.
#[derive(Clone, Debug)]
pub struct GaitController {
    pub cmd: Command,
    pub regime: GaitRegime,
    /// Stride frequency (Hz).
    pub stride_hz: f64,
    /// Sweep amplitude of theta_y (rad).
    pub sweep: f64,
    /// Lift amplitude of theta_x (rad).
    pub lift: f64,
    pub kp: f64,
    pub kd: f64,
}

impl GaitController {
    /// Controller for `cmd`, sized for the nominal plant `pp`.
    pub fn new(cmd: Command, table: &GaitTable, pp: &PlantParams) -> Result<Self> {
        let regime = classify_gait(cmd.v_x.abs(), table)?;
        let stride_hz = match regime {
            GaitRegime::Trot => 2.0,
            GaitRegime::Intermediate => 3.0,
            GaitRegime::Gallop => 4.0,
        };
        let w = 2.0 * PI * stride_hz;
        // mean stance foot speed is leg_len * sweep * w * 2/pi; undo servo attenuation
        let attenuation = 1.0 / (1.0 + (w / pp.joint_omega).powi(2));
        let sweep = (cmd.v_x * PI / (2.0 * pp.leg_len * w) / attenuation).clamp(-1.2, 1.2);
        Ok(GaitController {
            cmd,
            regime,
            stride_hz,
            sweep,
            lift: 0.15,
            kp: (pp.tip_gain + ATTITUDE_OMEGA * ATTITUDE_OMEGA) / pp.posture_gain,
            kd: (2.0 * ATTITUDE_ZETA * ATTITUDE_OMEGA - pp.tip_damping) / pp.posture_gain,
        })
    }

    fn phase_offsets(&self) -> [f64; NUM_FEET] {
        match self.regime {
            // diagonal pairs
            GaitRegime::Trot => [0.0, PI, PI, 0.0],
            // lateral sequence
            GaitRegime::Intermediate => [0.0, PI, 0.5 * PI, 1.5 * PI],
            // front pair then rear pair
            GaitRegime::Gallop => [0.0, 0.0, PI, PI],
        }
    }
}

impl Runtime for GaitController {
    fn act(&mut self, t: f64, obs: &Observation) -> Result<Action> {
        let o = obs.as_slice();
        if o.len() != OBS_DIM {
            return Err(Error::Shape {
                context: "observation",
                expected: OBS_DIM,
                got: o.len(),
            });
        }
        let (wx, wy) = (o[3] as f64, o[4] as f64);
        let (pitch, roll) = attitude_from_gravity([o[6] as f64, o[7] as f64, o[8] as f64]);
        let up = -(self.kp * pitch + self.kd * wy);
        let ur = -(self.kp * roll + self.kd * wx);
        let w = 2.0 * PI * self.stride_hz;
        let mut a = Vec::with_capacity(NUM_JOINTS);
        for (f, off) in self.phase_offsets().into_iter().enumerate() {
            let psi = w * t + off;
            let theta_x = self.lift * psi.cos() + FRONT[f] * up + SIDE[f] * ur;
            let theta_y = self.sweep * psi.sin();
            a.push(theta_x.clamp(-FRAC_PI_2, FRAC_PI_2) as f32);
            a.push(theta_y.clamp(-FRAC_PI_2, FRAC_PI_2) as f32);
        }
        Action::new(a)
    }
}

/// Gravity direction in the body frame for the given attitude.
pub fn projected_gravity(pitch: f64, roll: f64) -> [f64; 3] {
    [pitch.sin(), -roll.sin() * pitch.cos(), -pitch.cos() * roll.cos()]
}

/// Inverse of [`projected_gravity`] for a unit vector; tolerates offsets.
pub fn attitude_from_gravity(g: [f64; 3]) -> (f64, f64) {
    let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt().max(1e-9);
    let pitch = (g[0] / n).clamp(-1.0, 1.0).asin();
    let roll = (-g[1]).atan2(-g[2]);
    (pitch, roll)
}

/// 24-wide observation: linear velocity, angular velocity, projected
/// gravity, eight joint angles, first seven entries of the previous action.
pub fn observe(s: &PlantState, prev_action: &[f64; NUM_JOINTS]) -> [f64; OBS_DIM] {
    let mut o = [0.0; OBS_DIM];
    o[..3].copy_from_slice(&s.v_b);
    o[3..6].copy_from_slice(&s.w_b);
    o[6..9].copy_from_slice(&projected_gravity(s.a_b[0], s.a_b[1]));
    o[9..17].copy_from_slice(&s.q);
    o[17..24].copy_from_slice(&prev_action[..7]);
    o
}

/// One logged plant step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub t: f64,
    pub state: PlantState,
    pub reward: RewardBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub steps: Vec<StepLog>,
    pub totals: RewardBreakdown,
    pub inferences: usize,
    /// Steps planned for a full-length episode.
    pub planned_steps: usize,
    pub terminated: bool,
    pub config: SimConfig,
    pub command: Command,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.totals.total
    }

    /// Total reward divided by `baseline`'s.
    pub fn reward_ratio(&self, baseline: f64) -> Result<f64> {
        if baseline == 0.0 || !baseline.is_finite() {
            return Err(Error::invalid("baseline reward", format!("{baseline}")));
        }
        Ok(self.totals.total / baseline)
    }

    pub fn mean_vx(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.state.v_b[0]).sum::<f64>() / self.steps.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,vx,vy,wz,reward_total,reward_lin,reward_ang,pen_lin,pen_ang,reward_air\n");
        for l in &self.steps {
            let r = &l.reward;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                l.t, l.state.v_b[0], l.state.v_b[1], l.state.w_b[2], r.total, r.lin, r.ang, r.pen_lin, r.pen_ang, r.air
            );
        }
        s
    }

    pub fn summary(&self) -> Vec<(&'static str, String)> {
        let t = &self.totals;
        vec![
            ("f_update_hz", self.config.f_update_hz.to_string()),
            ("f_sim_hz", self.config.f_sim_hz.to_string()),
            ("seed", self.config.seed.to_string()),
            ("command_vx", self.command.v_x.to_string()),
            ("steps", self.steps.len().to_string()),
            ("planned_steps", self.planned_steps.to_string()),
            ("inferences", self.inferences.to_string()),
            ("terminated", self.terminated.to_string()),
            ("mean_vx", format!("{:.6}", self.mean_vx())),
            ("reward_total", format!("{:.6}", t.total)),
            ("reward_lin", format!("{:.6}", t.lin)),
            ("reward_ang", format!("{:.6}", t.ang)),
            ("pen_lin", format!("{:.6}", t.pen_lin)),
            ("pen_ang", format!("{:.6}", t.pen_ang)),
            ("reward_air", format!("{:.6}", t.air)),
        ]
    }
}

/// Run one episode. Noise streams and the perturbation derive from
/// `sim.seed`; the same inputs always produce the same trajectory.
pub fn run_episode<R: Runtime + ?Sized>(
    runtime: &mut R,
    sim: &SimConfig,
    dr: &DRConfig,
    pp: &PlantParams,
    cmd: Command,
) -> Result<Episode> {
    sim.validate()?;
    let pert = sample_dr(dr, sim.seed)?;
    let plant = pp.perturbed(dr, &pert);
    let weights = RewardWeights::new(sim.dt())?;
    let mut noise = ChaCha8Rng::seed_from_u64(sim.seed);
    noise.set_stream(1);

    let dt = sim.dt();
    let planned = sim.steps();
    let mut state = PlantState::default();
    let mut targets = [0.0; NUM_JOINTS];
    let mut prev = [0.0; NUM_JOINTS];
    let mut steps = Vec::with_capacity(planned);
    let mut totals = RewardBreakdown::default();
    let mut inferences = 0;
    let mut terminated = false;

    for k in 0..planned {
        if sim.is_update_step(k) {
            let mut o = observe(&state, &prev);
            for v in &mut o {
                *v += draw_gaussian(&mut noise, dr.observation);
            }
            let obs = Observation::new(o.iter().map(|&v| v as f32).collect())?;
            let action = runtime.act(k as f64 * dt, &obs)?;
            if action.len() != NUM_JOINTS {
                return Err(Error::Shape {
                    context: "action",
                    expected: NUM_JOINTS,
                    got: action.len(),
                });
            }
            for (j, &a) in action.as_slice().iter().enumerate() {
                let lo = -pp.joint_limit + pert.dof_lower[j];
                let hi = pp.joint_limit + pert.dof_upper[j];
                let noisy = a as f64 + draw_gaussian(&mut noise, dr.action);
                targets[j] = noisy.clamp(lo, hi.max(lo));
                prev[j] = a as f64;
            }
            inferences += 1;
        }
        state = plant_step(&state, &targets, dt, &plant);
        let reward = reward_step(&state, cmd, &weights);
        totals += reward;
        steps.push(StepLog {
            t: (k + 1) as f64 * dt,
            state,
            reward,
        });
        if state.a_b[0].abs() > FRAC_PI_4 || state.a_b[1].abs() > FRAC_PI_4 {
            terminated = true;
            break;
        }
    }
    Ok(Episode {
        steps,
        totals,
        inferences,
        planned_steps: planned,
        terminated,
        config: *sim,
        command: cmd,
    })
}

/// Independent episodes in parallel, one per seed, in seed order.
pub fn run_episodes<R, F>(
    make_runtime: F,
    sim: &SimConfig,
    dr: &DRConfig,
    pp: &PlantParams,
    cmd: Command,
    seeds: &[u64],
) -> Vec<Result<Episode>>
where
    R: Runtime,
    F: Fn(u64) -> Result<R> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let mut rt = make_runtime(seed)?;
            run_episode(&mut rt, &SimConfig { seed, ..*sim }, dr, pp, cmd)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> RewardWeights {
        RewardWeights::new(1.0 / 120.0).unwrap()
    }

    #[test]
    fn reward_closed_forms() {
        let w = w();
        let mut s = PlantState::default();
        s.v_b[0] = 0.08;
        let r = reward_step(&s, Command::forward(0.08), &w);
        assert_eq!(r.total, 1.5 * w.dt);
        s.v_b[1] = 0.1;
        let r = reward_step(&s, Command::forward(0.08), &w);
        assert_eq!(r.pen_lin, -0.5 * w.dt * 0.1 * 0.1);
        let mut s = PlantState::default();
        s.t_air[2] = 0.5;
        assert!(s.just_landed(2));
        assert_eq!(reward_step(&s, Command::default(), &w).air, 0.0);
        s.t_air[2] = 0.7;
        assert!((reward_step(&s, Command::default(), &w).air - 0.2 * w.dt).abs() < 1e-15);
        s.contact[2] = false;
        assert_eq!(reward_step(&s, Command::default(), &w).air, 0.0);
    }

    #[test]
    fn dr_degenerate_rows() {
        let p = sample_dr(&DRConfig::disabled(), 9).unwrap();
        assert_eq!(p.gravity, [0.0; 3]);
        assert_eq!(
            (p.mass, p.friction, p.restitution, p.damping, p.stiffness),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
        let mut bad = DRConfig::default();
        bad.mass = ScaleRow { lo: 0.2, hi: 0.1 };
        assert!(sample_dr(&bad, 0).is_err());
        let a = sample_dr(&DRConfig::default(), 4).unwrap();
        assert_eq!(a, sample_dr(&DRConfig::default(), 4).unwrap());
        assert_ne!(a, sample_dr(&DRConfig::default(), 5).unwrap());
        assert!((0.05..=0.15).contains(&a.mass));
    }

    #[test]
    fn update_schedule() {
        let sim = SimConfig::new(30.0, 0).unwrap();
        let ups: Vec<usize> = (0..12).filter(|&k| sim.is_update_step(k)).collect();
        assert_eq!(ups, vec![0, 4, 8]);
        let sim = SimConfig::new(47.62, 0).unwrap();
        let n = (0..sim.steps()).filter(|&k| sim.is_update_step(k)).count();
        let expect = (sim.steps() as f64 * 47.62 / 120.0).ceil() as usize;
        assert!(n.abs_diff(expect) <= 1, "{n} vs {expect}");
        assert!(SimConfig::new(121.0, 0).is_err());
        assert!(SimConfig::new(0.0, 0).is_err());
    }

    #[test]
    fn gravity_round_trip() {
        for (p, r) in [(0.0, 0.0), (0.3, -0.2), (-0.7, 0.5)] {
            let (p2, r2) = attitude_from_gravity(projected_gravity(p, r));
            assert!((p - p2).abs() < 1e-12 && (r - r2).abs() < 1e-12);
        }
    }

    #[test]
    fn episode_is_deterministic() {
        let table = GaitTable::bundled();
        let pp = PlantParams::default();
        let cmd = Command::forward(0.08);
        let sim = SimConfig::new(60.0, 11).unwrap();
        let dr = DRConfig::default();
        let run = || {
            let mut c = GaitController::new(cmd, &table, &pp).unwrap();
            run_episode(&mut c, &sim, &dr, &pp, cmd).unwrap()
        };
        let a = run();
        assert_eq!(a.to_csv(), run().to_csv());
        assert!(a.steps.len() <= 1200);
    }

    #[test]
    fn ratio_against_self_is_one() {
        let table = GaitTable::bundled();
        let pp = PlantParams::default();
        let cmd = Command::forward(0.035);
        let sim = SimConfig::new(120.0, 1).unwrap();
        let mut c = GaitController::new(cmd, &table, &pp).unwrap();
        let e = run_episode(&mut c, &sim, &DRConfig::disabled(), &pp, cmd).unwrap();
        assert_eq!(e.reward_ratio(e.total_reward()).unwrap(), 1.0);
        assert_eq!(e.inferences, 1200);
    }
}
