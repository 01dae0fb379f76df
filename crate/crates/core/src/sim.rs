//! Closed-loop simulation of the bikebot and manipulator under the steering
//! and joint-rate controllers.

use crate::bem::{self, CapabilityLimits, Strategy};
use crate::control::{control_step, ArmGains, BalanceGains, Reference, RobotState};
use crate::dynamics::{gravity_rate, mass_matrix_unchecked, rnea};
use crate::error::{Error, Result};
use crate::model::{forward_kinematics_unchecked, system_jacobian, Pose, RobotModel};
use crate::planner::{Phase, PhaseKind, PlanResult};
use crate::steering::{self, SteeringLimits};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Joint speed above which a run is aborted (rad/s).
pub const BLOW_UP_SPEED: f64 = 1e3;
/// Balance-loss envelope as a multiple of the static capability.
pub const ENVELOPE_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Rk4,
    SemiImplicitEuler,
}

/// Joint accelerations fed to the roll feedback linearization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaAccelSource {
    Reference,
    Servo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub control_period: f64,
    pub duration: f64,
    pub integrator: Integrator,
    /// Roll measurement resolution (rad); rates then come from differences.
    pub sensor_quantization: Option<f64>,
    /// Standard deviation of additive roll measurement noise (rad).
    pub sensor_noise: f64,
    /// Control ticks spanned by the roll-rate difference in sensor mode.
    pub rate_window: usize,
    pub seed: u64,
    pub steering: SteeringLimits<f64>,
    /// Joint rate saturation (rad/s).
    pub rate_max: f64,
    /// Joint acceleration saturation of the servo (rad/s^2).
    pub accel_max: f64,
    /// Gain of the joint acceleration servo tracking the rate command (1/s).
    pub servo_gain: f64,
    pub theta_accel: ThetaAccelSource,
    pub correction_enabled: bool,
    /// Roll magnitude that marks balance loss; derived from the capability when `None`.
    pub balance_envelope: Option<f64>,
    pub stop_on_balance_loss: bool,
    /// Starts on the plan at rest with equilibrium steering when `None`.
    pub initial: Option<InitialState>,
}

impl SimConfig {
    pub fn new(duration: f64) -> Self {
        Self {
            dt: 1e-3,
            control_period: 1e-2,
            duration,
            integrator: Integrator::Rk4,
            sensor_quantization: None,
            sensor_noise: 0.0,
            rate_window: 5,
            seed: 0,
            steering: SteeringLimits::prototype(),
            rate_max: 36f64.to_radians(),
            accel_max: 120f64.to_radians(),
            servo_gain: 200.0,
            theta_accel: ThetaAccelSource::Reference,
            correction_enabled: true,
            balance_envelope: None,
            stop_on_balance_loss: true,
            initial: None,
        }
    }

    /// Covers the whole plan.
    pub fn for_plan(plan: &PlanResult) -> Self {
        Self::new(plan.t_end() - plan.t_start())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= self.control_period) {
            return Err(Error::InvalidParameter("dt must be positive and at most the control period".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidParameter("duration must be positive".into()));
        }
        if self.rate_window == 0 {
            return Err(Error::InvalidParameter("rate window must span at least one tick".into()));
        }
        if !(self.rate_max > 0.0 && self.accel_max > 0.0 && self.servo_gain > 0.0 && self.sensor_noise >= 0.0) {
            return Err(Error::InvalidParameter("rate limit, servo gain and noise must be valid".into()));
        }
        if self.sensor_quantization.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::InvalidParameter("sensor quantization must be positive".into()));
        }
        self.steering.validate()
    }

    fn ticks(&self) -> (usize, usize) {
        let per = (self.control_period / self.dt).round().max(1.0) as usize;
        let steps = (self.duration / self.dt).round() as usize;
        (per, steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub t_start: f64,
    pub duration: f64,
    /// Roll-axis torque (N m).
    pub torque: f64,
}

impl Disturbance {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidParameter("disturbance duration must be positive".into()));
        }
        Ok(())
    }

    fn at(&self, t: f64) -> f64 {
        if t >= self.t_start && t < self.t_start + self.duration {
            self.torque
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub balance: BalanceGains<f64>,
    pub arm: ArmGains<f64>,
}

impl ControllerGains {
    pub fn prototype(n_joints: usize) -> Self {
        Self { balance: BalanceGains::prototype(), arm: ArmGains::prototype(n_joints) }
    }
}

/// One control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub q_ref: DVector<f64>,
    pub qd_ref: DVector<f64>,
    pub delta: f64,
    pub delta_cmd: f64,
    /// Steering torque applied to the roll axis.
    pub tau_b: f64,
    pub tau_b_demand: f64,
    pub disturbance: f64,
    pub theta_rate_cmd: DVector<f64>,
    pub steering_saturated: bool,
    pub correction_active: bool,
    pub correction_norm: f64,
    pub pose: Pose<f64>,
    /// Position (m) and orientation (rad) error against the reference configuration.
    pub pose_error: (f64, f64),
    /// `J_G qdot` and its bound.
    pub gravity_rate: f64,
    pub gravity_rate_bound: f64,
    pub jacobian_norm: f64,
    pub phase: Option<Phase>,
    pub balance_lost: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub records: Vec<SimRecord>,
    pub envelope: f64,
    pub arm_gain_min: f64,
    /// First time the roll left the envelope.
    pub balance_lost_at: Option<f64>,
    pub seed: u64,
}

impl SimLog {
    pub fn balance_lost(&self) -> bool {
        self.balance_lost_at.is_some()
    }

    pub fn last(&self) -> Result<&SimRecord> {
        self.records.last().ok_or(Error::EmptyLog)
    }

    /// Records inside hold phases.
    pub fn holds(&self) -> impl Iterator<Item = (usize, &SimRecord)> {
        self.records.iter().filter_map(|r| match r.phase {
            Some(Phase { kind: PhaseKind::Hold { pose }, .. }) => Some((pose, r)),
            _ => None,
        })
    }
}

/// One integration step of `D qdd + C qd + G = tau` with `tau` held.
pub fn step(
    model: &RobotModel<f64>,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau: &DVector<f64>,
    dt: f64,
    integrator: Integrator,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let accel = |q: &DVector<f64>, qd: &DVector<f64>| {
        crate::dynamics::forward_dynamics(model, q, qd, tau)
            .ok_or_else(|| Error::Degenerate("mass matrix is not positive definite".into()))
    };
    let (qn, qdn) = match integrator {
        Integrator::Rk4 => {
            let a1 = accel(q, qd)?;
            let (q2, v2) = (q + qd * (0.5 * dt), qd + &a1 * (0.5 * dt));
            let a2 = accel(&q2, &v2)?;
            let (q3, v3) = (q + &v2 * (0.5 * dt), qd + &a2 * (0.5 * dt));
            let a3 = accel(&q3, &v3)?;
            let (q4, v4) = (q + &v3 * dt, qd + &a3 * dt);
            let a4 = accel(&q4, &v4)?;
            let qn = q + (qd + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
            let qdn = qd + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
            (qn, qdn)
        }
        Integrator::SemiImplicitEuler => {
            let a = accel(q, qd)?;
            let qdn = qd + a * dt;
            let qn = q + &qdn * dt;
            (qn, qdn)
        }
    };
    let speed = qdn.amax();
    if !(speed <= BLOW_UP_SPEED) {
        return Err(Error::BlowUp { t: f64::NAN, speed });
    }
    Ok((qn, qdn))
}

/// Generalized forces that give the joints the acceleration `theta_dd` while
/// the roll axis receives `tau_roll`.
fn servo_forces(model: &RobotModel<f64>, q: &DVector<f64>, qd: &DVector<f64>, tau_roll: f64, theta_dd: &DVector<f64>) -> DVector<f64> {
    let n = model.n_joints();
    let d: DMatrix<f64> = mass_matrix_unchecked(model, q);
    let bias = rnea(model, q, qd, &DVector::zeros(n + 1), true);
    let coupling = d.view((0, 1), (1, n)).dot(&theta_dd.transpose());
    let phi_dd = (tau_roll - bias[0] - coupling) / d[(0, 0)];
    let mut tau = DVector::zeros(n + 1);
    tau[0] = tau_roll;
    let joints = d.view((1, 0), (n, 1)) * phi_dd + d.view((1, 1), (n, n)) * theta_dd + bias.rows(1, n);
    tau.rows_mut(1, n).copy_from(&joints);
    tau
}

/// Roll magnitude beyond which balance counts as lost.
pub fn balance_envelope(model: &RobotModel<f64>, steering: &SteeringLimits<f64>) -> f64 {
    let limits = CapabilityLimits { delta_range: steering.delta_max, ..CapabilityLimits::default() };
    ENVELOPE_FACTOR * bem::max_roll_capability(model, Strategy::TwoWheel, &limits).phi_b_max
}

/// Runs the controllers against the dynamics along `plan`.
pub fn run_scenario(
    model: &RobotModel<f64>,
    plan: &PlanResult,
    gains: &ControllerGains,
    disturbances: &[Disturbance],
    config: &SimConfig,
) -> Result<SimLog> {
    config.validate()?;
    gains.balance.validate()?;
    gains.arm.validate(model.n_joints())?;
    for d in disturbances {
        d.validate()?;
    }
    let n = model.n_joints();
    let mass = model.total_mass();
    let t0 = plan.t_start();
    let (per, steps) = config.ticks();
    let envelope = config.balance_envelope.unwrap_or_else(|| balance_envelope(model, &config.steering));
    let rate_bound = bem::velocity_bound(model, &config.steering);
    let mut arm = gains.arm.clone();
    if !config.correction_enabled {
        arm.kappa = 0.0;
    }

    let (mut q, mut qd, mut delta) = match &config.initial {
        Some(s) => {
            model.check_dim(&s.q)?;
            model.check_dim(&s.qd)?;
            (s.q.clone(), s.qd.clone(), config.steering.clamp(s.delta))
        }
        None => {
            let (q, _, _) = plan.reference(t0);
            let delta = bem::equilibrium_steering(model, &q, config.steering.delta_max)
                .map_or(config.steering.delta_max, |p| p.delta);
            (q, DVector::zeros(n + 1), delta)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = if config.sensor_noise > 0.0 {
        Some(Normal::new(0.0, config.sensor_noise).map_err(|e| Error::InvalidParameter(e.to_string()))?)
    } else {
        None
    };
    let mut history: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    let mut theta_dd_servo = DVector::zeros(n);
    let mut records = Vec::with_capacity(steps / per + 2);
    let mut lost_at = None;
    let mut cmd = None;

    for k in 0..=steps {
        let t = t0 + k as f64 * config.dt;
        if k % per == 0 || k == steps {
            let (q_ref, qd_ref, qdd_ref) = plan.reference(t);
            let mut phi = q[0];
            if let Some(dist) = &noise {
                phi += dist.sample(&mut rng);
            }
            if let Some(res) = config.sensor_quantization {
                phi = (phi / res).round() * res;
            }
            let mut meas = RobotState { q: q.clone(), qd: qd.clone() };
            meas.q[0] = phi;
            if config.sensor_quantization.is_some() || noise.is_some() {
                meas.qd[0] = history.front().map_or(0.0, |prev| (phi - prev) / (history.len() as f64 * config.control_period));
            }
            history.push_back(phi);
            if history.len() > config.rate_window {
                history.pop_front();
            }
            // joint rate feedforward is the secant over the hold interval
            let hold = per as f64 * config.dt;
            let mut ff = qd_ref.clone();
            let ahead = (plan.reference(t + hold).0 - &q_ref) / hold;
            ff.rows_mut(1, n).copy_from(&ahead.rows(1, n));
            let reference = Reference { q: q_ref.clone(), qd: ff, qdd: qdd_ref };
            let theta_acc = match config.theta_accel {
                ThetaAccelSource::Reference => None,
                ThetaAccelSource::Servo => Some(&theta_dd_servo),
            };
            let c = control_step(
                model,
                &meas,
                &reference,
                &gains.balance,
                &arm,
                &config.steering,
                config.rate_max,
                theta_acc,
            )?;
            let kin = forward_kinematics_unchecked(model, &q);
            let pose = kin.pose();
            let pose_ref = forward_kinematics_unchecked(model, &q_ref).pose();
            let correction_norm = if c.correction_active {
                crate::control::correction(model, &q, &q_ref, arm.kappa).norm()
            } else {
                0.0
            };
            let lost = q[0].abs() > envelope;
            if lost && lost_at.is_none() {
                lost_at = Some(t);
            }
            records.push(SimRecord {
                t,
                q: q.clone(),
                qd: qd.clone(),
                q_ref: q_ref.clone(),
                qd_ref,
                delta,
                delta_cmd: c.delta_cmd,
                tau_b: steering::balance_torque_90(delta, mass, &model.bike),
                tau_b_demand: crate::control::balance_control(model, &meas, &reference, &gains.balance, theta_acc)?,
                disturbance: disturbances.iter().map(|d| d.at(t)).sum(),
                theta_rate_cmd: c.theta_rate_cmd.clone(),
                steering_saturated: c.steering_saturated,
                correction_active: c.correction_active,
                correction_norm,
                pose_error: (pose.position_error(&pose_ref), pose.orientation_error(&pose_ref)),
                pose,
                gravity_rate: gravity_rate(model, &q, &qd),
                gravity_rate_bound: rate_bound,
                jacobian_norm: system_jacobian(model, &q)?.norm(),
                phase: plan.phase_at(t).copied(),
                balance_lost: lost,
            });
            cmd = Some(c);
            if lost && config.stop_on_balance_loss {
                break;
            }
        }
        if k == steps {
            break;
        }
        let c = cmd.as_ref().expect("command issued on the first tick");
        theta_dd_servo = ((&c.theta_rate_cmd - qd.rows(1, n)) * config.servo_gain)
            .map(|a| a.clamp(-config.accel_max, config.accel_max));
        let tau_roll = steering::balance_torque_90(delta, mass, &model.bike) + disturbances.iter().map(|d| d.at(t)).sum::<f64>();
        let tau = servo_forces(model, &q, &qd, tau_roll, &theta_dd_servo);
        let (qn, qdn) = step(model, &q, &qd, &tau, config.dt, config.integrator).map_err(|e| match e {
            Error::BlowUp { speed, .. } => Error::BlowUp { t: t + config.dt, speed },
            other => other,
        })?;
        q = qn;
        qd = qdn;
        let max_move = config.steering.delta_rate_max * config.dt;
        delta = config.steering.clamp(delta + (c.delta_cmd - delta).clamp(-max_move, max_move));
    }
    let arm_gain_min = gains.arm.k_p.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SimLog { records, envelope, arm_gain_min, balance_lost_at: lost_at, seed: config.seed })
}

/// Steering range and rate used by the stationary balance regulation runs.
pub const REGULATION_DELTA_MAX_DEG: f64 = 50.0;
pub const REGULATION_DELTA_RATE_DEG: f64 = 100.0;

/// Stationary balance regulation: the robot rests at `q` for `duration`
/// with the roll displaced to `roll0` and steering at the angle that
/// balances gravity there.
pub fn balance_regulation(
    model: &RobotModel<f64>,
    q: &DVector<f64>,
    roll0: f64,
    duration: f64,
) -> Result<(PlanResult, SimConfig)> {
    model.check_dim(q)?;
    let plan = PlanResult::hold(q.clone(), duration);
    let mut config = SimConfig::new(duration);
    config.steering = SteeringLimits {
        delta_max: REGULATION_DELTA_MAX_DEG.to_radians(),
        delta_rate_max: REGULATION_DELTA_RATE_DEG.to_radians(),
    };
    let mut q0 = q.clone();
    q0[0] = roll0;
    let g_b = crate::dynamics::gravity_roll_torque(model, &q0);
    let (delta, _) = crate::control::torque_to_steering(g_b, roll0, model.total_mass(), &model.bike, &config.steering);
    config.initial = Some(InitialState { q: q0, qd: DVector::zeros(model.dof()), delta });
    Ok((plan, config))
}

/// Adds a disturbance to a scenario's list after checking it lies inside the run window.
pub fn inject(disturbances: &[Disturbance], d: Disturbance, t_start: f64, duration: f64) -> Result<Vec<Disturbance>> {
    d.validate()?;
    if d.t_start < t_start || d.t_start + d.duration > t_start + duration {
        return Err(Error::InvalidParameter("disturbance outside the run window".into()));
    }
    let mut out = disturbances.to_vec();
    out.push(d);
    Ok(out)
}

/// Error statistics over records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn from_samples(x: &[f64]) -> Self {
        let count = x.len();
        if count == 0 {
            return Self { mean: 0.0, std: 0.0, max: 0.0, count };
        }
        let mean = x.iter().sum::<f64>() / count as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Self { mean, std: var.sqrt(), max: x.iter().copied().fold(0.0, f64::max), count }
    }
}

/// End-effector errors against the desired poses during hold phases:
/// position (m) and orientation (rad). With `window`, only the last
/// `window` seconds of each hold count.
pub fn hold_errors(log: &SimLog, plan: &PlanResult, window: Option<f64>) -> (ErrorStats, ErrorStats) {
    let mut pos = Vec::new();
    let mut ori = Vec::new();
    for (k, r) in log.holds() {
        let Some(target) = plan.poses.get(k) else { continue };
        if let (Some(w), Some(p)) = (window, r.phase) {
            if r.t < p.tf - w - 1e-9 {
                continue;
            }
        }
        pos.push(r.pose.position_error(target));
        ori.push(r.pose.orientation_error(target));
    }
    (ErrorStats::from_samples(&pos), ErrorStats::from_samples(&ori))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{energies, gravity_vector};

    fn hanging() -> RobotModel<f64> {
        let mut m = RobotModel::<f64>::prototype();
        m.links.clear();
        m.home = DVector::zeros(0);
        m.bounds.lower = m.bounds.lower.rows(0, 1).into_owned();
        m.bounds.upper = m.bounds.upper.rows(0, 1).into_owned();
        m.bike.gravity = -9.8;
        m
    }

    #[test]
    fn static_equilibrium_is_kept() {
        let m = RobotModel::<f64>::prototype();
        let mut q = m.home_configuration();
        q[0] = 0.05;
        let tau = gravity_vector(&m, &q).unwrap();
        let qd = DVector::zeros(7);
        let (qn, qdn) = step(&m, &q, &qd, &tau, 1e-3, Integrator::Rk4).unwrap();
        assert!((&qn - &q).amax() < 1e-12);
        assert!(qdn.amax() < 1e-9);
    }

    #[test]
    fn hanging_platform_matches_pendulum_period() {
        let m = hanging();
        let b = &m.bike;
        let amp = 10f64.to_radians();
        let inertia = b.roll_inertia + b.mass * b.com_height * b.com_height;
        let w0 = (b.mass * 9.8 * b.com_height / inertia).sqrt();
        // complete elliptic integral of the first kind by the AGM
        let k = (amp / 2.0).sin();
        let (mut a, mut g) = (1.0f64, (1.0 - k * k).sqrt());
        for _ in 0..20 {
            let an = 0.5 * (a + g);
            g = (a * g).sqrt();
            a = an;
        }
        let period = 4.0 / w0 * std::f64::consts::FRAC_PI_2 / a;

        let (mut q, mut qd) = (DVector::from_element(1, amp), DVector::zeros(1));
        let tau = DVector::zeros(1);
        let dt = 1e-3;
        let mut crossings = Vec::new();
        let mut t = 0.0;
        while crossings.len() < 3 {
            let (qn, qdn) = step(&m, &q, &qd, &tau, dt, Integrator::Rk4).unwrap();
            if q[0] > 0.0 && qn[0] <= 0.0 || q[0] < 0.0 && qn[0] >= 0.0 {
                crossings.push(t + dt * q[0] / (q[0] - qn[0]));
            }
            q = qn;
            qd = qdn;
            t += dt;
        }
        let measured = crossings[2] - crossings[0];
        assert!((measured - period).abs() / period < 1e-3, "{measured} vs {period}");
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let m = RobotModel::<f64>::prototype();
        let mut q0 = m.home_configuration();
        q0[0] = 0.02;
        q0[2] = 2.5;
        let run = |dt: f64| {
            let (mut q, mut qd) = (q0.clone(), DVector::zeros(7));
            let tau = DVector::zeros(7);
            for _ in 0..(0.4 / dt).round() as usize {
                let (a, b) = step(&m, &q, &qd, &tau, dt, Integrator::Rk4).unwrap();
                q = a;
                qd = b;
            }
            q
        };
        let (a, b, c) = (run(0.02), run(0.01), run(0.005));
        let ratio = (&a - &b).norm() / (&b - &c).norm();
        assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
    }

    #[test]
    fn unforced_energy_drift_is_small() {
        let m = RobotModel::<f64>::prototype();
        let mut q = m.home_configuration();
        q[0] = 0.01;
        q[3] = 0.4;
        let mut qd = DVector::zeros(7);
        qd[2] = 0.3;
        let e0 = energies(&m, &q, &qd).unwrap().total();
        let tau = DVector::zeros(7);
        for _ in 0..1000 {
            let (a, b) = step(&m, &q, &qd, &tau, 1e-3, Integrator::Rk4).unwrap();
            q = a;
            qd = b;
        }
        let e1 = energies(&m, &q, &qd).unwrap().total();
        assert!(((e1 - e0) / e0).abs() < 1e-6, "{e0} {e1}");
    }

    #[test]
    fn blow_up_is_reported() {
        let m = RobotModel::<f64>::prototype();
        let q = m.home_configuration();
        let mut qd = DVector::zeros(7);
        qd[1] = 2e3;
        let r = step(&m, &q, &qd, &DVector::zeros(7), 1e-3, Integrator::Rk4);
        assert!(matches!(r, Err(Error::BlowUp { .. })));
    }
}
