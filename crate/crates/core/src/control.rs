//! Steering balance control and manipulator velocity control.

use crate::bem::refine_root;
use crate::dynamics::{gravity_gradient, gravity_roll_torque, rnea};
use crate::error::{Error, Result};
use crate::model::RobotModel;
use crate::scalar::Real;
use crate::sim::SimLog;
use crate::steering::{self, SteeringLimits};
use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceGains<T: Real> {
    pub k_p: T,
    pub k_d: T,
}

impl<T: Real> BalanceGains<T> {
    pub fn new(k_p: T, k_d: T) -> Result<Self> {
        let g = Self { k_p, k_d };
        g.validate()?;
        Ok(g)
    }

    pub fn prototype() -> Self {
        Self { k_p: T::lit(8.5), k_d: T::lit(2.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_p > T::zero() && self.k_d > T::zero()) {
            return Err(Error::InvalidParameter("balance gains must be positive".into()));
        }
        if self.k_d * self.k_d >= T::lit(4.0) * self.k_p {
            log::warn!("k_d^2 >= 4 k_p: roll error dynamics are not underdamped");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmGains<T: Real> {
    pub k_p: DVector<T>,
    pub kappa: T,
    /// Roll error above which the gravity correction is active (rad).
    pub epsilon_b: T,
}

impl<T: Real> ArmGains<T> {
    pub fn prototype(n_joints: usize) -> Self {
        Self { k_p: DVector::from_element(n_joints, T::lit(2.0)), kappa: T::lit(5.0), epsilon_b: T::lit(0.4f64.to_radians()) }
    }

    pub fn validate(&self, n_joints: usize) -> Result<()> {
        if self.k_p.len() != n_joints {
            return Err(Error::DimensionMismatch { expected: n_joints, got: self.k_p.len() });
        }
        if self.k_p.iter().any(|k| !(*k > T::zero())) || self.kappa < T::zero() || !(self.epsilon_b > T::zero()) {
            return Err(Error::InvalidParameter("arm gains must be positive".into()));
        }
        Ok(())
    }
}

/// Measured state `(q, qdot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState<T: Real> {
    pub q: DVector<T>,
    pub qd: DVector<T>,
}

/// Reference `(q*, qdot*, qddot*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference<T: Real> {
    pub q: DVector<T>,
    pub qd: DVector<T>,
    pub qdd: DVector<T>,
}

impl<T: Real> Reference<T> {
    pub fn rest(q: DVector<T>) -> Self {
        let n = q.len();
        Self { q, qd: DVector::zeros(n), qdd: DVector::zeros(n) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlCommand<T: Real> {
    pub delta_cmd: T,
    pub theta_rate_cmd: DVector<T>,
    /// Balance torque realized by `delta_cmd`.
    pub tau_b_cmd: T,
    pub steering_saturated: bool,
    pub correction_active: bool,
}

/// Roll torque demand with feedback linearization of the roll dynamics.
///
/// `tau_b = D_bb (phi_dd* - k_p e_b - k_d e_b') + D_bθ Θ_dd + C_b q_d + G_b`
/// with `e_b = phi_b - phi_b*`, giving `e_b'' + k_d e_b' + k_p e_b = 0`.
/// `theta_acc` overrides the reference joint accelerations.
pub fn balance_control<T: Real>(
    model: &RobotModel<T>,
    state: &RobotState<T>,
    reference: &Reference<T>,
    gains: &BalanceGains<T>,
    theta_acc: Option<&DVector<T>>,
) -> Result<T> {
    model.check_dim(&state.q)?;
    model.check_dim(&state.qd)?;
    model.check_dim(&reference.q)?;
    let e = state.q[0] - reference.q[0];
    let ed = state.qd[0] - reference.qd[0];
    let mut acc = reference.qdd.clone();
    if let Some(a) = theta_acc {
        if a.len() != model.n_joints() {
            return Err(Error::DimensionMismatch { expected: model.n_joints(), got: a.len() });
        }
        acc.rows_mut(1, a.len()).copy_from(a);
    }
    acc[0] = reference.qdd[0] - (gains.k_p * e + gains.k_d * ed);
    Ok(rnea(model, &state.q, &state.qd, &acc, true)[0])
}

/// Steering increment producing `tau_b` on the monotone branch of the
/// balance torque, saturated at `delta_max`.
pub fn torque_to_steering<T: Real>(
    tau_b: T,
    phi_b: T,
    mass: T,
    bike: &crate::model::BikebotParams<T>,
    limits: &SteeringLimits<T>,
) -> (T, bool) {
    steering::check_roll(phi_b);
    if tau_b == T::zero() {
        return (T::zero(), false);
    }
    let (_, peak) = steering::max_balance_torque_90(mass, limits.delta_max, bike);
    let f = |d: T| steering::balance_torque_90(d, mass, bike) - tau_b;
    let (flo, fhi) = (f(-peak), f(peak));
    if flo.signum() == fhi.signum() {
        // beyond reach: pick the end whose torque is closer
        let d = if flo.abs() < fhi.abs() { -peak } else { peak };
        return (d, true);
    }
    (refine_root(&f, -peak, peak, flo, fhi), false)
}

/// Joint rate command `Θ_d* - K_p e_Θ + I_Θ 2κ (G_b(q*) - G_b(q)) ∂G_b/∂Θ`,
/// each rate clamped to `rate_max`.
pub fn arm_velocity_control<T: Real>(
    model: &RobotModel<T>,
    state: &RobotState<T>,
    reference: &Reference<T>,
    gains: &ArmGains<T>,
    rate_max: T,
) -> Result<(DVector<T>, bool)> {
    model.check_dim(&state.q)?;
    model.check_dim(&reference.q)?;
    let n = model.n_joints();
    gains.validate(n)?;
    let e_b = state.q[0] - reference.q[0];
    let active = e_b.abs() > gains.epsilon_b;
    let mut cmd = DVector::from_fn(n, |i, _| {
        reference.qd[i + 1] - gains.k_p[i] * (state.q[i + 1] - reference.q[i + 1])
    });
    if active {
        cmd += correction(model, &state.q, &reference.q, gains.kappa);
    }
    let saturated = cmd.map(|v| v.clamp(-rate_max, rate_max));
    Ok((saturated, active))
}

/// `2κ (G_b(q*) - G_b(q)) (∂G_b/∂Θ)ᵀ` in rad/s, with `κ` taken in degree
/// units: gradient per degree and rates in deg/s.
pub fn correction<T: Real>(model: &RobotModel<T>, q: &DVector<T>, q_ref: &DVector<T>, kappa: T) -> DVector<T> {
    let n = model.n_joints();
    let dg = gravity_roll_torque(model, q_ref) - gravity_roll_torque(model, q);
    let grad = gravity_gradient(model, q);
    let per_deg = T::lit(std::f64::consts::PI / 180.0);
    grad.rows(1, n) * (T::lit(2.0) * kappa * dg * per_deg * per_deg)
}

/// Full controller step: roll torque demand, steering increment and joint
/// rate command.
#[allow(clippy::too_many_arguments)]
pub fn control_step<T: Real>(
    model: &RobotModel<T>,
    state: &RobotState<T>,
    reference: &Reference<T>,
    balance: &BalanceGains<T>,
    arm: &ArmGains<T>,
    steering_limits: &SteeringLimits<T>,
    rate_max: T,
    theta_acc: Option<&DVector<T>>,
) -> Result<ControlCommand<T>> {
    let demand = balance_control(model, state, reference, balance, theta_acc)?;
    let mass = model.total_mass();
    let (delta_cmd, steering_saturated) = torque_to_steering(demand, state.q[0], mass, &model.bike, steering_limits);
    let (theta_rate_cmd, correction_active) = arm_velocity_control(model, state, reference, arm, rate_max)?;
    Ok(ControlCommand {
        tau_b_cmd: steering::balance_torque_90(delta_cmd, mass, &model.bike),
        delta_cmd,
        theta_rate_cmd,
        steering_saturated,
        correction_active,
    })
}

/// Error profiles and fitted convergence figures of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingReport {
    pub t: Vec<f64>,
    pub e_b: Vec<f64>,
    pub e_theta: Vec<f64>,
    /// End-effector position error against the reference configuration (m).
    pub e_position: Vec<f64>,
    /// End-effector orientation error against the reference configuration (rad).
    pub e_orientation: Vec<f64>,
    /// Fitted exponential decay rate of the roll error envelope (1/s).
    pub e_b_rate: Option<f64>,
    pub e_theta_rate: Option<f64>,
    /// Largest ratio of position error to configuration error.
    pub pose_config_ratio: f64,
    /// Largest end-effector Jacobian norm along the run.
    pub max_jacobian_norm: f64,
    /// `l_Θ / λ_p`: largest correction input over the smallest joint gain.
    pub ball_radius: f64,
}

/// Builds the error profiles of a simulation log.
pub fn tracking_error_report(log: &SimLog) -> Result<TrackingReport> {
    if log.records.is_empty() {
        return Err(Error::EmptyLog);
    }
    let r = &log.records;
    let t: Vec<f64> = r.iter().map(|x| x.t).collect();
    let e_b: Vec<f64> = r.iter().map(|x| x.q[0] - x.q_ref[0]).collect();
    let e_theta: Vec<f64> = r.iter().map(|x| (x.q.rows(1, x.q.len() - 1) - x.q_ref.rows(1, x.q.len() - 1)).norm()).collect();
    let e_position: Vec<f64> = r.iter().map(|x| x.pose_error.0).collect();
    let e_orientation: Vec<f64> = r.iter().map(|x| x.pose_error.1).collect();
    let mut ratio = 0.0f64;
    for x in r {
        let eq = (&x.q - &x.q_ref).norm();
        if eq > 1e-9 {
            ratio = ratio.max(x.pose_error.0 / eq);
        }
    }
    let l_theta = r.iter().map(|x| x.correction_norm).fold(0.0, f64::max);
    Ok(TrackingReport {
        e_b_rate: fit_decay_rate(&t, &e_b, 1e-7),
        e_theta_rate: fit_decay_rate(&t, &e_theta, 1e-9),
        pose_config_ratio: ratio,
        max_jacobian_norm: r.iter().map(|x| x.jacobian_norm).fold(0.0, f64::max),
        ball_radius: l_theta / log.arm_gain_min,
        t,
        e_b,
        e_theta,
        e_position,
        e_orientation,
    })
}

/// Decay rate of `|e|` from a log-linear fit to its local maxima above
/// `floor`; uses every sample above the floor when there are too few peaks.
pub fn fit_decay_rate(t: &[f64], e: &[f64], floor: f64) -> Option<f64> {
    let a: Vec<f64> = e.iter().map(|v| v.abs()).collect();
    let mut pts: Vec<(f64, f64)> = (1..a.len().saturating_sub(1))
        .filter(|&i| a[i] > floor && a[i] >= a[i - 1] && a[i] > a[i + 1])
        .map(|i| (t[i], a[i].ln()))
        .collect();
    if pts.len() < 3 {
        pts = t.iter().zip(&a).filter(|(_, v)| **v > floor).map(|(t, v)| (*t, v.ln())).collect();
    }
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}
