//! Balance equilibrium manifold: configurations whose gravity roll torque is
//! matched by an achievable steering torque.

use crate::dynamics::{gravity_rate, gravity_roll_torque};
use crate::error::{Error, Result};
use crate::model::{Pose, RobotModel};
use crate::planner::{bpik, BpikRequest, MotionLimits, PlannerSettings, PlannerWeights};
use crate::scalar::Real;
use crate::steering::{self, SteeringLimits};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Residual tolerance of every returned equilibrium (N m).
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Bracket half-width for the equilibrium roll search (deg).
pub const ROLL_GUARD_DEG: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BemPoint<T: Real> {
    pub q_e: DVector<T>,
    pub delta: T,
    pub tau_b: T,
    pub residual: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    OneWheel,
    TwoWheel,
    TwoWheelArm,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::OneWheel, Strategy::TwoWheel, Strategy::TwoWheelArm];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::OneWheel => "one-wheel",
            Strategy::TwoWheel => "two-wheel",
            Strategy::TwoWheelArm => "two-wheel+arm",
        }
    }
}

/// Search settings for [`max_roll_capability`].
#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityLimits<T: Real> {
    /// Admissible steering increment magnitude.
    pub delta_range: T,
    /// Joints (1-based) moved by the arm-assisted search.
    pub arm_joints: Vec<usize>,
    /// Largest roll scanned (rad).
    pub roll_scan_max: T,
}

impl<T: Real> Default for CapabilityLimits<T> {
    fn default() -> Self {
        Self {
            delta_range: T::lit(50f64.to_radians()),
            arm_joints: vec![1, 2, 3],
            roll_scan_max: T::lit(45f64.to_radians()),
        }
    }
}

impl<T: Real> CapabilityLimits<T> {
    pub fn full_joint_search(mut self, n: usize) -> Self {
        self.arm_joints = (1..=n).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityEstimate<T: Real> {
    pub strategy: Strategy,
    /// Smaller of the two one-sided limits.
    pub phi_b_max: T,
    /// Limits toward negative and positive roll (both as magnitudes).
    pub sides: (T, T),
    /// Largest available balance torque magnitude.
    pub tau_b_max: T,
    pub achieving_delta: T,
    pub achieving_theta: Option<DVector<T>>,
}

fn config<T: Real>(phi_b: T, theta: &DVector<T>) -> DVector<T> {
    let mut q = DVector::zeros(theta.len() + 1);
    q[0] = phi_b;
    q.rows_mut(1, theta.len()).copy_from(theta);
    q
}

/// `G_b(q) - tau_b90(delta, M)`.
pub fn bem_residual<T: Real>(model: &RobotModel<T>, q: &DVector<T>, delta: T) -> T {
    gravity_roll_torque(model, q) - steering::balance_torque_90(delta, model.total_mass(), &model.bike)
}

/// Root of `G_b(phi, theta) = tau` within `[-guard, guard]`.
fn solve_roll_for_torque<T: Real>(model: &RobotModel<T>, theta: &DVector<T>, tau: T, guard: T) -> Option<T> {
    let f = |phi: T| gravity_roll_torque(model, &config(phi, theta)) - tau;
    const CELLS: usize = 40;
    let step = (guard + guard) / T::from_usize_lossy(CELLS);
    // scan outward from zero so the root nearest upright is found first
    let mut cells = Vec::with_capacity(CELLS);
    for k in 0..CELLS / 2 {
        let a = step * T::from_usize_lossy(k);
        cells.push((a, a + step));
        cells.push((-a - step, -a));
    }
    for (lo, hi) in cells {
        let (flo, fhi) = (f(lo), f(hi));
        if flo == T::zero() {
            return Some(lo);
        }
        if fhi == T::zero() {
            return Some(hi);
        }
        if flo.signum() != fhi.signum() {
            return Some(refine_root(&f, lo, hi, flo, fhi));
        }
    }
    None
}

/// Bisection down to a small bracket followed by a safeguarded secant polish.
pub(crate) fn refine_root<T: Real, F: Fn(T) -> T>(f: &F, mut lo: T, mut hi: T, mut flo: T, mut fhi: T) -> T {
    let tol = T::lit(EQUILIBRIUM_TOL);
    for _ in 0..60 {
        if hi - lo < T::lit(1e-7) {
            break;
        }
        let mid = (lo + hi) * T::lit(0.5);
        let fm = f(mid);
        if fm == T::zero() {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for _ in 0..60 {
        if best.1.abs() <= tol * T::lit(0.01) {
            break;
        }
        let mut x = hi - fhi * (hi - lo) / (fhi - flo);
        if !(x > lo && x < hi) {
            x = (lo + hi) * T::lit(0.5);
        }
        let fx = f(x);
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == T::zero() {
            break;
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        if hi - lo <= T::default_epsilon() * T::lit(4.0) {
            break;
        }
    }
    best.0
}

/// Equilibrium roll for fixed joints and steering increment.
pub fn solve_equilibrium_roll<T: Real>(model: &RobotModel<T>, theta: &DVector<T>, delta: T) -> Result<BemPoint<T>> {
    if theta.len() != model.n_joints() {
        return Err(Error::DimensionMismatch { expected: model.n_joints(), got: theta.len() });
    }
    let tau = steering::balance_torque_90(delta, model.total_mass(), &model.bike);
    let guard = T::lit(ROLL_GUARD_DEG.to_radians());
    let phi = solve_roll_for_torque(model, theta, tau, guard).ok_or(Error::NoEquilibrium { guard_deg: ROLL_GUARD_DEG })?;
    let q_e = config(phi, theta);
    let residual = bem_residual(model, &q_e, delta).abs();
    if residual > T::lit(EQUILIBRIUM_TOL) {
        return Err(Error::SolverFailure(format!("equilibrium residual {residual} above tolerance")));
    }
    Ok(BemPoint { q_e, delta, tau_b: tau, residual })
}

/// Steering increment that realizes the gravity torque at `q`, if any lies
/// within `|delta| <= delta_max`. Inverts the monotone branch of the torque.
pub fn equilibrium_steering<T: Real>(model: &RobotModel<T>, q: &DVector<T>, delta_max: T) -> Option<BemPoint<T>> {
    let gb = gravity_roll_torque(model, q);
    let m = model.total_mass();
    let (_, peak) = steering::max_balance_torque_90(m, delta_max, &model.bike);
    let f = |d: T| steering::balance_torque_90(d, m, &model.bike) - gb;
    let (flo, fhi) = (f(-peak), f(peak));
    if flo.signum() == fhi.signum() && flo != T::zero() && fhi != T::zero() {
        return None;
    }
    let delta = if flo == T::zero() {
        -peak
    } else if fhi == T::zero() {
        peak
    } else {
        refine_root(&f, -peak, peak, flo, fhi)
    };
    let tau_b = steering::balance_torque_90(delta, m, &model.bike);
    Some(BemPoint { q_e: q.clone(), delta, tau_b, residual: (gb - tau_b).abs() })
}

/// Largest balance torque magnitude for a strategy over `|delta| <= range`,
/// with the increment that attains it.
pub fn strategy_torque<T: Real>(model: &RobotModel<T>, strategy: Strategy, range: T) -> (T, T) {
    let m = model.total_mass();
    match strategy {
        Strategy::OneWheel => steering::maximize_even(
            |d| {
                steering::one_wheel_torque_with_mass(d, T::zero(), m, &model.bike)
                    .map(|t| t.abs())
                    .unwrap_or(T::zero())
            },
            range,
        ),
        Strategy::TwoWheel | Strategy::TwoWheelArm => steering::max_balance_torque_90(m, range, &model.bike),
    }
}

/// First roll magnitude on side `sign` where `|G_b| > tau_max`, scanning
/// from upright; `None` when upright itself is infeasible.
fn roll_limit<T: Real>(model: &RobotModel<T>, theta: &DVector<T>, tau_max: T, sign: T, scan_max: T) -> Option<T> {
    let f = |phi: T| tau_max - gravity_roll_torque(model, &config(sign * phi, theta)).abs();
    let f0 = f(T::zero());
    if f0 < T::zero() {
        return None;
    }
    let step = T::lit(0.25f64.to_radians());
    let mut lo = T::zero();
    let mut flo = f0;
    while lo < scan_max {
        let hi = (lo + step).min(scan_max);
        let fhi = f(hi);
        if fhi < T::zero() {
            return Some(refine_root(&f, lo, hi, flo, fhi));
        }
        lo = hi;
        flo = fhi;
    }
    Some(scan_max)
}

fn both_sides<T: Real>(model: &RobotModel<T>, theta: &DVector<T>, tau_max: T, scan: T) -> (T, T) {
    let neg = roll_limit(model, theta, tau_max, -T::one(), scan).unwrap_or(T::zero());
    let pos = roll_limit(model, theta, tau_max, T::one(), scan).unwrap_or(T::zero());
    (neg, pos)
}

/// Coordinate search over the selected joints maximizing the one-sided limit.
fn arm_search<T: Real>(
    model: &RobotModel<T>,
    tau_max: T,
    sign: T,
    joints: &[usize],
    scan: T,
) -> (T, DVector<T>) {
    let n = model.n_joints();
    let objective = |th: &DVector<T>| roll_limit(model, th, tau_max, sign, scan).unwrap_or(-T::one());
    let mut best_theta = model.home.clone();
    let mut best = objective(&best_theta);
    // deterministic seeds spread over the shoulder yaw
    for seed in 0..8 {
        let mut th = model.home.clone();
        if joints.contains(&1) && n >= 1 {
            th[0] = T::lit((seed as f64 * 45.0 - 180.0).to_radians());
        }
        let mut val = objective(&th);
        let mut step = T::lit(30f64.to_radians());
        while step > T::lit(0.05f64.to_radians()) {
            let mut improved = false;
            for &j in joints {
                if j == 0 || j > n {
                    continue;
                }
                for dir in [T::one(), -T::one()] {
                    let mut cand = th.clone();
                    cand[j - 1] += dir * step;
                    cand[j - 1] = cand[j - 1].clamp(model.bounds.lower[j], model.bounds.upper[j]);
                    let v = objective(&cand);
                    if v > val {
                        val = v;
                        th = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= T::lit(0.5);
            }
        }
        if val > best {
            best = val;
            best_theta = th;
        }
    }
    (best.max(T::zero()), best_theta)
}

/// Static maximum roll angle for a balancing strategy.
pub fn max_roll_capability<T: Real>(
    model: &RobotModel<T>,
    strategy: Strategy,
    limits: &CapabilityLimits<T>,
) -> CapabilityEstimate<T> {
    let (tau_max, delta) = strategy_torque(model, strategy, limits.delta_range);
    let scan = limits.roll_scan_max;
    match strategy {
        Strategy::OneWheel | Strategy::TwoWheel => {
            let sides = both_sides(model, &model.home, tau_max, scan);
            CapabilityEstimate {
                strategy,
                phi_b_max: sides.0.min(sides.1),
                sides,
                tau_b_max: tau_max,
                achieving_delta: delta,
                achieving_theta: None,
            }
        }
        Strategy::TwoWheelArm => {
            let (neg, th_neg) = arm_search(model, tau_max, -T::one(), &limits.arm_joints, scan);
            let (pos, th_pos) = arm_search(model, tau_max, T::one(), &limits.arm_joints, scan);
            let theta = if pos <= neg { th_pos } else { th_neg };
            CapabilityEstimate {
                strategy,
                phi_b_max: neg.min(pos),
                sides: (neg, pos),
                tau_b_max: tau_max,
                achieving_delta: delta,
                achieving_theta: Some(theta),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityCheck<T: Real> {
    pub satisfied: bool,
    /// `h_max * delta_rate_max - |J_G qdot|`.
    pub margin: T,
    pub rate: T,
    pub bound: T,
}

/// Rate bound `|J_G qdot| <= h_max * delta_rate_max` with the total mass.
pub fn velocity_bound<T: Real>(model: &RobotModel<T>, limits: &SteeringLimits<T>) -> T {
    let (h, _) = steering::h_max(model.total_mass(), limits.delta_max, &model.bike);
    h * limits.delta_rate_max
}

pub fn velocity_bound_check<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    qdot: &DVector<T>,
    limits: &SteeringLimits<T>,
) -> Result<VelocityCheck<T>> {
    model.check_dim(q)?;
    model.check_dim(qdot)?;
    let bound = velocity_bound(model, limits);
    let rate = gravity_rate(model, q, qdot).abs();
    let margin = bound - rate;
    Ok(VelocityCheck { satisfied: margin >= T::zero(), margin, rate, bound })
}

/// Result of a workspace query.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceMembership {
    pub contained: bool,
    /// Closest configuration found; balanced in either case.
    pub closest: DVector<f64>,
    pub pose: Pose<f64>,
    /// Pose residual in centimeters and degrees.
    pub residual: f64,
}

/// Whether `pose` is attainable on the balance manifold, judged by the
/// balance-prioritized inverse kinematics against the pose tolerance. With
/// `local_roll` the roll angle is held fixed. `guess` seeds the search and
/// defaults to the home posture.
pub fn workspace_contains(
    model: &RobotModel<f64>,
    pose: &Pose<f64>,
    weights: &PlannerWeights,
    limits: &MotionLimits,
    settings: &PlannerSettings,
    local_roll: Option<f64>,
    guess: Option<&DVector<f64>>,
) -> Result<WorkspaceMembership> {
    let mut start = guess.cloned().unwrap_or_else(|| model.home_configuration());
    model.check_dim(&start)?;
    if let Some(r) = local_roll {
        start[0] = r;
    }
    let prev_gb = gravity_roll_torque(model, &start);
    let req = BpikRequest { target: pose, prev: &start, prev_gb, local_roll, guess: None };
    let mut sol = bpik(model, &req, weights, limits, settings)?;
    if !sol.reached && local_roll.is_none() {
        // the local workspace at the starting roll is part of the global one
        let local = BpikRequest { local_roll: Some(start[0]), ..req };
        if let Ok(alt) = bpik(model, &local, weights, limits, settings) {
            if alt.residual < sol.residual {
                sol = alt;
            }
        }
    }
    Ok(WorkspaceMembership { contained: sol.reached, closest: sol.q, pose: sol.pose, residual: sol.residual })
}
