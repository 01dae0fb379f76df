//! Dynamic-programming reference for rest-to-rest segments.
//!
//! The motion is searched along the straight configuration line from start
//! to end. Progress along that line is quantized so that each step changes
//! the discrete acceleration by a bounded number of quanta; the state is the
//! pair (level, level increment).

use super::{gravity_torque_cap, MotionLimits, PlannerSettings, PlannerWeights};
use crate::dynamics::{gravity_jacobian, gravity_roll_torque, rnea};
use crate::error::{Error, Result};
use crate::model::{BikebotParams, LinkParams, RobotModel};
use nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion, Vector3};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpGrid {
    /// Number of time steps.
    pub steps: usize,
    /// Acceleration quanta per unit of the acceleration bound.
    pub accel_levels: usize,
    /// Upper bound on stored states across all steps.
    pub max_cells: usize,
}

impl DpGrid {
    pub fn new(steps: usize) -> Self {
        Self { steps, accel_levels: 2, max_cells: 1_000_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    pub times: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub cost: f64,
    pub levels: usize,
    pub cells: usize,
    pub wall_time: f64,
}

/// Bikebot with one horizontal-axis link swinging in the vertical plane
/// through the contact line. Its gravity roll torque vanishes at zero roll
/// for every joint angle.
pub fn planar_toy_model() -> RobotModel<f64> {
    let bike = BikebotParams::prototype();
    let link = LinkParams::with_midpoint_com(0.0, 0.41, 0.0, 1.5, Vector3::new(0.0041, 0.0255, 0.0217));
    let mut model = RobotModel::new(bike, vec![link], DVector::from_element(1, 0.0)).expect("valid toy model");
    let t = model.mount.translation;
    model.mount = Isometry3::from_parts(
        Translation3::from(t.vector),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2),
    );
    model
}

#[allow(clippy::too_many_arguments)]
pub fn dp_reference(
    model: &RobotModel<f64>,
    q_start: &DVector<f64>,
    q_end: &DVector<f64>,
    t0: f64,
    tf: f64,
    weights: &PlannerWeights,
    limits: &MotionLimits,
    settings: &PlannerSettings,
    grid: &DpGrid,
) -> Result<DpSolution> {
    let clock = Instant::now();
    let d = model.dof();
    model.check_dim(q_start)?;
    model.check_dim(q_end)?;
    weights.validate(d)?;
    limits.validate(model.n_joints())?;
    if !(tf > t0) {
        return Err(Error::InvalidParameter(format!("tf ({tf}) must exceed t0 ({t0})")));
    }
    if grid.steps < 2 || grid.accel_levels == 0 {
        return Err(Error::InvalidParameter("grid needs at least two steps and one acceleration level".into()));
    }
    let k_steps = grid.steps;
    let duration = tf - t0;
    let dt = duration / k_steps as f64;
    let times: Vec<f64> = (0..=k_steps).map(|k| t0 + k as f64 * dt).collect();
    let dir = q_end - q_start;
    let span = dir.amax();
    if span == 0.0 {
        return Ok(DpSolution {
            q: vec![q_start.clone(); k_steps + 1],
            times,
            cost: 0.0,
            levels: 0,
            cells: 0,
            wall_time: clock.elapsed().as_secs_f64(),
        });
    }

    let acc_max = limits.q_acc_max / span;
    let rate_max = limits.q_rate_max / span;
    let kappa = grid.accel_levels as i64;
    let levels = (kappa as f64 / (acc_max * dt * dt)).ceil() as i64;
    let h = 1.0 / levels as f64;
    let dmax = (rate_max * dt / h).floor() as i64;
    let width = (2 * dmax + 1) as usize;
    let states = (levels as usize + 1) * width;
    let cells = states.saturating_mul(k_steps + 1);
    if cells > grid.max_cells {
        return Err(Error::GridTooLarge { cells, limit: grid.max_cells });
    }

    let balance = settings.balance_priority;
    let rate_bound = limits.gravity_rate_bound(model);
    let cap = gravity_torque_cap(weights, limits);
    let gb_ref = gravity_roll_torque(model, q_start);
    let controls = (2 * kappa + 1) as usize;
    // stage cost for (level, outgoing increment, acceleration quanta); time invariant
    let mut stage = vec![f64::INFINITY; states * controls];
    let (lb, ub) = (&model.bounds.lower, &model.bounds.upper);
    for i in 0..=levels {
        let q = q_start + &dir * (i as f64 * h);
        if (0..d).any(|c| q[c] < lb[c] - 1e-12 || q[c] > ub[c] + 1e-12) {
            continue;
        }
        let gb = gravity_roll_torque(model, &q);
        if balance && gb.abs() > cap {
            continue;
        }
        let jg = gravity_jacobian(model, &q);
        let e = &q - q_start;
        let base = e.component_mul(&e).dot(&weights.w1) + if balance { (gb - gb_ref).powi(2) } else { 0.0 };
        for dn in -dmax..=dmax {
            let qd = &dir * (dn as f64 * h / dt);
            if balance && jg.dot(&qd).abs() > rate_bound {
                continue;
            }
            let vel = qd.component_mul(&qd).dot(&weights.w2);
            for a in -kappa..=kappa {
                let qdd = &dir * (a as f64 * h / (dt * dt));
                let tau = rnea(model, &q, &qd, &qdd, true);
                if (1..d).any(|j| tau[j].abs() > limits.tau_theta_max[j - 1]) {
                    continue;
                }
                let idx = ((i as usize * width) + (dn + dmax) as usize) * controls + (a + kappa) as usize;
                stage[idx] = dt * (base + vel);
            }
        }
    }

    let state = |i: i64, dn: i64| i as usize * width + (dn + dmax) as usize;
    let mut value = vec![f64::INFINITY; states];
    value[state(0, 0)] = 0.0;
    let mut choice: Vec<Vec<i8>> = Vec::with_capacity(k_steps);
    for _ in 0..k_steps {
        let mut next = vec![f64::INFINITY; states];
        let mut pick = vec![i8::MIN; states];
        for i in 0..=levels {
            for dn in -dmax..=dmax {
                let v = value[state(i, dn)];
                if !v.is_finite() {
                    continue;
                }
                for a in -kappa..=kappa {
                    let dn2 = dn + a;
                    let i2 = i + dn2;
                    if dn2.abs() > dmax || i2 < 0 || i2 > levels {
                        continue;
                    }
                    let c = stage[state(i, dn2) * controls + (a + kappa) as usize];
                    let cand = v + c;
                    let s2 = state(i2, dn2);
                    if cand < next[s2] {
                        next[s2] = cand;
                        pick[s2] = a as i8;
                    }
                }
            }
        }
        value = next;
        choice.push(pick);
    }
    let cost = value[state(levels, 0)];
    if !cost.is_finite() {
        return Err(Error::SolverFailure("no feasible grid path reaches the end at rest".into()));
    }

    let mut path = vec![0i64; k_steps + 1];
    let (mut i, mut dn) = (levels, 0i64);
    for k in (0..k_steps).rev() {
        path[k + 1] = i;
        let a = choice[k][state(i, dn)] as i64;
        let prev_i = i - dn;
        dn -= a;
        i = prev_i;
    }
    path[0] = i;
    let q = path.iter().map(|&i| q_start + &dir * (i as f64 * h)).collect();
    Ok(DpSolution { times, q, cost, levels: levels as usize, cells, wall_time: clock.elapsed().as_secs_f64() })
}
