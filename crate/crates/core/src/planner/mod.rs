//! Pose planning: balance-prioritized inverse kinematics, Bézier segment
//! optimization, the mission loop and a dynamic-programming reference.

pub mod bezier;
mod bpik;
pub mod dp;
pub mod mission;
mod segment;

pub use bezier::{bernstein, bezier_eval, BezierTrajectory, EndState, PINNED_PER_END};
pub use bpik::{bpik, pose_error_vector, BpikRequest, BpikSolution};
pub use mission::{default_transition, plan_mission, MissionTiming, Phase, PhaseKind, PlanResult};
pub use segment::{plan_segment, plan_segment_between, SegmentPlan};

use crate::bem;
use crate::error::{Error, Result};
use crate::model::RobotModel;
use crate::optim::SqpOptions;
use crate::steering::{self, SteeringLimits};
use nalgebra::{DMatrix, DVector};

/// Prototype `W1` diagonal, roll first.
pub const W1_PROTOTYPE: [f64; 7] = [10.0, 5.0, 5.0, 5.0, 1.0, 1.0, 1.0];
/// Prototype `W2` diagonal as published; one entry short for seven coordinates.
pub const W2_PROTOTYPE: [f64; 6] = [1.0; 6];

/// Objective weights and the pose tolerance.
///
/// The pose residual used by `Γ1` and `epsilon_pose` is measured in
/// centimeters and degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerWeights {
    pub lambda: [f64; 4],
    pub p: DMatrix<f64>,
    pub w1: DVector<f64>,
    pub w2: DVector<f64>,
    pub epsilon_pose: f64,
    /// Set when `w2` was padded to the configuration length.
    pub w2_padded: bool,
}

impl PlannerWeights {
    pub fn prototype(dof: usize) -> Self {
        let fit = |src: &[f64]| DVector::from_fn(dof, |i, _| src.get(i).copied().unwrap_or(1.0));
        Self {
            lambda: [10.0, 1.0, 5.0, 1.5],
            p: DMatrix::identity(dof, dof),
            w1: fit(&W1_PROTOTYPE),
            w2: fit(&W2_PROTOTYPE),
            epsilon_pose: 0.1,
            w2_padded: dof > W2_PROTOTYPE.len(),
        }
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        let [l1, l2, l3, l4] = self.lambda;
        if !(l1 > 0.0 && l2 > 0.0 && l3 > 0.0) {
            return Err(Error::InvalidParameter("lambda1..lambda3 must be positive".into()));
        }
        if !(l4 > 1.0) {
            return Err(Error::InvalidParameter(format!("lambda4 must exceed 1, got {l4}")));
        }
        for (name, v) in [("w1", &self.w1), ("w2", &self.w2)] {
            if v.len() != dof {
                return Err(Error::DimensionMismatch { expected: dof, got: v.len() });
            }
            if v.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::InvalidParameter(format!("{name} entries must be positive")));
            }
        }
        if self.p.shape() != (dof, dof) {
            return Err(Error::DimensionMismatch { expected: dof, got: self.p.nrows() });
        }
        if (&self.p - self.p.transpose()).amax() > 1e-12 * (1.0 + self.p.amax()) {
            return Err(Error::InvalidParameter("P must be symmetric".into()));
        }
        if self.p.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter("P must be positive definite".into()));
        }
        if !(self.epsilon_pose > 0.0) {
            return Err(Error::InvalidParameter("epsilon_pose must be positive".into()));
        }
        Ok(())
    }
}

/// Rate, acceleration, torque and steering limits for planning.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionLimits {
    pub q_rate_max: f64,
    pub q_acc_max: f64,
    pub tau_theta_max: DVector<f64>,
    pub steering: SteeringLimits<f64>,
    pub tau_b_max: f64,
}

impl MotionLimits {
    /// Prototype limits; `tau_b_max` is the largest balance torque reachable
    /// within the steering limit.
    pub fn prototype(model: &RobotModel<f64>) -> Self {
        let steering = SteeringLimits::prototype();
        let (tau_b_max, _) = steering::max_balance_torque_90(model.total_mass(), steering.delta_max, &model.bike);
        let base = [10.0, 15.0, 10.0, 5.0, 5.0, 5.0];
        Self {
            q_rate_max: 36f64.to_radians(),
            q_acc_max: 120f64.to_radians(),
            tau_theta_max: DVector::from_fn(model.n_joints(), |i, _| base.get(i).copied().unwrap_or(5.0)),
            steering,
            tau_b_max,
        }
    }

    pub fn validate(&self, n_joints: usize) -> Result<()> {
        if self.tau_theta_max.len() != n_joints {
            return Err(Error::DimensionMismatch { expected: n_joints, got: self.tau_theta_max.len() });
        }
        let positive = self.q_rate_max > 0.0
            && self.q_acc_max > 0.0
            && self.tau_b_max > 0.0
            && self.tau_theta_max.iter().all(|t| *t > 0.0);
        if !positive {
            return Err(Error::InvalidParameter("motion limits must be positive".into()));
        }
        self.steering.validate()
    }

    /// `h_max * delta_rate_max` for the model's total mass.
    pub fn gravity_rate_bound(&self, model: &RobotModel<f64>) -> f64 {
        bem::velocity_bound(model, &self.steering)
    }
}

/// Solver knobs shared by the inverse kinematics and the segment planner.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerSettings {
    pub sqp: SqpOptions,
    /// Starts for inverse kinematics, the previous solution included.
    pub ik_starts: usize,
    /// Starts for each segment, the straight-line guess included.
    pub segment_starts: usize,
    /// Standard deviation of the start perturbations (rad).
    pub perturbation: f64,
    pub seed: u64,
    pub degree: usize,
    pub samples: usize,
    pub audit_factor: usize,
    /// Enforce the balance constraints and balance terms.
    pub balance_priority: bool,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            sqp: SqpOptions::default(),
            ik_starts: 8,
            segment_starts: 2,
            perturbation: 5f64.to_radians(),
            seed: 0,
            degree: 7,
            samples: 50,
            audit_factor: 10,
            balance_priority: true,
        }
    }
}

impl PlannerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.degree < 2 * PINNED_PER_END {
            return Err(Error::InvalidParameter(format!(
                "degree must be at least {} to leave free control points",
                2 * PINNED_PER_END
            )));
        }
        if self.samples < 2 || self.audit_factor == 0 || self.ik_starts == 0 || self.segment_starts == 0 {
            return Err(Error::InvalidParameter("sample and start counts must be positive".into()));
        }
        if !(self.perturbation >= 0.0) {
            return Err(Error::InvalidParameter("perturbation must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Hard balance bound on `|G_b|` implied by `lambda4 |G_b| <= tau_b_max`,
/// pulled in slightly so solver tolerance cannot cross it.
pub(crate) fn gravity_torque_cap(weights: &PlannerWeights, limits: &MotionLimits) -> f64 {
    limits.tau_b_max / weights.lambda[3] * (1.0 - 1e-7)
}
