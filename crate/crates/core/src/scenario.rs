//! Reference scenarios shared by the command line and the test suites.

use crate::bem::solve_equilibrium_roll;
use crate::error::Result;
use crate::model::{end_effector_pose, Pose, RobotModel};
use crate::sim::Disturbance;
use nalgebra::DVector;

/// Joint angles (deg) of the four mission poses; the roll is solved on the
/// equilibrium manifold with zero steering increment.
pub const MISSION_JOINTS_DEG: [[f64; 6]; 4] = [
    [10.0, 160.0, 20.0, 0.0, 30.0, 0.0],
    [10.0, 150.0, 30.0, 0.0, 40.0, 0.0],
    [5.0, 140.0, 40.0, 0.0, 50.0, 0.0],
    [0.0, 150.0, 20.0, 0.0, 30.0, 0.0],
];

/// Arm swung to the side at zero roll; its gravity torque sits just below
/// the prototype steering capacity.
pub const LATERAL_REACH_DEG: [f64; 7] = [0.0, 90.0, 190.0, -60.0, 0.0, 30.0, 0.0];

/// Residual arm mass fraction standing in for a removed arm; keeps the
/// joint rows of the mass matrix invertible.
pub const REMOVED_ARM_SCALE: f64 = 1e-6;

/// The model with the arm's mass and inertia scaled to a negligible residue.
pub fn arm_removed(model: &RobotModel<f64>) -> RobotModel<f64> {
    model.with_arm_mass_scale(REMOVED_ARM_SCALE)
}

fn radians(deg: &[f64]) -> DVector<f64> {
    DVector::from_iterator(deg.len(), deg.iter().map(|d| d.to_radians()))
}

/// Equilibrium configurations of the mission poses.
pub fn mission_configurations(model: &RobotModel<f64>) -> Result<Vec<DVector<f64>>> {
    MISSION_JOINTS_DEG
        .iter()
        .map(|j| solve_equilibrium_roll(model, &radians(j), 0.0).map(|p| p.q_e))
        .collect()
}

/// Four end-effector poses generated on the equilibrium manifold.
pub fn mission_poses(model: &RobotModel<f64>) -> Result<Vec<Pose<f64>>> {
    mission_configurations(model)?.iter().map(|q| end_effector_pose(model, q)).collect()
}

/// The first three mission poses followed by the lateral reach.
pub fn ablation_poses(model: &RobotModel<f64>) -> Result<Vec<Pose<f64>>> {
    let mut poses = mission_poses(model)?;
    poses[3] = end_effector_pose(model, &radians(&LATERAL_REACH_DEG))?;
    Ok(poses)
}

/// Roll push of 5 N m for 0.2 s; peaks near 0.6 deg of roll error at the
/// mission poses.
pub fn roll_push(t_start: f64) -> Disturbance {
    Disturbance { t_start, duration: 0.2, torque: 5.0 }
}
