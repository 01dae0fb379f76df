//! Scenario file schema. Lengths in cm, angles in degrees, time in seconds.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub robot: RobotSection,
    #[serde(default)]
    pub steer_sweep: SweepSection,
    #[serde(default)]
    pub capability: CapabilitySection,
    #[serde(default)]
    pub plan: PlanSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub compare_dp: CompareDpSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotSection {
    /// Multiplies every arm link mass; 0 removes the arm's gravity.
    pub arm_mass_scale: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        Self { arm_mass_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub phi0_min_deg: f64,
    pub phi0_max_deg: f64,
    pub phi0_step_deg: f64,
    pub delta_min_deg: f64,
    pub delta_max_deg: f64,
    pub delta_step_deg: f64,
    pub roll_min_deg: f64,
    pub roll_max_deg: f64,
    pub roll_step_deg: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            phi0_min_deg: 0.0,
            phi0_max_deg: 180.0,
            phi0_step_deg: 1.0,
            delta_min_deg: -15.0,
            delta_max_deg: 15.0,
            delta_step_deg: 1.0,
            roll_min_deg: -10.0,
            roll_max_deg: 10.0,
            roll_step_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapabilitySection {
    pub delta_range_deg: f64,
    /// 1-based joints moved by the arm-assisted search.
    pub arm_joints: Vec<usize>,
    pub roll_scan_max_deg: f64,
}

impl Default for CapabilitySection {
    fn default() -> Self {
        Self { delta_range_deg: 50.0, arm_joints: vec![1, 2, 3], roll_scan_max_deg: 45.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseSet {
    /// Four poses generated on the equilibrium manifold.
    Mission,
    /// Mission poses with the last replaced by a lateral reach.
    Ablation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    /// Built-in pose set used when `poses` is absent.
    pub pose_set: PoseSet,
    /// `[x, y, z]` cm and `[yaw, pitch, roll]` deg per pose.
    pub poses: Option<Vec<[f64; 6]>>,
    pub hold_s: f64,
    pub transition_s: Option<f64>,
    /// Configuration before the first pose: roll then joints (deg).
    pub initial_deg: Option<Vec<f64>>,
    pub balance_priority: bool,
    pub degree: usize,
    pub samples: usize,
    pub ik_starts: usize,
    pub segment_starts: usize,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            pose_set: PoseSet::Mission,
            poses: None,
            hold_s: 15.0,
            transition_s: None,
            initial_deg: None,
            balance_priority: true,
            degree: 7,
            samples: 50,
            ik_starts: 8,
            segment_starts: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimScenario {
    /// Follow the plan section.
    Plan,
    /// Stationary balance from a displaced roll at the home posture.
    Regulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub t_start_s: f64,
    pub duration_s: f64,
    pub torque_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub scenario: SimScenario,
    pub initial_roll_deg: f64,
    /// Regulation run length.
    pub duration_s: f64,
    pub disturbances: Vec<DisturbanceSpec>,
    pub correction: bool,
    pub k_p: f64,
    pub k_d: f64,
    pub arm_k_p: f64,
    pub kappa: f64,
    pub epsilon_b_deg: f64,
    pub quantized_imu_deg: Option<f64>,
    pub noise_deg: f64,
    pub trials: usize,
    pub dt_s: f64,
    pub control_period_s: f64,
    pub semi_implicit: bool,
    pub servo_theta_accel: bool,
    /// Trailing seconds of each hold used for the error statistics.
    pub hold_window_s: Option<f64>,
    /// Steering limits; mission values unless set.
    pub delta_max_deg: Option<f64>,
    pub delta_rate_max_deg_s: Option<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            scenario: SimScenario::Plan,
            initial_roll_deg: 4.0,
            duration_s: 12.0,
            disturbances: Vec::new(),
            correction: true,
            k_p: 8.5,
            k_d: 2.0,
            arm_k_p: 2.0,
            kappa: 5.0,
            epsilon_b_deg: 0.4,
            quantized_imu_deg: None,
            noise_deg: 0.0,
            trials: 1,
            dt_s: 1e-3,
            control_period_s: 1e-2,
            semi_implicit: false,
            servo_theta_accel: false,
            hold_window_s: Some(10.0),
            delta_max_deg: None,
            delta_rate_max_deg_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareDpSection {
    pub samples: Vec<usize>,
    pub start_deg: f64,
    pub move_deg: f64,
    /// Segment duration as a multiple of the bang-bang minimum time.
    pub duration_factor: f64,
    pub degree: usize,
    pub accel_levels: usize,
    pub max_cells: usize,
}

impl Default for CompareDpSection {
    fn default() -> Self {
        Self {
            samples: vec![50, 100, 200],
            start_deg: 0.2f64.to_degrees(),
            move_deg: 10.0,
            duration_factor: 1.5,
            degree: 7,
            accel_levels: 2,
            max_cells: 1_000_000_000,
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let file: Self = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), String> {
        let fail = |field: &str, why: &str| Err(format!("config field `{field}`: {why}"));
        if self.version != SCHEMA_VERSION {
            return fail("version", &format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.version));
        }
        if !(self.robot.arm_mass_scale >= 0.0) {
            return fail("robot.arm_mass_scale", "must be nonnegative");
        }
        let s = &self.steer_sweep;
        for (name, step) in [("phi0_step_deg", s.phi0_step_deg), ("delta_step_deg", s.delta_step_deg), ("roll_step_deg", s.roll_step_deg)] {
            if !(step > 0.0) {
                return fail(&format!("steer_sweep.{name}"), "must be positive");
            }
        }
        let c = &self.capability;
        if !(c.delta_range_deg > 0.0 && c.roll_scan_max_deg > 0.0) {
            return fail("capability", "ranges must be positive");
        }
        if c.arm_joints.is_empty() || c.arm_joints.iter().any(|j| *j == 0 || *j > 6) {
            return fail("capability.arm_joints", "joints are numbered 1..=6");
        }
        let p = &self.plan;
        if p.poses.as_ref().is_some_and(|v| v.is_empty()) {
            return fail("plan.poses", "at least one pose is required");
        }
        if p.initial_deg.as_ref().is_some_and(|v| v.len() != 7) {
            return fail("plan.initial_deg", "needs roll plus six joints");
        }
        if !(p.hold_s >= 0.0) || p.transition_s.is_some_and(|t| !(t > 0.0)) {
            return fail("plan", "hold must be nonnegative and transitions positive");
        }
        let m = &self.simulate;
        if m.trials == 0 {
            return fail("simulate.trials", "must be at least 1");
        }
        if !(m.k_p > 0.0 && m.k_d > 0.0 && m.arm_k_p > 0.0 && m.kappa >= 0.0 && m.epsilon_b_deg > 0.0) {
            return fail("simulate", "gains must be positive");
        }
        if !(m.duration_s > 0.0 && m.dt_s > 0.0 && m.control_period_s >= m.dt_s) {
            return fail("simulate", "need duration > 0 and 0 < dt <= control period");
        }
        if m.quantized_imu_deg.is_some_and(|q| !(q > 0.0)) || !(m.noise_deg >= 0.0) {
            return fail("simulate", "sensor settings must be positive");
        }
        for (i, d) in m.disturbances.iter().enumerate() {
            if !(d.duration_s > 0.0) {
                return fail(&format!("simulate.disturbances[{i}].duration_s"), "must be positive");
            }
        }
        let d = &self.compare_dp;
        if d.samples.iter().any(|n| *n < 2) {
            return fail("compare_dp.samples", "every sample count must be at least 2");
        }
        if !(d.move_deg > 0.0 && d.duration_factor > 1.0) {
            return fail("compare_dp", "need a positive move and duration_factor > 1");
        }
        Ok(())
    }
}
