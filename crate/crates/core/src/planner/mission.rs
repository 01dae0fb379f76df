//! Multi-pose mission: inverse kinematics per pose, then one segment per
//! consecutive pair.

use super::bezier::{bezier_eval, BezierTrajectory};
use super::bpik::{bpik, BpikRequest, BpikSolution};
use super::segment::{plan_segment, SegmentPlan};
use super::{MotionLimits, PlannerSettings, PlannerWeights};
use crate::dynamics::gravity_roll_torque;
use crate::error::{Error, Result};
use crate::model::{Pose, RobotModel};
use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq)]
pub struct MissionTiming {
    pub t_start: f64,
    /// Dwell at each pose (s).
    pub hold: f64,
    /// Fixed transition duration; chosen from the limits when `None`.
    pub transition: Option<f64>,
    /// Configuration before the first pose. Without it the mission starts at
    /// the first pose.
    pub initial: Option<DVector<f64>>,
}

impl Default for MissionTiming {
    fn default() -> Self {
        Self { t_start: 0.0, hold: 15.0, transition: None, initial: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Transition { segment: usize },
    Hold { pose: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub kind: PhaseKind,
    pub t0: f64,
    pub tf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub poses: Vec<Pose<f64>>,
    pub q_star: Vec<DVector<f64>>,
    pub ik: Vec<BpikSolution>,
    /// Whether pose `k` needed the global search after the local one.
    pub global_resolve: Vec<bool>,
    pub segments: Vec<SegmentPlan>,
    pub phases: Vec<Phase>,
    pub start: DVector<f64>,
}

impl PlanResult {
    /// A plan that rests at `q` for `duration` seconds; no poses or segments.
    pub fn hold(q: DVector<f64>, duration: f64) -> Self {
        Self {
            poses: Vec::new(),
            q_star: vec![q.clone()],
            ik: Vec::new(),
            global_resolve: Vec::new(),
            segments: Vec::new(),
            phases: vec![Phase { kind: PhaseKind::Hold { pose: 0 }, t0: 0.0, tf: duration }],
            start: q,
        }
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &BezierTrajectory> {
        self.segments.iter().map(|s| &s.trajectory)
    }

    pub fn resolve_count(&self) -> usize {
        self.global_resolve.iter().filter(|b| **b).count()
    }

    pub fn t_start(&self) -> f64 {
        self.phases.first().map_or(0.0, |p| p.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.phases.last().map_or(0.0, |p| p.tf)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.cost).collect()
    }

    pub fn phase_at(&self, t: f64) -> Option<&Phase> {
        self.phases.iter().find(|p| t >= p.t0 && t < p.tf).or_else(|| self.phases.last().filter(|p| t >= p.tf))
    }

    /// Reference `(q, qd, qdd)`; held at the ends outside the plan window.
    pub fn reference(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = self.start.len();
        let rest = |q: &DVector<f64>| (q.clone(), DVector::zeros(n), DVector::zeros(n));
        match self.phase_at(t) {
            None => rest(&self.start),
            Some(p) => match p.kind {
                PhaseKind::Hold { pose } => rest(&self.q_star[pose]),
                PhaseKind::Transition { segment } => {
                    let tr = &self.segments[segment].trajectory;
                    bezier_eval(tr, t.clamp(tr.t0, tr.tf)).expect("clamped into the window")
                }
            },
        }
    }
}

/// Transition time that leaves slack on the rate, acceleration and gravity
/// rate bounds for a rest-to-rest move.
pub fn default_transition(model: &RobotModel<f64>, a: &DVector<f64>, b: &DVector<f64>, limits: &MotionLimits) -> f64 {
    let dist = (b - a).amax();
    let dg = (gravity_roll_torque(model, b) - gravity_roll_torque(model, a)).abs();
    let rate = limits.gravity_rate_bound(model);
    [2.0, 3.0 * dist / limits.q_rate_max, (12.0 * dist / limits.q_acc_max).sqrt(), 3.0 * dg / rate]
        .into_iter()
        .fold(0.0, f64::max)
}

fn with_seed(settings: &PlannerSettings, salt: u64) -> PlannerSettings {
    PlannerSettings { seed: settings.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt), ..settings.clone() }
}

/// Plans the whole pose sequence: local-workspace inverse kinematics first,
/// a global re-solve when the residual reaches the tolerance, then segments.
pub fn plan_mission(
    model: &RobotModel<f64>,
    poses: &[Pose<f64>],
    timing: &MissionTiming,
    weights: &PlannerWeights,
    limits: &MotionLimits,
    settings: &PlannerSettings,
) -> Result<PlanResult> {
    if poses.is_empty() {
        return Err(Error::InvalidParameter("at least one pose is required".into()));
    }
    if !(timing.hold >= 0.0) || timing.transition.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("hold must be nonnegative and transitions positive".into()));
    }
    let dof = model.dof();
    if let Some(q) = &timing.initial {
        model.check_dim(q)?;
    }

    let mut q_star: Vec<DVector<f64>> = Vec::with_capacity(poses.len());
    let mut ik = Vec::with_capacity(poses.len());
    let mut global_resolve = Vec::with_capacity(poses.len());
    for (k, target) in poses.iter().enumerate() {
        let s = with_seed(settings, k as u64);
        if k == 0 {
            let prev = DVector::zeros(dof);
            let guess = timing.initial.clone().unwrap_or_else(|| model.home_configuration());
            let req = BpikRequest { target, prev: &prev, prev_gb: 0.0, local_roll: None, guess: Some(&guess) };
            let sol = bpik(model, &req, weights, limits, &s)?;
            q_star.push(sol.q.clone());
            ik.push(sol);
            global_resolve.push(false);
            continue;
        }
        let prev = q_star[k - 1].clone();
        let prev_gb = gravity_roll_torque(model, &prev);
        let local = BpikRequest { target, prev: &prev, prev_gb, local_roll: Some(prev[0]), guess: None };
        let local_sol = bpik(model, &local, weights, limits, &s);
        let sol = match local_sol {
            Ok(sol) if sol.residual < weights.epsilon_pose => {
                global_resolve.push(false);
                sol
            }
            _ => {
                global_resolve.push(true);
                let req = BpikRequest { local_roll: None, ..local };
                bpik(model, &req, weights, limits, &s)?
            }
        };
        q_star.push(sol.q.clone());
        ik.push(sol);
    }

    let start = timing.initial.clone().unwrap_or_else(|| q_star[0].clone());
    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    if let Some(q0) = &timing.initial {
        pairs.push((q0.clone(), q_star[0].clone()));
    }
    for k in 1..q_star.len() {
        pairs.push((q_star[k - 1].clone(), q_star[k].clone()));
    }

    let mut segments = Vec::with_capacity(pairs.len());
    let mut phases = Vec::new();
    let mut t = timing.t_start;
    let first_transition_pose = if timing.initial.is_some() { 0 } else { 1 };
    for k in 0..poses.len() {
        if k >= first_transition_pose {
            let idx = segments.len();
            let (a, b) = &pairs[idx];
            let dur = timing.transition.unwrap_or_else(|| default_transition(model, a, b, limits));
            let s = with_seed(settings, 1000 + idx as u64);
            let seg = plan_segment(model, a, b, t, t + dur, weights, limits, &s)
                .map_err(|e| Error::Segment { index: idx, source: Box::new(e) })?;
            phases.push(Phase { kind: PhaseKind::Transition { segment: idx }, t0: t, tf: t + dur });
            segments.push(seg);
            t += dur;
        }
        phases.push(Phase { kind: PhaseKind::Hold { pose: k }, t0: t, tf: t + timing.hold });
        t += timing.hold;
    }
    Ok(PlanResult { poses: poses.to_vec(), q_star, ik, global_resolve, segments, phases, start })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::end_effector_pose;

    fn setup() -> (RobotModel<f64>, PlannerWeights, MotionLimits, PlannerSettings) {
        let model = RobotModel::prototype();
        let weights = PlannerWeights::prototype(model.dof());
        let limits = MotionLimits::prototype(&model);
        let settings = PlannerSettings { ik_starts: 2, segment_starts: 1, samples: 20, ..Default::default() };
        (model, weights, limits, settings)
    }

    #[test]
    fn empty_missions_are_rejected() {
        let (model, weights, limits, settings) = setup();
        let r = plan_mission(&model, &[], &MissionTiming::default(), &weights, &limits, &settings);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn timeline_is_contiguous() {
        let (model, weights, limits, settings) = setup();
        let home = model.home_configuration();
        let mut moved = home.clone();
        moved[1] += 0.15;
        moved[2] -= 0.1;
        let target = end_effector_pose(&model, &moved).unwrap();
        let timing = MissionTiming { t_start: 1.0, hold: 2.0, transition: Some(3.0), initial: Some(home.clone()) };
        let plan = plan_mission(&model, &[target], &timing, &weights, &limits, &settings).unwrap();
        assert_eq!(plan.segments.len(), 1);
        assert_eq!(plan.phases.len(), 2);
        assert_eq!(plan.t_start(), 1.0);
        assert_eq!(plan.t_end(), 6.0);
        for w in plan.phases.windows(2) {
            assert_eq!(w[0].tf, w[1].t0);
        }
        assert_eq!(plan.reference(0.0).0, home);
        assert!((plan.reference(1.0).0 - &home).amax() < 1e-12);
        assert!((plan.reference(4.0).0 - &plan.q_star[0]).amax() < 1e-9);
        assert_eq!(plan.reference(100.0).0, plan.q_star[0]);
        assert!(plan.reference(2.5).1.amax() > 0.0);
    }

    #[test]
    fn hold_plans_rest() {
        let q = DVector::from_element(7, 0.1);
        let plan = PlanResult::hold(q.clone(), 5.0);
        let (r, rd, rdd) = plan.reference(2.0);
        assert_eq!(r, q);
        assert_eq!(rd.amax() + rdd.amax(), 0.0);
        assert_eq!(plan.phase_at(7.0).map(|p| p.kind), Some(PhaseKind::Hold { pose: 0 }));
        assert_eq!(plan.resolve_count(), 0);
    }

    #[test]
    fn default_transition_grows_with_distance() {
        let (model, _, limits, _) = setup();
        let a = model.home_configuration();
        assert_eq!(default_transition(&model, &a, &a, &limits), 2.0);
        let mut b = a.clone();
        b[3] += 2.0;
        let t = default_transition(&model, &a, &b, &limits);
        assert!(t >= 3.0 * 2.0 / limits.q_rate_max - 1e-12);
    }
}
