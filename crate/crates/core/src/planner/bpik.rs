//! Balance-prioritized inverse kinematics.

use super::{gravity_torque_cap, MotionLimits, PlannerSettings, PlannerWeights};
use crate::dynamics::{gravity_jacobian, gravity_roll_torque};
use crate::error::{Error, Result};
use crate::model::{forward_kinematics_unchecked, Pose, RobotModel};
use crate::optim::{fd_gradient, minimize, Problem};
use nalgebra::{DMatrix, DVector, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Pose residual `target - actual` in centimeters and degrees.
pub fn pose_error_vector(target: &Pose<f64>, actual: &Pose<f64>) -> Vector6<f64> {
    let d = target.difference(actual);
    let mut out = d;
    for i in 0..3 {
        out[i] = d[i] * 100.0;
        out[i + 3] = d[i + 3].to_degrees();
    }
    out
}

/// One inverse-kinematics query.
#[derive(Debug, Clone)]
pub struct BpikRequest<'a> {
    pub target: &'a Pose<f64>,
    /// Previous solution `q*_{k-1}` and its gravity torque.
    pub prev: &'a DVector<f64>,
    pub prev_gb: f64,
    /// Restricts the search to the local workspace at this roll.
    pub local_roll: Option<f64>,
    /// First start; defaults to `prev`.
    pub guess: Option<&'a DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpikSolution {
    pub q: DVector<f64>,
    pub pose: Pose<f64>,
    /// Norm of the centimeter/degree pose residual.
    pub residual: f64,
    pub position_error: f64,
    pub orientation_error: f64,
    pub g_b: f64,
    pub cost: f64,
    /// Residual below the pose tolerance.
    pub reached: bool,
    pub local: bool,
    pub feasible_starts: usize,
    pub iterations: usize,
}

struct IkProblem<'a> {
    model: &'a RobotModel<f64>,
    req: &'a BpikRequest<'a>,
    weights: &'a PlannerWeights,
    cap: f64,
    balance: bool,
}

impl IkProblem<'_> {
    fn terms(&self, q: &DVector<f64>) -> (f64, f64, f64) {
        let kin = forward_kinematics_unchecked(self.model, q);
        let g1 = pose_error_vector(self.req.target, &kin.pose()).norm_squared();
        let g2 = if self.balance {
            (gravity_roll_torque(self.model, q) - self.req.prev_gb).powi(2)
        } else {
            0.0
        };
        let e = q - self.req.prev;
        let g3 = (e.transpose() * &self.weights.p * &e)[(0, 0)];
        (g1, g2, g3)
    }
}

impl Problem for IkProblem<'_> {
    fn dim(&self) -> usize {
        self.model.dof()
    }

    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lb = self.model.bounds.lower.clone();
        let mut ub = self.model.bounds.upper.clone();
        if let Some(r) = self.req.local_roll {
            lb[0] = r;
            ub[0] = r;
        }
        (lb, ub)
    }

    fn objective(&self, q: &DVector<f64>) -> f64 {
        let (g1, g2, g3) = self.terms(q);
        let l = &self.weights.lambda;
        l[0] * g1 + l[1] * g2 + l[2] * g3
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|y| self.objective(y), q)
    }

    fn n_ineq(&self) -> usize {
        if self.balance {
            2
        } else {
            0
        }
    }

    fn constraints(&self, q: &DVector<f64>) -> DVector<f64> {
        if !self.balance {
            return DVector::zeros(0);
        }
        let gb = gravity_roll_torque(self.model, q);
        DVector::from_vec(vec![gb - self.cap, -gb - self.cap])
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        if !self.balance {
            return DMatrix::zeros(0, self.dim());
        }
        let jg = gravity_jacobian(self.model, q);
        let mut out = DMatrix::zeros(2, jg.len());
        out.row_mut(0).copy_from(&jg.transpose());
        out.row_mut(1).copy_from(&(-jg.transpose()));
        out
    }
}

/// Solves for the configuration closest to the target pose subject to the
/// balance bound, from the previous solution plus seeded perturbations.
/// Returns the lowest-cost feasible start.
pub fn bpik(
    model: &RobotModel<f64>,
    req: &BpikRequest<'_>,
    weights: &PlannerWeights,
    limits: &MotionLimits,
    settings: &PlannerSettings,
) -> Result<BpikSolution> {
    let dof = model.dof();
    model.check_dim(req.prev)?;
    weights.validate(dof)?;
    limits.validate(model.n_joints())?;
    settings.validate()?;
    let balance = settings.balance_priority;
    let problem = IkProblem { model, req, weights, cap: gravity_torque_cap(weights, limits), balance };
    let (lb, ub) = problem.bounds();

    let first = req.guess.unwrap_or(req.prev);
    model.check_dim(first)?;
    let mut base = first.clone();
    if let Some(r) = req.local_roll {
        base[0] = r;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let noise = Normal::new(0.0, settings.perturbation).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut starts = vec![base.clone()];
    for _ in 1..settings.ik_starts {
        let mut s = base.clone();
        for i in 0..dof {
            if i == 0 && req.local_roll.is_some() {
                continue;
            }
            s[i] = (s[i] + noise.sample(&mut rng)).clamp(lb[i], ub[i]);
        }
        starts.push(s);
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut feasible = 0;
    let mut iterations = 0;
    for s in &starts {
        let r = minimize(&problem, s, &settings.sqp);
        iterations += r.iterations;
        let in_bounds = (0..dof).all(|i| r.x[i] >= lb[i] - 1e-9 && r.x[i] <= ub[i] + 1e-9);
        let gb = gravity_roll_torque(model, &r.x);
        let balanced = !balance || weights.lambda[3] * gb.abs() <= limits.tau_b_max;
        if !(r.feasible(settings.sqp.tol_feas) && in_bounds && balanced && r.objective.is_finite()) {
            continue;
        }
        feasible += 1;
        if best.as_ref().is_none_or(|(c, _)| r.objective < *c) {
            best = Some((r.objective, r.x));
        }
    }
    let (cost, mut q) = best.ok_or_else(|| Error::SolverFailure("no feasible inverse-kinematics start".into()))?;
    if let Some(r) = req.local_roll {
        q[0] = r;
    }
    let pose = forward_kinematics_unchecked(model, &q).pose();
    let residual = pose_error_vector(req.target, &pose).norm();
    Ok(BpikSolution {
        position_error: req.target.position_error(&pose),
        orientation_error: req.target.orientation_error(&pose),
        g_b: gravity_roll_torque(model, &q),
        reached: residual < weights.epsilon_pose,
        local: req.local_roll.is_some(),
        feasible_starts: feasible,
        iterations,
        residual,
        cost,
        pose,
        q,
    })
}
