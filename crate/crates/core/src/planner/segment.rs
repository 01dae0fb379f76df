//! Bézier segment optimization between two balanced configurations.

use super::bezier::{bernstein, BezierTrajectory, EndState, PINNED_PER_END};
use super::{gravity_torque_cap, MotionLimits, PlannerSettings, PlannerWeights};
use crate::bem;
use crate::dynamics::{gravity_jacobian, gravity_roll_torque, rnea};
use crate::error::{Error, Result};
use crate::model::RobotModel;
use crate::optim::{minimize, Problem};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub trajectory: BezierTrajectory,
    pub cost: f64,
    /// Largest constraint value over the collocation samples (<= 0 when met).
    pub max_constraint: f64,
    /// Largest constraint value over the finer audit grid.
    pub audit_constraint: f64,
    pub iterations: usize,
    pub feasible_starts: usize,
    pub wall_time: f64,
}

/// Basis values at one progress sample.
struct Basis {
    b0: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

fn basis(n: usize, s: f64) -> Basis {
    let nf = n as f64;
    let low = |m: usize, j: isize| if j < 0 || j as usize > m { 0.0 } else { bernstein(m, j as usize, s) };
    let b0 = (0..=n).map(|j| bernstein(n, j, s)).collect();
    let b1 = (0..=n)
        .map(|j| {
            let j = j as isize;
            nf * (low(n - 1, j - 1) - low(n - 1, j))
        })
        .collect();
    let b2 = (0..=n)
        .map(|j| {
            if n < 2 {
                return 0.0;
            }
            let j = j as isize;
            nf * (nf - 1.0) * (low(n - 2, j - 2) - 2.0 * low(n - 2, j - 1) + low(n - 2, j))
        })
        .collect();
    Basis { b0, b1, b2 }
}

fn grid(n: usize, count: usize) -> Vec<Basis> {
    (0..count).map(|k| basis(n, k as f64 / (count - 1) as f64)).collect()
}

struct Sample {
    q: DVector<f64>,
    qd: DVector<f64>,
    qdd: DVector<f64>,
}

struct SegmentProblem<'a> {
    model: &'a RobotModel<f64>,
    weights: &'a PlannerWeights,
    limits: &'a MotionLimits,
    base: DMatrix<f64>,
    n_free: usize,
    duration: f64,
    q_ref: DVector<f64>,
    gb_ref: f64,
    rate_bound: f64,
    cap: f64,
    balance: bool,
    samples: Vec<Basis>,
    /// Constraint-only points added where the audit grid found violations.
    extra: Vec<Basis>,
}

impl SegmentProblem<'_> {
    fn constraint_points(&self) -> impl Iterator<Item = &Basis> {
        self.samples.iter().chain(&self.extra)
    }

    fn dof(&self) -> usize {
        self.base.nrows()
    }

    fn control_points(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut cp = self.base.clone();
        for i in 0..self.dof() {
            for j in 0..self.n_free {
                cp[(i, PINNED_PER_END + j)] = x[i * self.n_free + j];
            }
        }
        cp
    }

    fn sample(&self, cp: &DMatrix<f64>, b: &Basis) -> Sample {
        let t = self.duration;
        let dot = |w: &[f64], i: usize| cp.row(i).iter().zip(w).map(|(p, c)| p * c).sum::<f64>();
        let d = self.dof();
        Sample {
            q: DVector::from_fn(d, |i, _| dot(&b.b0, i)),
            qd: DVector::from_fn(d, |i, _| dot(&b.b1, i) / t),
            qdd: DVector::from_fn(d, |i, _| dot(&b.b2, i) / (t * t)),
        }
    }

    fn rows_per_sample(&self) -> usize {
        let d = self.dof();
        (if self.balance { 4 } else { 0 }) + 2 * (d - 1) + 6 * d
    }

    fn sample_constraints(&self, s: &Sample, out: &mut Vec<f64>) {
        let m = self.model;
        let d = self.dof();
        if self.balance {
            let rate = gravity_jacobian(m, &s.q).dot(&s.qd);
            let gb = gravity_roll_torque(m, &s.q);
            out.extend([rate - self.rate_bound, -rate - self.rate_bound, gb - self.cap, -gb - self.cap]);
        }
        let tau = rnea(m, &s.q, &s.qd, &s.qdd, true);
        for i in 1..d {
            let lim = self.limits.tau_theta_max[i - 1];
            out.extend([tau[i] - lim, -tau[i] - lim]);
        }
        let (lb, ub) = (&m.bounds.lower, &m.bounds.upper);
        for i in 0..d {
            out.extend([s.q[i] - ub[i], lb[i] - s.q[i]]);
        }
        let (v, a) = (self.limits.q_rate_max, self.limits.q_acc_max);
        for i in 0..d {
            out.extend([s.qd[i] - v, -s.qd[i] - v]);
        }
        for i in 0..d {
            out.extend([s.qdd[i] - a, -s.qdd[i] - a]);
        }
    }

    fn constraints_on(&self, x: &DVector<f64>, grid: &[Basis]) -> Vec<f64> {
        let cp = self.control_points(x);
        let mut out = Vec::with_capacity(grid.len() * self.rows_per_sample());
        for b in grid {
            self.sample_constraints(&self.sample(&cp, b), &mut out);
        }
        out
    }
}

impl Problem for SegmentProblem<'_> {
    fn dim(&self) -> usize {
        self.dof() * self.n_free
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        let cp = self.control_points(x);
        let w = self.weights;
        let mut acc = 0.0;
        for b in &self.samples {
            let s = self.sample(&cp, b);
            let e = &s.q - &self.q_ref;
            acc += e.component_mul(&e).dot(&w.w1) + s.qd.component_mul(&s.qd).dot(&w.w2);
            if self.balance {
                acc += (gravity_roll_torque(self.model, &s.q) - self.gb_ref).powi(2);
            }
        }
        self.duration * acc / self.samples.len() as f64
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let cp = self.control_points(x);
        let w = self.weights;
        let nf = self.n_free;
        let scale = self.duration / self.samples.len() as f64;
        let mut g = DVector::zeros(self.dim());
        for b in &self.samples {
            let s = self.sample(&cp, b);
            let e = &s.q - &self.q_ref;
            let mut dq = e.component_mul(&w.w1) * 2.0;
            let dqd = s.qd.component_mul(&w.w2) * 2.0;
            if self.balance {
                let dg = gravity_roll_torque(self.model, &s.q) - self.gb_ref;
                dq += gravity_jacobian(self.model, &s.q) * (2.0 * dg);
            }
            for i in 0..self.dof() {
                for j in 0..nf {
                    let c = PINNED_PER_END + j;
                    g[i * nf + j] += scale * (dq[i] * b.b0[c] + dqd[i] * b.b1[c] / self.duration);
                }
            }
        }
        g
    }

    fn n_ineq(&self) -> usize {
        (self.samples.len() + self.extra.len()) * self.rows_per_sample()
    }

    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        let cp = self.control_points(x);
        let mut out = Vec::with_capacity(self.n_ineq());
        for b in self.constraint_points() {
            self.sample_constraints(&self.sample(&cp, b), &mut out);
        }
        DVector::from_vec(out)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let cp = self.control_points(x);
        let d = self.dof();
        let nf = self.n_free;
        let t = self.duration;
        let rows = self.rows_per_sample();
        let mut jac = DMatrix::zeros(self.n_ineq(), self.dim());
        for (k, b) in self.constraint_points().enumerate() {
            let s = self.sample(&cp, b);
            let mut r = k * rows;
            // coefficient of x[i, j] in (q_i, qd_i, qdd_i)
            let coef = |j: usize| {
                let c = PINNED_PER_END + j;
                (b.b0[c], b.b1[c] / t, b.b2[c] / (t * t))
            };
            if self.balance {
                let jg = gravity_jacobian(self.model, &s.q);
                let n = s.qd.amax();
                let hq = if n > 0.0 {
                    let h = 1e-6 / n;
                    (gravity_jacobian(self.model, &(&s.q + &s.qd * h))
                        - gravity_jacobian(self.model, &(&s.q - &s.qd * h)))
                        / (2.0 * h)
                } else {
                    DVector::zeros(d)
                };
                for i in 0..d {
                    for j in 0..nf {
                        let (c0, c1, _) = coef(j);
                        let dr = hq[i] * c0 + jg[i] * c1;
                        let dg = jg[i] * c0;
                        let col = i * nf + j;
                        jac[(r, col)] = dr;
                        jac[(r + 1, col)] = -dr;
                        jac[(r + 2, col)] = dg;
                        jac[(r + 3, col)] = -dg;
                    }
                }
                r += 4;
            }
            for i in 0..d {
                for j in 0..nf {
                    let (c0, c1, c2) = coef(j);
                    let scale = c0.abs().max(c1.abs()).max(c2.abs());
                    if scale == 0.0 {
                        continue;
                    }
                    let h = 1e-6 / scale;
                    let mut qp = s.q.clone();
                    let mut vp = s.qd.clone();
                    let mut ap = s.qdd.clone();
                    qp[i] += h * c0;
                    vp[i] += h * c1;
                    ap[i] += h * c2;
                    let tp = rnea(self.model, &qp, &vp, &ap, true);
                    qp[i] -= 2.0 * h * c0;
                    vp[i] -= 2.0 * h * c1;
                    ap[i] -= 2.0 * h * c2;
                    let tm = rnea(self.model, &qp, &vp, &ap, true);
                    let col = i * nf + j;
                    for a in 1..d {
                        let dt = (tp[a] - tm[a]) / (2.0 * h);
                        jac[(r + 2 * (a - 1), col)] = dt;
                        jac[(r + 2 * (a - 1) + 1, col)] = -dt;
                    }
                }
            }
            r += 2 * (d - 1);
            for (block, pick) in [(0usize, 0usize), (1, 1), (2, 2)] {
                for i in 0..d {
                    for j in 0..nf {
                        let (c0, c1, c2) = coef(j);
                        let c = [c0, c1, c2][pick];
                        let col = i * nf + j;
                        let row = r + block * 2 * d + 2 * i;
                        jac[(row, col)] = c;
                        jac[(row + 1, col)] = -c;
                    }
                }
            }
        }
        jac
    }
}

/// Rest-to-rest segment between two configurations.
#[allow(clippy::too_many_arguments)]
pub fn plan_segment(
    model: &RobotModel<f64>,
    q_start: &DVector<f64>,
    q_end: &DVector<f64>,
    t0: f64,
    tf: f64,
    weights: &PlannerWeights,
    limits: &MotionLimits,
    settings: &PlannerSettings,
) -> Result<SegmentPlan> {
    let start = EndState::rest(q_start.clone());
    let end = EndState::rest(q_end.clone());
    plan_segment_between(model, &start, &end, t0, tf, weights, limits, settings)
}

/// Segment with explicit boundary rates and accelerations. The tracking and
/// balance terms are referenced to the start configuration.
#[allow(clippy::too_many_arguments)]
pub fn plan_segment_between(
    model: &RobotModel<f64>,
    start: &EndState,
    end: &EndState,
    t0: f64,
    tf: f64,
    weights: &PlannerWeights,
    limits: &MotionLimits,
    settings: &PlannerSettings,
) -> Result<SegmentPlan> {
    let clock = Instant::now();
    let d = model.dof();
    for v in [&start.q, &start.qd, &start.qdd, &end.q, &end.qd, &end.qdd] {
        model.check_dim(v)?;
    }
    weights.validate(d)?;
    limits.validate(model.n_joints())?;
    settings.validate()?;
    if !(tf > t0) {
        return Err(Error::InvalidParameter(format!("tf ({tf}) must exceed t0 ({t0})")));
    }
    let duration = tf - t0;
    let balance = settings.balance_priority;
    let rate_bound = limits.gravity_rate_bound(model);
    if balance {
        for (name, q) in [("start", &start.q), ("end", &end.q)] {
            match bem::equilibrium_steering(model, q, limits.steering.delta_max) {
                Some(p) if p.residual <= 1e-6 => {}
                _ => return Err(Error::InfeasibleSegment(format!("{name} configuration is off the balance manifold"))),
            }
        }
    }
    for i in 0..d {
        let dist = (end.q[i] - start.q[i]).abs();
        if dist > limits.q_rate_max * duration {
            return Err(Error::InfeasibleSegment(format!(
                "coordinate {i} travels {dist:.4} rad but the rate bound allows {:.4} in {duration} s",
                limits.q_rate_max * duration
            )));
        }
    }
    if balance {
        let dg = (gravity_roll_torque(model, &end.q) - gravity_roll_torque(model, &start.q)).abs();
        if dg > rate_bound * duration {
            return Err(Error::InfeasibleSegment(format!(
                "gravity torque changes by {dg:.4} N m but the steering rate allows {:.4}",
                rate_bound * duration
            )));
        }
    }

    let n = settings.degree;
    let n_free = n + 1 - 2 * PINNED_PER_END;
    let zero_free = DMatrix::zeros(d, n_free);
    let base = BezierTrajectory::pinned(start, end, &zero_free, t0, tf)?.control_points;
    let mut problem = SegmentProblem {
        model,
        weights,
        limits,
        base,
        n_free,
        duration,
        q_ref: start.q.clone(),
        gb_ref: gravity_roll_torque(model, &start.q),
        rate_bound,
        cap: gravity_torque_cap(weights, limits),
        balance,
        samples: grid(n, settings.samples),
        extra: Vec::new(),
    };
    let audit_count = settings.samples * settings.audit_factor;
    let audit = grid(n, audit_count);

    let mut guess = DVector::zeros(problem.dim());
    for i in 0..d {
        let lo = problem.base[(i, PINNED_PER_END - 1)];
        let hi = problem.base[(i, n + 1 - PINNED_PER_END)];
        for j in 0..n_free {
            let w = (j + 1) as f64 / (n_free + 1) as f64;
            guess[i * n_free + j] = lo + (hi - lo) * w;
        }
    }
    let is_rest = [&start.qd, &start.qdd, &end.qd, &end.qdd].iter().all(|v| v.amax() == 0.0);
    if is_rest && start.q == end.q {
        let trajectory = BezierTrajectory::constant(&start.q, n, t0, tf)?;
        let max_constraint = fold_max(&problem.constraints_on(&guess, &problem.samples));
        let audit_constraint = fold_max(&problem.constraints_on(&guess, &audit));
        return Ok(SegmentPlan {
            cost: problem.objective(&guess),
            trajectory,
            max_constraint,
            audit_constraint,
            iterations: 0,
            feasible_starts: 1,
            wall_time: clock.elapsed().as_secs_f64(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let noise = Normal::new(0.0, settings.perturbation).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut starts = vec![guess.clone()];
    for _ in 1..settings.segment_starts {
        starts.push(guess.map(|v| v + noise.sample(&mut rng)));
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut feasible = 0;
    let mut iterations = 0;
    for s in &starts {
        let r = minimize(&problem, s, &settings.sqp);
        iterations += r.iterations;
        if !r.feasible(settings.sqp.tol_feas) || !r.objective.is_finite() {
            continue;
        }
        feasible += 1;
        if best.as_ref().is_none_or(|(c, _)| r.objective < *c) {
            best = Some((r.objective, r.x));
        }
    }
    let (mut cost, mut x) = best.ok_or_else(|| Error::SolverFailure("no feasible segment from any start".into()))?;
    for _ in 0..REFINE_ROUNDS {
        let peaks = audit_peaks(&problem, &x, &audit);
        if peaks.is_empty() {
            break;
        }
        problem.extra.extend(peaks.iter().map(|&k| basis(n, k as f64 / (audit_count - 1) as f64)));
        let r = minimize(&problem, &x, &settings.sqp);
        iterations += r.iterations;
        if !r.feasible(settings.sqp.tol_feas) || !r.objective.is_finite() {
            break;
        }
        (cost, x) = (r.objective, r.x);
    }
    let max_constraint = fold_max(&problem.constraints_on(&x, &problem.samples));
    let audit_constraint = fold_max(&problem.constraints_on(&x, &audit));
    if audit_constraint > 1e-6 {
        log::warn!("segment violates limits between samples by {audit_constraint:.3e}");
    }
    let free = DMatrix::from_fn(d, n_free, |i, j| x[i * n_free + j]);
    Ok(SegmentPlan {
        trajectory: BezierTrajectory::pinned(start, end, &free, t0, tf)?,
        cost,
        max_constraint,
        audit_constraint,
        iterations,
        feasible_starts: feasible,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Re-solves allowed after adding audit points as constraint points.
const REFINE_ROUNDS: usize = 3;
/// Audit violation that triggers refinement.
const AUDIT_TOL: f64 = 1e-7;

/// Audit indices at local maxima of the worst constraint value above [`AUDIT_TOL`].
fn audit_peaks(problem: &SegmentProblem<'_>, x: &DVector<f64>, audit: &[Basis]) -> Vec<usize> {
    let rows = problem.rows_per_sample();
    let worst: Vec<f64> = problem.constraints_on(x, audit).chunks(rows).map(fold_max).collect();
    (0..worst.len())
        .filter(|&k| {
            worst[k] > AUDIT_TOL
                && (k == 0 || worst[k] >= worst[k - 1])
                && (k + 1 == worst.len() || worst[k] > worst[k + 1])
        })
        .collect()
}

fn fold_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
