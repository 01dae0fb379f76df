//! Small dense SQP solver: damped BFGS Hessian model, elastic QP subproblem
//! solved by a primal-dual interior point method, L1 merit line search.

use nalgebra::{DMatrix, DVector};

/// Nonlinear program `min f(x)` s.t. `c_eq(x) = 0`, `c_in(x) <= 0`, `lb <= x <= ub`.
pub trait Problem {
    fn dim(&self) -> usize;

    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.dim();
        (DVector::from_element(n, f64::NEG_INFINITY), DVector::from_element(n, f64::INFINITY))
    }

    fn objective(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|y| self.objective(y), x)
    }

    fn n_eq(&self) -> usize {
        0
    }

    fn n_ineq(&self) -> usize {
        0
    }

    /// Equality residuals followed by inequality values.
    fn constraints(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian(|y| self.constraints(y), x, self.n_eq() + self.n_ineq())
    }
}

pub fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>) -> DVector<f64> {
    let mut y = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let h = 1e-6 * (1.0 + x[i].abs());
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        (fp - fm) / (2.0 * h)
    })
}

pub fn fd_jacobian<F: Fn(&DVector<f64>) -> DVector<f64>>(f: F, x: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(m, x.len());
    let mut y = x.clone();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpOptions {
    pub tol_opt: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self { tol_opt: 1e-6, tol_feas: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqpStatus {
    Converged,
    SmallStep,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct SqpResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub violation: f64,
    pub iterations: usize,
    pub status: SqpStatus,
}

impl SqpResult {
    pub fn feasible(&self, tol: f64) -> bool {
        self.violation <= tol
    }
}

fn violation(c: &DVector<f64>, n_eq: usize, x: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> f64 {
    let mut v = 0.0f64;
    for (i, ci) in c.iter().enumerate() {
        v = v.max(if i < n_eq { ci.abs() } else { ci.max(0.0) });
    }
    for i in 0..x.len() {
        v = v.max(lb[i] - x[i]).max(x[i] - ub[i]);
    }
    v
}

fn l1_violation(c: &DVector<f64>, n_eq: usize) -> f64 {
    c.iter()
        .enumerate()
        .map(|(i, ci)| if i < n_eq { ci.abs() } else { ci.max(0.0) })
        .sum()
}

/// Solves the problem from `x0` (projected into the bounds first).
pub fn minimize<P: Problem + ?Sized>(problem: &P, x0: &DVector<f64>, opts: &SqpOptions) -> SqpResult {
    let n = problem.dim();
    let n_eq = problem.n_eq();
    let m = n_eq + problem.n_ineq();
    let (lb, ub) = problem.bounds();
    let mut x = DVector::from_fn(n, |i, _| x0[i].clamp(lb[i], ub[i]));
    let mut f = problem.objective(&x);
    let mut g = problem.gradient(&x);
    let mut c = problem.constraints(&x);
    let mut a = if m > 0 { problem.jacobian(&x) } else { DMatrix::zeros(0, n) };
    let mut b = DMatrix::<f64>::identity(n, n);
    let mut mu = 10.0f64;
    let mut status = SqpStatus::MaxIterations;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let rho = (100.0 * mu).max(1e4);
        let qp = solve_qp_subproblem(&b, &g, &a, &c, n_eq, &(&lb - &x), &(&ub - &x), rho);
        let p = qp.step;
        let lam = qp.multipliers;

        // first-order optimality at the current point with the QP multipliers
        let mut grad_l = &g + a.transpose() * &lam;
        grad_l += &qp.bound_multipliers;
        let viol = violation(&c, n_eq, &x, &lb, &ub);
        let scale = 1.0f64.max(g.amax());
        if grad_l.amax() <= opts.tol_opt * scale && viol <= opts.tol_feas && p.amax() <= 1e-6 * (1.0 + x.amax()) {
            status = SqpStatus::Converged;
            break;
        }

        mu = mu.max(1.1 * lam.amax() + 1.0);
        let merit = |f: f64, c: &DVector<f64>| f + mu * l1_violation(c, n_eq);
        let phi0 = merit(f, &c);
        let dphi = g.dot(&p) - mu * l1_violation(&c, n_eq);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let xt = DVector::from_fn(n, |i, _| (x[i] + alpha * p[i]).clamp(lb[i], ub[i]));
            let ft = problem.objective(&xt);
            let ct = problem.constraints(&xt);
            if merit(ft, &ct) <= phi0 + 1e-4 * alpha * dphi.min(0.0) || (alpha * p.amax() < 1e-14) {
                accepted = Some((xt, ft, ct));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, cn)) = accepted else {
            status = SqpStatus::LineSearchFailed;
            break;
        };
        let gn = problem.gradient(&xn);
        let an = if m > 0 { problem.jacobian(&xn) } else { DMatrix::zeros(0, n) };
        let s = &xn - &x;
        let y = (&gn + an.transpose() * &lam) - (&g + a.transpose() * &lam);
        damped_bfgs(&mut b, &s, &y);
        let step_norm = s.amax();
        x = xn;
        f = fn_;
        g = gn;
        c = cn;
        a = an;
        if step_norm <= 1e-12 * (1.0 + x.amax()) {
            status = SqpStatus::SmallStep;
            break;
        }
    }
    let viol = violation(&c, n_eq, &x, &lb, &ub);
    SqpResult { x, objective: f, violation: viol, iterations, status }
}

/// Powell-damped BFGS update keeping `b` positive definite.
fn damped_bfgs(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 1e-300 {
        return;
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    if sr <= 1e-300 {
        return;
    }
    *b -= &bs * bs.transpose() / sbs;
    *b += &r * r.transpose() / sr;
    // symmetrize against drift
    let bt = b.transpose();
    *b = (&*b + bt) * 0.5;
}

struct QpStep {
    step: DVector<f64>,
    multipliers: DVector<f64>,
    bound_multipliers: DVector<f64>,
}

/// Elastic QP: min 1/2 p'Bp + g'p + rho t, with linearized constraints
/// relaxed by a single slack `t >= 0` and box bounds on `p`.
fn solve_qp_subproblem(
    b: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    n_eq: usize,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    rho: f64,
) -> QpStep {
    let n = g.len();
    let m = c.len();
    let nz = n + 1;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();
    for i in 0..m {
        let ai = a.row(i).transpose();
        let mut r = DVector::zeros(nz);
        r.rows_mut(0, n).copy_from(&ai);
        r[n] = -1.0;
        rows.push((r, -c[i]));
        tags.push(Tag::Upper(i));
        if i < n_eq {
            let mut r = DVector::zeros(nz);
            r.rows_mut(0, n).copy_from(&(-ai));
            r[n] = -1.0;
            rows.push((r, c[i]));
            tags.push(Tag::Lower(i));
        }
    }
    for i in 0..n {
        if hi[i].is_finite() {
            let mut r = DVector::zeros(nz);
            r[i] = 1.0;
            rows.push((r, hi[i]));
            tags.push(Tag::BoundUpper(i));
        }
        if lo[i].is_finite() {
            let mut r = DVector::zeros(nz);
            r[i] = -1.0;
            rows.push((r, -lo[i]));
            tags.push(Tag::BoundLower(i));
        }
    }
    let mut r = DVector::zeros(nz);
    r[n] = -1.0;
    rows.push((r, 0.0));
    tags.push(Tag::Slack);

    let mut gm = DMatrix::zeros(rows.len(), nz);
    let mut h = DVector::zeros(rows.len());
    for (k, (r, v)) in rows.iter().enumerate() {
        gm.set_row(k, &r.transpose());
        h[k] = *v;
    }
    let mut hess = DMatrix::zeros(nz, nz);
    hess.view_mut((0, 0), (n, n)).copy_from(b);
    hess[(n, n)] = 1e-8;
    let mut f = DVector::zeros(nz);
    f.rows_mut(0, n).copy_from(g);
    f[n] = rho;

    let sol = interior_point_qp(&hess, &f, &gm, &h);
    let mut mult = DVector::zeros(m);
    let mut bound = DVector::zeros(n);
    for (k, tag) in tags.iter().enumerate() {
        match *tag {
            Tag::Upper(i) => mult[i] += sol.lambda[k],
            Tag::Lower(i) => mult[i] -= sol.lambda[k],
            Tag::BoundUpper(i) => bound[i] += sol.lambda[k],
            Tag::BoundLower(i) => bound[i] -= sol.lambda[k],
            Tag::Slack => {}
        }
    }
    QpStep { step: sol.z.rows(0, n).into_owned(), multipliers: mult, bound_multipliers: bound }
}

#[derive(Clone, Copy)]
enum Tag {
    Upper(usize),
    Lower(usize),
    BoundUpper(usize),
    BoundLower(usize),
    Slack,
}

pub struct QpSolution {
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub iterations: usize,
}

/// Mehrotra predictor-corrector for `min 1/2 z'Hz + f'z` s.t. `Gz <= h`.
pub fn interior_point_qp(hess: &DMatrix<f64>, f: &DVector<f64>, gm: &DMatrix<f64>, h: &DVector<f64>) -> QpSolution {
    let nz = f.len();
    let mc = h.len();
    let mut z = DVector::zeros(nz);
    let mut s = DVector::from_fn(mc, |i, _| (h[i] - gm.row(i).dot(&z.transpose())).max(1.0));
    let mut lam = DVector::from_element(mc, 1.0);
    let gt = gm.transpose();
    let scale = 1.0 + f.amax().max(h.amax());
    let mut iterations = 0;
    for it in 0..100 {
        iterations = it + 1;
        let rd = hess * &z + f + &gt * &lam;
        let rp = gm * &z + &s - h;
        let mu = s.dot(&lam) / mc as f64;
        if rd.amax() <= 1e-10 * scale && rp.amax() <= 1e-10 * scale && mu <= 1e-12 * scale {
            break;
        }
        let w = DVector::from_fn(mc, |i, _| lam[i] / s[i]);
        let mut k = hess.clone();
        for i in 0..mc {
            let gi = gm.row(i);
            if gi.iter().all(|v| *v == 0.0) {
                continue;
            }
            k += gi.transpose() * gi * w[i];
        }
        let chol = match k.clone().cholesky() {
            Some(c) => c,
            None => {
                let mut kr = k;
                for i in 0..nz {
                    kr[(i, i)] += 1e-9 * (1.0 + kr[(i, i)].abs());
                }
                match kr.cholesky() {
                    Some(c) => c,
                    None => break,
                }
            }
        };
        let solve = |rc: &DVector<f64>| {
            // rhs = -rd - G' (W rp - S^-1 rc)
            let t = DVector::from_fn(mc, |i, _| w[i] * rp[i] - rc[i] / s[i]);
            let dz = chol.solve(&(-&rd - &gt * &t));
            let gdz = gm * &dz;
            let dl = DVector::from_fn(mc, |i, _| w[i] * (gdz[i] + rp[i]) - rc[i] / s[i]);
            let ds = -&rp - gdz;
            (dz, ds, dl)
        };
        let rc_aff = s.component_mul(&lam);
        let (_, ds_a, dl_a) = solve(&rc_aff);
        let a_aff = step_to_boundary(&s, &ds_a, 1.0).min(step_to_boundary(&lam, &dl_a, 1.0));
        let mu_aff = (&s + &ds_a * a_aff).dot(&(&lam + &dl_a * a_aff)) / mc as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc = DVector::from_fn(mc, |i, _| s[i] * lam[i] + ds_a[i] * dl_a[i] - sigma * mu);
        let (dz, ds, dl) = solve(&rc);
        let alpha = step_to_boundary(&s, &ds, 0.995).min(step_to_boundary(&lam, &dl, 0.995));
        z += &dz * alpha;
        s += &ds * alpha;
        lam += &dl * alpha;
        for i in 0..mc {
            s[i] = s[i].max(1e-300);
            lam[i] = lam[i].max(1e-300);
        }
    }
    QpSolution { z, lambda: lam, iterations }
}

fn step_to_boundary(v: &DVector<f64>, dv: &DVector<f64>, frac: f64) -> f64 {
    let mut a = 1.0f64;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-frac * v[i] / dv[i]);
        }
    }
    a
}
