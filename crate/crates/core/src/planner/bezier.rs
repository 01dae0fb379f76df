//! Per-coordinate Bézier trajectories over normalized progress `s`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// `control_points` holds one row per coordinate and `degree + 1` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierTrajectory {
    pub control_points: DMatrix<f64>,
    pub t0: f64,
    pub tf: f64,
}

/// Boundary state of a segment end.
#[derive(Debug, Clone, PartialEq)]
pub struct EndState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
}

impl EndState {
    pub fn rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qd: DVector::zeros(n), qdd: DVector::zeros(n) }
    }
}

/// Number of control points fixed at each end by position, rate and acceleration.
pub const PINNED_PER_END: usize = 3;

impl BezierTrajectory {
    pub fn new(control_points: DMatrix<f64>, t0: f64, tf: f64) -> Result<Self> {
        if !(tf > t0) {
            return Err(Error::InvalidParameter(format!("tf ({tf}) must exceed t0 ({t0})")));
        }
        if control_points.ncols() < 2 {
            return Err(Error::InvalidParameter("degree must be at least 1".into()));
        }
        Ok(Self { control_points, t0, tf })
    }

    /// Constant trajectory at `q`.
    pub fn constant(q: &DVector<f64>, degree: usize, t0: f64, tf: f64) -> Result<Self> {
        let cp = DMatrix::from_fn(q.len(), degree + 1, |i, _| q[i]);
        Self::new(cp, t0, tf)
    }

    /// Trajectory whose first and last three control points reproduce the end
    /// states exactly; `free` supplies the interior columns (`degree - 5` of them).
    pub fn pinned(start: &EndState, end: &EndState, free: &DMatrix<f64>, t0: f64, tf: f64) -> Result<Self> {
        let dof = start.q.len();
        let degree = free.ncols() + 2 * PINNED_PER_END - 1;
        if free.nrows() != dof || end.q.len() != dof {
            return Err(Error::DimensionMismatch { expected: dof, got: free.nrows() });
        }
        let t = tf - t0;
        let nf = degree as f64;
        let k1 = t / nf;
        let k2 = t * t / (nf * (nf - 1.0));
        let mut cp = DMatrix::zeros(dof, degree + 1);
        for i in 0..dof {
            let p0 = start.q[i];
            let p1 = p0 + start.qd[i] * k1;
            let p2 = 2.0 * p1 - p0 + start.qdd[i] * k2;
            let pn = end.q[i];
            let pn1 = pn - end.qd[i] * k1;
            let pn2 = 2.0 * pn1 - pn + end.qdd[i] * k2;
            cp[(i, 0)] = p0;
            cp[(i, 1)] = p1;
            cp[(i, 2)] = p2;
            cp[(i, degree)] = pn;
            cp[(i, degree - 1)] = pn1;
            cp[(i, degree - 2)] = pn2;
            for j in 0..free.ncols() {
                cp[(i, 3 + j)] = free[(i, j)];
            }
        }
        Self::new(cp, t0, tf)
    }

    pub fn degree(&self) -> usize {
        self.control_points.ncols() - 1
    }

    pub fn dof(&self) -> usize {
        self.control_points.nrows()
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    /// Interior control points between the pinned ends.
    pub fn free_points(&self) -> DMatrix<f64> {
        let n = self.degree();
        self.control_points.columns(PINNED_PER_END, n + 1 - 2 * PINNED_PER_END).into_owned()
    }

    /// Position, rate and acceleration at normalized progress `s`.
    pub fn eval_s(&self, s: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = self.degree();
        let t = self.duration();
        let dof = self.dof();
        let mut q = DVector::zeros(dof);
        let mut qd = DVector::zeros(dof);
        let mut qdd = DVector::zeros(dof);
        let mut buf = vec![0.0; n + 1];
        for i in 0..dof {
            let row = self.control_points.row(i);
            buf.iter_mut().zip(row.iter()).for_each(|(b, p)| *b = *p);
            q[i] = de_casteljau(&mut buf, s);
            if n >= 1 {
                for j in 0..n {
                    buf[j] = n as f64 * (row[j + 1] - row[j]);
                }
                let d1: Vec<f64> = buf[..n].to_vec();
                qd[i] = de_casteljau(&mut buf[..n], s) / t;
                if n >= 2 {
                    for j in 0..n - 1 {
                        buf[j] = (n - 1) as f64 * (d1[j + 1] - d1[j]);
                    }
                    qdd[i] = de_casteljau(&mut buf[..n - 1], s) / (t * t);
                }
            }
        }
        (q, qd, qdd)
    }

    pub fn progress(&self, t: f64) -> f64 {
        (t - self.t0) / self.duration()
    }
}

fn de_casteljau(p: &mut [f64], s: f64) -> f64 {
    let n = p.len();
    for r in 1..n {
        for j in 0..n - r {
            p[j] = (1.0 - s) * p[j] + s * p[j + 1];
        }
    }
    p[0]
}

/// Evaluates `(q, qd, qdd)` at time `t` within the trajectory window.
pub fn bezier_eval(traj: &BezierTrajectory, t: f64) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let slack = 1e-12 * (1.0 + traj.tf.abs());
    if !(t >= traj.t0 - slack && t <= traj.tf + slack) {
        return Err(Error::OutOfRange { t, t0: traj.t0, tf: traj.tf });
    }
    Ok(traj.eval_s(traj.progress(t).clamp(0.0, 1.0)))
}

/// Bernstein basis value `b_j(s)` for degree `n`.
pub fn bernstein(n: usize, j: usize, s: f64) -> f64 {
    let mut c = 1.0;
    for k in 0..j {
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    c * (1.0 - s).powi((n - j) as i32) * s.powi(j as i32)
}
