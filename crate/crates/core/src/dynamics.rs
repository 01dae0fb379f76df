//! Coupled platform/arm dynamics `D(q) qdd + C(q, qd) qd + G(q) = tau`.
//!
//! The platform is treated as the first body of a serial chain: a revolute
//! joint about the contact line carrying mass `m_b` at `G` with inertia
//! `diag(I_b, 0, 0)`. The arm hangs off it through the mount transform.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::Result;
use crate::model::{forward_kinematics, forward_kinematics_unchecked, world_point_jacobian, Kinematics, RobotModel};
use crate::scalar::Real;

/// Mass, Coriolis and gravity terms at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsMatrices<T: Real> {
    pub d: DMatrix<T>,
    pub c: DMatrix<T>,
    pub g: DVector<T>,
}

impl<T: Real> DynamicsMatrices<T> {
    pub fn n_joints(&self) -> usize {
        self.g.len() - 1
    }
    pub fn d_bb(&self) -> T {
        self.d[(0, 0)]
    }
    pub fn d_btheta(&self) -> DVector<T> {
        self.d.view((0, 1), (1, self.n_joints())).transpose().column(0).into_owned()
    }
    pub fn d_thetab(&self) -> DVector<T> {
        self.d.view((1, 0), (self.n_joints(), 1)).into_owned().column(0).into_owned()
    }
    pub fn d_thetatheta(&self) -> DMatrix<T> {
        let n = self.n_joints();
        self.d.view((1, 1), (n, n)).into_owned()
    }
    /// First row of `C`.
    pub fn c_b(&self) -> DVector<T> {
        self.c.row(0).transpose()
    }
    pub fn c_theta(&self) -> DMatrix<T> {
        let n = self.n_joints();
        self.c.view((1, 0), (n, n + 1)).into_owned()
    }
    pub fn g_b(&self) -> T {
        self.g[0]
    }
    pub fn g_theta(&self) -> DVector<T> {
        self.g.rows(1, self.n_joints()).into_owned()
    }
}

/// Kinetic and potential energy split per body.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown<T: Real> {
    pub platform_kinetic: T,
    pub link_kinetic: Vec<T>,
    pub platform_potential: T,
    pub link_potential: Vec<T>,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn kinetic(&self) -> T {
        self.link_kinetic.iter().fold(self.platform_kinetic, |a, &b| a + b)
    }
    pub fn potential(&self) -> T {
        self.link_potential.iter().fold(self.platform_potential, |a, &b| a + b)
    }
    pub fn total(&self) -> T {
        self.kinetic() + self.potential()
    }
}

fn height_shift<T: Real>(model: &RobotModel<T>, delta: T, phi_b: T) -> T {
    model.height_shift.as_ref().map_or(T::zero(), |f| f(delta, phi_b))
}

/// Energies from the link-center twists: arm twists come from the
/// `F_0` Jacobians and are carried into the inertial frame together with the
/// platform roll rate.
pub fn energies<T: Real>(model: &RobotModel<T>, q: &DVector<T>, qdot: &DVector<T>) -> Result<EnergyBreakdown<T>> {
    energies_steered(model, q, qdot, T::zero())
}

/// [`energies`] with an explicit steering increment for the height-shift hook.
pub fn energies_steered<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    qdot: &DVector<T>,
    delta: T,
) -> Result<EnergyBreakdown<T>> {
    model.check_dim(q)?;
    model.check_dim(qdot)?;
    let n = model.n_joints();
    let kin = forward_kinematics(model, q)?;
    let half = T::lit(0.5);
    let g = model.bike.gravity;
    let omega_b = Vector3::new(qdot[0], T::zero(), T::zero());
    let v_g = omega_b.cross(&kin.platform_com);
    let platform_kinetic =
        half * model.bike.roll_inertia * qdot[0] * qdot[0] + half * model.bike.mass * v_g.norm_squared();
    let platform_potential =
        model.bike.mass * g * (kin.platform_com.z + height_shift(model, delta, q[0]));

    let base_rot = kin.world[0].rotation;
    let theta_dot = qdot.rows(1, n).into_owned();
    let mut link_kinetic = Vec::with_capacity(n);
    let mut link_potential = Vec::with_capacity(n);
    for (i, link) in model.links.iter().enumerate() {
        let jac = crate::model::link_jacobian_from(&kin, i + 1, n);
        let twist0 = &jac * &theta_dot;
        let v0 = Vector3::new(twist0[0], twist0[1], twist0[2]);
        let w0 = Vector3::new(twist0[3], twist0[4], twist0[5]);
        let p = kin.com_world[i];
        let v = omega_b.cross(&p) + base_rot * v0;
        let w = omega_b + base_rot * w0;
        let r = kin.world[i + 1].rotation.to_rotation_matrix();
        let inertia = r.matrix() * link.inertia * r.matrix().transpose();
        link_kinetic.push(half * link.mass * v.norm_squared() + half * w.dot(&(inertia * w)));
        link_potential.push(link.mass * g * p.z);
    }
    Ok(EnergyBreakdown { platform_kinetic, link_kinetic, platform_potential, link_potential })
}

struct Body<T: Real> {
    mass: T,
    /// mass center in the inertial frame
    com: Vector3<T>,
    /// inertia about the mass center, inertial axes
    inertia: Matrix3<T>,
}

fn bodies<T: Real>(model: &RobotModel<T>, kin: &Kinematics<T>) -> Vec<Body<T>> {
    let mut out = Vec::with_capacity(model.dof());
    let r = kin.roll.to_rotation_matrix();
    let ib = Matrix3::from_diagonal(&Vector3::new(model.bike.roll_inertia, T::zero(), T::zero()));
    out.push(Body {
        mass: model.bike.mass,
        com: kin.platform_com,
        inertia: r.matrix() * ib * r.matrix().transpose(),
    });
    for (i, link) in model.links.iter().enumerate() {
        let r = kin.world[i + 1].rotation.to_rotation_matrix();
        out.push(Body {
            mass: link.mass,
            com: kin.com_world[i],
            inertia: r.matrix() * link.inertia * r.matrix().transpose(),
        });
    }
    out
}

/// Inertia matrix assembled from body Jacobians.
pub fn mass_matrix<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> Result<DMatrix<T>> {
    model.check_dim(q)?;
    Ok(mass_matrix_unchecked(model, q))
}

pub(crate) fn mass_matrix_unchecked<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> DMatrix<T> {
    let dof = model.dof();
    let kin = forward_kinematics_unchecked(model, q);
    let mut d = DMatrix::zeros(dof, dof);
    for (i, body) in bodies(model, &kin).iter().enumerate() {
        let jac = world_point_jacobian(&kin, i, &body.com, dof);
        let jv = jac.rows(0, 3);
        let jw = jac.rows(3, 3);
        d += jv.transpose() * jv * body.mass;
        let iw = DMatrix::from_iterator(3, 3, body.inertia.iter().copied());
        d += jw.transpose() * iw * jw;
    }
    // symmetrize round-off
    let dt = d.transpose();
    (d + dt) * T::lit(0.5)
}

/// Partial derivatives `dD/dq_i` by central differences.
fn mass_matrix_partials<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> Vec<DMatrix<T>> {
    let h = T::fd_step();
    let two_h = h + h;
    (0..model.dof())
        .map(|i| {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            (mass_matrix_unchecked(model, &qp) - mass_matrix_unchecked(model, &qm)) / two_h
        })
        .collect()
}

/// Coriolis matrix from Christoffel symbols of the numerically
/// differentiated inertia matrix, so that `Ddot - 2C` is skew-symmetric.
pub fn coriolis_matrix<T: Real>(model: &RobotModel<T>, q: &DVector<T>, qdot: &DVector<T>) -> Result<DMatrix<T>> {
    model.check_dim(q)?;
    model.check_dim(qdot)?;
    let partials = mass_matrix_partials(model, q);
    Ok(christoffel(&partials, qdot))
}

fn christoffel<T: Real>(partials: &[DMatrix<T>], qdot: &DVector<T>) -> DMatrix<T> {
    let dof = qdot.len();
    let half = T::lit(0.5);
    DMatrix::from_fn(dof, dof, |k, j| {
        let mut acc = T::zero();
        for (i, dd) in partials.iter().enumerate() {
            let c = dd[(k, j)] + partials[j][(k, i)] - partials[k][(i, j)];
            acc += half * c * qdot[i];
        }
        acc
    })
}

/// Gravity torque vector `G = dU/dq`, computed from the body Jacobians.
pub fn gravity_vector<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> Result<DVector<T>> {
    model.check_dim(q)?;
    Ok(gravity_vector_unchecked(model, q, T::zero()))
}

pub(crate) fn gravity_vector_unchecked<T: Real>(model: &RobotModel<T>, q: &DVector<T>, delta: T) -> DVector<T> {
    let dof = model.dof();
    let kin = forward_kinematics_unchecked(model, q);
    let g = model.bike.gravity;
    let mut out = DVector::zeros(dof);
    for (i, body) in bodies(model, &kin).iter().enumerate() {
        let jac = world_point_jacobian(&kin, i, &body.com, dof);
        for j in 0..dof {
            out[j] += body.mass * g * jac[(2, j)];
        }
    }
    if model.height_shift.is_some() {
        let h = T::fd_step();
        let dh = (height_shift(model, delta, q[0] + h) - height_shift(model, delta, q[0] - h)) / (h + h);
        out[0] += model.bike.mass * g * dh;
    }
    out
}

/// Total gravitational roll torque `G_b(q)`.
///
/// The roll derivative of a point's height is its lateral coordinate, so
/// `G_b = g * sum(m_k * y_k)` over all mass centers.
pub fn gravity_roll_torque<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> T {
    let kin = forward_kinematics_unchecked(model, q);
    let g = model.bike.gravity;
    let mut acc = model.bike.mass * kin.platform_com.y;
    for (link, c) in model.links.iter().zip(kin.com_world.iter()) {
        acc += link.mass * c.y;
    }
    let mut gb = g * acc;
    if model.height_shift.is_some() {
        let h = T::fd_step();
        let dh = (height_shift(model, T::zero(), q[0] + h) - height_shift(model, T::zero(), q[0] - h)) / (h + h);
        gb += model.bike.mass * g * dh;
    }
    gb
}

/// Row vector `J_G = dG_b/dq` by central differences.
pub fn gravity_gradient<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> DVector<T> {
    let h = T::fd_step();
    DVector::from_fn(model.dof(), |i, _| {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        (gravity_roll_torque(model, &qp) - gravity_roll_torque(model, &qm)) / (h + h)
    })
}

/// `J_G` from the mass-center Jacobians. Falls back to differences when a
/// height shift is attached.
pub fn gravity_jacobian<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> DVector<T> {
    if model.height_shift.is_some() {
        return gravity_gradient(model, q);
    }
    let kin = forward_kinematics_unchecked(model, q);
    let g = model.bike.gravity;
    let mut out = DVector::zeros(model.dof());
    // roll about +x: d(y)/d(phi) = -z
    let mut acc = -model.bike.mass * kin.platform_com.z;
    for (link, c) in model.links.iter().zip(kin.com_world.iter()) {
        acc -= link.mass * c.z;
    }
    out[0] = g * acc;
    for j in 1..model.dof() {
        let frame = &kin.world[j - 1];
        let z = frame.rotation * Vector3::z();
        let o = frame.translation.vector;
        let mut acc = T::zero();
        for (link, c) in model.links.iter().zip(kin.com_world.iter()).skip(j - 1) {
            acc += link.mass * z.cross(&(c - o)).y;
        }
        out[j] = g * acc;
    }
    out
}

/// `J_G qdot`.
pub fn gravity_rate<T: Real>(model: &RobotModel<T>, q: &DVector<T>, qdot: &DVector<T>) -> T {
    gravity_jacobian(model, q).dot(qdot)
}

/// Full matrices at one state.
pub fn dynamics_matrices<T: Real>(model: &RobotModel<T>, q: &DVector<T>, qdot: &DVector<T>) -> Result<DynamicsMatrices<T>> {
    model.check_dim(q)?;
    model.check_dim(qdot)?;
    Ok(DynamicsMatrices {
        d: mass_matrix_unchecked(model, q),
        c: christoffel(&mass_matrix_partials(model, q), qdot),
        g: gravity_vector_unchecked(model, q, T::zero()),
    })
}

/// Recursive Newton-Euler inverse dynamics: returns `D qdd + C qd + G`.
pub fn inverse_dynamics<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    qdot: &DVector<T>,
    qddot: &DVector<T>,
) -> Result<DVector<T>> {
    model.check_dim(q)?;
    model.check_dim(qdot)?;
    model.check_dim(qddot)?;
    Ok(rnea(model, q, qdot, qddot, true))
}

/// Newton-Euler recursion in inertial coordinates. With `gravity = false`
/// the gravity contribution is left out.
pub(crate) fn rnea<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    qdot: &DVector<T>,
    qddot: &DVector<T>,
    gravity: bool,
) -> DVector<T> {
    let dof = model.dof();
    let kin = forward_kinematics_unchecked(model, q);
    let bodies = bodies(model, &kin);
    // joint k: axis and origin, inertial frame
    let mut axes = Vec::with_capacity(dof);
    let mut origins = Vec::with_capacity(dof);
    axes.push(Vector3::x());
    origins.push(Vector3::zeros());
    for j in 1..dof {
        let f = &kin.world[j - 1];
        axes.push(f.rotation * Vector3::z());
        origins.push(f.translation.vector);
    }

    let mut w = Vector3::zeros();
    let mut wd = Vector3::zeros();
    let mut a_origin = if gravity {
        Vector3::new(T::zero(), T::zero(), model.bike.gravity)
    } else {
        Vector3::zeros()
    };
    let mut prev_origin = Vector3::zeros();
    let mut force = Vec::with_capacity(dof);
    let mut moment = Vec::with_capacity(dof);
    for k in 0..dof {
        let o = origins[k];
        let r = o - prev_origin;
        a_origin += wd.cross(&r) + w.cross(&w.cross(&r));
        let z = axes[k];
        let w_new = w + z * qdot[k];
        wd = wd + z * qddot[k] + w.cross(&(z * qdot[k]));
        w = w_new;
        let b = &bodies[k];
        let rc = b.com - o;
        let a_c = a_origin + wd.cross(&rc) + w.cross(&w.cross(&rc));
        let f = a_c * b.mass;
        let n = b.inertia * wd + w.cross(&(b.inertia * w)) + rc.cross(&f);
        force.push(f);
        moment.push(n);
        prev_origin = o;
    }
    let mut tau = DVector::zeros(dof);
    let mut f_next = Vector3::zeros();
    let mut n_next = Vector3::zeros();
    for k in (0..dof).rev() {
        let f = force[k] + f_next;
        let lever = if k + 1 < dof { origins[k + 1] - origins[k] } else { Vector3::zeros() };
        let n = moment[k] + n_next + lever.cross(&f_next);
        tau[k] = axes[k].dot(&n);
        f_next = f;
        n_next = n;
    }
    tau
}

/// Forward dynamics `qdd = D^-1 (tau - C qd - G)`.
pub fn forward_dynamics<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
    qdot: &DVector<T>,
    tau: &DVector<T>,
) -> Option<DVector<T>> {
    let bias = rnea(model, q, qdot, &DVector::zeros(model.dof()), true);
    let d = mass_matrix_unchecked(model, q);
    d.cholesky().map(|c| c.solve(&(tau - bias)))
}
