//! Physical parameters, configuration space, DH forward kinematics and
//! geometric Jacobians of the bikebot with its onboard manipulator.
//!
//! Frame conventions used throughout the crate:
//!
//! * Inertial frame: origin on the ground at the midpoint of the two wheel
//!   contact points, `x` along the contact line (front), `z` up.
//! * The platform rolls by `phi_b` about the inertial `x` axis (the contact
//!   line). Positive roll follows the right-hand rule about `+x`.
//! * The body mass center `G` sits at `(0, 0, h_G)` in the rolled body frame.
//! * The arm base frame `F_0` is placed in the body frame by `mount`; link
//!   frames follow the standard DH convention `A = Rz(theta) Rx(alpha)`.

use std::sync::Arc;

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3,
};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};

/// Platform parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BikebotParams<T: Real> {
    /// Platform mass `m_b` (kg).
    pub mass: T,
    /// Roll moment of inertia about the mass-center roll axis (kg m^2).
    pub roll_inertia: T,
    /// Height of the mass center above ground (m).
    pub com_height: T,
    pub wheelbase: T,
    /// Caster angle (rad).
    pub caster: T,
    pub wheel_radius: T,
    pub gravity: T,
}

impl<T: Real> BikebotParams<T> {
    /// Platform values of the desk-scale prototype.
    pub fn prototype() -> Self {
        Self {
            mass: T::lit(46.9),
            roll_inertia: T::lit(3.2),
            com_height: T::lit(0.53),
            wheelbase: T::lit(1.2),
            caster: T::lit(20f64.to_radians()),
            wheel_radius: T::lit(0.3),
            gravity: T::lit(9.8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("roll_inertia", self.roll_inertia),
            ("com_height", self.com_height),
            ("wheelbase", self.wheelbase),
            ("caster", self.caster),
            ("wheel_radius", self.wheel_radius),
            ("gravity", self.gravity),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        if !(self.caster < T::frac_pi_2()) {
            return Err(Error::InvalidParameter("caster must be < 90 deg".into()));
        }
        Ok(())
    }
}

/// One revolute link in DH form together with its inertial data.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams<T: Real> {
    pub theta_offset: T,
    pub d: T,
    pub a: T,
    pub alpha: T,
    pub mass: T,
    /// Mass center in the link's own frame `F_i`.
    pub com: Vector3<T>,
    /// Inertia about the mass center, expressed in `F_i`.
    pub inertia: Matrix3<T>,
}

impl<T: Real> LinkParams<T> {
    /// Link with the mass center placed at the midpoint of its DH offset,
    /// i.e. halfway between the origins of `F_{i-1}` and `F_i`.
    pub fn with_midpoint_com(d: T, a: T, alpha: T, mass: T, inertia_diag: Vector3<T>) -> Self {
        let half = T::lit(0.5);
        // origin of F_{i-1} seen from F_i is -(a, d sin(alpha), d cos(alpha))
        let com = -Vector3::new(a, d * alpha.sin(), d * alpha.cos()) * half;
        Self {
            theta_offset: T::zero(),
            d,
            a,
            alpha,
            mass,
            com,
            inertia: Matrix3::from_diagonal(&inertia_diag),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > T::zero()) {
            return Err(Error::InvalidParameter("link mass must be > 0".into()));
        }
        let i = &self.inertia;
        if (i - i.transpose()).amax() > T::lit(1e-12) {
            return Err(Error::InvalidParameter("link inertia must be symmetric".into()));
        }
        let eig = i.symmetric_eigenvalues();
        if eig.iter().any(|&e| e < T::lit(-1e-12)) {
            return Err(Error::InvalidParameter("link inertia must be PSD".into()));
        }
        Ok(())
    }
}

/// Box bounds on the generalized coordinates (the admissible set `Q`).
#[derive(Debug, Clone, PartialEq)]
pub struct JointBounds<T: Real> {
    pub lower: DVector<T>,
    pub upper: DVector<T>,
}

impl<T: Real> JointBounds<T> {
    pub fn contains(&self, q: &DVector<T>) -> bool {
        q.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn clamp(&self, q: &DVector<T>) -> DVector<T> {
        DVector::from_fn(q.len(), |i, _| {
            q[i].clamp(self.lower[i], self.upper[i])
        })
    }
}

/// Height change of `G` caused by steering, as a function of
/// `(delta, phi_b)`. Zero unless supplied.
pub type HeightShift<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// Bikebot plus manipulator.
#[derive(Clone)]
pub struct RobotModel<T: Real> {
    pub bike: BikebotParams<T>,
    pub links: Vec<LinkParams<T>>,
    /// Pose of the arm base frame `F_0` (point `S`) in the platform body frame.
    pub mount: Isometry3<T>,
    pub bounds: JointBounds<T>,
    /// Joint angles of the arm's resting posture.
    pub home: DVector<T>,
    pub height_shift: Option<HeightShift<T>>,
}

impl<T: Real> std::fmt::Debug for RobotModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RobotModel")
            .field("bike", &self.bike)
            .field("links", &self.links)
            .field("mount", &self.mount)
            .field("bounds", &self.bounds)
            .field("home", &self.home)
            .field("height_shift", &self.height_shift.is_some())
            .finish()
    }
}

/// Default arm base height above the platform mass center (m).
pub const DEFAULT_MOUNT_OFFSET: f64 = 0.1;

impl<T: Real> RobotModel<T> {
    /// Prototype platform with the six-link arm. Link mass centers sit at the
    /// midpoints of the DH offsets; the arm base is directly above `G`.
    pub fn prototype() -> Self {
        let table: [(f64, f64, f64, f64, [f64; 3]); 6] = [
            (90.0, 0.0, 0.276, 1.0, [0.0022, 0.0006, 0.0023]),
            (180.0, 0.41, 0.0, 1.5, [0.0041, 0.0255, 0.0217]),
            (90.0, 0.0, -0.01, 0.8, [0.0029, 0.0027, 0.0004]),
            (60.0, 0.0, -0.25, 0.3, [0.7085, 0.7405, 0.1782]),
            (60.0, 0.0, -0.009, 0.3, [0.8275, 0.8520, 0.1708]),
            (180.0, 0.0, 0.203, 0.6, [0.0048, 0.0048, 0.0002]),
        ];
        let links = table
            .iter()
            .map(|&(alpha, a, d, m, i)| {
                LinkParams::with_midpoint_com(
                    T::lit(d),
                    T::lit(a),
                    T::lit(alpha.to_radians()),
                    T::lit(m),
                    Vector3::new(T::lit(i[0]), T::lit(i[1]), T::lit(i[2])),
                )
            })
            .collect();
        let bike = BikebotParams::prototype();
        let home = [0.0, 180.0, 0.0, 0.0, 0.0, 0.0]
            .iter()
            .map(|d: &f64| T::lit(d.to_radians()))
            .collect::<Vec<_>>();
        Self::new(bike, links, DVector::from_vec(home))
            .expect("prototype parameters are valid")
    }

    /// Model with the default mount (directly above `G`, offset
    /// [`DEFAULT_MOUNT_OFFSET`]) and default bounds (roll within +-20 deg,
    /// joints within +-180 deg).
    pub fn new(bike: BikebotParams<T>, links: Vec<LinkParams<T>>, home: DVector<T>) -> Result<Self> {
        let n = links.len();
        let mount = Isometry3::from_parts(
            Translation3::new(T::zero(), T::zero(), bike.com_height + T::lit(DEFAULT_MOUNT_OFFSET)),
            UnitQuaternion::identity(),
        );
        let mut lower = DVector::from_element(n + 1, -T::pi());
        let mut upper = DVector::from_element(n + 1, T::pi());
        lower[0] = T::lit(-20f64.to_radians());
        upper[0] = T::lit(20f64.to_radians());
        let model = Self {
            bike,
            links,
            mount,
            bounds: JointBounds { lower, upper },
            home,
            height_shift: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.bike.validate()?;
        if self.links.is_empty() {
            return Err(Error::InvalidParameter("at least one link required".into()));
        }
        for l in &self.links {
            l.validate()?;
        }
        let r = self.mount.rotation.to_rotation_matrix();
        let m = r.matrix();
        if (m.transpose() * m - Matrix3::identity()).amax() > T::lit(1e-9)
            || (m.determinant() - T::one()).abs() > T::lit(1e-9)
        {
            return Err(Error::InvalidParameter("mount rotation not proper".into()));
        }
        let dof = self.dof();
        if self.bounds.lower.len() != dof || self.bounds.upper.len() != dof {
            return Err(Error::DimensionMismatch { expected: dof, got: self.bounds.lower.len() });
        }
        if self.home.len() != self.links.len() {
            return Err(Error::DimensionMismatch { expected: self.links.len(), got: self.home.len() });
        }
        Ok(())
    }

    /// Number of arm joints `n`.
    #[inline]
    pub fn n_joints(&self) -> usize {
        self.links.len()
    }

    /// Number of generalized coordinates `n + 1`.
    #[inline]
    pub fn dof(&self) -> usize {
        self.links.len() + 1
    }

    /// Total mass `M` of platform and arm.
    pub fn total_mass(&self) -> T {
        self.links.iter().fold(self.bike.mass, |acc, l| acc + l.mass)
    }

    /// Generalized coordinates with zero roll and the home arm posture.
    pub fn home_configuration(&self) -> DVector<T> {
        let mut q = DVector::zeros(self.dof());
        q.rows_mut(1, self.n_joints()).copy_from(&self.home);
        q
    }

    /// Position of `S` (origin of `F_0`) in the body frame.
    pub fn mount_point(&self) -> Vector3<T> {
        self.mount.translation.vector
    }

    pub fn check_dim(&self, q: &DVector<T>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch { expected: self.dof(), got: q.len() });
        }
        Ok(())
    }

    /// Copy of the model with every link mass and inertia scaled by `factor`.
    pub fn with_arm_mass_scale(&self, factor: T) -> Self {
        let mut m = self.clone();
        for l in &mut m.links {
            l.mass *= factor;
            l.inertia *= factor;
        }
        m
    }
}

/// Generalized coordinates `q = [phi_b, theta_1 .. theta_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration<T: Real>(pub DVector<T>);

impl<T: Real> Configuration<T> {
    pub fn from_parts(phi_b: T, theta: &[T]) -> Self {
        let mut v = DVector::zeros(theta.len() + 1);
        v[0] = phi_b;
        for (i, t) in theta.iter().enumerate() {
            v[i + 1] = *t;
        }
        Self(v)
    }

    pub fn roll(&self) -> T {
        self.0[0]
    }

    pub fn joints(&self) -> DVector<T> {
        self.0.rows(1, self.0.len() - 1).into_owned()
    }
}

impl<T: Real> std::ops::Deref for Configuration<T> {
    type Target = DVector<T>;
    fn deref(&self) -> &DVector<T> {
        &self.0
    }
}

/// End-effector pose in the inertial frame.
///
/// `orientation` holds Z-Y-X Euler angles `[yaw, pitch, roll]`, i.e. the
/// rotation is `Rz(yaw) Ry(pitch) Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub position: Vector3<T>,
    pub orientation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    pub fn from_isometry(iso: &Isometry3<T>) -> Self {
        let (roll, pitch, yaw) = iso.rotation.euler_angles();
        Self {
            position: iso.translation.vector,
            orientation: Vector3::new(wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll)),
        }
    }

    pub fn rotation(&self) -> Rotation3<T> {
        let o = &self.orientation;
        Rotation3::from_euler_angles(o[2], o[1], o[0])
    }

    pub fn to_isometry(&self) -> Isometry3<T> {
        Isometry3::from_parts(
            Translation3::from(self.position),
            UnitQuaternion::from_rotation_matrix(&self.rotation()),
        )
    }

    /// Six-vector `[x, y, z, yaw, pitch, roll]`.
    pub fn to_vector(&self) -> nalgebra::Vector6<T> {
        let p = &self.position;
        let o = &self.orientation;
        nalgebra::Vector6::new(p[0], p[1], p[2], o[0], o[1], o[2])
    }

    pub fn from_vector(v: &[T; 6]) -> Self {
        Self {
            position: Vector3::new(v[0], v[1], v[2]),
            orientation: Vector3::new(wrap_angle(v[3]), wrap_angle(v[4]), wrap_angle(v[5])),
        }
    }

    /// Six-vector difference `self - other` with wrapped angle components.
    pub fn difference(&self, other: &Pose<T>) -> nalgebra::Vector6<T> {
        let dp = self.position - other.position;
        let dq = self.orientation - other.orientation;
        nalgebra::Vector6::new(
            dp[0],
            dp[1],
            dp[2],
            wrap_angle(dq[0]),
            wrap_angle(dq[1]),
            wrap_angle(dq[2]),
        )
    }

    pub fn position_error(&self, other: &Pose<T>) -> T {
        (self.position - other.position).norm()
    }

    /// Geodesic angle between the two orientations (rad).
    pub fn orientation_error(&self, other: &Pose<T>) -> T {
        let r = self.rotation().transpose() * other.rotation();
        let m = r.matrix();
        let sin = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
        let cos = m.trace() - T::one();
        sin.atan2(cos)
    }
}

/// `A^{i-1}_i` for a revolute DH link at joint angle `theta`.
pub fn link_transform<T: Real>(link: &LinkParams<T>, theta: T) -> Isometry3<T> {
    let th = theta + link.theta_offset;
    let (s, c) = th.sin_cos();
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), th)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), link.alpha);
    Isometry3::from_parts(
        Translation3::new(link.a * c, link.a * s, link.d),
        UnitQuaternion::from_rotation_matrix(&rot),
    )
}

/// Rotation of the platform body frame for roll `phi_b`.
#[inline]
pub fn roll_rotation<T: Real>(phi_b: T) -> UnitQuaternion<T> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), phi_b)
}

/// All frame transforms for one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics<T: Real> {
    pub roll: UnitQuaternion<T>,
    /// `arm[i]` is `T_i`: frame `F_i` relative to `F_0` (`arm[0]` is identity).
    pub arm: Vec<Isometry3<T>>,
    /// `world[i]`: frame `F_i` relative to the inertial frame.
    pub world: Vec<Isometry3<T>>,
    /// Link mass centers in `F_0`.
    pub com_base: Vec<Vector3<T>>,
    /// Link mass centers in the inertial frame.
    pub com_world: Vec<Vector3<T>>,
    /// Platform mass center in the inertial frame.
    pub platform_com: Vector3<T>,
}

impl<T: Real> Kinematics<T> {
    pub fn end_effector(&self) -> &Isometry3<T> {
        self.world.last().expect("at least F_0")
    }

    pub fn pose(&self) -> Pose<T> {
        Pose::from_isometry(self.end_effector())
    }
}

/// Chains roll, mount and the DH links.
pub fn forward_kinematics<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> Result<Kinematics<T>> {
    model.check_dim(q)?;
    Ok(forward_kinematics_unchecked(model, q))
}

pub(crate) fn forward_kinematics_unchecked<T: Real>(
    model: &RobotModel<T>,
    q: &DVector<T>,
) -> Kinematics<T> {
    let n = model.n_joints();
    let roll = roll_rotation(q[0]);
    let base = Isometry3::from_parts(Translation3::identity(), roll) * model.mount;
    let mut arm = Vec::with_capacity(n + 1);
    let mut world = Vec::with_capacity(n + 1);
    let mut com_base = Vec::with_capacity(n);
    let mut com_world = Vec::with_capacity(n);
    let mut t = Isometry3::identity();
    arm.push(t);
    world.push(base);
    for (i, link) in model.links.iter().enumerate() {
        t *= link_transform(link, q[i + 1]);
        let c0 = t.transform_point(&link.com.into()).coords;
        com_base.push(c0);
        com_world.push(base.transform_point(&c0.into()).coords);
        arm.push(t);
        world.push(base * t);
    }
    let platform_com = roll * Vector3::new(T::zero(), T::zero(), model.bike.com_height);
    Kinematics { roll, arm, world, com_base, com_world, platform_com }
}

/// End-effector pose in the inertial frame.
pub fn end_effector_pose<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> Result<Pose<T>> {
    Ok(forward_kinematics(model, q)?.pose())
}

/// Geometric Jacobian (6 x n, rows `[v; omega]`, expressed in `F_0`) of the
/// mass center of link `i` (1-based) with respect to the joint rates.
pub fn link_jacobian<T: Real>(model: &RobotModel<T>, q: &DVector<T>, i: usize) -> Result<DMatrix<T>> {
    let n = model.n_joints();
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    let kin = forward_kinematics(model, q)?;
    Ok(link_jacobian_from(&kin, i, n))
}

pub(crate) fn link_jacobian_from<T: Real>(kin: &Kinematics<T>, i: usize, n: usize) -> DMatrix<T> {
    let mut jac = DMatrix::zeros(6, n);
    let p = kin.com_base[i - 1];
    for j in 1..=i {
        let frame = &kin.arm[j - 1];
        let z = frame.rotation * Vector3::z();
        let o = frame.translation.vector;
        let v = z.cross(&(p - o));
        jac.fixed_view_mut::<3, 1>(0, j - 1).copy_from(&v);
        jac.fixed_view_mut::<3, 1>(3, j - 1).copy_from(&z);
    }
    jac
}

/// Geometric Jacobian (6 x (n+1)) of a point rigidly attached to link `i`
/// (0 = platform), expressed in the inertial frame. Column 0 is the roll
/// axis contribution.
pub(crate) fn world_point_jacobian<T: Real>(
    kin: &Kinematics<T>,
    i: usize,
    point: &Vector3<T>,
    dof: usize,
) -> DMatrix<T> {
    let mut jac = DMatrix::zeros(6, dof);
    let x = Vector3::x();
    jac.fixed_view_mut::<3, 1>(0, 0).copy_from(&x.cross(point));
    jac.fixed_view_mut::<3, 1>(3, 0).copy_from(&x);
    for j in 1..=i {
        let frame = &kin.world[j - 1];
        let z = frame.rotation * Vector3::z();
        let o = frame.translation.vector;
        jac.fixed_view_mut::<3, 1>(0, j).copy_from(&z.cross(&(point - o)));
        jac.fixed_view_mut::<3, 1>(3, j).copy_from(&z);
    }
    jac
}

/// End-effector Jacobian `J_e` (6 x (n+1)) in the inertial frame.
pub fn system_jacobian<T: Real>(model: &RobotModel<T>, q: &DVector<T>) -> Result<DMatrix<T>> {
    let kin = forward_kinematics(model, q)?;
    let n = model.n_joints();
    let p = kin.end_effector().translation.vector;
    Ok(world_point_jacobian(&kin, n, &p, n + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bare(a: f64, d: f64, alpha: f64) -> LinkParams<f64> {
        LinkParams::with_midpoint_com(d, a, alpha, 1.0, Vector3::new(0.1, 0.1, 0.1))
    }

    #[test]
    fn identity_link() {
        let t = link_transform(&bare(0.0, 0.0, 0.0), 0.0);
        assert_relative_eq!(t.to_homogeneous(), nalgebra::Matrix4::identity(), epsilon = 1e-15);
    }

    #[test]
    fn first_prototype_link_at_zero() {
        let m = RobotModel::<f64>::prototype();
        let t = link_transform(&m.links[0], 0.0);
        assert_relative_eq!(t.translation.vector, Vector3::new(0.0, 0.0, 0.276), epsilon = 1e-15);
        let r = t.rotation.to_rotation_matrix();
        let expected = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(r.matrix(), expected.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn offset_link_quarter_turn() {
        let t = link_transform(&bare(0.41, 0.0, std::f64::consts::PI), std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(t.translation.vector, Vector3::new(0.0, 0.41, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = RobotModel::<f64>::prototype();
        let err = forward_kinematics(&m, &DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 7, got: 3 }));
        assert!(link_jacobian(&m, &DVector::zeros(7), 0).is_err());
        assert!(link_jacobian(&m, &DVector::zeros(7), 7).is_err());
    }

    #[test]
    fn straight_chain_stacks_offsets() {
        // all alpha = 0: every offset stacks along z / x of the base
        let links = vec![bare(0.2, 0.1, 0.0), bare(0.3, 0.05, 0.0)];
        let m = RobotModel::new(BikebotParams::prototype(), links, DVector::zeros(2)).unwrap();
        let kin = forward_kinematics(&m, &DVector::zeros(3)).unwrap();
        let s = m.mount_point();
        let p = kin.end_effector().translation.vector;
        assert_relative_eq!(p, s + Vector3::new(0.5, 0.0, 0.15), epsilon = 1e-14);
    }

    #[test]
    fn pose_round_trips_through_isometry() {
        let p = Pose::from_vector(&[0.1, -0.2, 0.9, 1.0, -0.4, 2.5]);
        let back = Pose::from_isometry(&p.to_isometry());
        assert_relative_eq!(back.to_vector(), p.to_vector(), epsilon = 1e-12);
    }

    #[test]
    fn orientation_error_is_the_rotation_angle() {
        let p = Pose::from_vector(&[0.0, 0.0, 0.0, 2.7695834731122995, 0.1624173201262425, 1.7325386433471595]);
        assert_eq!(p.orientation_error(&p), 0.0);
        let turned = Pose::from_isometry(&(p.to_isometry() * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.3)));
        assert_relative_eq!(p.orientation_error(&turned), 0.3, epsilon = 1e-12);
        let flipped = Pose::from_isometry(&(p.to_isometry() * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 3.0)));
        assert_relative_eq!(flipped.orientation_error(&p), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn mass_centers_default_to_midpoints() {
        let l = bare(0.41, 0.0, std::f64::consts::PI);
        assert_relative_eq!(l.com, Vector3::new(-0.205, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut b = BikebotParams::<f64>::prototype();
        b.caster = 2.0;
        assert!(b.validate().is_err());
        let mut l = bare(0.1, 0.1, 0.0);
        l.mass = 0.0;
        assert!(l.validate().is_err());
    }
}
