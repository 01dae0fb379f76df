//! Two-wheel steering geometry and the steering-induced balance torque.
//!
//! Sign convention: a positive balance torque rolls the platform toward
//! positive `phi_b`. A positive steering increment at `phi0 = 90 deg`
//! produces a negative torque, which pushes the platform toward negative roll.

use crate::error::{Error, Result};
use crate::model::BikebotParams;
use crate::scalar::Real;
use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

/// Roll magnitude beyond which the constant-radius approximation degrades.
pub const QUASI_STATIC_ROLL_DEG: f64 = 15.0;

pub(crate) fn check_roll<T: Real>(phi_b: T) {
    if phi_b.abs() > T::lit(QUASI_STATIC_ROLL_DEG.to_radians()) {
        log::warn!(
            "roll {:.2} deg outside the quasi-static steering model range",
            phi_b.as_f64().to_degrees()
        );
    }
}

/// Symmetric front/rear steering state: `phi_f = phi0 + delta`, `phi_r = -phi_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringState<T: Real> {
    pub phi0: T,
    pub delta: T,
    pub symmetric: bool,
}

impl<T: Real> SteeringState<T> {
    pub fn new(phi0: T, delta: T) -> Self {
        Self { phi0, delta, symmetric: true }
    }

    pub fn front(&self) -> T {
        self.phi0 + self.delta
    }

    pub fn rear(&self) -> T {
        if self.symmetric {
            -self.front()
        } else {
            -self.phi0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringLimits<T: Real> {
    pub delta_max: T,
    pub delta_rate_max: T,
}

impl<T: Real> SteeringLimits<T> {
    /// 15 deg increment, 20 deg/s rate.
    pub fn prototype() -> Self {
        Self {
            delta_max: T::lit(15f64.to_radians()),
            delta_rate_max: T::lit(20f64.to_radians()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_max > T::zero()) || !(self.delta_rate_max > T::zero()) {
            return Err(Error::InvalidParameter("steering limits must be positive".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, delta: T) -> T {
        delta.clamp(-self.delta_max, self.delta_max)
    }
}

/// `cos(gamma)` of the angle between wheel plane and ground.
pub fn wheel_ground_angle<T: Real>(phi: T, phi_b: T, epsilon: T) -> T {
    phi.sin() * epsilon.sin() - phi.cos() * epsilon.cos() * phi_b.sin()
}

/// Radius `r = R cos(gamma)` of the arc traced by a wheel contact point.
pub fn contact_radius<T: Real>(phi: T, phi_b: T, bike: &BikebotParams<T>) -> T {
    check_roll(phi_b);
    bike.wheel_radius * wheel_ground_angle(phi, phi_b, bike.caster)
}

/// Steering angle projected on the ground, continuous through `phi = 90 deg`.
pub fn projected_steering_angle<T: Real>(phi: T, phi_b: T, epsilon: T) -> Result<T> {
    let cb = phi_b.cos();
    if cb.abs() < T::lit(1e-12) {
        return Err(Error::Degenerate("projected steering angle at |phi_b| = 90 deg".into()));
    }
    Ok((epsilon.cos() * phi.sin()).atan2(cb * phi.cos()))
}

/// `d phi_g / d phi` at `phi`.
fn projection_slope<T: Real>(phi: T, phi_b: T, epsilon: T) -> T {
    let (c, cb) = (epsilon.cos(), phi_b.cos());
    let (s, co) = (phi.sin(), phi.cos());
    c * cb / (cb * cb * co * co + c * c * s * s)
}

/// Contact point displacement of the front wheel relative to its `delta = 0`
/// position, in the ground frame (x along the contact line, y lateral).
fn contact_shift<T: Real>(delta: T, phi0: T, phi_b: T, bike: &BikebotParams<T>) -> Result<Vector2<T>> {
    let r = contact_radius(phi0, phi_b, bike);
    let g0 = projected_steering_angle(phi0, phi_b, bike.caster)?;
    let g = g0 + projection_slope(phi0, phi_b, bike.caster) * delta;
    let rho = r * delta.cos();
    Ok(Vector2::new(rho * g.sin() - r * g0.sin(), rho * g.cos() - r * g0.cos()))
}

/// Balance torque for mass `mass` at initial steering angle `phi0`.
pub fn balance_torque_with_mass<T: Real>(
    delta: T,
    phi0: T,
    phi_b: T,
    mass: T,
    bike: &BikebotParams<T>,
) -> Result<T> {
    let s = contact_shift(delta, phi0, phi_b, bike)?;
    Ok(mass * bike.gravity * s.y)
}

/// Steering-induced balance torque of the platform (`m_b`) at a general
/// initial steering angle.
///
/// The contact radius is held at its `phi0` value and scaled by `cos(delta)`;
/// the projected angle is linearized in `delta`. At `phi0 = 90 deg` and zero
/// roll this coincides with [`balance_torque_90`].
pub fn balance_torque<T: Real>(delta: T, phi0: T, phi_b: T, bike: &BikebotParams<T>) -> Result<T> {
    balance_torque_with_mass(delta, phi0, phi_b, bike.mass, bike)
}

/// Closed-form torque at `phi0 = 90 deg`: `-m g R sin(eps) cos(delta) sin(delta / cos(eps))`.
pub fn balance_torque_90<T: Real>(delta: T, mass: T, bike: &BikebotParams<T>) -> T {
    let eps = bike.caster;
    -mass * bike.gravity * bike.wheel_radius * eps.sin() * delta.cos() * (delta / eps.cos()).sin()
}

/// Torque sensitivity `|d tau_b / d delta|` at zero increment and zero roll (N m/rad).
pub fn steering_sensitivity<T: Real>(phi0: T, bike: &BikebotParams<T>) -> T {
    let eps = bike.caster;
    let r = contact_radius(phi0, T::zero(), bike);
    let c2 = eps.cos() * eps.cos();
    let (s, co) = (phi0.sin(), phi0.cos());
    // c^2 tan (tan^2 + 1) / (c^2 tan^2 + 1)^(3/2), multiplied through by |cos|^3
    let den = (c2 * s * s + co * co).powf(T::lit(1.5));
    (bike.mass * bike.gravity * r * c2 * s / den).abs()
}

/// Sensitivity in N m/deg.
pub fn steering_sensitivity_per_deg<T: Real>(phi0: T, bike: &BikebotParams<T>) -> T {
    steering_sensitivity(phi0, bike) * T::pi() / T::lit(180.0)
}

/// `h(delta) = d tau_b90 / d delta` for mass `mass`.
pub fn torque_rate_h<T: Real>(delta: T, mass: T, bike: &BikebotParams<T>) -> T {
    let eps = bike.caster;
    let c = eps.cos();
    let dg = delta / c;
    let d = -delta.sin() * dg.sin() + delta.cos() * dg.cos() / c;
    -mass * bike.gravity * bike.wheel_radius * eps.sin() * d
}

/// `sup |h(delta)|` over `|delta| <= delta_max`, with the maximizing increment.
pub fn h_max<T: Real>(mass: T, delta_max: T, bike: &BikebotParams<T>) -> (T, T) {
    let f = |d: T| torque_rate_h(d, mass, bike).abs();
    maximize_even(f, delta_max)
}

/// Largest `|tau_b90|` over `|delta| <= delta_max`, with the maximizing increment.
pub fn max_balance_torque_90<T: Real>(mass: T, delta_max: T, bike: &BikebotParams<T>) -> (T, T) {
    maximize_even(|d| balance_torque_90(d, mass, bike).abs(), delta_max)
}

/// Maximizes an even function on `[-a, a]` by a dense grid on `[0, a]`
/// followed by golden-section refinement around the best cell.
pub(crate) fn maximize_even<T: Real, F: Fn(T) -> T>(f: F, a: T) -> (T, T) {
    const GRID: usize = 2000;
    let step = a / T::from_usize_lossy(GRID);
    let mut best = (f(T::zero()), T::zero());
    let mut best_i = 0;
    for i in 1..=GRID {
        let x = step * T::from_usize_lossy(i);
        let v = f(x);
        if v > best.0 {
            best = (v, x);
            best_i = i;
        }
    }
    let lo = step * T::from_usize_lossy(best_i.saturating_sub(1));
    let hi = (step * T::from_usize_lossy(best_i + 1)).min(a);
    let x = golden_max(&f, lo, hi, T::lit(1e-10));
    let v = f(x);
    if v > best.0 {
        (v, x)
    } else {
        best
    }
}

fn golden_max<T: Real, F: Fn(T) -> T>(f: &F, mut lo: T, mut hi: T, tol: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_9);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    (lo + hi) * T::lit(0.5)
}

/// Signed distance from `p` to the line through `a` and `b`; positive on the
/// left of `a -> b` measured as the line's offset relative to `p`.
pub(crate) fn line_offset<T: Real>(p: &Point2<T>, a: &Point2<T>, b: &Point2<T>) -> T {
    let dir = b - a;
    let n = Vector2::new(-dir.y, dir.x) / dir.norm();
    let n = if n.y < T::zero() { -n } else { n };
    (a - p).dot(&n)
}

/// Balance torque when only the front wheel steers (platform mass `m_b`).
///
/// The rear contact stays at `C_2`; the front contact moves along its arc as
/// in the two-wheel model with `phi0 = 90 deg`. The lever is the distance from
/// the ground projection of `G` (midway between the contacts) to `C'_1 C_2`.
pub fn one_wheel_torque<T: Real>(delta: T, phi_b: T, bike: &BikebotParams<T>) -> Result<T> {
    one_wheel_torque_with_mass(delta, phi_b, bike.mass, bike)
}

pub fn one_wheel_torque_with_mass<T: Real>(delta: T, phi_b: T, mass: T, bike: &BikebotParams<T>) -> Result<T> {
    let half = bike.wheelbase * T::lit(0.5);
    let s = contact_shift(delta, T::frac_pi_2(), phi_b, bike)?;
    let c1 = Point2::new(half + s.x, s.y);
    let c2 = Point2::new(-half, T::zero());
    let g = Point2::origin();
    Ok(mass * bike.gravity * line_offset(&g, &c2, &c1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::deg;

    fn bike() -> BikebotParams<f64> {
        BikebotParams::prototype()
    }

    #[test]
    fn ground_angle_examples() {
        let e = deg::<f64>(20.0);
        assert_eq!(wheel_ground_angle(0.0, 0.0, e), 0.0);
        assert!((wheel_ground_angle(deg(90.0), 0.0, e) - 20f64.to_radians().sin()).abs() < 1e-15);
        let (p, pb) = (0.3f64, 0.1f64);
        let first = p.sin() * e.sin();
        let second = -p.cos() * e.cos() * pb.sin();
        assert!((wheel_ground_angle(p, -pb, e) - (first - second)).abs() < 1e-15);
        assert!((wheel_ground_angle(-p, -pb, e) + wheel_ground_angle(p, pb, e)).abs() < 1e-15);
    }

    #[test]
    fn radius_at_ninety() {
        let r = contact_radius(deg(90.0), 0.0, &bike());
        assert!((r - 0.3 * 20f64.to_radians().sin()).abs() < 1e-15);
        assert!((r - 0.1026).abs() < 1e-4);
        assert_eq!(contact_radius(0.0, 0.0, &bike()), 0.0);
    }

    #[test]
    fn projection_examples() {
        let e = deg::<f64>(20.0);
        assert_eq!(projected_steering_angle(0.0, 0.0, e).unwrap(), 0.0);
        assert!((projected_steering_angle(0.7f64, 0.0, 0.0).unwrap() - 0.7).abs() < 1e-15);
        let g = projected_steering_angle(deg(45.0), 0.0, e).unwrap();
        assert!((g.to_degrees() - 0.9397f64.atan().to_degrees()).abs() < 1e-2);
        let below = projected_steering_angle(deg(89.999), 0.0, e).unwrap();
        let above = projected_steering_angle(deg(90.001), 0.0, e).unwrap();
        assert!((above - below).abs() < 1e-4);
        assert!(projected_steering_angle(1.0, std::f64::consts::FRAC_PI_2, e).is_err());
    }

    #[test]
    fn torque_90_value_and_parity() {
        let b = bike();
        assert_eq!(balance_torque_90(0.0, b.mass, &b), 0.0);
        let t = balance_torque_90(deg(15.0), 46.9, &b);
        assert!((t.abs() - 12.53).abs() < 0.01, "{t}");
        for i in 1..50 {
            let d = 0.01 * i as f64;
            assert_eq!(balance_torque_90(d, 46.9, &b), -balance_torque_90(-d, 46.9, &b));
        }
    }

    #[test]
    fn general_torque_reduces_at_ninety() {
        let b = bike();
        for i in -40..=40 {
            let d = deg::<f64>(i as f64);
            let g = balance_torque(d, deg(90.0), 0.0, &b).unwrap();
            let c = balance_torque_90(d, b.mass, &b);
            assert!((g - c).abs() <= 1e-9 * c.abs().max(1e-12), "{i}: {g} vs {c}");
        }
    }

    #[test]
    fn sensitivity_peak_and_fd() {
        let b = bike();
        let s90 = steering_sensitivity_per_deg(deg(90.0), &b);
        assert!((s90 - 0.87).abs() < 0.01, "{s90}");
        let exact = b.mass * b.gravity * b.wheel_radius * b.caster.tan();
        assert!((steering_sensitivity(deg(90.0), &b) - exact).abs() < 1e-9 * exact);
        assert_eq!(steering_sensitivity(0.0, &b), 0.0);
        for phi0 in [10.0, 30.0, 60.0, 89.0, 90.0, 120.0] {
            let p = deg::<f64>(phi0);
            let h = 1e-6;
            let fd = (balance_torque(h, p, 0.0, &b).unwrap() - balance_torque(-h, p, 0.0, &b).unwrap()) / (2.0 * h);
            let s = steering_sensitivity(p, &b);
            assert!((fd.abs() - s).abs() <= 1e-4 * s, "{phi0}: {fd} vs {s}");
        }
    }

    #[test]
    fn rate_h_matches_derivative() {
        let b = bike();
        let m = 51.4;
        let h0 = torque_rate_h(0.0, m, &b);
        assert!((h0 + m * b.gravity * b.wheel_radius * b.caster.tan()).abs() < 1e-10);
        for i in -10..=10 {
            let d = 0.05 * i as f64;
            let e = 1e-6;
            let fd = (balance_torque_90(d + e, m, &b) - balance_torque_90(d - e, m, &b)) / (2.0 * e);
            assert!((fd - torque_rate_h(d, m, &b)).abs() < 1e-6);
        }
        let (hm, _) = h_max(m, deg(15.0), &b);
        assert!(hm >= h0.abs());
    }

    #[test]
    fn torque_maximum() {
        let b = bike();
        let (t, d) = max_balance_torque_90(1.0, deg(50.0), &b);
        let unit = b.gravity * b.wheel_radius * b.caster.sin();
        assert!((t / unit - 0.5247).abs() < 1e-3);
        assert!((d.to_degrees() - 44.0).abs() < 1.5);
    }

    #[test]
    fn one_wheel_is_weaker_and_halves_at_small_delta() {
        let b = bike();
        assert!(one_wheel_torque(0.0, 0.0, &b).unwrap().abs() < 1e-15);
        for i in 1..=45 {
            let d = deg::<f64>(i as f64);
            let one = one_wheel_torque(d, 0.0, &b).unwrap();
            let two = balance_torque_90(d, b.mass, &b);
            assert!(one.abs() < two.abs());
            assert!(one.signum() == two.signum());
        }
        let d = 1e-5;
        let ratio = one_wheel_torque(d, 0.0, &b).unwrap() / balance_torque_90(d, b.mass, &b);
        assert!((ratio - 0.5).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn caster_monotone() {
        let mut b = bike();
        let mut prev = 0.0;
        for e in 1..=45 {
            b.caster = deg(e as f64);
            let t = balance_torque_90(deg(10.0), 46.9, &b).abs();
            assert!(t > prev);
            prev = t;
        }
    }
}
