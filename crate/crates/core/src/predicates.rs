//! Robust geometric predicates.
//!
//! Orientation and in-sphere tests are delegated to adaptive-precision
//! floating-point predicates (Shewchuk-style, via the `robust` crate), widened
//! from the scalar type to `f64` exactly; signs are therefore exact. The
//! coplanar in-circle test needed when a query point lands exactly on a hull
//! face plane is evaluated in exact rational arithmetic.
//!
//! Sign conventions used throughout this crate:
//! - `orient3d(a, b, c, d) > 0` iff `det[b − a, c − a, d − a] > 0`, i.e. the
//!   tetrahedron `(a, b, c, d)` is positively oriented (`d` on the side of
//!   plane `abc` from which `a → b → c` winds counterclockwise).
//! - `insphere(a, b, c, d, p) > 0` iff `p` is strictly inside the circumsphere
//!   of a *positively oriented* `(a, b, c, d)`.
//! - `coplanar_incircle(a, b, c, p) > 0` iff `p` (coplanar with `a, b, c`) is
//!   strictly inside their circumcircle, independent of the winding of
//!   `a, b, c`.

use num::bigint::BigInt;
use num::rational::Ratio;
use num::{FromPrimitive, Signed, Zero};

use crate::geometry::Point3;
use crate::scalar::Real;

type Rat = Ratio<BigInt>;

fn coord3d<T: Real>(p: Point3<T>) -> robust::Coord3D<f64> {
    robust::Coord3D {
        x: p.x.into(),
        y: p.y.into(),
        z: p.z.into(),
    }
}

/// Exact-sign orientation test; see module docs for the convention.
#[inline]
pub fn orient3d<T: Real>(a: Point3<T>, b: Point3<T>, c: Point3<T>, d: Point3<T>) -> f64 {
    // robust::orient3d is positive when `d` is *below* the plane with a→b→c
    // counterclockwise seen from above, the opposite of the determinant
    // convention used here.
    -robust::orient3d(coord3d(a), coord3d(b), coord3d(c), coord3d(d))
}

/// Exact-sign in-sphere test for a positively oriented tetrahedron.
#[inline]
pub fn insphere<T: Real>(
    a: Point3<T>,
    b: Point3<T>,
    c: Point3<T>,
    d: Point3<T>,
    p: Point3<T>,
) -> f64 {
    // robust::insphere is positive-inside for a robust-positively-oriented
    // tetrahedron; our positive orientation is robust-negative, flipping the
    // sign.
    -robust::insphere(coord3d(a), coord3d(b), coord3d(c), coord3d(d), coord3d(p))
}

fn rat_point<T: Real>(p: Point3<T>) -> [Rat; 3] {
    [
        Rat::from_f64(p.x.into()).expect("finite coordinate"),
        Rat::from_f64(p.y.into()).expect("finite coordinate"),
        Rat::from_f64(p.z.into()).expect("finite coordinate"),
    ]
}

fn rat_sub(a: &[Rat; 3], b: &[Rat; 3]) -> [Rat; 3] {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

fn rat_cross(a: &[Rat; 3], b: &[Rat; 3]) -> [Rat; 3] {
    [
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

fn rat_dot(a: &[Rat; 3], b: &[Rat; 3]) -> Rat {
    &a[0] * &b[0] + &a[1] * &b[1] + &a[2] * &b[2]
}

fn rat_norm_sq(a: &[Rat; 3]) -> Rat {
    rat_dot(a, a)
}

fn rat_scale(a: &[Rat; 3], s: &Rat) -> [Rat; 3] {
    [&a[0] * s, &a[1] * s, &a[2] * s]
}

fn rat_add3(a: [Rat; 3], b: [Rat; 3], c: [Rat; 3]) -> [Rat; 3] {
    [
        &a[0] + &b[0] + &c[0],
        &a[1] + &b[1] + &c[1],
        &a[2] + &b[2] + &c[2],
    ]
}

/// In-circle test for four coplanar points, exact.
///
/// Returns +1 if `p` is strictly inside the circumcircle of `(a, b, c)`,
/// 0 on the circle (or if `a, b, c` are collinear), −1 outside. The callers
/// guarantee coplanarity (`orient3d == 0`).
pub fn coplanar_incircle<T: Real>(a: Point3<T>, b: Point3<T>, c: Point3<T>, p: Point3<T>) -> i8 {
    let (a, b, c, p) = (rat_point(a), rat_point(b), rat_point(c), rat_point(p));
    let ap = rat_sub(&a, &p);
    let bp = rat_sub(&b, &p);
    let cp = rat_sub(&c, &p);
    // n · Σ |q − p|² ((r − p) × (s − p)) over cyclic (q, r, s); the sign is
    // invariant to the winding of (a, b, c) because both factors flip.
    let n = rat_cross(&rat_sub(&b, &a), &rat_sub(&c, &a));
    let m = rat_add3(
        rat_scale(&rat_cross(&bp, &cp), &rat_norm_sq(&ap)),
        rat_scale(&rat_cross(&cp, &ap), &rat_norm_sq(&bp)),
        rat_scale(&rat_cross(&ap, &bp), &rat_norm_sq(&cp)),
    );
    let det = rat_dot(&n, &m);
    if det.is_zero() {
        0
    } else if det.is_positive() {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const O: Point3<f64> = Point3 { x: 0.0, y: 0.0, z: 0.0 };
    const X: Point3<f64> = Point3 { x: 1.0, y: 0.0, z: 0.0 };
    const Y: Point3<f64> = Point3 { x: 0.0, y: 1.0, z: 0.0 };
    const Z: Point3<f64> = Point3 { x: 0.0, y: 0.0, z: 1.0 };

    #[test]
    fn orientation_matches_determinant_convention() {
        // det[X−O, Y−O, Z−O] = det(I) = 1.
        assert!(orient3d(O, X, Y, Z) > 0.0);
        assert!(orient3d(O, Y, X, Z) < 0.0);
        assert!(orient3d(O, X, Y, Point3::new(0.3, 0.3, 0.0)) == 0.0);
    }

    #[test]
    fn insphere_sign_for_positive_tetrahedron() {
        assert!(orient3d(O, X, Y, Z) > 0.0);
        let center = Point3::new(0.25, 0.25, 0.25);
        let far = Point3::new(10.0, 10.0, 10.0);
        assert!(insphere(O, X, Y, Z, center) > 0.0);
        assert!(insphere(O, X, Y, Z, far) < 0.0);
        // Circumsphere center is (0.5, 0.5, 0.5); (1, 1, 0) lies on it.
        assert!(insphere(O, X, Y, Z, Point3::new(1.0, 1.0, 0.0)) == 0.0);
    }

    #[test]
    fn coplanar_incircle_signs() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(2.0, 0.0, 0.0);
        let c = Point3::new(0.0, 2.0, 0.0);
        assert_eq!(coplanar_incircle(a, b, c, Point3::new(0.5, 0.5, 0.0)), 1);
        assert_eq!(coplanar_incircle(a, b, c, Point3::new(3.0, 3.0, 0.0)), -1);
        // (2, 2, 0) lies on the circumcircle through the three corners.
        assert_eq!(coplanar_incircle(a, b, c, Point3::new(2.0, 2.0, 0.0)), 0);
        // Winding independence.
        assert_eq!(coplanar_incircle(a, c, b, Point3::new(0.5, 0.5, 0.0)), 1);
    }

    #[test]
    fn coplanar_incircle_in_tilted_plane() {
        // Unit circle in the plane z = x, parameterized exactly.
        let a = Point3::new(1.0, 0.0, 1.0);
        let b = Point3::new(-1.0, 0.0, -1.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        // Circumcircle center sits at (0, -1/2, 0) with radius 3/2 within the
        // plane, so (0, -2, 0) lies exactly on it.
        assert_eq!(coplanar_incircle(a, b, c, Point3::new(0.0, 0.0, 0.0)), 1);
        assert_eq!(coplanar_incircle(a, b, c, Point3::new(0.0, -2.0, 0.0)), 0);
        assert_eq!(coplanar_incircle(a, b, c, Point3::new(2.0, 0.0, 2.0)), -1);
    }

    #[test]
    fn f32_points_widen_exactly() {
        let a = Point3::new(0.0f32, 0.0, 0.0);
        let b = Point3::new(1.0f32, 0.0, 0.0);
        let c = Point3::new(0.0f32, 1.0, 0.0);
        let d = Point3::new(0.0f32, 0.0, 1.0);
        assert!(orient3d(a, b, c, d) > 0.0);
    }
}
