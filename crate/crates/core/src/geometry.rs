//! Minimal 3D point/vector types and the small geometric helpers the rest of
//! the crate builds on. Coordinates are meters in a world frame shared by both
//! input clouds.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::scalar::Real;

/// A position in 3D space.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

/// A displacement or direction in 3D space.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vector3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn coords(self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    #[inline]
    pub fn distance_squared(self, other: Self) -> T {
        (self - other).norm_squared()
    }

    /// Coordinate access by axis index (0 = x, 1 = y, 2 = z).
    #[inline]
    pub fn axis(self, k: usize) -> T {
        match k {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn to_f64(self) -> Point3<f64> {
        Point3 {
            x: self.x.into(),
            y: self.y.into(),
            z: self.z.into(),
        }
    }

    #[inline]
    pub fn midpoint(self, other: Self) -> Self {
        let half = T::of(0.5);
        Self::new(
            (self.x + other.x) * half,
            (self.y + other.y) * half,
            (self.z + other.z) * half,
        )
    }
}

impl<T: Real> Vector3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    #[inline]
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n.is_finite() && n > T::zero() {
            Some(self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn axis(self, k: usize) -> T {
        match k {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn to_point(self) -> Point3<T> {
        Point3::new(self.x, self.y, self.z)
    }
}

impl<T: Real> Sub for Point3<T> {
    type Output = Vector3<T>;
    #[inline]
    fn sub(self, rhs: Self) -> Vector3<T> {
        Vector3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Real> Add<Vector3<T>> for Point3<T> {
    type Output = Point3<T>;
    #[inline]
    fn add(self, rhs: Vector3<T>) -> Point3<T> {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Real> Sub<Vector3<T>> for Point3<T> {
    type Output = Point3<T>;
    #[inline]
    fn sub(self, rhs: Vector3<T>) -> Point3<T> {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Real> Add for Vector3<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<T: Real> AddAssign for Vector3<T> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.x += rhs.x;
        self.y += rhs.y;
        self.z += rhs.z;
    }
}

impl<T: Real> Sub for Vector3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<T: Real> Mul<T> for Vector3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vector3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vector3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Area of the triangle spanned by three points.
#[inline]
pub fn triangle_area<T: Real>(a: Point3<T>, b: Point3<T>, c: Point3<T>) -> T {
    (b - a).cross(c - a).norm() * T::of(0.5)
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug)]
pub struct Aabb<T> {
    pub min: Point3<T>,
    pub max: Point3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(T::infinity(), T::infinity(), T::infinity()),
            max: Point3::new(-T::infinity(), -T::infinity(), -T::infinity()),
        }
    }

    pub fn from_points<I: IntoIterator<Item = Point3<T>>>(points: I) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.insert(p);
        }
        b
    }

    #[inline]
    pub fn insert(&mut self, p: Point3<T>) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.min.z = self.min.z.min(p.z);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
        self.max.z = self.max.z.max(p.z);
    }

    #[inline]
    pub fn merge(&mut self, other: &Self) {
        self.insert(other.min);
        self.insert(other.max);
    }

    /// Index of the axis with the largest extent.
    pub fn widest_axis(&self) -> usize {
        let dx = self.max.x - self.min.x;
        let dy = self.max.y - self.min.y;
        let dz = self.max.z - self.min.z;
        if dx >= dy && dx >= dz {
            0
        } else if dy >= dz {
            1
        } else {
            2
        }
    }

    /// Squared distance from `p` to this box (0 if inside).
    #[inline]
    pub fn distance_squared(&self, p: Point3<T>) -> T {
        let mut d = T::zero();
        for k in 0..3 {
            let v = p.axis(k);
            let lo = self.min.axis(k);
            let hi = self.max.axis(k);
            if v < lo {
                d += (lo - v) * (lo - v);
            } else if v > hi {
                d += (v - hi) * (v - hi);
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_follows_right_hand_rule() {
        let x = Vector3::new(1.0, 0.0, 0.0);
        let y = Vector3::new(0.0, 1.0, 0.0);
        assert_eq!(x.cross(y), Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn unit_right_triangle_area() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        assert_eq!(triangle_area(a, b, c), 0.5);
    }

    #[test]
    fn aabb_distance() {
        let b = Aabb::from_points([Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)]);
        assert_eq!(b.distance_squared(Point3::new(0.5, 0.5, 0.5)), 0.0);
        assert_eq!(b.distance_squared(Point3::new(2.0, 0.5, 0.5)), 1.0);
        assert_eq!(b.widest_axis(), 0);
    }
}
