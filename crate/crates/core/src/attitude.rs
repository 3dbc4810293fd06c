//! Quaternion algebra for the relative-attitude states.
//!
//! Storage order is fixed as `(v1, v2, v3, s)` — vector part first, scalar
//! part last — matching the block layout of the product matrices below.
//! Two products are provided. With `a = (a_v, a_o)`:
//!
//! ```text
//! [a (x)] = [ -[a_v]x + a_o*I3   a_v ]      [a (.)] = [ [a_v]x + a_o*I3   a_v ]
//!           [        -a_v^T      a_o ]                [       -a_v^T      a_o ]
//! ```
//!
//! where `[v]x` is the cross-product matrix, and `a (x) b = b (.) a`. The
//! rotation map [`Quaternion::to_rotation`] is the sandwich `v -> (q (x) v~
//! (x) q*)_v`; it satisfies `R(a (x) b) = R(a) R(b)`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

/// Unit quaternion, vector part first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    /// Vector part.
    pub v: Vector3<f64>,
    /// Scalar part.
    pub s: f64,
}

/// Which product matrix a multiplication goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductOp {
    /// `a (x) b` — the product whose rotation map composes as `R(a)R(b)`.
    Otimes,
    /// `a (.) b` — the transposed-order companion, `a (.) b = b (x) a`.
    Odot,
}

/// Norm drift beyond this is renormalized after products.
const NORM_DRIFT: f64 = 1e-12;
/// Below this rotation angle the propagation uses a first-order expansion.
const SMALL_RATE: f64 = 1e-10;

impl Quaternion {
    pub fn new(v: Vector3<f64>, s: f64) -> Self {
        Quaternion { v, s }
    }

    /// Identity rotation `(0, 0, 0, 1)`.
    pub fn identity() -> Self {
        Quaternion { v: Vector3::zeros(), s: 1.0 }
    }

    /// Rotation of `angle` radians about the unit vector `axis`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let half = 0.5 * angle;
        Quaternion { v: axis * half.sin(), s: half.cos() }
    }

    pub fn from_vector(w: Vector4<f64>) -> Self {
        Quaternion { v: Vector3::new(w[0], w[1], w[2]), s: w[3] }
    }

    /// Components in storage order `(v1, v2, v3, s)`.
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.v[0], self.v[1], self.v[2], self.s)
    }

    /// Conjugate `(-v, s)`.
    pub fn conjugate(&self) -> Self {
        Quaternion { v: -self.v, s: self.s }
    }

    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.s * self.s).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Quaternion { v: self.v / n, s: self.s / n }
    }

    /// Flips the sign so the scalar part is non-negative.
    pub fn positive_scalar(&self) -> Self {
        if self.s < 0.0 {
            Quaternion { v: -self.v, s: -self.s }
        } else {
            *self
        }
    }

    /// Sandwich rotation matrix: `to_rotation(q) * w = (q (x) w~ (x) q*)_v`.
    ///
    /// Proper orthogonal, and a homomorphism over the `(x)` product.
    pub fn to_rotation(&self) -> Matrix3<f64> {
        let (v, s) = (self.v, self.s);
        Matrix3::identity() * (s * s - v.norm_squared()) + 2.0 * v * v.transpose()
            - 2.0 * s * cross_matrix(v)
    }

    /// Rotation angle from the identity, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        2.0 * self.positive_scalar().v.norm().min(1.0).asin()
    }
}

/// Cross-product matrix: `cross_matrix(v) * w = v x w`.
pub fn cross_matrix(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// The `(x)` product matrix `[a (x)]` such that `[a (x)] b = a (x) b`.
pub fn otimes_matrix(a: &Quaternion) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-cross_matrix(a.v) + Matrix3::identity() * a.s));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&a.v);
    m.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-a.v.transpose()));
    m[(3, 3)] = a.s;
    m
}

/// The `(.)` product matrix, `[a (.)] b = a (.) b = b (x) a`.
pub fn odot_matrix(a: &Quaternion) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(cross_matrix(a.v) + Matrix3::identity() * a.s));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&a.v);
    m.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-a.v.transpose()));
    m[(3, 3)] = a.s;
    m
}

/// Raw product without the unit-norm drift control; also valid for non-unit
/// operands such as pure-vector quaternions.
fn mul_raw(a: &Quaternion, b: &Quaternion, op: ProductOp) -> Quaternion {
    let (av, ao, bv, bo) = (a.v, a.s, b.v, b.s);
    let cross = av.cross(&bv);
    match op {
        ProductOp::Otimes => Quaternion {
            v: ao * bv + bo * av - cross,
            s: ao * bo - av.dot(&bv),
        },
        ProductOp::Odot => Quaternion {
            v: ao * bv + bo * av + cross,
            s: ao * bo - av.dot(&bv),
        },
    }
}

/// Quaternion product of unit quaternions through the chosen operator,
/// renormalized if the norm drifted more than 1e-12 from unity.
pub fn quat_mul(a: &Quaternion, b: &Quaternion, op: ProductOp) -> Quaternion {
    let q = mul_raw(a, b, op);
    if (q.norm() - 1.0).abs() > NORM_DRIFT {
        q.normalized()
    } else {
        q
    }
}

/// Closed-form propagation under a constant body rate:
/// `q' = exp(T/2 [w~ (x)]) q = (cos(|w|T/2) I4 + sin(|w|T/2) [w^ (x)]) q`.
pub fn propagate_const_rate(q: &Quaternion, omega: Vector3<f64>, dt: f64) -> Quaternion {
    let angle = omega.norm() * dt;
    if angle < SMALL_RATE {
        // First-order expansion of the exponential; avoids sin(x)/x at 0.
        let w = Quaternion { v: omega * (0.5 * dt), s: 0.0 };
        let dq = mul_raw(&w, q, ProductOp::Otimes);
        Quaternion { v: q.v + dq.v, s: q.s + dq.s }.normalized()
    } else {
        let rot = Quaternion {
            v: omega / omega.norm() * (0.5 * angle).sin(),
            s: (0.5 * angle).cos(),
        };
        quat_mul(&rot, q, ProductOp::Otimes)
    }
}

/// Multiplicative attitude error `dq = q (x) q_nom*`, sign-adjusted so the
/// scalar part is non-negative.
pub fn error_quat(q: &Quaternion, q_nom: &Quaternion) -> Quaternion {
    quat_mul(q, &q_nom.conjugate(), ProductOp::Otimes).positive_scalar()
}

/// Vector part of a small error quaternion; the scalar part is recovered as
/// `sqrt(1 - |qv|^2)` under the positive-scalar convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallRotation {
    pub qv: Vector3<f64>,
}

impl SmallRotation {
    /// `None` when the vector part is too large for scalar recovery.
    pub fn new(qv: Vector3<f64>) -> Option<Self> {
        if qv.norm() <= 1.0 {
            Some(SmallRotation { qv })
        } else {
            None
        }
    }

    /// Recovered non-negative scalar part.
    pub fn scalar(&self) -> f64 {
        (1.0 - self.qv.norm_squared()).max(0.0).sqrt()
    }

    pub fn to_quaternion(&self) -> Quaternion {
        Quaternion { v: self.qv, s: self.scalar() }
    }
}
