//! Small fixed-size linear algebra for world-space transforms.
//!
//! Points and vectors are `[f64; 3]` in millimetres, matrices are row-major
//! `[[f64; 3]; 3]`.

use crate::error::bail;
use crate::Result;
use num_traits::Float;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    Float::sqrt(dot(a, a))
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    [[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]]
}

pub fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse by the adjugate; `None` when the matrix is singular.
pub fn invert(m: &Mat3) -> Option<Mat3> {
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let inv_d = 1.0 / d;
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            out[r][c] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) * inv_d;
        }
    }
    Some(out)
}

/// Right-handed rotation about the x-axis by `deg` degrees.
pub fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(deg.to_radians());
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(deg.to_radians());
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(deg: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(deg.to_radians());
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn identity() -> Self {
        Self { rotation: IDENTITY, translation: [0.0; 3] }
    }

    /// Validates orthonormality and a +1 determinant.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let rtr = mat_mul(&transpose(&rotation), &rotation);
        for (r, row) in rtr.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let expect = if r == c { 1.0 } else { 0.0 };
                if (v - expect).abs() > Self::ORTHONORMAL_TOL {
                    bail!(InvalidArgument, "rotation is not orthonormal (R^T R [{r}][{c}] = {v})");
                }
            }
        }
        let d = det(&rotation);
        if (d - 1.0).abs() > Self::ORTHONORMAL_TOL {
            bail!(InvalidArgument, "rotation determinant is {d}, expected +1");
        }
        if translation.iter().any(|t| !t.is_finite()) {
            bail!(NonFinite, "translation {translation:?}");
        }
        Ok(Self { rotation, translation })
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation, p), self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, self.translation);
        Self { rotation: rt, translation: [-t[0], -t[1], -t[2]] }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self { rotation: mat_mul(&self.rotation, &other.rotation), translation: self.apply(other.translation) }
    }

    pub fn to_affine(&self) -> Affine3 {
        Affine3 { linear: self.rotation, translation: self.translation }
    }
}

/// General invertible affine map `p -> A p + t`. Used for augmentation
/// (scaling) and mirrored grids, which are not rigid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine3 {
    pub linear: Mat3,
    pub translation: Vec3,
}

impl Affine3 {
    pub fn identity() -> Self {
        Self { linear: IDENTITY, translation: [0.0; 3] }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.linear, p), self.translation)
    }

    pub fn inverse(&self) -> Result<Self> {
        let Some(inv) = invert(&self.linear) else {
            bail!(InvalidArgument, "affine map is singular");
        };
        let t = mat_vec(&inv, self.translation);
        Ok(Self { linear: inv, translation: [-t[0], -t[1], -t[2]] })
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { linear: mat_mul(&self.linear, &other.linear), translation: self.apply(other.translation) }
    }
}
