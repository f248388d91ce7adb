//! Symmetric 3×3 interaction tensors and the rotations between principal,
//! crystal (D1, D2, b) and laboratory frames.
//!
//! Rotations are active and follow the zxz Euler convention
//! `R(α, β, γ) = Rz(α)·Rx(β)·Rz(γ)`; a tensor with principal values `v` is
//! placed in the crystal frame as `R·diag(v)·Rᵀ`.

use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

/// Relative eigenvalue gap below which a tensor's principal axes are not unique.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Maps an angle in degrees into `(−180, 180]`; in-range values are
/// returned unchanged.
pub fn wrap_degrees(x: f64) -> f64 {
    if x > -180.0 && x <= 180.0 {
        return x;
    }
    let y = x.rem_euclid(360.0);
    if y > 180.0 {
        y - 360.0
    } else {
        y
    }
}

/// zxz Euler angles in degrees.
///
/// Stored normalized to `alpha, gamma ∈ (−180, 180]` and `beta ∈ [0, 180]`;
/// normalization never changes the rotation that the triple describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        let (mut a, mut b, mut g) = (wrap_degrees(alpha), wrap_degrees(beta), wrap_degrees(gamma));
        if b < 0.0 {
            // R(α, −β, γ) = R(α + 180, β, γ + 180)
            b = -b;
            a = wrap_degrees(a + 180.0);
            g = wrap_degrees(g + 180.0);
        }
        Self {
            alpha: a,
            beta: b,
            gamma: g,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// The four triples that give the same tensor when the principal values
    /// are distinct (principal axes are defined up to a pairwise sign flip).
    pub fn equivalents(&self) -> [EulerAngles; 4] {
        let (a, b, g) = (self.alpha, self.beta, self.gamma);
        [
            EulerAngles::new(a, b, g),
            EulerAngles::new(a, b, g + 180.0),
            EulerAngles::new(a + 180.0, 180.0 - b, 180.0 - g),
            EulerAngles::new(a + 180.0, 180.0 - b, -g),
        ]
    }

    /// Largest wrapped per-angle difference to `other`, minimised over the
    /// equivalent triples of `self`. Degrees.
    pub fn distance(&self, other: &EulerAngles) -> f64 {
        self.equivalents()
            .iter()
            .map(|e| e.max_abs_difference(other))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest wrapped per-angle difference, without considering equivalents.
    pub fn max_abs_difference(&self, other: &EulerAngles) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(x, y)| wrap_degrees(x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Deterministic representative among [`equivalents`](Self::equivalents):
    /// `gamma ∈ (−90, 90]`, then `alpha ∈ (−90, 90]` where the choice remains.
    pub fn canonical(&self) -> EulerAngles {
        let eq = self.equivalents();
        let in_half = |x: f64| x > -90.0 && x <= 90.0;
        let with_gamma: Vec<_> = eq.iter().filter(|e| in_half(e.gamma)).copied().collect();
        with_gamma
            .iter()
            .find(|e| in_half(e.alpha))
            .or_else(|| with_gamma.first())
            .copied()
            .unwrap_or(*self)
    }
}

impl fmt::Display for EulerAngles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})°", self.alpha, self.beta, self.gamma)
    }
}

/// Origin of a [`FrameRotation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationKind {
    Euler,
    Subsite,
    LabMisalignment,
    Generic,
}

/// A proper 3×3 rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRotation {
    matrix: Matrix3<f64>,
    kind: RotationKind,
}

pub fn rz(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rx(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn ry(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// `Rz(α)·Rx(β)·Rz(γ)`.
pub fn rotation_matrix(angles: &EulerAngles) -> FrameRotation {
    FrameRotation {
        matrix: rz(angles.alpha) * rx(angles.beta) * rz(angles.gamma),
        kind: RotationKind::Euler,
    }
}

impl FrameRotation {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
            kind: RotationKind::Generic,
        }
    }

    /// π rotation about the crystal b axis relating the two magnetic subsites.
    /// Built from exact entries rather than `rz(180.0)`.
    pub fn subsite() -> Self {
        Self {
            matrix: Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)),
            kind: RotationKind::Subsite,
        }
    }

    pub fn about_x(deg: f64) -> Self {
        Self {
            matrix: rx(deg),
            kind: RotationKind::Generic,
        }
    }

    pub fn about_y(deg: f64) -> Self {
        Self {
            matrix: ry(deg),
            kind: RotationKind::Generic,
        }
    }

    pub fn about_z(deg: f64) -> Self {
        Self {
            matrix: rz(deg),
            kind: RotationKind::Generic,
        }
    }

    /// Crystal-to-laboratory misalignment `Rz(z)·Ry(y)·Rx(x)`, angles in degrees.
    pub fn misalignment(x: f64, y: f64, z: f64) -> Self {
        Self {
            matrix: rz(z) * ry(y) * rx(x),
            kind: RotationKind::LabMisalignment,
        }
    }

    /// Wraps an arbitrary matrix; `None` unless it is a proper rotation to 1e-9.
    pub fn from_matrix(matrix: Matrix3<f64>, kind: RotationKind) -> Option<Self> {
        let r = Self { matrix, kind };
        (r.orthogonality_error() < 1e-9 && (matrix.determinant() - 1.0).abs() < 1e-9).then_some(r)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> RotationKind {
        self.kind
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
            kind: self.kind,
        }
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }

    pub fn compose(&self, other: &FrameRotation) -> FrameRotation {
        FrameRotation {
            matrix: self.matrix * other.matrix,
            kind: RotationKind::Generic,
        }
    }

    /// Max-norm of `R·Rᵀ − I`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.matrix * self.matrix.transpose() - Matrix3::identity()).amax()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }
}

/// Frame a tensor is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Principal,
    Crystal,
    Lab,
}

/// Real symmetric 3×3 tensor stored as its six independent entries
/// `[xx, yy, zz, xy, xz, yz]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricTensor3 {
    entries: [f64; 6],
    frame: Frame,
}

impl SymmetricTensor3 {
    pub fn new(entries: [f64; 6], frame: Frame) -> Self {
        Self { entries, frame }
    }

    /// Takes the symmetric part of `m`.
    pub fn from_matrix(m: &Matrix3<f64>, frame: Frame) -> Self {
        Self {
            entries: [
                m[(0, 0)],
                m[(1, 1)],
                m[(2, 2)],
                0.5 * (m[(0, 1)] + m[(1, 0)]),
                0.5 * (m[(0, 2)] + m[(2, 0)]),
                0.5 * (m[(1, 2)] + m[(2, 1)]),
            ],
            frame,
        }
    }

    /// Row-major 3×3 entries, e.g. as printed in a table.
    pub fn from_rows(rows: [[f64; 3]; 3], frame: Frame) -> Self {
        Self::from_matrix(&Matrix3::from_fn(|i, j| rows[i][j]), frame)
    }

    pub fn isotropic(a: f64) -> Self {
        Self::new([a, a, a, 0.0, 0.0, 0.0], Frame::Crystal)
    }

    pub fn diagonal(d: [f64; 3], frame: Frame) -> Self {
        Self::new([d[0], d[1], d[2], 0.0, 0.0, 0.0], frame)
    }

    pub fn zero() -> Self {
        Self::isotropic(0.0)
    }

    pub fn entries(&self) -> [f64; 6] {
        self.entries
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let [xx, yy, zz, xy, xz, yz] = self.entries;
        match (i.min(j), i.max(j)) {
            (0, 0) => xx,
            (1, 1) => yy,
            (2, 2) => zz,
            (0, 1) => xy,
            (0, 2) => xz,
            (1, 2) => yz,
            _ => panic!("tensor index ({i}, {j}) out of range"),
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        self.entries[0] + self.entries[1] + self.entries[2]
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            entries: self.entries.map(|e| e * k),
            frame: self.frame,
        }
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let e = SymmetricEigen::new(self.matrix()).eigenvalues;
        let mut v = [e[0], e[1], e[2]];
        v.sort_by(f64::total_cmp);
        v
    }

    /// `R·t·Rᵀ`, keeping the frame label.
    pub fn conjugate(&self, r: &FrameRotation) -> Self {
        let m = r.matrix() * self.matrix() * r.matrix().transpose();
        Self::from_matrix(&m, self.frame)
    }

    pub fn max_abs_diff(&self, other: &SymmetricTensor3) -> f64 {
        (self.matrix() - other.matrix()).amax()
    }

    pub fn mul_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix() * v
    }
}

/// Principal values (in the stated order) plus the orientation of the
/// principal axes in the crystal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalTensor {
    pub values: [f64; 3],
    pub orientation: EulerAngles,
}

impl PrincipalTensor {
    pub fn new(values: [f64; 3], orientation: EulerAngles) -> Self {
        Self { values, orientation }
    }

    pub fn rotation(&self) -> FrameRotation {
        rotation_matrix(&self.orientation)
    }

    /// Crystal-frame tensor `R·diag(values)·Rᵀ`.
    pub fn assemble(&self) -> SymmetricTensor3 {
        assemble_tensor(self)
    }

    /// `values[0]·values[1]·values[2]` sign, i.e. the zero-field level-order class.
    pub fn sign_product(&self) -> f64 {
        (self.values[0] * self.values[1] * self.values[2]).signum()
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.map(|v| -v),
            orientation: self.orientation,
        }
    }
}

pub fn assemble_tensor(p: &PrincipalTensor) -> SymmetricTensor3 {
    let diag = SymmetricTensor3::diagonal(p.values, Frame::Principal);
    diag.conjugate(&p.rotation()).with_frame(Frame::Crystal)
}

/// Result of [`decompose_tensor`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub principal: PrincipalTensor,
    /// Two or more eigenvalues coincide, so the reported axes are one choice
    /// among many.
    pub ambiguous: bool,
}

fn largest_component_positive(v: Vector3<f64>) -> Vector3<f64> {
    let k = v.iamax();
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

/// Euler angles of a proper rotation matrix.
pub fn euler_from_matrix(r: &Matrix3<f64>) -> EulerAngles {
    let sin_beta = r[(0, 2)].hypot(r[(1, 2)]);
    if sin_beta < 1e-12 {
        // gimbal lock: only α ± γ is defined; put it all in α
        let alpha = r[(1, 0)].atan2(r[(0, 0)]).to_degrees();
        let beta = if r[(2, 2)] > 0.0 { 0.0 } else { 180.0 };
        return EulerAngles::new(alpha, beta, 0.0);
    }
    let beta = sin_beta.atan2(r[(2, 2)]).to_degrees();
    let alpha = r[(0, 2)].atan2(-r[(1, 2)]).to_degrees();
    let gamma = r[(2, 0)].atan2(r[(2, 1)]).to_degrees();
    EulerAngles::new(alpha, beta, gamma)
}

/// Principal values sorted by ascending magnitude, axes signed so that each
/// of the first two has its largest component positive and the third
/// completes a right-handed frame.
pub fn decompose_tensor(t: &SymmetricTensor3) -> Decomposition {
    let eig = SymmetricEigen::new(t.matrix());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let (x, y) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        x.abs().total_cmp(&y.abs()).then(x.total_cmp(&y))
    });
    let values = order.map(|k| eig.eigenvalues[k]);
    let v1 = largest_component_positive(eig.eigenvectors.column(order[0]).into_owned());
    let v2 = largest_component_positive(eig.eigenvectors.column(order[1]).into_owned());
    let v3 = v1.cross(&v2);
    let r = Matrix3::from_columns(&[v1, v2, v3]);

    let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut sorted = values;
    sorted.sort_by(f64::total_cmp);
    let ambiguous = sorted
        .windows(2)
        .any(|w| (w[1] - w[0]).abs() < DEGENERACY_TOLERANCE * scale);

    Decomposition {
        principal: PrincipalTensor::new(values, euler_from_matrix(&r)),
        ambiguous,
    }
}

/// Tensor of the second magnetic subsite: `Rz(π)·t·Rz(π)ᵀ`.
pub fn subsite_transform(t: &SymmetricTensor3) -> SymmetricTensor3 {
    let [xx, yy, zz, xy, xz, yz] = t.entries;
    SymmetricTensor3::new([xx, yy, zz, xy, -xz, -yz], t.frame)
}

/// Conjugates a crystal-frame tensor into the laboratory frame.
pub fn lab_transform(t: &SymmetricTensor3, misalignment: &FrameRotation) -> SymmetricTensor3 {
    t.conjugate(misalignment).with_frame(Frame::Lab)
}
