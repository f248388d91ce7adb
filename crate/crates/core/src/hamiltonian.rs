//! The 4×4 effective spin Hamiltonian of an S = 1/2, I = 1/2 centre:
//!
//! ```text
//! H = I·A·S + μB B·g·S − μn gn B·I
//! ```
//!
//! States are expanded in the product basis `{|↑⇑⟩, |↑⇓⟩, |↓⇑⟩, |↓⇓⟩}`
//! (electron spin first), quantized along the crystal b axis unless a
//! different frame is requested. Energies are in GHz, fields in mT.

use std::ops::Neg;

use nalgebra::{Complex, Matrix2, Matrix4, SymmetricEigen, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::tensor::{subsite_transform, FrameRotation, PrincipalTensor, SymmetricTensor3};

pub type C64 = Complex<f64>;
pub type Hamiltonian = Matrix4<C64>;

/// Gap (GHz) below which two levels count as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-6;

/// Nuclear g factor of ¹⁷¹Yb.
pub const DEFAULT_GN: f64 = 0.987;

/// Magnetons in GHz/T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub mu_b: f64,
    pub mu_n: f64,
}

impl Default for Constants {
    fn default() -> Self {
        physical_constants()
    }
}

pub fn physical_constants() -> Constants {
    Constants {
        mu_b: 13.996245,
        mu_n: 7.6225932e-3,
    }
}

/// Crystal axes; the frame is right-handed (D1, D2, b).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    D1,
    D2,
    B,
}

impl Axis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::D1 => Vector3::x(),
            Axis::D2 => Vector3::y(),
            Axis::B => Vector3::z(),
        }
    }
}

/// Magnetic field in the crystal frame, components (B_D1, B_D2, B_b) in mT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldVector(pub Vector3<f64>);

impl FieldVector {
    pub fn new(d1: f64, d2: f64, b: f64) -> Self {
        Self(Vector3::new(d1, d2, b))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    /// `magnitude` mT along `direction` (normalized here).
    pub fn along(direction: &Vector3<f64>, magnitude: f64) -> Self {
        let n = direction.norm();
        if n == 0.0 {
            return Self::zero();
        }
        Self(direction * (magnitude / n))
    }

    pub fn along_axis(axis: Axis, magnitude: f64) -> Self {
        Self(axis.unit() * magnitude)
    }

    pub fn magnitude(&self) -> f64 {
        self.0.norm()
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn rotated(&self, r: &FrameRotation) -> Self {
        Self(r.apply(&self.0))
    }

    /// Components in tesla.
    pub fn tesla(&self) -> Vector3<f64> {
        self.0 * 1e-3
    }
}

impl Neg for FieldVector {
    type Output = FieldVector;
    fn neg(self) -> FieldVector {
        FieldVector(-self.0)
    }
}

/// Magnetic subsite; the second is the C2 (b axis) image of the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subsite {
    One,
    Two,
}

impl Subsite {
    pub const BOTH: [Subsite; 2] = [Subsite::One, Subsite::Two];

    pub fn number(self) -> u8 {
        match self {
            Subsite::One => 1,
            Subsite::Two => 2,
        }
    }
}

/// One electronic state (ground or excited) of one site.
///
/// `a` and `g` always hold the subsite-1 tensors; [`SpinSystem::a`] and
/// [`SpinSystem::g`] return the tensors of the selected subsite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinSystem {
    a1: SymmetricTensor3,
    g1: SymmetricTensor3,
    pub g_n: f64,
    pub subsite: Subsite,
    pub constants: Constants,
}

impl SpinSystem {
    pub fn new(a: SymmetricTensor3, g: SymmetricTensor3) -> Self {
        Self {
            a1: a,
            g1: g,
            g_n: DEFAULT_GN,
            subsite: Subsite::One,
            constants: Constants::default(),
        }
    }

    pub fn from_principal(a: &PrincipalTensor, g: &PrincipalTensor) -> Self {
        Self::new(a.assemble(), g.assemble())
    }

    pub fn with_subsite(mut self, subsite: Subsite) -> Self {
        self.subsite = subsite;
        self
    }

    pub fn with_gn(mut self, g_n: f64) -> Self {
        self.g_n = g_n;
        self
    }

    pub fn with_constants(mut self, constants: Constants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_a(mut self, a: SymmetricTensor3) -> Self {
        self.a1 = a;
        self
    }

    pub fn with_g(mut self, g: SymmetricTensor3) -> Self {
        self.g1 = g;
        self
    }

    /// Flips the sign of every hyperfine principal value, mirroring the
    /// zero-field level structure.
    pub fn with_negated_hyperfine(mut self) -> Self {
        self.a1 = self.a1.scale(-1.0);
        self
    }

    /// Sign of `A1·A2·A3` (= sign of det A); fixes the zero-field level order.
    pub fn hyperfine_parity(&self) -> f64 {
        self.a1.matrix().determinant().signum()
    }

    pub fn a(&self) -> SymmetricTensor3 {
        match self.subsite {
            Subsite::One => self.a1,
            Subsite::Two => subsite_transform(&self.a1),
        }
    }

    pub fn g(&self) -> SymmetricTensor3 {
        match self.subsite {
            Subsite::One => self.g1,
            Subsite::Two => subsite_transform(&self.g1),
        }
    }

    /// The same physics expressed in a frame whose axes are the columns of
    /// `frame` (crystal coordinates). Fields must be rotated with
    /// `frame.transpose()` to match.
    pub fn in_frame(&self, frame: &FrameRotation) -> SpinSystem {
        let back = frame.transpose();
        SpinSystem {
            a1: self.a().conjugate(&back),
            g1: self.g().conjugate(&back),
            g_n: self.g_n,
            subsite: Subsite::One,
            constants: self.constants,
        }
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn half_paulis() -> [Matrix2<C64>; 3] {
    let z = c(0.0);
    [
        Matrix2::new(z, c(0.5), c(0.5), z),
        Matrix2::new(z, C64::new(0.0, -0.5), C64::new(0.0, 0.5), z),
        Matrix2::new(c(0.5), z, z, c(-0.5)),
    ]
}

/// `(S_x, S_y, S_z)` and `(I_x, I_y, I_z)` on the 4-dimensional product space.
pub fn spin_operators() -> ([Hamiltonian; 3], [Hamiltonian; 3]) {
    let id = Matrix2::<C64>::identity();
    let p = half_paulis();
    (p.map(|s| s.kronecker(&id)), p.map(|s| id.kronecker(&s)))
}

/// `∂H/∂B_k` in GHz/mT for k = D1, D2, b.
pub fn zeeman_operators(sys: &SpinSystem) -> [Hamiltonian; 3] {
    let (s, i) = spin_operators();
    let g = sys.g();
    let k_e = sys.constants.mu_b * 1e-3;
    let k_n = sys.constants.mu_n * sys.g_n * 1e-3;
    std::array::from_fn(|k| {
        let mut v = i[k] * c(-k_n);
        for (l, sl) in s.iter().enumerate() {
            v += sl * c(k_e * g.get(k, l));
        }
        v
    })
}

pub fn build_hamiltonian(sys: &SpinSystem, field: &FieldVector) -> Hamiltonian {
    let (s, i) = spin_operators();
    let a = sys.a();
    let g = sys.g();
    let b = field.tesla();
    let mu_b = sys.constants.mu_b;
    let nuc = sys.constants.mu_n * sys.g_n;
    let mut h = Hamiltonian::zeros();
    for l in 0..3 {
        // effective field seen by S_l
        let zeeman: f64 = (0..3).map(|k| b[k] * g.get(k, l)).sum();
        h += s[l] * c(mu_b * zeeman);
        for k in 0..3 {
            h += i[k] * s[l] * c(a.get(k, l));
        }
        h -= i[l] * c(nuc * b[l]);
    }
    h
}

/// Eigenpairs of a Hamiltonian, energies ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub energies: [f64; 4],
    /// Column `k` is the state of energy `energies[k]`.
    pub states: Matrix4<C64>,
    /// Some adjacent gap is below [`DEGENERACY_GAP`].
    pub degenerate: bool,
}

impl EigenSystem {
    pub fn state(&self, k: usize) -> Vector4<C64> {
        self.states.column(k).into_owned()
    }

    pub fn min_gap_to_others(&self, n: usize) -> f64 {
        (0..4)
            .filter(|&m| m != n)
            .map(|m| (self.energies[m] - self.energies[n]).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn expectation(&self, op: &Hamiltonian, n: usize) -> f64 {
        let v = self.state(n);
        (v.adjoint() * op * v)[(0, 0)].re
    }

    pub fn matrix_element(&self, op: &Hamiltonian, from: usize, to: usize) -> C64 {
        (self.state(to).adjoint() * op * self.state(from))[(0, 0)]
    }
}

fn hermitian_deviation(h: &Hamiltonian) -> f64 {
    (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn eigen_hermitian(h: &Hamiltonian) -> EigenSystem {
    let sym = (h + h.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let energies = order.map(|k| eig.eigenvalues[k]);
    let states = Matrix4::from_columns(&order.map(|k| eig.eigenvectors.column(k).into_owned()));
    let degenerate = energies.windows(2).any(|w| w[1] - w[0] < DEGENERACY_GAP);
    EigenSystem {
        energies,
        states,
        degenerate,
    }
}

/// Rejects input whose anti-Hermitian part exceeds 1e-10.
pub fn diagonalize(h: &Hamiltonian) -> Result<EigenSystem> {
    let deviation = hermitian_deviation(h);
    if deviation > 1e-10 {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(eigen_hermitian(h))
}

/// Builds and diagonalizes `H(B)`.
pub fn solve(sys: &SpinSystem, field: &FieldVector) -> EigenSystem {
    eigen_hermitian(&build_hamiltonian(sys, field))
}

pub fn energies(sys: &SpinSystem, field: &FieldVector) -> [f64; 4] {
    solve(sys, field).energies
}

/// Solves with states expanded in the product basis quantized along the
/// axes of `frame` (columns in crystal coordinates).
pub fn solve_in_frame(sys: &SpinSystem, field: &FieldVector, frame: &FrameRotation) -> EigenSystem {
    let local = sys.in_frame(frame);
    solve(&local, &field.rotated(&frame.transpose()))
}

/// Which closed-form zero-field branch a level came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroFieldBranch {
    /// ¼[−A3 + (A1 + A2)]
    LowerPlus,
    /// ¼[−A3 − (A1 + A2)]
    LowerMinus,
    /// ¼[A3 + (A1 − A2)]
    UpperPlus,
    /// ¼[A3 − (A1 − A2)]
    UpperMinus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroFieldLevel {
    pub energy: f64,
    pub branch: ZeroFieldBranch,
}

/// Closed-form zero-field energies for principal values `(a1, a2, a3)`.
pub fn zero_field_levels(a1: f64, a2: f64, a3: f64) -> [ZeroFieldLevel; 4] {
    use ZeroFieldBranch::*;
    [
        ZeroFieldLevel {
            energy: 0.25 * (-a3 + (a1 + a2)),
            branch: LowerPlus,
        },
        ZeroFieldLevel {
            energy: 0.25 * (-a3 - (a1 + a2)),
            branch: LowerMinus,
        },
        ZeroFieldLevel {
            energy: 0.25 * (a3 + (a1 - a2)),
            branch: UpperPlus,
        },
        ZeroFieldLevel {
            energy: 0.25 * (a3 - (a1 - a2)),
            branch: UpperMinus,
        },
    ]
}

pub fn sorted_zero_field_energies(a1: f64, a2: f64, a3: f64) -> [f64; 4] {
    let mut e = zero_field_levels(a1, a2, a3).map(|l| l.energy);
    e.sort_by(f64::total_cmp);
    e
}

/// Recovers `(|A1|, |A2|, |A3|)`, ordered by magnitude, from four ascending
/// zero-field levels.
pub fn invert_zero_field(levels: &[f64; 4]) -> Result<[f64; 3]> {
    if levels.iter().any(|e| !e.is_finite()) {
        return Err(Error::InconsistentLevels("non-finite level".into()));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InconsistentLevels(format!("levels not ascending: {levels:?}")));
    }
    let scale = levels.iter().fold(1e-12_f64, |m, e| m.max(e.abs()));
    let sum: f64 = levels.iter().sum();
    if sum.abs() > 1e-6 * scale.max(1.0) {
        return Err(Error::InconsistentLevels(format!(
            "levels sum to {sum:.3e}, expected 0"
        )));
    }
    let [e1, e2, e3, e4] = *levels;
    let sum_mag = 2.0 * (e2 - e1);
    let diff_mag = 2.0 * (e4 - e3);
    let a3 = (e3 + e4) - (e1 + e2);
    let a2 = 0.5 * (sum_mag + diff_mag);
    let a1 = 0.5 * (sum_mag - diff_mag).abs();
    if a3 < 0.0 || a2 < 0.0 {
        return Err(Error::InconsistentLevels(format!(
            "negative magnitude (|A1|={a1}, |A2|={a2}, |A3|={a3})"
        )));
    }
    if a3 + 1e-12 * scale < a2 {
        return Err(Error::InconsistentLevels(format!(
            "|A3| = {a3} smaller than |A2| = {a2}; level set violates |A3| ≥ |A2| ≥ |A1|"
        )));
    }
    Ok([a1, a2, a3])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub lower: usize,
    pub upper: usize,
    /// GHz, non-negative.
    pub frequency: f64,
    pub field: FieldVector,
}

/// Level pairs `(i, j)` with `i < j`, in table order.
pub const LEVEL_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    pub entries: Vec<Transition>,
}

impl TransitionTable {
    pub fn frequencies(&self) -> Vec<f64> {
        self.entries.iter().map(|t| t.frequency).collect()
    }

    pub fn get(&self, lower: usize, upper: usize) -> Option<&Transition> {
        self.entries.iter().find(|t| t.lower == lower && t.upper == upper)
    }
}

pub fn transition_frequencies(es: &EigenSystem, field: &FieldVector) -> TransitionTable {
    TransitionTable {
        entries: LEVEL_PAIRS
            .iter()
            .map(|&(i, j)| Transition {
                lower: i,
                upper: j,
                frequency: (es.energies[j] - es.energies[i]).max(0.0),
                field: *field,
            })
            .collect(),
    }
}

/// `[b][k] = |⟨b|k⟩|²` for basis state `b` and eigenstate `k`.
pub fn basis_overlaps(es: &EigenSystem) -> Matrix4<f64> {
    es.states.map(|z| z.norm_sqr())
}

/// Hellmann–Feynman gradient `∂(E_j − E_i)/∂B` in GHz/mT.
pub fn zeeman_gradient(sys: &SpinSystem, field: &FieldVector, i: usize, j: usize) -> Result<Vector3<f64>> {
    let es = solve(sys, field);
    gradient_from(&es, &zeeman_operators(sys), i, j)
}

pub(crate) fn gradient_from(es: &EigenSystem, ops: &[Hamiltonian; 3], i: usize, j: usize) -> Result<Vector3<f64>> {
    for n in [i, j] {
        if n >= 4 {
            return Err(Error::LevelIndex(n));
        }
    }
    for n in [i, j] {
        let gap = es.min_gap_to_others(n);
        if gap < DEGENERACY_GAP {
            let other = (0..4)
                .filter(|&m| m != n)
                .min_by(|&a, &b| {
                    (es.energies[a] - es.energies[n])
                        .abs()
                        .total_cmp(&(es.energies[b] - es.energies[n]).abs())
                })
                .unwrap_or(n);
            return Err(Error::Degenerate { i: n, j: other, gap });
        }
    }
    Ok(Vector3::from_fn(|k, _| {
        es.expectation(&ops[k], j) - es.expectation(&ops[k], i)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{EulerAngles, Frame};
    use approx::assert_abs_diff_eq;

    fn site_one_ground() -> SpinSystem {
        SpinSystem::from_principal(
            &PrincipalTensor::new([0.481, 1.159, 5.251], EulerAngles::new(72.25, 92.11, 63.92)),
            &PrincipalTensor::new([0.31, 1.60, 6.53], EulerAngles::new(72.8, 88.7, 66.2)),
        )
    }

    #[test]
    fn constants() {
        let k = physical_constants();
        assert_abs_diff_eq!(k.mu_b / k.mu_n, 1836.15, epsilon = 0.01);
        assert_eq!(k.mu_b.round(), 14.0);
        assert_abs_diff_eq!(k.mu_n * DEFAULT_GN, 7.524e-3, epsilon = 1e-6);
    }

    #[test]
    fn isotropic_hyperfine_is_singlet_triplet() {
        let a = 1.7;
        let sys = SpinSystem::new(SymmetricTensor3::isotropic(a), SymmetricTensor3::isotropic(2.0));
        let e = energies(&sys, &FieldVector::zero());
        assert_abs_diff_eq!(e[0], -0.75 * a, epsilon = 1e-12);
        for k in 1..4 {
            assert_abs_diff_eq!(e[k], 0.25 * a, epsilon = 1e-12);
        }
        assert!(solve(&sys, &FieldVector::zero()).degenerate);
    }

    #[test]
    fn zero_field_trace_vanishes() {
        let h = build_hamiltonian(&site_one_ground(), &FieldVector::zero());
        assert_eq!(h.trace(), c(0.0));
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let h = build_hamiltonian(&site_one_ground(), &FieldVector::new(30.0, -12.0, 7.0));
        assert!(hermitian_deviation(&h) < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = Hamiltonian::identity();
        h[(0, 1)] = c(1e-6);
        assert!(matches!(diagonalize(&h), Err(Error::NotHermitian { .. })));
        let es = diagonalize(&Hamiltonian::identity()).unwrap();
        assert!(es.degenerate);
    }

    #[test]
    fn zero_field_site_one() {
        let e = sorted_zero_field_energies(0.481, 1.159, 5.251);
        let expected = [-1.72275, -0.90275, 1.14325, 1.48225];
        for (x, y) in e.iter().zip(expected) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
        let numeric = energies(&site_one_ground(), &FieldVector::zero());
        for (x, y) in e.iter().zip(numeric) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_field_isotropic_and_inversion() {
        let a = 0.8;
        let e = sorted_zero_field_energies(a, a, a);
        assert_abs_diff_eq!(e[0], -0.75 * a, epsilon = 1e-15);
        let inv = invert_zero_field(&e).unwrap();
        for v in inv {
            assert_abs_diff_eq!(v, a, epsilon = 1e-12);
        }
    }

    #[test]
    fn inversion_rejects_bad_input() {
        assert!(invert_zero_field(&[1.0, 0.0, -1.0, 0.0]).is_err());
        assert!(invert_zero_field(&[-1.0, 0.0, 0.5, 1.0]).is_err());
        assert!(invert_zero_field(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_pairs_keep_zero_entries() {
        let sys = SpinSystem::new(SymmetricTensor3::isotropic(1.0), SymmetricTensor3::isotropic(2.0));
        let es = solve(&sys, &FieldVector::zero());
        let table = transition_frequencies(&es, &FieldVector::zero());
        assert_eq!(table.entries.len(), 6);
        assert!(table.frequencies().iter().filter(|f| **f < 1e-12).count() == 3);
    }

    #[test]
    fn principal_frame_states_are_bell_like() {
        let sys = SpinSystem::new(
            SymmetricTensor3::diagonal([0.481, 1.159, 5.251], Frame::Principal),
            SymmetricTensor3::isotropic(1.0),
        );
        let o = basis_overlaps(&solve(&sys, &FieldVector::zero()));
        for k in 0..4 {
            let mut col: Vec<f64> = (0..4).map(|b| o[(b, k)]).collect();
            col.sort_by(f64::total_cmp);
            assert_abs_diff_eq!(col[0], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(col[1], 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(col[2], 0.5, epsilon = 1e-10);
            assert_abs_diff_eq!(col[3], 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn gradient_rejects_degenerate_levels() {
        let sys = SpinSystem::new(SymmetricTensor3::isotropic(1.0), SymmetricTensor3::isotropic(2.0));
        let err = zeeman_gradient(&sys, &FieldVector::zero(), 0, 1).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. }));
        assert!(matches!(
            zeeman_gradient(&site_one_ground(), &FieldVector::zero(), 0, 4),
            Err(Error::LevelIndex(4))
        ));
    }

    #[test]
    fn isotropic_high_field_gradient_is_along_field() {
        let sys = SpinSystem::new(SymmetricTensor3::isotropic(0.5), SymmetricTensor3::isotropic(2.0));
        let dir = Vector3::new(1.0, 2.0, -0.5).normalize();
        let grad = zeeman_gradient(&sys, &FieldVector::along(&dir, 800.0), 1, 2).unwrap();
        let perp = grad - dir * grad.dot(&dir);
        assert!(perp.norm() < 1e-9 * grad.norm().max(1e-12), "{grad:?}");
    }
}
