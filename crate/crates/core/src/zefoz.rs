//! Zero-first-order-Zeeman (ZEFOZ) search: field points where a transition
//! frequency is stationary with respect to the applied field.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{energies, zeeman_gradient, FieldVector, SpinSystem};

/// Central-difference step for the curvature, mT.
pub const CURVATURE_STEP_MT: f64 = 0.1;
/// Candidates closer than this are merged, mT.
pub const DEDUP_DISTANCE_MT: f64 = 0.1;
/// Gradient norm below which a candidate is an exact ZEFOZ point, MHz/mT.
pub const DEFAULT_REFINE_TOLERANCE: f64 = 1e-3;
/// Default search radius, mT.
pub const DEFAULT_RADIUS_MT: f64 = 100.0;

/// A frequency that depends on the applied field.
pub trait FieldResponse: Sync {
    /// GHz.
    fn frequency(&self, field: &FieldVector) -> Result<f64>;
    /// GHz/mT.
    fn gradient(&self, field: &FieldVector) -> Result<Vector3<f64>>;
    fn transition(&self) -> (usize, usize) {
        (0, 1)
    }
}

/// Transition between levels `lower` and `upper` of a spin system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinTransition {
    pub system: SpinSystem,
    pub lower: usize,
    pub upper: usize,
}

impl SpinTransition {
    pub fn new(system: SpinSystem, lower: usize, upper: usize) -> Result<Self> {
        if lower > 3 || upper > 3 || lower == upper {
            return Err(Error::LevelIndex(lower.max(upper)));
        }
        Ok(Self { system, lower, upper })
    }
}

impl FieldResponse for SpinTransition {
    fn frequency(&self, field: &FieldVector) -> Result<f64> {
        let e = energies(&self.system, field);
        Ok(e[self.upper] - e[self.lower])
    }

    fn gradient(&self, field: &FieldVector) -> Result<Vector3<f64>> {
        zeeman_gradient(&self.system, field, self.lower, self.upper)
    }

    fn transition(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    /// MHz/mT.
    pub gradient: Vector3<f64>,
    /// Symmetric, MHz/mT².
    pub curvature: Matrix3<f64>,
}

fn difference_jacobian<R: FieldResponse + ?Sized>(r: &R, field: &FieldVector, h: f64) -> Result<Matrix3<f64>> {
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = h;
        let plus = r.gradient(&FieldVector(field.0 + e))?;
        let minus = r.gradient(&FieldVector(field.0 - e))?;
        m.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    Ok(m)
}

/// Gradient and curvature (Richardson-refined central differences of the
/// gradient) at `field`.
pub fn sensitivity<R: FieldResponse + ?Sized>(r: &R, field: &FieldVector) -> Result<Sensitivity> {
    let g = r.gradient(field)?;
    let coarse = difference_jacobian(r, field, CURVATURE_STEP_MT)?;
    let fine = difference_jacobian(r, field, 0.5 * CURVATURE_STEP_MT)?;
    let c = (fine * 4.0 - coarse) / 3.0;
    Ok(Sensitivity {
        gradient: g * 1e3,
        curvature: (c + c.transpose()) * 0.5e3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Point(FieldVector),
    /// Axis-aligned box, mT.
    Box {
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
    /// `|B| ≤ radius`, mT.
    Ball {
        radius: f64,
    },
}

impl Region {
    fn validate(&self) -> Result<()> {
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        match self {
            Region::Point(b) if !finite(&b.0) => Err(Error::InvalidInput("region point must be finite".into())),
            Region::Box { min, max } if !finite(min) || !finite(max) => {
                Err(Error::InvalidInput("region bounds must be finite".into()))
            }
            Region::Ball { radius } if !radius.is_finite() || *radius < 0.0 => Err(Error::InvalidInput(format!(
                "region radius must be finite and non-negative, got {radius}"
            ))),
            _ => Ok(()),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            Region::Box { min, max } => (0..3).any(|k| max[k] < min[k]),
            _ => false,
        }
    }

    fn project(&self, v: Vector3<f64>) -> Vector3<f64> {
        match self {
            Region::Point(b) => b.0,
            Region::Box { min, max } => Vector3::from_fn(|k, _| v[k].clamp(min[k], max[k])),
            Region::Ball { radius } => {
                let n = v.norm();
                if n > *radius {
                    v * (radius / n)
                } else {
                    v
                }
            }
        }
    }

    fn on_boundary(&self, v: &Vector3<f64>) -> bool {
        let eps = 1e-9;
        match self {
            Region::Point(_) => false,
            Region::Box { min, max } => (0..3).any(|k| (v[k] - min[k]).abs() < eps || (max[k] - v[k]).abs() < eps),
            Region::Ball { radius } => (v.norm() - radius).abs() < eps * radius.max(1.0),
        }
    }

    /// Also returns each point's grid neighbours.
    fn grid(&self, resolution: usize) -> (Vec<Vector3<f64>>, Vec<Vec<usize>>) {
        let n = resolution.max(2);
        match self {
            Region::Point(b) => (vec![b.0], vec![vec![]]),
            Region::Box { min, max } => {
                let axis = |k: usize| -> Vec<f64> {
                    if max[k] == min[k] {
                        vec![min[k]]
                    } else {
                        (0..n)
                            .map(|s| min[k] + (max[k] - min[k]) * s as f64 / (n - 1) as f64)
                            .collect()
                    }
                };
                let (xs, ys, zs) = (axis(0), axis(1), axis(2));
                let idx = |a: usize, b: usize, c: usize| (a * ys.len() + b) * zs.len() + c;
                let mut points = Vec::new();
                let mut neighbours = Vec::new();
                for (a, x) in xs.iter().enumerate() {
                    for (b, y) in ys.iter().enumerate() {
                        for (c, z) in zs.iter().enumerate() {
                            points.push(Vector3::new(*x, *y, *z));
                            let mut nb = Vec::new();
                            let dims = [xs.len(), ys.len(), zs.len()];
                            let at = [a, b, c];
                            for d in 0..3 {
                                for step in [-1i64, 1] {
                                    let t = at[d] as i64 + step;
                                    if t >= 0 && (t as usize) < dims[d] {
                                        let mut q = at;
                                        q[d] = t as usize;
                                        nb.push(idx(q[0], q[1], q[2]));
                                    }
                                }
                            }
                            neighbours.push(nb);
                        }
                    }
                }
                (points, neighbours)
            }
            Region::Ball { radius } => {
                let dirs = fibonacci_sphere(2 * n * n);
                let mut points = vec![Vector3::zeros()];
                for s in 1..=n {
                    let r = radius * s as f64 / n as f64;
                    points.extend(dirs.iter().map(|d| d * r));
                }
                let spacing = (radius / n as f64).max(radius * (4.0 / dirs.len() as f64).sqrt());
                let neighbours = nearest_neighbours(&points, 1.6 * spacing);
                (points, neighbours)
            }
        }
    }
}

/// Near-uniform unit vectors on the sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn nearest_neighbours(points: &[Vector3<f64>], radius: f64) -> Vec<Vec<usize>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            (0..points.len())
                .filter(|&j| j != i && (points[j] - p).norm() <= radius)
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZefozClass {
    Exact,
    Near,
}

impl ZefozClass {
    pub fn name(self) -> &'static str {
        match self {
            ZefozClass::Exact => "exact-ZEFOZ",
            ZefozClass::Near => "near-ZEFOZ",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZefozCandidate {
    pub field: FieldVector,
    pub transition: (usize, usize),
    pub frequency: f64,
    /// MHz/mT.
    pub gradient_norm: f64,
    /// Ascending, MHz/mT².
    pub curvature_eigenvalues: [f64; 3],
    pub class: ZefozClass,
    /// False for minima pinned to the region boundary.
    pub stationary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZefozOptions {
    /// Grid points per axis (box) or magnitude shells (ball).
    pub resolution: usize,
    /// MHz/mT.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ZefozOptions {
    fn default() -> Self {
        Self {
            resolution: 9,
            tolerance: DEFAULT_REFINE_TOLERANCE,
            max_iterations: 60,
        }
    }
}

/// Representative of `{B, −B}` with the last non-zero component positive.
pub fn canonical_half_space(v: &Vector3<f64>) -> Vector3<f64> {
    for k in (0..3).rev() {
        if v[k].abs() > 1e-12 {
            return if v[k] < 0.0 { -v } else { *v };
        }
    }
    Vector3::zeros()
}

fn gradient_norm<R: FieldResponse + ?Sized>(r: &R, v: &Vector3<f64>) -> Option<f64> {
    r.gradient(&FieldVector(*v)).ok().map(|g| g.norm() * 1e3)
}

/// Damped Newton iteration on `∇ν = 0`, kept inside `region`.
fn refine<R: FieldResponse + ?Sized>(
    r: &R,
    start: Vector3<f64>,
    region: &Region,
    options: &ZefozOptions,
) -> Vector3<f64> {
    let mut x = start;
    let Some(mut norm) = gradient_norm(r, &x) else {
        return x;
    };
    for _ in 0..options.max_iterations {
        if norm < 1e-3 * options.tolerance {
            break;
        }
        let Ok(s) = sensitivity(r, &FieldVector(x)) else {
            break;
        };
        let eig = SymmetricEigen::new(s.curvature);
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        // pseudo-inverse Newton step
        let mut step = Vector3::zeros();
        for k in 0..3 {
            let l = eig.eigenvalues[k];
            if l.abs() > 1e-10 * scale {
                let v = eig.eigenvectors.column(k);
                step -= v * (v.dot(&s.gradient) / l);
            }
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let trial = region.project(x + step * t);
            if let Some(n) = gradient_norm(r, &trial) {
                if n < norm {
                    moved = (trial - x).norm() > 1e-12;
                    x = trial;
                    norm = n;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

/// Stationary points of the transition frequency within `region`, ranked by
/// ascending gradient norm. One representative of each `±B` pair is kept.
pub fn zefoz_search<R: FieldResponse + ?Sized>(
    r: &R,
    region: &Region,
    options: &ZefozOptions,
) -> Result<Vec<ZefozCandidate>> {
    region.validate()?;
    if region.is_empty() {
        return Ok(Vec::new());
    }
    let (points, neighbours) = region.grid(options.resolution);
    let norms: Vec<Option<f64>> = points.par_iter().map(|p| gradient_norm(r, p)).collect();
    let starts: Vec<Vector3<f64>> = (0..points.len())
        .filter(|&i| norms[i].is_some_and(|n| neighbours[i].iter().all(|&j| norms[j].is_none_or(|m| n <= m))))
        .map(|i| points[i])
        .collect();
    let refined: Vec<Vector3<f64>> = starts.par_iter().map(|s| refine(r, *s, region, options)).collect();
    let mut candidates: Vec<ZefozCandidate> = refined
        .iter()
        .filter_map(|x| {
            let field = FieldVector(*x);
            let s = sensitivity(r, &field).ok()?;
            let frequency = r.frequency(&field).ok()?;
            let gradient_norm = s.gradient.norm();
            let mut eigs: Vec<f64> = SymmetricEigen::new(s.curvature).eigenvalues.iter().copied().collect();
            eigs.sort_by(f64::total_cmp);
            let exact = gradient_norm < options.tolerance;
            Some(ZefozCandidate {
                field: FieldVector(canonical_half_space(x)),
                transition: r.transition(),
                frequency,
                gradient_norm,
                curvature_eigenvalues: [eigs[0], eigs[1], eigs[2]],
                class: if exact { ZefozClass::Exact } else { ZefozClass::Near },
                stationary: exact || !region.on_boundary(x),
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.gradient_norm.total_cmp(&b.gradient_norm).then_with(|| {
            a.field
                .0
                .iter()
                .zip(b.field.0.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut kept: Vec<ZefozCandidate> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| (k.field.0 - c.field.0).norm() > DEDUP_DISTANCE_MT) {
            kept.push(c);
        }
    }
    Ok(kept)
}
