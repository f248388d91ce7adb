//! Magnetic-resonance observables: ODMR line sets and EPR resonance fields.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{
    energies, solve, zeeman_operators, Axis, FieldVector, Hamiltonian, SpinSystem, Subsite, C64, LEVEL_PAIRS,
};

/// Options shared by the ODMR and EPR calculations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicrowaveOptions {
    /// Direction of the oscillating field (crystal frame).
    pub ac_direction: Vector3<f64>,
    /// Fraction of the largest moment above which a line counts as strong.
    pub strong_threshold: f64,
}

impl Default for MicrowaveOptions {
    fn default() -> Self {
        Self {
            ac_direction: Axis::B.unit(),
            strong_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdmrLine {
    pub frequency_mhz: f64,
    pub lower: usize,
    pub upper: usize,
    /// `|⟨upper|(g·S)·n_ac|lower⟩|²` including the nuclear Zeeman term.
    pub moment: f64,
    pub strong: bool,
    /// Measured linewidth, MHz; not computed.
    pub linewidth_mhz: Option<f64>,
}

fn ac_operator(sys: &SpinSystem, n: &Vector3<f64>) -> Result<Hamiltonian> {
    let norm = n.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidInput(
            "oscillating-field direction must be a non-zero vector".into(),
        ));
    }
    let ops = zeeman_operators(sys);
    let scale = 1.0 / (norm * sys.constants.mu_b * 1e-3);
    Ok((0..3).fold(Hamiltonian::zeros(), |acc, k| {
        acc + ops[k] * C64::new(n[k] * scale, 0.0)
    }))
}

/// The six transitions among the four levels at `field`, lowest pair first.
pub fn odmr_lines(sys: &SpinSystem, field: &FieldVector, options: &MicrowaveOptions) -> Result<Vec<OdmrLine>> {
    let es = solve(sys, field);
    let op = ac_operator(sys, &options.ac_direction)?;
    let mut lines: Vec<OdmrLine> = LEVEL_PAIRS
        .iter()
        .map(|&(i, j)| OdmrLine {
            frequency_mhz: 1e3 * (es.energies[j] - es.energies[i]),
            lower: i,
            upper: j,
            moment: es.matrix_element(&op, j, i).norm_sqr(),
            strong: false,
            linewidth_mhz: None,
        })
        .collect();
    let max = lines.iter().map(|l| l.moment).fold(0.0, f64::max);
    for l in &mut lines {
        l.strong = max > 0.0 && l.moment >= options.strong_threshold * max;
    }
    Ok(lines)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EprResonance {
    pub field_mt: f64,
    pub direction: Vector3<f64>,
    pub lower: usize,
    pub upper: usize,
    pub subsite: Subsite,
    pub moment: f64,
}

/// Resonances are refined until the transition frequency is this close to
/// the microwave frequency, GHz.
pub const EPR_FREQUENCY_TOLERANCE: f64 = 1e-5;

const EPR_GRID_STEP_MT: f64 = 1.0;
const EPR_MAX_SUBDIVISION: u32 = 6;

fn detunings_at(sys: &SpinSystem, dir: &Vector3<f64>, b: f64, nu: f64) -> [f64; 6] {
    let e = energies(sys, &FieldVector::along(dir, b));
    LEVEL_PAIRS.map(|(i, j)| e[j] - e[i] - nu)
}

fn bisect(sys: &SpinSystem, dir: &Vector3<f64>, nu: f64, pair: usize, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = detunings_at(sys, dir, mid, nu)[pair];
        if f_mid.abs() < 1e-3 * EPR_FREQUENCY_TOLERANCE || hi - lo < 1e-9 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Collects sign changes of every branch in `(lo, hi]`, halving the cell
/// when a branch turns around inside it.
#[allow(clippy::too_many_arguments)]
fn scan_cell(
    sys: &SpinSystem,
    dir: &Vector3<f64>,
    nu: f64,
    lo: f64,
    hi: f64,
    f_lo: &[f64; 6],
    f_hi: &[f64; 6],
    depth: u32,
    roots: &mut Vec<(usize, f64)>,
) {
    let mid = 0.5 * (lo + hi);
    let f_mid = detunings_at(sys, dir, mid, nu);
    let turning = (0..6).any(|p| (f_mid[p] - f_lo[p]) * (f_hi[p] - f_mid[p]) < 0.0);
    if turning && depth < EPR_MAX_SUBDIVISION {
        scan_cell(sys, dir, nu, lo, mid, f_lo, &f_mid, depth + 1, roots);
        scan_cell(sys, dir, nu, mid, hi, &f_mid, f_hi, depth + 1, roots);
        return;
    }
    for p in 0..6 {
        if f_hi[p] == 0.0 {
            roots.push((p, hi));
        } else if f_lo[p] != 0.0 && (f_lo[p] < 0.0) != (f_hi[p] < 0.0) {
            roots.push((p, bisect(sys, dir, nu, p, lo, hi, f_lo[p])));
        }
    }
}

/// Resonances of one subsite with `lo < |B| ≤ hi` along the unit vector
/// `dir`, unsorted.
pub fn resonances_in_window(
    sys: &SpinSystem,
    dir: &Vector3<f64>,
    nu: f64,
    lo: f64,
    hi: f64,
    op: &Hamiltonian,
) -> Vec<EprResonance> {
    let cells = ((hi - lo) / EPR_GRID_STEP_MT).ceil().max(1.0) as usize;
    let step = (hi - lo) / cells as f64;
    let mut roots = Vec::new();
    let mut f_lo = detunings_at(sys, dir, lo, nu);
    for k in 0..cells {
        let a = lo + k as f64 * step;
        let b = if k + 1 == cells { hi } else { lo + (k + 1) as f64 * step };
        let f_hi = detunings_at(sys, dir, b, nu);
        scan_cell(sys, dir, nu, a, b, &f_lo, &f_hi, 0, &mut roots);
        f_lo = f_hi;
    }
    roots
        .into_iter()
        .map(|(p, b)| {
            let (i, j) = LEVEL_PAIRS[p];
            let es = solve(sys, &FieldVector::along(dir, b));
            EprResonance {
                field_mt: b,
                direction: *dir,
                lower: i,
                upper: j,
                subsite: sys.subsite,
                moment: es.matrix_element(op, j, i).norm_sqr(),
            }
        })
        .collect()
}

/// Oscillating-field coupling operator, normalized so a free electron with
/// g = 1 has unit matrix elements of `S`.
pub fn microwave_operator(sys: &SpinSystem, options: &MicrowaveOptions) -> Result<Hamiltonian> {
    ac_operator(sys, &options.ac_direction)
}

/// Field magnitudes in `(0, b_max]` along `direction` at which any
/// transition of either magnetic subsite matches `nu_mw` (GHz). Sorted by
/// field, then subsite, then transition.
pub fn epr_resonance_fields(
    sys: &SpinSystem,
    direction: &Vector3<f64>,
    nu_mw: f64,
    b_max: f64,
    options: &MicrowaveOptions,
) -> Result<Vec<EprResonance>> {
    if !(nu_mw > 0.0) || !nu_mw.is_finite() {
        return Err(Error::InvalidInput(format!(
            "microwave frequency must be positive, got {nu_mw}"
        )));
    }
    if !(b_max > 0.0) || !b_max.is_finite() {
        return Err(Error::InvalidInput(format!(
            "maximum field must be positive, got {b_max}"
        )));
    }
    let norm = direction.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidInput("field direction must be a non-zero vector".into()));
    }
    let dir = direction / norm;
    let mut out = Vec::new();
    for subsite in Subsite::BOTH {
        let s = sys.with_subsite(subsite);
        let op = ac_operator(&s, &options.ac_direction)?;
        out.extend(resonances_in_window(&s, &dir, nu_mw, 0.0, b_max, &op));
    }
    out.sort_by(|a, b| {
        a.field_mt
            .total_cmp(&b.field_mt)
            .then(a.subsite.number().cmp(&b.subsite.number()))
            .then((a.lower, a.upper).cmp(&(b.lower, b.upper)))
    });
    Ok(out)
}

/// Crystallographic rotation planes. The angle is measured from the first
/// named axis towards the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    D1D2,
    BD1,
    BD2,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::D1D2, Plane::BD1, Plane::BD2];

    pub fn name(self) -> &'static str {
        match self {
            Plane::D1D2 => "D1-D2",
            Plane::BD1 => "b-D1",
            Plane::BD2 => "b-D2",
        }
    }

    pub fn parse(s: &str) -> Option<Plane> {
        match s.trim().to_ascii_lowercase().replace(['_', '–'], "-").as_str() {
            "d1-d2" | "d1d2" => Some(Plane::D1D2),
            "b-d1" | "bd1" => Some(Plane::BD1),
            "b-d2" | "bd2" => Some(Plane::BD2),
            _ => None,
        }
    }

    pub fn direction(self, angle_deg: f64) -> Vector3<f64> {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let (from, to) = match self {
            Plane::D1D2 => (Axis::D1, Axis::D2),
            Plane::BD1 => (Axis::B, Axis::D1),
            Plane::BD2 => (Axis::B, Axis::D2),
        };
        from.unit() * c + to.unit() * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularPoint {
    pub angle_deg: f64,
    pub resonance: EprResonance,
}

/// Resonance fields over `[0°, 180°]` in `plane`, ordered by angle then field.
pub fn epr_angular_map(
    sys: &SpinSystem,
    plane: Plane,
    step_deg: f64,
    nu_mw: f64,
    b_max: f64,
    options: &MicrowaveOptions,
) -> Result<Vec<AngularPoint>> {
    if !(step_deg > 0.0) || !step_deg.is_finite() {
        return Err(Error::InvalidInput(format!(
            "angle step must be positive, got {step_deg}"
        )));
    }
    let n = (180.0 / step_deg + 1e-9).floor() as usize;
    let rows: Vec<Vec<AngularPoint>> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let angle = k as f64 * step_deg;
            let res = epr_resonance_fields(sys, &plane.direction(angle), nu_mw, b_max, options)?;
            Ok(res
                .into_iter()
                .map(|resonance| AngularPoint {
                    angle_deg: angle,
                    resonance,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
