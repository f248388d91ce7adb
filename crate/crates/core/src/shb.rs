//! Spectral hole burning: class enumeration, hole/antihole bookkeeping,
//! ground-level population dynamics and field-sweep maps.

use nalgebra::{Matrix4, Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::FieldVector;
use crate::spectra::{lorentzian, optical_lines, Grid, OpticalLineSet, SiteModel};

/// Boltzmann constant in GHz/K.
const BOLTZMANN_GHZ_PER_K: f64 = 20.836_619_12;

/// Default relative depletion below which an antihole becomes a pseudo-hole.
pub const DEFAULT_PSEUDO_HOLE_EPSILON: f64 = 0.1;

/// Default homogeneous width of rendered holes, GHz.
pub const DEFAULT_HOLE_WIDTH_GHZ: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAssignment {
    pub ground_level: usize,
    pub excited_level: usize,
    /// Centre detuning an ion needs for line (i, j) to sit on the burn, GHz.
    pub center_detuning: f64,
    pub weight: f64,
}

/// All classes resonant with `burn` (GHz from the line centre) whose weight
/// is at least `cutoff`.
pub fn enumerate_classes(
    site: &SiteModel,
    field: &FieldVector,
    burn: f64,
    cutoff: f64,
) -> Result<Vec<ClassAssignment>> {
    let set = optical_lines(site, field);
    classes_from_lines(site, &set, burn, cutoff)
}

fn classes_from_lines(site: &SiteModel, set: &OpticalLineSet, burn: f64, cutoff: f64) -> Result<Vec<ClassAssignment>> {
    if !(cutoff > 0.0 && cutoff <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "class cutoff must lie in (0, 1], got {cutoff}"
        )));
    }
    let fwhm = site.fwhm_ghz();
    Ok(set
        .lines
        .iter()
        .map(|l| {
            let center_detuning = burn - l.detuning;
            ClassAssignment {
                ground_level: l.ground_level,
                excited_level: l.excited_level,
                center_detuning,
                weight: lorentzian(center_detuning, fwhm) * l.strength,
            }
        })
        .filter(|c| c.weight >= cutoff)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Hole,
    Antihole,
    PseudoHole,
}

impl Polarity {
    pub fn name(self) -> &'static str {
        match self {
            Polarity::Hole => "hole",
            Polarity::Antihole => "antihole",
            Polarity::PseudoHole => "pseudo-hole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleEntry {
    /// Probe detuning from the burn frequency, GHz.
    pub detuning: f64,
    pub polarity: Polarity,
    /// Magnitude, in [0, 1].
    pub weight: f64,
    /// Signed contribution to the transmission change: holes and pseudo-holes
    /// negative, antiholes positive.
    pub amplitude: f64,
    /// Burned class `(i, j)`.
    pub class: (usize, usize),
    /// Probed optical transition `(i', j')`.
    pub probe: (usize, usize),
    /// `Ee[j'] − Ee[j]`.
    pub excited_offset: f64,
    /// `Eg[i] − Eg[i']`; zero for holes.
    pub ground_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolePattern {
    pub entries: Vec<HoleEntry>,
    pub classes: Vec<ClassAssignment>,
}

impl HolePattern {
    pub fn of_polarity(&self, polarity: Polarity) -> impl Iterator<Item = &HoleEntry> {
        self.entries.iter().filter(move |e| e.polarity == polarity)
    }

    /// Largest violation of the hole-spacing and antihole-offset identities
    /// against the supplied level energies, GHz.
    pub fn bookkeeping_error(&self, set: &OpticalLineSet) -> f64 {
        let eg = &set.ground.energies;
        let ee = &set.excited.energies;
        self.entries
            .iter()
            .map(|e| {
                let (i, j) = e.class;
                let (ip, jp) = e.probe;
                let excited = ee[jp] - ee[j];
                let ground = eg[i] - eg[ip];
                (e.excited_offset - excited)
                    .abs()
                    .max((e.ground_offset - ground).abs())
                    .max((e.detuning - (e.excited_offset + e.ground_offset)).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Ground-level relaxation, optical pumping and burn duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMatrix {
    /// `rates[k][l]`: relaxation rate from level k to level l, 1/s.
    pub rates: [[f64; 4]; 4],
    /// Optical pump rate out of the burned level, 1/s.
    pub pump_rate: f64,
    /// Burn duration, s; `f64::INFINITY` selects the steady state.
    pub duration: f64,
    /// When set, each pair's given rate is used downhill and the uphill rate
    /// follows from the Boltzmann factor at this temperature (K).
    pub temperature_k: Option<f64>,
    /// Ground energies (GHz) used for thermal populations and detailed balance.
    /// Hole-pattern calculations replace them with the energies at the field.
    pub energies: [f64; 4],
    /// Relative depletion that turns an antihole into a pseudo-hole.
    pub epsilon: f64,
}

impl RateMatrix {
    pub fn new(rates: [[f64; 4]; 4], pump_rate: f64, duration: f64) -> Result<Self> {
        let m = Self {
            rates,
            pump_rate,
            duration,
            temperature_k: None,
            energies: [0.0; 4],
            epsilon: DEFAULT_PSEUDO_HOLE_EPSILON,
        };
        m.validate()?;
        Ok(m)
    }

    /// Symmetric relaxation from pair rates `(k, l, rate)`, 0-based levels.
    pub fn symmetric(pairs: &[(usize, usize, f64)], pump_rate: f64, duration: f64) -> Result<Self> {
        let mut rates = [[0.0; 4]; 4];
        for &(k, l, r) in pairs {
            if k > 3 || l > 3 {
                return Err(Error::LevelIndex(k.max(l)));
            }
            rates[k][l] = r;
            rates[l][k] = r;
        }
        Self::new(rates, pump_rate, duration)
    }

    pub fn with_detailed_balance(mut self, temperature_k: f64, energies: [f64; 4]) -> Result<Self> {
        if !(temperature_k > 0.0) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive, got {temperature_k}"
            )));
        }
        self.temperature_k = Some(temperature_k);
        self.energies = energies;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.rates.iter().flatten().chain([&self.pump_rate]);
        for &r in all {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "rates must be finite and non-negative, got {r}"
                )));
            }
        }
        if !(self.duration >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "burn duration must be non-negative, got {}",
                self.duration
            )));
        }
        Ok(())
    }

    /// Equilibrium populations with total 1.
    pub fn thermal(&self) -> Vector4<f64> {
        match self.temperature_k {
            None => Vector4::repeat(0.25),
            Some(t) => {
                let e0 = self.energies.iter().copied().fold(f64::INFINITY, f64::min);
                let w = Vector4::from_fn(|k, _| (-(self.energies[k] - e0) / (BOLTZMANN_GHZ_PER_K * t)).exp());
                w / w.sum()
            }
        }
    }

    fn relaxation_rate(&self, k: usize, l: usize) -> f64 {
        match self.temperature_k {
            None => self.rates[k][l],
            Some(t) => {
                let (lo, hi) = if self.energies[k] <= self.energies[l] {
                    (k, l)
                } else {
                    (l, k)
                };
                let down = self.rates[hi][lo].max(self.rates[lo][hi]);
                if k == hi {
                    down
                } else {
                    down * (-(self.energies[hi] - self.energies[lo]) / (BOLTZMANN_GHZ_PER_K * t)).exp()
                }
            }
        }
    }

    /// Generator `M` of `dn/dt = M n` with level `pumped` optically drained
    /// and the excited state decaying uniformly back to all four levels.
    pub fn generator(&self, pumped: Option<usize>) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for k in 0..4 {
            for l in 0..4 {
                if k != l {
                    let r = self.relaxation_rate(k, l);
                    m[(l, k)] += r;
                    m[(k, k)] -= r;
                }
            }
        }
        if let Some(p) = pumped {
            for l in 0..4 {
                m[(l, p)] += 0.25 * self.pump_rate;
            }
            m[(p, p)] -= self.pump_rate;
        }
        m
    }
}

fn steady_state(m: &Matrix4<f64>, start: &Vector4<f64>) -> Vector4<f64> {
    let total = start.sum();
    let mut a = *m;
    for c in 0..4 {
        a[(3, c)] = 1.0;
    }
    let scale = m.amax().max(1.0);
    let lu = a.lu();
    let det = lu.determinant();
    if det.abs() > 1e-12 * scale.powi(3) {
        if let Some(x) = lu.solve(&Vector4::new(0.0, 0.0, 0.0, total)) {
            return x;
        }
    }
    // several recurrent classes: the long-time limit depends on the start
    let slowest = m
        .iter()
        .filter(|v| v.abs() > 0.0)
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !slowest.is_finite() {
        return *start;
    }
    (m * (200.0 / slowest)).exp() * start
}

/// Ground populations after burning level `pumped` for the configured
/// duration, starting from thermal equilibrium (total 1).
pub fn populations_after_burn(rates: &RateMatrix, pumped: usize) -> Result<Vector4<f64>> {
    populations_after_burn_for(rates, pumped, rates.duration)
}

pub fn populations_after_burn_for(rates: &RateMatrix, pumped: usize, duration: f64) -> Result<Vector4<f64>> {
    if pumped > 3 {
        return Err(Error::LevelIndex(pumped));
    }
    rates.validate()?;
    if !(duration >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "burn duration must be non-negative, got {duration}"
        )));
    }
    let start = rates.thermal();
    let m = rates.generator(Some(pumped));
    Ok(if duration.is_infinite() {
        steady_state(&m, &start)
    } else {
        (m * duration).exp() * start
    })
}

/// Relative population change of each ground level after burning `pumped`.
/// Without a rate model the burned level empties and the population spreads
/// evenly over the other three.
fn relative_changes(rates: Option<&RateMatrix>, pumped: usize) -> Result<[f64; 4]> {
    match rates {
        None => {
            let mut d = [1.0 / 3.0; 4];
            d[pumped] = -1.0;
            Ok(d)
        }
        Some(r) => {
            let thermal = r.thermal();
            let n = populations_after_burn(r, pumped)?;
            Ok(std::array::from_fn(|k| (n[k] - thermal[k]) / thermal[k]))
        }
    }
}

/// Holes and antiholes seen by a probe after burning at `burn` (GHz from the
/// line centre). Every class is retained; weights carry the envelope.
pub fn hole_pattern(
    site: &SiteModel,
    field: &FieldVector,
    burn: f64,
    rates: Option<&RateMatrix>,
) -> Result<HolePattern> {
    let set = optical_lines(site, field);
    hole_pattern_from_lines(site, &set, burn, rates)
}

pub fn hole_pattern_from_lines(
    site: &SiteModel,
    set: &OpticalLineSet,
    burn: f64,
    rates: Option<&RateMatrix>,
) -> Result<HolePattern> {
    let classes = classes_from_lines(site, set, burn, f64::MIN_POSITIVE)?;
    let eg = &set.ground.energies;
    let ee = &set.excited.energies;
    let at_field = rates.map(|r| match r.temperature_k {
        Some(_) => RateMatrix { energies: *eg, ..*r },
        None => *r,
    });
    let mut changes = [[0.0; 4]; 4];
    for (p, c) in changes.iter_mut().enumerate() {
        *c = relative_changes(at_field.as_ref(), p)?;
    }
    let epsilon = rates.map(|r| r.epsilon);
    let mut entries = Vec::with_capacity(classes.len() * 16);
    for c in &classes {
        let (i, j) = (c.ground_level, c.excited_level);
        for ip in 0..4 {
            let change = changes[i][ip];
            let polarity = if ip == i {
                Polarity::Hole
            } else if epsilon.is_some_and(|eps| change < -eps) {
                Polarity::PseudoHole
            } else {
                Polarity::Antihole
            };
            for jp in 0..4 {
                let excited_offset = ee[jp] - ee[j];
                let ground_offset = eg[i] - eg[ip];
                let amplitude = c.weight * set.line(ip, jp).overlap * change;
                entries.push(HoleEntry {
                    detuning: excited_offset + ground_offset,
                    polarity,
                    weight: amplitude.abs().min(1.0),
                    amplitude,
                    class: (i, j),
                    probe: (ip, jp),
                    excited_offset,
                    ground_offset,
                });
            }
        }
    }
    Ok(HolePattern { entries, classes })
}

/// How the burn frequency is chosen at each field of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BurnRule {
    /// Fixed detuning from the zero-field line centre, GHz.
    Fixed(f64),
    /// Follow optical line (ground level, excited level).
    Track(usize, usize),
}

impl BurnRule {
    fn burn(&self, set: &OpticalLineSet) -> f64 {
        match *self {
            BurnRule::Fixed(d) => d,
            BurnRule::Track(i, j) => set.line(i, j).detuning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    /// Probe detuning grid relative to the burn, GHz.
    pub grid: Grid,
    /// Lorentzian FWHM of each rendered hole, GHz.
    pub hole_width: f64,
}

impl MapOptions {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            hole_width: DEFAULT_HOLE_WIDTH_GHZ,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShbMap {
    /// Field magnitudes, mT (rows).
    pub fields: Vec<f64>,
    /// Probe detunings, GHz (columns).
    pub detunings: Vec<f64>,
    /// Row-major signed amplitudes scaled into [−1, 1].
    pub amplitudes: Vec<Vec<f64>>,
    pub patterns: Vec<HolePattern>,
}

/// Renders a pattern on `grid` as a signed sum of Lorentzian holes.
pub fn render_pattern(pattern: &HolePattern, grid: &Grid, hole_width: f64) -> Vec<f64> {
    grid.points()
        .iter()
        .map(|&x| {
            pattern
                .entries
                .iter()
                .map(|e| e.amplitude * lorentzian(x - e.detuning, hole_width))
                .sum()
        })
        .collect()
}

pub fn shb_field_map(
    site: &SiteModel,
    direction: &Vector3<f64>,
    magnitudes: &[f64],
    rule: BurnRule,
    rates: Option<&RateMatrix>,
    options: &MapOptions,
) -> Result<ShbMap> {
    if magnitudes.is_empty() {
        return Err(Error::InvalidInput("field magnitude list is empty".into()));
    }
    if magnitudes.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidInput("field magnitudes must be finite".into()));
    }
    let increasing = magnitudes.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = magnitudes.windows(2).all(|w| w[1] <= w[0]);
    if !increasing && !decreasing {
        return Err(Error::InvalidInput("field magnitudes must be monotone".into()));
    }
    if !(direction.norm() > 0.0) {
        return Err(Error::InvalidInput("field direction must be non-zero".into()));
    }
    if !(options.hole_width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "hole width must be positive, got {}",
            options.hole_width
        )));
    }
    options.grid.validate()?;
    let rows: Vec<(HolePattern, Vec<f64>)> = magnitudes
        .par_iter()
        .map(|&b| {
            let field = FieldVector::along(direction, b);
            let set = optical_lines(site, &field);
            let pattern = hole_pattern_from_lines(site, &set, rule.burn(&set), rates)?;
            let row = render_pattern(&pattern, &options.grid, options.hole_width);
            Ok((pattern, row))
        })
        .collect::<Result<_>>()?;
    let peak = rows
        .iter()
        .flat_map(|(_, r)| r.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let (patterns, mut amplitudes): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    if peak > 0.0 {
        for row in &mut amplitudes {
            row.iter_mut().for_each(|v| *v /= peak);
        }
    }
    Ok(ShbMap {
        fields: magnitudes.to_vec(),
        detunings: options.grid.points(),
        amplitudes,
        patterns,
    })
}
