//! Optical-hyperfine line sets, inhomogeneously broadened absorption
//! profiles, and level-order determination from measured peak positions.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{solve, EigenSystem, FieldVector, SpinSystem, Subsite};
use crate::presets::{self, Site, State};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// How relative line strengths are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntensityModel {
    /// `|⟨excited spin state | ground spin state⟩|²`.
    #[default]
    SpinOverlap,
    Uniform,
}

/// Sign of `A1·A2·A3` for one electronic state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parity {
    Positive,
    Negative,
}

impl Parity {
    fn of(sys: &SpinSystem) -> Parity {
        if sys.hyperfine_parity() < 0.0 {
            Parity::Negative
        } else {
            Parity::Positive
        }
    }

    fn sign(self) -> f64 {
        match self {
            Parity::Positive => 1.0,
            Parity::Negative => -1.0,
        }
    }

    fn symbol(self) -> char {
        match self {
            Parity::Positive => '+',
            Parity::Negative => '-',
        }
    }
}

/// One of the four distinguishable relative-sign combinations of the ground
/// and excited hyperfine eigenvalues. Flipping two eigenvalues of one state
/// leaves the class, and the level order, unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignClass {
    pub ground: Parity,
    pub excited: Parity,
}

impl SignClass {
    pub const ALL: [SignClass; 4] = [
        SignClass {
            ground: Parity::Positive,
            excited: Parity::Positive,
        },
        SignClass {
            ground: Parity::Positive,
            excited: Parity::Negative,
        },
        SignClass {
            ground: Parity::Negative,
            excited: Parity::Positive,
        },
        SignClass {
            ground: Parity::Negative,
            excited: Parity::Negative,
        },
    ];

    pub fn label(&self) -> String {
        format!("g{}e{}", self.ground.symbol(), self.excited.symbol())
    }

    /// Inverse of [`label`](Self::label).
    pub fn parse(s: &str) -> Option<SignClass> {
        Self::ALL.into_iter().find(|c| c.label() == s.trim())
    }

    /// Eigenvalue sign patterns belonging to `parity`; any of them gives
    /// the same zero-field level order.
    pub fn sign_patterns(parity: Parity) -> [[f64; 3]; 4] {
        let s = parity.sign();
        [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteModel {
    pub ground: SpinSystem,
    pub excited: SpinSystem,
    pub center_wavelength_nm: f64,
    pub fwhm_mhz: f64,
    pub intensity: IntensityModel,
}

impl SiteModel {
    pub fn new(ground: SpinSystem, excited: SpinSystem, center_wavelength_nm: f64, fwhm_mhz: f64) -> Result<Self> {
        if !(fwhm_mhz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "inhomogeneous FWHM must be positive, got {fwhm_mhz}"
            )));
        }
        Ok(Self {
            ground,
            excited,
            center_wavelength_nm,
            fwhm_mhz,
            intensity: IntensityModel::default(),
        })
    }

    pub fn preset(site: Site) -> Self {
        Self {
            ground: presets::spin_system(site, State::Ground),
            excited: presets::spin_system(site, State::Excited),
            center_wavelength_nm: site.center_wavelength_nm(),
            fwhm_mhz: site.inhomogeneous_fwhm_mhz(),
            intensity: IntensityModel::default(),
        }
    }

    pub fn system(&self, state: State) -> &SpinSystem {
        match state {
            State::Ground => &self.ground,
            State::Excited => &self.excited,
        }
    }

    pub fn with_system(mut self, state: State, sys: SpinSystem) -> Self {
        match state {
            State::Ground => self.ground = sys,
            State::Excited => self.excited = sys,
        }
        self
    }

    pub fn with_intensity(mut self, intensity: IntensityModel) -> Self {
        self.intensity = intensity;
        self
    }

    pub fn with_subsite(mut self, subsite: Subsite) -> Self {
        self.ground = self.ground.with_subsite(subsite);
        self.excited = self.excited.with_subsite(subsite);
        self
    }

    pub fn fwhm_ghz(&self) -> f64 {
        self.fwhm_mhz * 1e-3
    }

    pub fn center_frequency_ghz(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_wavelength_nm
    }

    pub fn sign_class(&self) -> SignClass {
        SignClass {
            ground: Parity::of(&self.ground),
            excited: Parity::of(&self.excited),
        }
    }

    /// The same model with hyperfine signs chosen to realise `class`.
    pub fn with_sign_class(mut self, class: SignClass) -> Self {
        if Parity::of(&self.ground) != class.ground {
            self.ground = self.ground.with_negated_hyperfine();
        }
        if Parity::of(&self.excited) != class.excited {
            self.excited = self.excited.with_negated_hyperfine();
        }
        self
    }
}

/// Lorentzian of unit peak height and full width `fwhm`.
pub fn lorentzian(x: f64, fwhm: f64) -> f64 {
    let u = 2.0 * x / fwhm;
    1.0 / (1.0 + u * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalLine {
    pub ground_level: usize,
    pub excited_level: usize,
    /// GHz from the line centre.
    pub detuning: f64,
    /// Normalized so the strongest line is 1.
    pub strength: f64,
    /// Un-normalized strength; sums to 1 over the excited levels of one
    /// ground level.
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalLineSet {
    pub lines: Vec<OpticalLine>,
    pub ground: EigenSystem,
    pub excited: EigenSystem,
}

impl OpticalLineSet {
    pub fn line(&self, ground_level: usize, excited_level: usize) -> &OpticalLine {
        &self.lines[4 * ground_level + excited_level]
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.detuning).collect()
    }
}

/// The 16 optical-hyperfine lines, ordered ground-major.
pub fn optical_lines(site: &SiteModel, field: &FieldVector) -> OpticalLineSet {
    let ground = solve(&site.ground, field);
    let excited = solve(&site.excited, field);
    let mut lines = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..4 {
            let overlap = match site.intensity {
                IntensityModel::Uniform => 0.25,
                IntensityModel::SpinOverlap => (excited.state(j).adjoint() * ground.state(i))[(0, 0)].norm_sqr(),
            };
            lines.push(OpticalLine {
                ground_level: i,
                excited_level: j,
                detuning: excited.energies[j] - ground.energies[i],
                strength: overlap,
                overlap,
            });
        }
    }
    let max = lines.iter().map(|l| l.strength).fold(0.0, f64::max);
    if max > 0.0 {
        for l in &mut lines {
            l.strength /= max;
        }
    }
    OpticalLineSet { lines, ground, excited }
}

/// Inclusive, uniformly spaced sample points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        let g = Self { start, stop, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "step must be positive and bounds finite: {self:?}"
            )));
        }
        if self.stop < self.start {
            return Err(Error::InvalidGrid(format!(
                "empty grid: stop {} < start {}",
                self.stop, self.start
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.validate().is_err()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub detunings: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

/// Sums strength-weighted Lorentzians of width `fwhm` at `positions`; each
/// output sample adds lines in input order.
pub fn render_lines(positions: &[(f64, f64)], fwhm: f64, grid: &Grid) -> Vec<f64> {
    grid.points()
        .par_iter()
        .map(|&x| positions.iter().map(|&(d, w)| w * lorentzian(x - d, fwhm)).sum())
        .collect()
}

pub fn absorption_spectrum(site: &SiteModel, field: &FieldVector, grid: &Grid) -> Result<Spectrum> {
    grid.validate()?;
    let fwhm = site.fwhm_ghz();
    if grid.step >= fwhm / 10.0 {
        return Err(Error::InvalidGrid(format!(
            "step {} GHz must be below FWHM/10 = {} GHz",
            grid.step,
            fwhm / 10.0
        )));
    }
    let set = optical_lines(site, field);
    let lines: Vec<(f64, f64)> = set.lines.iter().map(|l| (l.detuning, l.strength)).collect();
    let mut amplitudes = render_lines(&lines, fwhm, grid);
    let max = amplitudes.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        amplitudes.iter_mut().for_each(|a| *a /= max);
    }
    Ok(Spectrum {
        detunings: grid.points(),
        amplitudes,
    })
}

/// Local maxima whose topographic prominence is at least
/// `min_prominence` × the global maximum. Returns detunings.
pub fn find_peaks(spectrum: &Spectrum, min_prominence: f64) -> Vec<f64> {
    let y = &spectrum.amplitudes;
    let n = y.len();
    let global = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = min_prominence * global;
    let mut peaks = Vec::new();
    let mut k = 1;
    while k + 1 < n {
        if y[k] > y[k - 1] {
            // handle flat tops: find the end of the plateau
            let mut end = k;
            while end + 1 < n && y[end + 1] == y[k] {
                end += 1;
            }
            if end + 1 < n && y[end + 1] < y[k] {
                let top = y[k];
                let mut left_min = top;
                let mut l = k;
                while l > 0 {
                    l -= 1;
                    if y[l] > top {
                        break;
                    }
                    left_min = left_min.min(y[l]);
                }
                let mut right_min = top;
                let mut r = end;
                while r + 1 < n {
                    r += 1;
                    if y[r] > top {
                        break;
                    }
                    right_min = right_min.min(y[r]);
                }
                if top - left_min.max(right_min) >= threshold {
                    peaks.push(0.5 * (spectrum.detunings[k] + spectrum.detunings[end]));
                }
            }
            k = end + 1;
        } else {
            k += 1;
        }
    }
    peaks
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassFit {
    pub class: SignClass,
    /// Fitted global centre offset, GHz.
    pub offset: f64,
    /// RMS of measured − (line + offset), GHz.
    pub rms: f64,
    /// Index of the model line each peak was assigned to.
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport {
    /// Best (lowest RMS) first.
    pub ranked: Vec<ClassFit>,
    /// Classes whose fit is indistinguishable from the best; empty when the
    /// winner is unique.
    pub tied: Vec<SignClass>,
}

impl OrderingReport {
    pub fn best(&self) -> &ClassFit {
        &self.ranked[0]
    }

    pub fn is_unique(&self) -> bool {
        self.tied.is_empty()
    }
}

/// Two fits are tied unless the worse is above `TIE_RATIO` × the better and
/// above `TIE_FLOOR_GHZ`.
const TIE_RATIO: f64 = 10.0;
const TIE_FLOOR_GHZ: f64 = 1e-3;

fn fit_offset(lines: &[f64], peaks: &[f64]) -> (f64, f64, Vec<usize>) {
    let nearest = |p: f64, offset: f64| -> usize {
        let mut best = 0;
        for (k, d) in lines.iter().enumerate() {
            if (p - offset - d).abs() < (p - offset - lines[best]).abs() {
                best = k;
            }
        }
        best
    };
    let mut best = (0.0, f64::INFINITY, Vec::new());
    for &p in peaks {
        for &d in lines {
            let mut offset = p - d;
            let mut assignment: Vec<usize> = peaks.iter().map(|&q| nearest(q, offset)).collect();
            for _ in 0..32 {
                offset = peaks.iter().zip(&assignment).map(|(q, &k)| q - lines[k]).sum::<f64>() / peaks.len() as f64;
                let next: Vec<usize> = peaks.iter().map(|&q| nearest(q, offset)).collect();
                if next == assignment {
                    break;
                }
                assignment = next;
            }
            let rms = (peaks
                .iter()
                .zip(&assignment)
                .map(|(q, &k)| (q - offset - lines[k]).powi(2))
                .sum::<f64>()
                / peaks.len() as f64)
                .sqrt();
            if rms < best.1 {
                best = (offset, rms, assignment);
            }
        }
    }
    best
}

/// Ranks the four sign classes by how well their zero-field line positions,
/// shifted by a single fitted offset, explain the measured peaks (GHz).
pub fn ordering_search(site: &SiteModel, peaks: &[f64]) -> Result<OrderingReport> {
    if peaks.len() < 4 {
        return Err(Error::NotEnoughData(format!(
            "ordering search needs at least 4 peak positions, got {}",
            peaks.len()
        )));
    }
    let mut ranked: Vec<ClassFit> = SignClass::ALL
        .iter()
        .map(|&class| {
            let model = site.with_sign_class(class);
            let lines = optical_lines(&model, &FieldVector::zero()).detunings();
            let (offset, rms, assignment) = fit_offset(&lines, peaks);
            ClassFit {
                class,
                offset,
                rms,
                assignment,
            }
        })
        .collect();
    ranked.sort_by(|a, b| a.rms.total_cmp(&b.rms).then(a.class.cmp(&b.class)));
    let best = ranked[0].rms;
    let tied: Vec<SignClass> = ranked[1..]
        .iter()
        .filter(|f| f.rms <= (TIE_RATIO * best).max(TIE_FLOOR_GHZ))
        .map(|f| f.class)
        .collect();
    let tied = if tied.is_empty() {
        tied
    } else {
        std::iter::once(ranked[0].class).chain(tied).collect()
    };
    Ok(OrderingReport { ranked, tied })
}
