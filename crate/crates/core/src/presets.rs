//! Built-in parameter sets for the two crystallographic sites of
//! ¹⁷¹Yb³⁺:Y₂SiO₅, plus reference crystal-frame matrices for the same tensors
//! (kept for regression checks only).

use crate::hamiltonian::SpinSystem;
use crate::tensor::{EulerAngles, Frame, PrincipalTensor, SymmetricTensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum State {
    Ground,
    Excited,
}

impl Site {
    pub const ALL: [Site; 2] = [Site::I, Site::II];

    pub fn name(self) -> &'static str {
        match self {
            Site::I => "site-I",
            Site::II => "site-II",
        }
    }

    /// Accepts `I`, `1`, `site-I`, `II`, `2`, `site-II` (case-insensitive).
    pub fn parse(s: &str) -> Option<Site> {
        match s
            .trim()
            .to_ascii_lowercase()
            .trim_start_matches("site-")
            .trim_start_matches("site")
        {
            "i" | "1" => Some(Site::I),
            "ii" | "2" => Some(Site::II),
            _ => None,
        }
    }

    /// Vacuum wavelength of the zero-phonon line, nm.
    pub fn center_wavelength_nm(self) -> f64 {
        match self {
            Site::I => 981.463,
            Site::II => 978.854,
        }
    }

    /// Lorentzian inhomogeneous FWHM, MHz.
    pub fn inhomogeneous_fwhm_mhz(self) -> f64 {
        match self {
            Site::I => 800.0,
            Site::II => 560.0,
        }
    }
}

impl State {
    pub const ALL: [State; 2] = [State::Ground, State::Excited];

    pub fn name(self) -> &'static str {
        match self {
            State::Ground => "ground",
            State::Excited => "excited",
        }
    }

    pub fn parse(s: &str) -> Option<State> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ground" | "g" => Some(State::Ground),
            "excited" | "e" => Some(State::Excited),
            _ => None,
        }
    }
}

/// Hyperfine tensor: principal values (GHz) and zxz orientation (degrees).
pub fn hyperfine(site: Site, state: State) -> PrincipalTensor {
    let (values, angles) = match (site, state) {
        (Site::I, State::Ground) => ([0.481, 1.159, 5.251], (72.25, 92.11, 63.92)),
        (Site::I, State::Excited) => ([1.44, 1.82, 7.20], (73.88, 84.76, 90.13)),
        (Site::II, State::Ground) => ([-0.1259, 1.1835, 4.8668], (45.86, 11.13, 2.97)),
        (Site::II, State::Excited) => ([2.34, 2.90, 6.49], (51.07, 14.11, -0.67)),
    };
    PrincipalTensor::new(values, EulerAngles::new(angles.0, angles.1, angles.2))
}

/// Electronic Zeeman tensor; only magnitudes are tabulated and all are
/// taken positive (their crystal-frame traces confirm this).
pub fn zeeman(site: Site, state: State) -> PrincipalTensor {
    let (values, angles) = match (site, state) {
        (Site::I, State::Ground) => ([0.31, 1.60, 6.53], (72.8, 88.7, 66.2)),
        (Site::I, State::Excited) => ([0.8, 1.0, 3.4], (77.0, 84.0, -7.0)),
        (Site::II, State::Ground) => ([0.13, 1.50, 6.06], (59.10, 11.8, -12.6)),
        (Site::II, State::Excited) => ([1.0, 1.4, 3.3], (54.0, 23.0, -10.0)),
    };
    PrincipalTensor::new(values, EulerAngles::new(angles.0, angles.1, angles.2))
}

pub fn spin_system(site: Site, state: State) -> SpinSystem {
    SpinSystem::from_principal(&hyperfine(site, state), &zeeman(site, state))
}

/// Published crystal-frame hyperfine matrix (GHz, D1 D2 b).
pub fn printed_hyperfine_matrix(site: Site, state: State) -> SymmetricTensor3 {
    let rows = match (site, state) {
        (Site::I, State::Ground) => [
            [4.847, -1.232, -0.244],
            [-1.232, 1.425, -0.203],
            [-0.244, -0.203, 0.618],
        ],
        (Site::I, State::Excited) => [[6.715, -1.413, 0.499], [-1.413, 2.233, -0.143], [0.499, -0.143, 1.513]],
        (Site::II, State::Ground) => [[0.686, -0.718, 0.492], [-0.718, 0.509, -0.496], [0.492, -0.496, 4.729]],
        (Site::II, State::Excited) => [[2.802, -0.379, 0.661], [-0.379, 2.652, -0.532], [0.661, -0.532, 6.277]],
    };
    SymmetricTensor3::from_rows(rows, Frame::Crystal)
}

/// Published crystal-frame Zeeman matrix (dimensionless, D1 D2 b).
pub fn printed_zeeman_matrix(site: Site, state: State) -> SymmetricTensor3 {
    let rows = match (site, state) {
        (Site::I, State::Ground) => [
            [6.072, -1.460, -0.271],
            [-1.460, 1.845, -0.415],
            [-0.271, -0.415, 0.523],
        ],
        (Site::I, State::Excited) => [[3.242, -0.566, 0.249], [-0.566, 0.934, -0.033], [0.249, -0.033, 1.023]],
        (Site::II, State::Ground) => [[0.999, -0.766, 0.825], [-0.766, 0.825, -0.424], [0.825, -0.424, 5.867]],
        (Site::II, State::Excited) => [[1.389, -0.337, 0.572], [-0.337, 1.308, -0.383], [0.572, -0.383, 3.008]],
    };
    SymmetricTensor3::from_rows(rows, Frame::Crystal)
}

/// Zero-field ODMR lines observed on the ground state, MHz.
pub fn observed_odmr_lines_mhz(site: Site) -> &'static [f64] {
    match site {
        Site::I => &[2046.0, 2385.0, 2869.0, 3208.0],
        Site::II => &[528.0, 655.0, 2370.0, 2496.0, 3025.0],
    }
}
