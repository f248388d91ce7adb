//! Hyperfine and Zeeman modelling of electron-spin-1/2, nuclear-spin-1/2
//! dopant ions in low-symmetry crystals.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fitting;
pub mod hamiltonian;
pub mod io;
pub mod lm;
pub mod magres;
pub mod presets;
pub mod shb;
pub mod spectra;
pub mod tensor;
pub mod zefoz;

pub use error::{Error, Result};
pub use fitting::{DataKind, DataPoint, FitOptions, FitProblem, FitResult, FreeParams, ParamSet};
pub use hamiltonian::{EigenSystem, FieldVector, SpinSystem, Subsite};
pub use magres::{EprResonance, MicrowaveOptions, OdmrLine, Plane};
pub use presets::{Site, State};
pub use shb::{BurnRule, HolePattern, Polarity, RateMatrix};
pub use spectra::{Grid, OpticalLineSet, SignClass, SiteModel};
pub use tensor::{EulerAngles, FrameRotation, PrincipalTensor, SymmetricTensor3};
pub use zefoz::{FieldResponse, Region, ZefozCandidate};
