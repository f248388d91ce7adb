//! Per-subcommand flags and the small text formats they accept.

use std::path::PathBuf;

use clap::Args;
use kramers_core::hamiltonian::Axis;
use kramers_core::{BurnRule, FieldVector, Grid, Site, State};
use nalgebra::Vector3;

use crate::CliError;

#[derive(Debug, Args)]
pub struct SiteArgs {
    /// Crystallographic site (I or II); overrides the config preset.
    #[arg(long)]
    pub site: Option<String>,
}

impl SiteArgs {
    pub fn site(&self) -> Result<Option<Site>, CliError> {
        self.site
            .as_deref()
            .map(|s| Site::parse(s).ok_or_else(|| CliError::input("site", format!("unknown site `{s}`"))))
            .transpose()
    }
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// Single field vector in the crystal frame (D1,D2,b), mT.
    #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true)]
    pub field: Option<String>,
    /// Field magnitudes, mT: a value, a comma list, or start:stop:step.
    #[arg(long = "B", value_name = "MT", allow_hyphen_values = true)]
    pub magnitudes: Option<String>,
    /// Direction for --B: D1, D2, b, or X,Y,Z.
    #[arg(long, default_value = "D1", allow_hyphen_values = true)]
    pub dir: String,
}

impl FieldArgs {
    pub fn fields(&self) -> Result<Vec<FieldVector>, CliError> {
        match (&self.field, &self.magnitudes) {
            (Some(_), Some(_)) => Err(CliError::input("field", "give either --field or --B, not both")),
            (Some(v), None) => {
                let v =
                    parse_vector(v).ok_or_else(|| CliError::input("field", format!("expected X,Y,Z, got `{v}`")))?;
                Ok(vec![FieldVector(v)])
            }
            (None, Some(b)) => {
                let dir = parse_direction(&self.dir)?;
                Ok(parse_magnitudes(b)?
                    .into_iter()
                    .map(|m| FieldVector::along(&dir, m))
                    .collect())
            }
            (None, None) => Err(CliError::input("B", "a field is required (--B or --field)")),
        }
    }

    /// Exactly one field.
    pub fn single(&self) -> Result<FieldVector, CliError> {
        let f = self.fields()?;
        match f.as_slice() {
            [one] => Ok(*one),
            _ => Err(CliError::input("B", format!("expected one field, got {}", f.len()))),
        }
    }
}

#[derive(Debug, Args)]
pub struct ManifoldArgs {
    #[command(flatten)]
    pub site: SiteArgs,
    /// Electronic manifold: ground or excited.
    #[arg(long, default_value = "ground")]
    pub state: String,
    #[command(flatten)]
    pub field: FieldArgs,
}

#[derive(Debug, Args)]
pub struct AbsorptionArgs {
    #[command(flatten)]
    pub site: SiteArgs,
    #[command(flatten)]
    pub field: FieldArgs,
    /// Detuning grid, GHz: start:stop:step.
    #[arg(long, default_value = "-6:6:0.005", allow_hyphen_values = true)]
    pub grid: String,
    /// Line strengths: overlap or uniform.
    #[arg(long)]
    pub intensity: Option<String>,
    /// List peak positions instead of the spectrum.
    #[arg(long)]
    pub peaks: bool,
}

#[derive(Debug, Args)]
pub struct ShbMapArgs {
    #[command(flatten)]
    pub site: SiteArgs,
    /// Field magnitudes, mT: a value, a comma list, or start:stop:step.
    #[arg(long = "B", value_name = "MT", allow_hyphen_values = true)]
    pub magnitudes: Option<String>,
    /// Field direction: D1, D2, b, or X,Y,Z.
    #[arg(long, default_value = "D1", allow_hyphen_values = true)]
    pub dir: String,
    /// Burn detuning from the line centre in GHz, or track:G-E to follow one optical line.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub burn: String,
    /// Probe grid relative to the burn, GHz: start:stop:step.
    #[arg(long, default_value = "-3:3:0.01", allow_hyphen_values = true)]
    pub grid: String,
    /// Lorentzian FWHM of rendered holes, GHz.
    #[arg(long)]
    pub hole_width: Option<f64>,
    /// Also write the rendered map as an 8-bit PGM.
    #[arg(long, value_name = "PATH")]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EprMapArgs {
    #[command(flatten)]
    pub site: SiteArgs,
    #[arg(long, default_value = "ground")]
    pub state: String,
    /// Rotation plane: D1D2, bD1 or bD2.
    #[arg(long, default_value = "D1D2")]
    pub plane: String,
    /// Angle step, degrees.
    #[arg(long, default_value_t = 5.0)]
    pub step: f64,
    /// Microwave frequency, GHz; defaults to the config value or 9.7.
    #[arg(long)]
    pub mw: Option<f64>,
    /// Largest field searched, mT.
    #[arg(long, default_value_t = 1500.0)]
    pub bmax: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub site: SiteArgs,
    /// Measured transitions (CSV).
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Free parameters: any of ground, excited, misalignment, values.
    #[arg(long, default_value = "ground")]
    pub free: String,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write per-point residuals here.
    #[arg(long, value_name = "PATH")]
    pub residuals: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Zero-field lines, MHz, comma separated (3 to 6 values).
    #[arg(long)]
    pub lines: Option<String>,
    /// Use the observed lines of this site instead.
    #[arg(long)]
    pub site: Option<String>,
}

#[derive(Debug, Args)]
pub struct OrderingArgs {
    #[command(flatten)]
    pub site: SiteArgs,
    /// Optical peak detunings, GHz, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub peaks: Option<String>,
}

#[derive(Debug, Args)]
pub struct ZefozArgs {
    #[command(flatten)]
    pub site: SiteArgs,
    #[arg(long, default_value = "ground")]
    pub state: String,
    /// Level pair, 1-based (e.g. 1-2); all six pairs when omitted.
    #[arg(long)]
    pub transition: Option<String>,
    /// Search radius, mT.
    #[arg(long, default_value_t = 100.0)]
    pub radius: f64,
    /// Magnitude shells in the start grid.
    #[arg(long)]
    pub resolution: Option<usize>,
}

pub fn parse_state(s: &str) -> Result<State, CliError> {
    State::parse(s).ok_or_else(|| CliError::input("state", format!("expected ground or excited, got `{s}`")))
}

pub fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect()
}

pub fn parse_vector(s: &str) -> Option<Vector3<f64>> {
    match parse_list(s)?.as_slice() {
        [x, y, z] => Some(Vector3::new(*x, *y, *z)),
        _ => None,
    }
}

pub fn parse_direction(s: &str) -> Result<Vector3<f64>, CliError> {
    let axis = match s.trim().to_ascii_lowercase().as_str() {
        "d1" => Some(Axis::D1),
        "d2" => Some(Axis::D2),
        "b" => Some(Axis::B),
        _ => None,
    };
    if let Some(a) = axis {
        return Ok(a.unit());
    }
    match parse_vector(s) {
        Some(v) if v.norm() > 0.0 => Ok(v),
        _ => Err(CliError::input(
            "dir",
            format!("expected D1, D2, b or a non-zero X,Y,Z, got `{s}`"),
        )),
    }
}

/// `start:stop:step` triple.
fn parse_range(s: &str) -> Option<(f64, f64, f64)> {
    let parts: Vec<f64> = s.split(':').map(|t| t.trim().parse().ok()).collect::<Option<_>>()?;
    match parts.as_slice() {
        [a, b, c] if a.is_finite() && b.is_finite() && c.is_finite() => Some((*a, *b, *c)),
        _ => None,
    }
}

pub fn parse_magnitudes(s: &str) -> Result<Vec<f64>, CliError> {
    let err = |m: String| CliError::input("B", m);
    if s.contains(':') {
        let (a, b, step) = parse_range(s).ok_or_else(|| err(format!("expected start:stop:step, got `{s}`")))?;
        if !(step > 0.0) || b < a {
            return Err(err(format!("sweep `{s}` needs stop ≥ start and a positive step")));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| a + k as f64 * step).collect());
    }
    parse_list(s).ok_or_else(|| err(format!("expected numbers, got `{s}`")))
}

pub fn parse_grid(s: &str) -> Result<Grid, CliError> {
    let (a, b, step) =
        parse_range(s).ok_or_else(|| CliError::input("grid", format!("expected start:stop:step, got `{s}`")))?;
    Grid::new(a, b, step).map_err(CliError::at("grid"))
}

pub fn parse_burn(s: &str) -> Result<BurnRule, CliError> {
    let t = s.trim();
    if let Some(pair) = t.strip_prefix("track:") {
        let (i, j) = pair
            .split_once(['-', ':'])
            .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
            .filter(|(i, j)| (1..=4).contains(i) && (1..=4).contains(j))
            .ok_or_else(|| CliError::input("burn", format!("expected track:G-E with levels 1..4, got `{s}`")))?;
        return Ok(BurnRule::Track(i - 1, j - 1));
    }
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(BurnRule::Fixed)
        .ok_or_else(|| CliError::input("burn", format!("expected a detuning or track:G-E, got `{s}`")))
}
