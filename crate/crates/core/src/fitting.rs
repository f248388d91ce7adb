//! Hyperfine-tensor fitting to measured transition frequencies and EPR
//! resonance fields, with g tensors held fixed.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{energies, invert_zero_field, FieldVector, SpinSystem, Subsite, LEVEL_PAIRS};
use crate::lm::{covariance, levenberg_marquardt, LmOptions};
use crate::magres::{microwave_operator, resonances_in_window, MicrowaveOptions};
use crate::presets::State;
use crate::spectra::{Parity, SiteModel};
use crate::tensor::{decompose_tensor, wrap_degrees, EulerAngles, FrameRotation, PrincipalTensor};

pub const DEFAULT_GATE_GHZ: f64 = 0.5;
pub const DEFAULT_GATE_MT: f64 = 50.0;
pub const DEFAULT_RESTARTS: usize = 64;
pub const MAX_MISALIGNMENT_DEG: f64 = 5.0;
/// Largest RMS misfit (MHz) accepted when inverting zero-field lines.
pub const INVERSION_TOLERANCE_MHZ: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataKind {
    Shb,
    Odmr,
    Epr,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::Shb => "SHB",
            DataKind::Odmr => "ODMR",
            DataKind::Epr => "EPR",
        }
    }

    pub fn parse(s: &str) -> Option<DataKind> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SHB" => Some(DataKind::Shb),
            "ODMR" => Some(DataKind::Odmr),
            "EPR" => Some(DataKind::Epr),
            _ => None,
        }
    }

    /// GHz for frequency kinds, mT for EPR.
    pub fn default_sigma(self) -> f64 {
        match self {
            DataKind::Shb => 2e-3,
            DataKind::Odmr => 0.5e-3,
            DataKind::Epr => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub kind: DataKind,
    pub state: State,
    /// Applied field (lab frame). For EPR only its direction is used.
    pub field: FieldVector,
    /// Transition frequency (GHz) or, for EPR, resonance field (mT).
    pub value: f64,
    pub sigma: f64,
    /// Transition `(lower, upper)`, 0-based.
    pub label: Option<(usize, usize)>,
    /// Microwave frequency for EPR points, GHz.
    pub mw_ghz: Option<f64>,
}

impl DataPoint {
    pub fn frequency(kind: DataKind, state: State, field: FieldVector, value_ghz: f64) -> Self {
        Self {
            kind,
            state,
            field,
            value: value_ghz,
            sigma: kind.default_sigma(),
            label: None,
            mw_ghz: None,
        }
    }

    pub fn epr(state: State, direction: Vector3<f64>, field_mt: f64, mw_ghz: f64) -> Self {
        Self {
            kind: DataKind::Epr,
            state,
            field: FieldVector(direction),
            value: field_mt,
            sigma: DataKind::Epr.default_sigma(),
            label: None,
            mw_ghz: Some(mw_ghz),
        }
    }

    pub fn with_label(mut self, lower: usize, upper: usize) -> Self {
        self.label = Some((lower, upper));
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if let Some((i, j)) = self.label {
            if i >= j || j > 3 {
                return Err(Error::InvalidInput(format!(
                    "transition label ({}, {}) is not a level pair",
                    i + 1,
                    j + 1
                )));
            }
        }
        if self.kind == DataKind::Epr {
            if !self.mw_ghz.is_some_and(|f| f > 0.0) {
                return Err(Error::InvalidInput(
                    "EPR points need a positive microwave frequency".into(),
                ));
            }
            if !(self.field.magnitude() > 0.0) {
                return Err(Error::InvalidInput("EPR points need a field direction".into()));
            }
        }
        Ok(())
    }
}

/// Hyperfine tensors being fitted plus the lab-to-crystal misalignment
/// (rotations about x, y, z in degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSet {
    pub ground: PrincipalTensor,
    pub excited: PrincipalTensor,
    pub misalignment: [f64; 3],
}

impl ParamSet {
    pub fn tensor(&self, state: State) -> &PrincipalTensor {
        match state {
            State::Ground => &self.ground,
            State::Excited => &self.excited,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FreeParams {
    pub ground_angles: bool,
    pub excited_angles: bool,
    pub misalignment: bool,
    /// Also refine the principal values of every state whose angles are free.
    pub eigenvalues: bool,
}

impl FreeParams {
    pub fn orientation(state: State) -> Self {
        Self {
            ground_angles: state == State::Ground,
            excited_angles: state == State::Excited,
            ..Self::default()
        }
    }

    fn angles(&self, state: State) -> bool {
        match state {
            State::Ground => self.ground_angles,
            State::Excited => self.excited_angles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Angle(State, usize),
    Value(State, usize),
    Misalignment(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub site: SiteModel,
    pub initial: ParamSet,
    pub free: FreeParams,
    pub gate_ghz: f64,
    pub gate_mt: f64,
    pub microwave: MicrowaveOptions,
}

impl FitProblem {
    pub fn new(site: SiteModel, initial: ParamSet, free: FreeParams) -> Self {
        Self {
            site,
            initial,
            free,
            gate_ghz: DEFAULT_GATE_GHZ,
            gate_mt: DEFAULT_GATE_MT,
            microwave: MicrowaveOptions::default(),
        }
    }

    fn slots(&self) -> Vec<Slot> {
        let mut slots = Vec::new();
        for state in State::ALL {
            if self.free.angles(state) {
                slots.extend((0..3).map(|k| Slot::Angle(state, k)));
            }
        }
        if self.free.misalignment {
            slots.extend((0..3).map(Slot::Misalignment));
        }
        if self.free.eigenvalues {
            for state in State::ALL {
                if self.free.angles(state) {
                    slots.extend((0..3).map(|k| Slot::Value(state, k)));
                }
            }
        }
        slots
    }

    pub fn parameter_names(&self) -> Vec<String> {
        const ANGLES: [&str; 3] = ["alpha", "beta", "gamma"];
        const AXES: [&str; 3] = ["x", "y", "z"];
        self.slots()
            .iter()
            .map(|s| match *s {
                Slot::Angle(state, k) => format!("{}.{}", state.name(), ANGLES[k]),
                Slot::Value(state, k) => format!("{}.A{}", state.name(), k + 1),
                Slot::Misalignment(k) => format!("lab.{}", AXES[k]),
            })
            .collect()
    }

    pub fn free_count(&self) -> usize {
        self.slots().len()
    }

    pub fn pack(&self, p: &ParamSet) -> DVector<f64> {
        let slots = self.slots();
        DVector::from_iterator(
            slots.len(),
            slots.iter().map(|s| match *s {
                Slot::Angle(state, k) => p.tensor(state).orientation.as_array()[k],
                Slot::Value(state, k) => p.tensor(state).values[k],
                Slot::Misalignment(k) => p.misalignment[k],
            }),
        )
    }

    pub fn unpack(&self, x: &DVector<f64>) -> ParamSet {
        let mut angles = [
            self.initial.ground.orientation.as_array(),
            self.initial.excited.orientation.as_array(),
        ];
        let mut values = [self.initial.ground.values, self.initial.excited.values];
        let mut mis = self.initial.misalignment;
        let idx = |s: State| if s == State::Ground { 0 } else { 1 };
        for (v, s) in x.iter().zip(self.slots()) {
            match s {
                Slot::Angle(state, k) => angles[idx(state)][k] = *v,
                Slot::Value(state, k) => values[idx(state)][k] = *v,
                Slot::Misalignment(k) => mis[k] = *v,
            }
        }
        let tensor = |k: usize| PrincipalTensor {
            values: values[k],
            orientation: EulerAngles::new(angles[k][0], angles[k][1], angles[k][2]),
        };
        ParamSet {
            ground: tensor(0),
            excited: tensor(1),
            misalignment: mis,
        }
    }

    fn project(&self, x: &mut DVector<f64>) {
        for (v, s) in x.iter_mut().zip(self.slots()) {
            match s {
                Slot::Angle(..) => *v = wrap_degrees(*v),
                Slot::Misalignment(_) => *v = v.clamp(-MAX_MISALIGNMENT_DEG, MAX_MISALIGNMENT_DEG),
                Slot::Value(..) => {}
            }
        }
    }

    fn fd_steps(&self) -> Vec<f64> {
        self.slots()
            .iter()
            .map(|s| match s {
                Slot::Value(..) => 1e-6,
                _ => 1e-4,
            })
            .collect()
    }

    pub fn system(&self, params: &ParamSet, state: State) -> SpinSystem {
        self.site.system(state).with_a(params.tensor(state).assemble())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResidual {
    pub index: usize,
    /// Observed − model, GHz (frequency kinds) or mT (EPR).
    pub residual: f64,
    pub weighted: f64,
    pub model: Option<f64>,
    pub assigned: Option<(usize, usize, Subsite)>,
    pub outlier: bool,
}

struct Evaluator<'a> {
    problem: &'a FitProblem,
    systems: [[SpinSystem; 2]; 2],
    rotation: FrameRotation,
    ops: [[nalgebra::Matrix4<crate::hamiltonian::C64>; 2]; 2],
}

/// Manifold, subsite and exact field bits of a cached level solve.
type LevelKey = (State, Subsite, [u64; 3]);

impl<'a> Evaluator<'a> {
    fn new(problem: &'a FitProblem, params: ParamSet, with_ops: bool) -> Result<Self> {
        let sys = |state: State, sub: Subsite| problem.system(&params, state).with_subsite(sub);
        let systems = [
            [sys(State::Ground, Subsite::One), sys(State::Ground, Subsite::Two)],
            [sys(State::Excited, Subsite::One), sys(State::Excited, Subsite::Two)],
        ];
        let zero = nalgebra::Matrix4::zeros();
        let mut ops = [[zero; 2]; 2];
        if with_ops {
            for s in 0..2 {
                for u in 0..2 {
                    ops[s][u] = microwave_operator(&systems[s][u], &problem.microwave)?;
                }
            }
        }
        let m = params.misalignment;
        Ok(Self {
            problem,
            systems,
            rotation: FrameRotation::misalignment(m[0], m[1], m[2]),
            ops,
        })
    }

    fn system(&self, state: State, sub: Subsite) -> (&SpinSystem, usize, usize) {
        let s = if state == State::Ground { 0 } else { 1 };
        let u = if sub == Subsite::One { 0 } else { 1 };
        (&self.systems[s][u], s, u)
    }

    fn evaluate(&self, data: &[DataPoint]) -> Vec<PointResidual> {
        let mut cache: Vec<(LevelKey, [f64; 4])> = Vec::new();
        data.iter()
            .enumerate()
            .map(|(index, p)| {
                let field = p.field.rotated(&self.rotation);
                let subsites: &[Subsite] = if p.label.is_some() {
                    &[Subsite::One]
                } else {
                    &Subsite::BOTH
                };
                let mut best: Option<(f64, f64, (usize, usize, Subsite))> = None;
                let mut consider = |model: f64, tag: (usize, usize, Subsite)| {
                    let r = p.value - model;
                    if best.is_none_or(|b| r.abs() < b.0.abs()) {
                        best = Some((r, model, tag));
                    }
                };
                let gate = match p.kind {
                    DataKind::Epr => self.problem.gate_mt,
                    _ => self.problem.gate_ghz,
                };
                for &sub in subsites {
                    let (sys, s, u) = self.system(p.state, sub);
                    match p.kind {
                        DataKind::Shb | DataKind::Odmr => {
                            let key = (p.state, sub, field.0.map(f64::to_bits).into());
                            let e = match cache.iter().find(|(k, _)| *k == key) {
                                Some((_, e)) => *e,
                                None => {
                                    let e = energies(sys, &field);
                                    cache.push((key, e));
                                    e
                                }
                            };
                            for &(i, j) in LEVEL_PAIRS.iter() {
                                if p.label.is_none_or(|l| l == (i, j)) {
                                    consider(e[j] - e[i], (i, j, sub));
                                }
                            }
                        }
                        DataKind::Epr => {
                            let dir = field.0 / field.magnitude();
                            let nu = p.mw_ghz.unwrap_or(0.0);
                            let lo = (p.value - gate).max(0.0);
                            let hi = p.value + gate;
                            for r in resonances_in_window(sys, &dir, nu, lo, hi, &self.ops[s][u]) {
                                if p.label.is_none_or(|l| l == (r.lower, r.upper)) {
                                    consider(r.field_mt, (r.lower, r.upper, sub));
                                }
                            }
                        }
                    }
                }
                match best {
                    Some((r, model, tag)) if r.abs() <= gate => PointResidual {
                        index,
                        residual: r,
                        weighted: if p.sigma.is_finite() { r / p.sigma } else { 0.0 },
                        model: Some(model),
                        assigned: Some(tag),
                        outlier: false,
                    },
                    other => PointResidual {
                        index,
                        residual: other.map_or(f64::NAN, |b| b.0),
                        // a constant penalty: leaving the gate never lowers the cost
                        weighted: if p.sigma.is_finite() { gate / p.sigma } else { 0.0 },
                        model: other.map(|b| b.1),
                        assigned: other.map(|b| b.2),
                        outlier: true,
                    },
                }
            })
            .collect()
    }
}

fn validate_data(data: &[DataPoint]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::NotEnoughData("no data points".into()));
    }
    data.iter().try_for_each(DataPoint::validate)
}

/// Residual of every data point under `params`; points outside the gate are
/// flagged as outliers.
pub fn residuals(problem: &FitProblem, params: &ParamSet, data: &[DataPoint]) -> Result<Vec<PointResidual>> {
    validate_data(data)?;
    let needs_ops = data.iter().any(|p| p.kind == DataKind::Epr);
    Ok(Evaluator::new(problem, *params, needs_ops)?.evaluate(data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartStats {
    pub restarts: usize,
    pub converged: usize,
    /// Frequency RMS of each restart's optimum, MHz, in seed order.
    pub rms_mhz: Vec<f64>,
    /// Largest orientation distance (degrees) from the best optimum among
    /// restarts whose cost is within 1% of the best.
    pub spread_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParamSet,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Covariance of the free parameters in fit order.
    pub covariance: DMatrix<f64>,
    pub residuals: Vec<PointResidual>,
    /// Over non-outlier frequency points.
    pub rms_mhz: f64,
    /// Over non-outlier EPR points.
    pub rms_mt: f64,
    pub chi_square: f64,
    pub stats: RestartStats,
}

impl FitResult {
    pub fn outliers(&self) -> impl Iterator<Item = &PointResidual> {
        self.residuals.iter().filter(|r| r.outlier)
    }

    /// One-sigma uncertainty of each free parameter.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.covariance.nrows())
            .map(|k| self.covariance[(k, k)].max(0.0).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Seeds are drawn within ± this many degrees of the initial angles;
    /// `None` samples orientations uniformly.
    pub seed_spread_deg: Option<f64>,
    pub max_iterations: usize,
    pub step_tolerance_deg: f64,
    pub relative_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            seed_spread_deg: None,
            max_iterations: 100,
            step_tolerance_deg: 1e-4,
            relative_tolerance: 1e-10,
        }
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn summarize(data: &[DataPoint], res: &[PointResidual]) -> (f64, f64) {
    let pick = |epr: bool| {
        rms(res
            .iter()
            .filter(move |r| !r.outlier && (data[r.index].kind == DataKind::Epr) == epr)
            .map(|r| r.residual))
    };
    (1e3 * pick(false), pick(true))
}

fn seeds(problem: &FitProblem, options: &FitOptions) -> Vec<DVector<f64>> {
    let slots = problem.slots();
    let x0 = problem.pack(&problem.initial);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut out = vec![x0.clone()];
    for _ in 1..options.restarts.max(1) {
        let x = DVector::from_iterator(
            slots.len(),
            slots
                .iter()
                .zip(x0.iter())
                .map(|(s, &v)| match (s, options.seed_spread_deg) {
                    (Slot::Angle(..), Some(w)) => v + rng.random_range(-w..=w),
                    (Slot::Angle(_, 1), None) => rng.random_range(0.0..=180.0),
                    (Slot::Angle(..), None) => rng.random_range(-180.0..180.0),
                    (Slot::Misalignment(_), _) => rng.random_range(-MAX_MISALIGNMENT_DEG..=MAX_MISALIGNMENT_DEG),
                    (Slot::Value(..), _) => v,
                }),
        );
        out.push(x);
    }
    out
}

/// Reports orientations in canonical form, choosing among the equivalent
/// Euler triples the one nearest the starting guess.
fn canonicalize(problem: &FitProblem, p: &ParamSet) -> ParamSet {
    let fix = |t: &PrincipalTensor, reference: &EulerAngles| -> PrincipalTensor {
        let d = decompose_tensor(&t.assemble());
        let best = d
            .principal
            .orientation
            .equivalents()
            .into_iter()
            .min_by(|a, b| {
                a.max_abs_difference(reference)
                    .total_cmp(&b.max_abs_difference(reference))
            })
            .unwrap_or(d.principal.orientation);
        PrincipalTensor {
            values: d.principal.values,
            orientation: best,
        }
    };
    let mut out = *p;
    if problem.free.ground_angles {
        out.ground = fix(&p.ground, &problem.initial.ground.orientation);
    }
    if problem.free.excited_angles {
        out.excited = fix(&p.excited, &problem.initial.excited.orientation);
    }
    out
}

/// Weighted least-squares fit from `options.restarts` seeds run in parallel.
pub fn fit(problem: &FitProblem, data: &[DataPoint], options: &FitOptions) -> Result<FitResult> {
    validate_data(data)?;
    let n = problem.free_count();
    let informative = data.iter().filter(|p| p.sigma.is_finite()).count();
    if informative < n {
        return Err(Error::NotEnoughData(format!(
            "{informative} informative points for {n} free parameters"
        )));
    }
    let needs_ops = data.iter().any(|p| p.kind == DataKind::Epr);
    let objective = |x: &DVector<f64>| -> DVector<f64> {
        let params = problem.unpack(x);
        match Evaluator::new(problem, params, needs_ops) {
            Ok(ev) => DVector::from_iterator(data.len(), ev.evaluate(data).iter().map(|r| r.weighted)),
            Err(_) => DVector::from_element(data.len(), f64::INFINITY),
        }
    };
    let lm = LmOptions {
        max_iterations: options.max_iterations,
        step_tolerance: options.step_tolerance_deg,
        relative_tolerance: options.relative_tolerance,
        fd_steps: problem.fd_steps(),
    };
    let starts = seeds(problem, options);
    let outcomes: Vec<_> = starts
        .into_par_iter()
        .map(|x0| levenberg_marquardt(objective, x0, &lm, |x| problem.project(x)))
        .collect();
    let best = outcomes
        .iter()
        .min_by(|a, b| {
            a.cost.total_cmp(&b.cost).then_with(|| {
                a.params
                    .iter()
                    .zip(b.params.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        })
        .expect("at least one restart");
    let raw = problem.unpack(&best.params);
    let res = residuals(problem, &raw, data)?;
    let inliers = res
        .iter()
        .filter(|r| !r.outlier && data[r.index].sigma.is_finite())
        .count();
    let (rms_mhz, rms_mt) = summarize(data, &res);
    if inliers == 0 || inliers < n {
        return Err(Error::FitFailed {
            best_rms_mhz: rms_mhz,
            restarts: outcomes.len(),
            reason: format!("{inliers} points within the gate for {n} free parameters"),
        });
    }
    let restart_rms: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            let r = residuals(problem, &problem.unpack(&o.params), data).unwrap_or_default();
            summarize(data, &r).0
        })
        .collect();
    let best_angles = |p: &ParamSet| [p.ground.orientation, p.excited.orientation];
    let reference = best_angles(&raw);
    let spread_deg = outcomes
        .iter()
        .filter(|o| o.cost <= best.cost * 1.01 + 1e-12)
        .map(|o| {
            let p = problem.unpack(&o.params);
            best_angles(&p)
                .iter()
                .zip(&reference)
                .map(|(a, b)| a.distance(b))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let params = canonicalize(problem, &raw);
    let values = problem.pack(&params).iter().copied().collect();
    Ok(FitResult {
        params,
        names: problem.parameter_names(),
        values,
        covariance: covariance(&best.jacobian, best.cost, inliers.saturating_sub(n)),
        residuals: res,
        rms_mhz,
        rms_mt,
        chi_square: best.cost,
        stats: RestartStats {
            restarts: outcomes.len(),
            converged: outcomes.iter().filter(|o| o.converged).count(),
            rms_mhz: restart_rms,
            spread_deg,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroFieldInversion {
    /// |A1| ≤ |A2| ≤ |A3|, GHz.
    pub magnitudes: [f64; 3],
    /// Zero-mean level energies, GHz.
    pub levels: [f64; 4],
    pub rms_mhz: f64,
    /// Level pair assigned to each input line.
    pub assignment: Vec<(usize, usize)>,
}

fn assignments(k: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for p in 0..LEVEL_PAIRS.len() {
            if !prefix.contains(&p) {
                prefix.push(p);
                extend(prefix, k, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), k, &mut out);
    out
}

struct Candidate {
    levels: [f64; 4],
    rms_mhz: f64,
    assignment: Vec<(usize, usize)>,
}

fn solve_assignment(lines_ghz: &[f64], pairs: &[usize]) -> Option<Candidate> {
    let m = lines_ghz.len();
    let mut a = DMatrix::zeros(m, 3);
    for (row, &p) in pairs.iter().enumerate() {
        let (i, j) = LEVEL_PAIRS[p];
        a[(row, j - 1)] = 1.0;
        if i > 0 {
            a[(row, i - 1)] = -1.0;
        }
    }
    let b = DVector::from_column_slice(lines_ghz);
    let svd = a.clone().svd(true, true);
    if svd.rank(1e-9) < 3 {
        return None;
    }
    let x = svd.solve(&b, 1e-12).ok()?;
    let raw = [0.0, x[0], x[1], x[2]];
    if raw.windows(2).any(|w| w[1] < w[0] - 1e-12) {
        return None;
    }
    let rms_mhz = 1e3 * ((&a * &x - b).norm_squared() / m as f64).sqrt();
    let mean = raw.iter().sum::<f64>() / 4.0;
    Some(Candidate {
        levels: raw.map(|e| e - mean),
        rms_mhz,
        assignment: pairs.iter().map(|&p| LEVEL_PAIRS[p]).collect(),
    })
}

/// Recovers hyperfine eigenvalue magnitudes from zero-field transition
/// frequencies (MHz). Every assignment of lines to level pairs is tried; among
/// level sets within [`INVERSION_TOLERANCE_MHZ`], those whose central gap is
/// the largest are preferred, then the smallest misfit.
pub fn invert_odmr_lines(lines_mhz: &[f64]) -> Result<ZeroFieldInversion> {
    if lines_mhz.len() < 3 {
        return Err(Error::NotEnoughData(format!(
            "zero-field inversion needs at least 3 lines, got {}",
            lines_mhz.len()
        )));
    }
    if lines_mhz.len() > LEVEL_PAIRS.len() {
        return Err(Error::InvalidInput(format!(
            "{} lines exceed the {} possible transitions",
            lines_mhz.len(),
            LEVEL_PAIRS.len()
        )));
    }
    if lines_mhz.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidInput(
            "line frequencies must be positive and finite".into(),
        ));
    }
    let ghz: Vec<f64> = lines_mhz.iter().map(|f| f * 1e-3).collect();
    let mut closest: Option<Candidate> = None;
    let mut accepted: Vec<(bool, Candidate, [f64; 3])> = Vec::new();
    for pairs in assignments(ghz.len()) {
        let Some(c) = solve_assignment(&ghz, &pairs) else {
            continue;
        };
        let Ok(mags) = invert_zero_field(&c.levels) else {
            continue;
        };
        if c.rms_mhz <= INVERSION_TOLERANCE_MHZ {
            let e = c.levels;
            let central = e[2] - e[1] >= (e[1] - e[0]).max(e[3] - e[2]);
            accepted.push((central, c, mags));
        } else if closest.as_ref().is_none_or(|b| c.rms_mhz < b.rms_mhz) {
            closest = Some(c);
        }
    }
    accepted.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(a.1.rms_mhz.total_cmp(&b.1.rms_mhz))
            .then(
                a.2.iter()
                    .zip(&b.2)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(
                a.1.levels
                    .iter()
                    .zip(&b.1.levels)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
    });
    match accepted.into_iter().next() {
        Some((_, c, magnitudes)) => Ok(ZeroFieldInversion {
            magnitudes,
            levels: c.levels,
            rms_mhz: c.rms_mhz,
            assignment: c.assignment,
        }),
        None => {
            let (rms_mhz, levels) = closest.map_or((f64::INFINITY, [f64::NAN; 4]), |c| (c.rms_mhz, c.levels));
            Err(Error::InconsistentSplittings { rms_mhz, levels })
        }
    }
}

/// Inverts zero-field lines for `state` and builds an orientation fit with
/// the recovered magnitudes fixed. Signs follow the model's current sign
/// class; the starting orientation is the model's.
pub fn invert_and_seed(lines_mhz: &[f64], site: &SiteModel, state: State) -> Result<(ZeroFieldInversion, FitProblem)> {
    let inv = invert_odmr_lines(lines_mhz)?;
    let class = site.sign_class();
    let parity = match state {
        State::Ground => class.ground,
        State::Excited => class.excited,
    };
    let sign = if parity == Parity::Negative { -1.0 } else { 1.0 };
    let current = |s: State| decompose_tensor(&site.system(s).a()).principal;
    let mut ground = current(State::Ground);
    let mut excited = current(State::Excited);
    let seeded = PrincipalTensor {
        values: inv.magnitudes.map(|v| sign * v),
        orientation: match state {
            State::Ground => ground.orientation,
            State::Excited => excited.orientation,
        },
    };
    match state {
        State::Ground => ground = seeded,
        State::Excited => excited = seeded,
    }
    let initial = ParamSet {
        ground,
        excited,
        misalignment: [0.0; 3],
    };
    Ok((inv, FitProblem::new(*site, initial, FreeParams::orientation(state))))
}
