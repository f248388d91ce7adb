//! Run configuration: a flat, sectioned TOML file. Every key is optional and
//! unknown sections or keys are rejected.

use std::path::Path;

use kramers_core::hamiltonian::Constants;
use kramers_core::magres::MicrowaveOptions;
use kramers_core::shb::RateMatrix;
use kramers_core::spectra::{IntensityModel, SignClass};
use kramers_core::{Error, EulerAngles, FitOptions, PrincipalTensor, Result, Site, SiteModel, SpinSystem, State};
use nalgebra::Vector3;
use toml::{Table, Value};

const SECTIONS: &[(&str, &[&str])] = &[
    ("site", &["preset", "fwhm_mhz", "center_nm", "intensity", "sign_class"]),
    ("ground", &["a_values", "a_angles", "g_values", "g_angles"]),
    ("excited", &["a_values", "a_angles", "g_values", "g_angles"]),
    ("constants", &["mu_b", "mu_n", "g_n"]),
    (
        "rates",
        &[
            "r12",
            "r13",
            "r14",
            "r23",
            "r24",
            "r34",
            "pump",
            "duration_s",
            "temperature_k",
            "epsilon",
        ],
    ),
    ("microwave", &["ac_direction", "strong_threshold", "frequency_ghz"]),
    (
        "fit",
        &[
            "restarts",
            "seed",
            "seed_spread_deg",
            "max_iterations",
            "gate_ghz",
            "gate_mt",
        ],
    ),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorOverride {
    pub a: Option<PrincipalTensor>,
    pub g: Option<PrincipalTensor>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub site: Option<Site>,
    pub fwhm_mhz: Option<f64>,
    pub center_nm: Option<f64>,
    pub intensity: Option<IntensityModel>,
    pub sign_class: Option<SignClass>,
    pub ground: TensorOverride,
    pub excited: TensorOverride,
    pub mu_b: Option<f64>,
    pub mu_n: Option<f64>,
    pub g_n: Option<f64>,
    pub rates: Option<RateMatrix>,
    pub ac_direction: Option<Vector3<f64>>,
    pub strong_threshold: Option<f64>,
    pub mw_ghz: Option<f64>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub seed_spread_deg: Option<f64>,
    pub max_iterations: Option<usize>,
    pub gate_ghz: Option<f64>,
    pub gate_mt: Option<f64>,
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl Section<'_> {
    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn value(&self, k: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn f64(&self, k: &str) -> Result<Option<f64>> {
        let Some(v) = self.value(k) else {
            return Ok(None);
        };
        let x = match v {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            _ => return Err(config_error(&self.key(k), "expected a number")),
        };
        if !x.is_finite() {
            return Err(config_error(&self.key(k), "must be finite"));
        }
        Ok(Some(x))
    }

    fn positive(&self, k: &str) -> Result<Option<f64>> {
        match self.f64(k)? {
            Some(x) if x <= 0.0 => Err(config_error(&self.key(k), format!("must be positive, got {x}"))),
            other => Ok(other),
        }
    }

    fn non_negative(&self, k: &str) -> Result<Option<f64>> {
        match self.f64(k)? {
            Some(x) if x < 0.0 => Err(config_error(&self.key(k), format!("must be non-negative, got {x}"))),
            other => Ok(other),
        }
    }

    fn integer(&self, k: &str) -> Result<Option<u64>> {
        match self.value(k) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(config_error(&self.key(k), "expected a non-negative integer")),
        }
    }

    fn string(&self, k: &str) -> Result<Option<&str>> {
        match self.value(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(config_error(&self.key(k), "expected a string")),
        }
    }

    fn triple(&self, k: &str) -> Result<Option<[f64; 3]>> {
        let Some(v) = self.value(k) else {
            return Ok(None);
        };
        let err = || config_error(&self.key(k), "expected an array of three numbers");
        let Value::Array(items) = v else {
            return Err(err());
        };
        if items.len() != 3 {
            return Err(err());
        }
        let mut out = [0.0; 3];
        for (o, item) in out.iter_mut().zip(items) {
            *o = match item {
                Value::Float(x) if x.is_finite() => *x,
                Value::Integer(i) => *i as f64,
                _ => return Err(err()),
            };
        }
        Ok(Some(out))
    }

    fn tensor(&self, values: &str, angles: &str) -> Result<Option<PrincipalTensor>> {
        match (self.triple(values)?, self.triple(angles)?) {
            (None, None) => Ok(None),
            (Some(v), Some(a)) => Ok(Some(PrincipalTensor::new(v, EulerAngles::new(a[0], a[1], a[2])))),
            (Some(_), None) => Err(config_error(
                &self.key(angles),
                "required when principal values are given",
            )),
            (None, Some(_)) => Err(config_error(&self.key(values), "required when angles are given")),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        for (name, value) in &root {
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == name) else {
                return Err(config_error(name, "unknown section"));
            };
            let Value::Table(table) = value else {
                return Err(config_error(name, "expected a section"));
            };
            for key in table.keys() {
                if !keys.contains(&key.as_str()) {
                    return Err(config_error(&format!("{name}.{key}"), "unknown key"));
                }
            }
        }
        let section = |name: &'static str| Section {
            name,
            table: root.get(name).and_then(Value::as_table),
        };

        let site = section("site");
        let mut cfg = RunConfig {
            site: match site.string("preset")? {
                None => None,
                Some(s) => {
                    Some(Site::parse(s).ok_or_else(|| config_error("site.preset", format!("unknown site `{s}`")))?)
                }
            },
            fwhm_mhz: site.positive("fwhm_mhz")?,
            center_nm: site.positive("center_nm")?,
            intensity: match site.string("intensity")? {
                None => None,
                Some(s) => Some(
                    parse_intensity(s)
                        .ok_or_else(|| config_error("site.intensity", format!("unknown intensity model `{s}`")))?,
                ),
            },
            sign_class: match site.string("sign_class")? {
                None => None,
                Some(s) => Some(
                    SignClass::parse(s)
                        .ok_or_else(|| config_error("site.sign_class", format!("expected g±e±, got `{s}`")))?,
                ),
            },
            ..RunConfig::default()
        };
        for (state, name) in [(State::Ground, "ground"), (State::Excited, "excited")] {
            let s = section(name);
            let o = TensorOverride {
                a: s.tensor("a_values", "a_angles")?,
                g: s.tensor("g_values", "g_angles")?,
            };
            match state {
                State::Ground => cfg.ground = o,
                State::Excited => cfg.excited = o,
            }
        }

        let constants = section("constants");
        cfg.mu_b = constants.positive("mu_b")?;
        cfg.mu_n = constants.positive("mu_n")?;
        cfg.g_n = constants.f64("g_n")?;

        let rates = section("rates");
        if rates.table.is_some() {
            let mut pairs = Vec::new();
            for (k, l) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
                let key = format!("r{}{}", k + 1, l + 1);
                if let Some(r) = rates.non_negative(&key)? {
                    pairs.push((k, l, r));
                }
            }
            let pump = rates.non_negative("pump")?.unwrap_or(0.0);
            let duration = rates.non_negative("duration_s")?.unwrap_or(f64::INFINITY);
            let mut m =
                RateMatrix::symmetric(&pairs, pump, duration).map_err(|e| config_error("rates", e.to_string()))?;
            if let Some(eps) = rates.positive("epsilon")? {
                m = m.with_epsilon(eps);
            }
            if let Some(t) = rates.positive("temperature_k")? {
                m = m
                    .with_detailed_balance(t, [0.0; 4])
                    .map_err(|e| config_error("rates.temperature_k", e.to_string()))?;
            }
            cfg.rates = Some(m);
        }

        let mw = section("microwave");
        cfg.ac_direction = match mw.triple("ac_direction")? {
            Some(v) if v.iter().all(|x| *x == 0.0) => {
                return Err(config_error("microwave.ac_direction", "must be a non-zero vector"));
            }
            other => other.map(Vector3::from),
        };
        cfg.strong_threshold = mw.non_negative("strong_threshold")?;
        cfg.mw_ghz = mw.positive("frequency_ghz")?;

        let fit = section("fit");
        cfg.restarts = fit.integer("restarts")?.map(|v| v as usize);
        if cfg.restarts == Some(0) {
            return Err(config_error("fit.restarts", "must be at least 1"));
        }
        cfg.seed = fit.integer("seed")?;
        cfg.seed_spread_deg = fit.positive("seed_spread_deg")?;
        cfg.max_iterations = fit.integer("max_iterations")?.map(|v| v as usize);
        cfg.gate_ghz = fit.positive("gate_ghz")?;
        cfg.gate_mt = fit.positive("gate_mt")?;
        Ok(cfg)
    }

    pub fn constants(&self) -> Constants {
        let mut c = Constants::default();
        if let Some(b) = self.mu_b {
            c.mu_b = b;
        }
        if let Some(n) = self.mu_n {
            c.mu_n = n;
        }
        c
    }

    /// Hyperfine principal tensor of `state`, from the overrides or the preset.
    pub fn hyperfine(&self, site: Site, state: State) -> PrincipalTensor {
        let o = self.overrides(state);
        o.a.unwrap_or_else(|| kramers_core::presets::hyperfine(site, state))
    }

    fn overrides(&self, state: State) -> &TensorOverride {
        match state {
            State::Ground => &self.ground,
            State::Excited => &self.excited,
        }
    }

    fn system(&self, site: Site, state: State) -> SpinSystem {
        let g = self
            .overrides(state)
            .g
            .unwrap_or_else(|| kramers_core::presets::zeeman(site, state));
        let mut sys = SpinSystem::from_principal(&self.hyperfine(site, state), &g).with_constants(self.constants());
        if let Some(g_n) = self.g_n {
            sys = sys.with_gn(g_n);
        }
        sys
    }

    /// Site model with every override applied; `site` wins over the preset
    /// named in the file.
    pub fn site_model(&self, site: Option<Site>) -> Result<SiteModel> {
        let site = site.or(self.site).unwrap_or(Site::I);
        let mut model = SiteModel::new(
            self.system(site, State::Ground),
            self.system(site, State::Excited),
            self.center_nm.unwrap_or(site.center_wavelength_nm()),
            self.fwhm_mhz.unwrap_or(site.inhomogeneous_fwhm_mhz()),
        )?;
        if let Some(i) = self.intensity {
            model = model.with_intensity(i);
        }
        if let Some(c) = self.sign_class {
            model = model.with_sign_class(c);
        }
        Ok(model)
    }

    pub fn microwave(&self) -> MicrowaveOptions {
        let mut m = MicrowaveOptions::default();
        if let Some(d) = self.ac_direction {
            m.ac_direction = d;
        }
        if let Some(t) = self.strong_threshold {
            m.strong_threshold = t;
        }
        m
    }

    pub fn fit_options(&self) -> FitOptions {
        let mut o = FitOptions::default();
        if let Some(r) = self.restarts {
            o.restarts = r;
        }
        if let Some(s) = self.seed {
            o.seed = s;
        }
        if self.seed_spread_deg.is_some() {
            o.seed_spread_deg = self.seed_spread_deg;
        }
        if let Some(m) = self.max_iterations {
            o.max_iterations = m;
        }
        o
    }
}

pub fn parse_intensity(s: &str) -> Option<IntensityModel> {
    match s.trim().to_ascii_lowercase().as_str() {
        "overlap" | "spin-overlap" => Some(IntensityModel::SpinOverlap),
        "uniform" => Some(IntensityModel::Uniform),
        _ => None,
    }
}
