use kramers_core::fitting::{fit, invert_odmr_lines};
use kramers_core::hamiltonian::{solve, transition_frequencies, zeeman_gradient, LEVEL_PAIRS};
use kramers_core::io::{parse_data_csv, parse_label, render_pgm, Cell, CsvTable};
use kramers_core::magres::{epr_angular_map, odmr_lines};
use kramers_core::presets::observed_odmr_lines_mhz;
use kramers_core::shb::{shb_field_map, MapOptions};
use kramers_core::spectra::{absorption_spectrum, find_peaks, ordering_search};
use kramers_core::zefoz::{zefoz_search, SpinTransition, ZefozOptions};
use kramers_core::{FieldVector, FitProblem, FreeParams, ParamSet, Plane, Region, Site, SiteModel, State};

use crate::args::*;
use crate::config::parse_intensity;
use crate::{selftest, CliError, Command, Context, Output};

type Columns = &'static [(&'static str, &'static str)];

const FIELD: [(&str, &str); 3] = [
    ("Bx_mT", "field along D1"),
    ("By_mT", "field along D2"),
    ("Bz_mT", "field along b"),
];

const LEVELS: Columns = &[
    FIELD[0],
    FIELD[1],
    FIELD[2],
    ("E1_GHz", "lowest level"),
    ("E2_GHz", "second level"),
    ("E3_GHz", "third level"),
    ("E4_GHz", "highest level"),
];

const TRANSITIONS: Columns = &[
    FIELD[0],
    FIELD[1],
    FIELD[2],
    ("lower", "lower level, 1-based"),
    ("upper", "upper level, 1-based"),
    ("frequency_MHz", "transition frequency"),
    (
        "grad_norm_MHz_per_mT",
        "norm of the field gradient; nan at a degeneracy",
    ),
];

const ABSORPTION: Columns = &[
    ("detuning_GHz", "optical detuning from the line centre"),
    ("amplitude", "absorption normalised to its maximum"),
];

const PEAKS: Columns = &[("detuning_GHz", "peak position, prominence at least 5% of the maximum")];

const SHB_MAP: Columns = &[
    ("B_mT", "field magnitude"),
    ("burn_GHz", "burn detuning from the line centre"),
    ("class_ground", "burned ground level, 1-based"),
    ("class_excited", "burned excited level, 1-based"),
    ("probe_ground", "probed ground level, 1-based"),
    ("probe_excited", "probed excited level, 1-based"),
    ("polarity", "hole, antihole or pseudo-hole"),
    ("detuning_GHz", "probe detuning relative to the burn"),
    ("amplitude", "signed amplitude; negative is less absorption"),
];

const ODMR: Columns = &[
    FIELD[0],
    FIELD[1],
    FIELD[2],
    ("lower", "lower level, 1-based"),
    ("upper", "upper level, 1-based"),
    ("frequency_MHz", "transition frequency"),
    (
        "moment",
        "squared magnetic-dipole matrix element along the oscillating field",
    ),
    (
        "strong",
        "1 when the moment exceeds the threshold fraction of the largest",
    ),
];

const EPR_MAP: Columns = &[
    ("angle_deg", "angle in the rotation plane from its first axis"),
    ("B_mT", "resonance field"),
    ("lower", "lower level, 1-based"),
    ("upper", "upper level, 1-based"),
    ("subsite", "magnetic subsite (1 or 2)"),
    (
        "moment",
        "squared magnetic-dipole matrix element along the oscillating field",
    ),
];

const FIT: Columns = &[
    ("parameter", "parameter name (angles in degrees, values in GHz)"),
    ("value", "best-fit value"),
    ("std_error", "standard error from the covariance"),
];

const RESIDUALS: Columns = &[
    ("index", "row of the data file, 0-based"),
    ("kind", "data kind"),
    ("value", "measured value (GHz, or mT for EPR)"),
    ("model", "model value; empty when unassigned"),
    ("residual", "measured minus model"),
    ("weighted", "residual over sigma"),
    ("lower", "assigned lower level, 1-based"),
    ("upper", "assigned upper level, 1-based"),
    ("outlier", "1 when outside the gate"),
];

const INVERT: Columns = &[
    ("A1_GHz", "smallest principal value magnitude"),
    ("A2_GHz", "middle principal value magnitude"),
    ("A3_GHz", "largest principal value magnitude"),
    ("rms_MHz", "rms line residual"),
    ("assignment", "level pair of each input line, in input order"),
];

const ORDERING: Columns = &[
    ("rank", "1 is the best match"),
    ("class", "sign class, e.g. g+e-"),
    ("offset_GHz", "best common detuning offset"),
    ("rms_MHz", "rms peak residual"),
    ("tied", "1 when tied with the best class"),
];

const ZEFOZ: Columns = &[
    FIELD[0],
    FIELD[1],
    FIELD[2],
    ("transition", "level pair, 1-based"),
    ("frequency_GHz", "transition frequency"),
    ("grad_norm_MHz_per_mT", "residual gradient norm"),
    ("curv1_MHz_per_mT2", "smallest curvature eigenvalue"),
    ("curv2_MHz_per_mT2", "middle curvature eigenvalue"),
    ("curv3_MHz_per_mT2", "largest curvature eigenvalue"),
    ("class", "exact-ZEFOZ or near-ZEFOZ"),
    ("stationary", "0 when pinned to the region boundary"),
];

const SELFTEST: Columns = &[
    ("item", "check name"),
    ("result", "PASS or FAIL"),
    ("detail", "measured values and tolerance"),
];

fn columns(cmd: &Command) -> Vec<(&'static str, Columns)> {
    match cmd {
        Command::Levels(_) => vec![("", LEVELS)],
        Command::Transitions(_) => vec![("", TRANSITIONS)],
        Command::Absorption(a) if a.peaks => vec![("", PEAKS)],
        Command::Absorption(_) => vec![("", ABSORPTION)],
        Command::ShbMap(_) => vec![("", SHB_MAP)],
        Command::Odmr(_) => vec![("", ODMR)],
        Command::EprMap(_) => vec![("", EPR_MAP)],
        Command::Fit(_) => vec![("", FIT), ("residuals", RESIDUALS)],
        Command::Invert(_) => vec![("", INVERT)],
        Command::Ordering(_) => vec![("", ORDERING)],
        Command::Zefoz(_) => vec![("", ZEFOZ)],
        Command::Selftest => vec![("", SELFTEST)],
    }
}

/// Column descriptions of the CSV files a subcommand writes.
pub fn schema(cmd: &Command) -> String {
    let mut table = CsvTable::new(&["file", "column", "description"]);
    for (file, cols) in columns(cmd) {
        let file = if file.is_empty() { "main" } else { file };
        for (name, description) in cols {
            table.push(vec![file.into(), (*name).into(), (*description).into()]);
        }
    }
    table.render(None)
}

fn table(cols: Columns) -> CsvTable {
    CsvTable::new(&cols.iter().map(|c| c.0).collect::<Vec<_>>())
}

fn field_cells(f: &FieldVector) -> Vec<Cell> {
    f.0.iter().map(|&v| Cell::Num(v)).collect()
}

fn model(ctx: &Context, site: &SiteArgs) -> Result<SiteModel, CliError> {
    Ok(ctx.config.site_model(site.site()?)?)
}

fn done(ctx: &Context, t: CsvTable) -> Output {
    Output {
        csv: t.render(ctx.stamp),
        files: Vec::new(),
        success: true,
    }
}

pub fn execute(cmd: &Command, ctx: &Context) -> Result<Output, CliError> {
    match cmd {
        Command::Levels(a) => levels(ctx, a),
        Command::Transitions(a) => transitions(ctx, a),
        Command::Absorption(a) => absorption(ctx, a),
        Command::ShbMap(a) => shb_map(ctx, a),
        Command::Odmr(a) => odmr(ctx, a),
        Command::EprMap(a) => epr_map(ctx, a),
        Command::Fit(a) => fit_data(ctx, a),
        Command::Invert(a) => invert(ctx, a),
        Command::Ordering(a) => ordering(ctx, a),
        Command::Zefoz(a) => zefoz(ctx, a),
        Command::Selftest => {
            let (t, success) = selftest::run();
            Ok(Output {
                success,
                ..done(ctx, t)
            })
        }
    }
}

fn levels(ctx: &Context, a: &ManifoldArgs) -> Result<Output, CliError> {
    let m = model(ctx, &a.site)?;
    let sys = m.system(parse_state(&a.state)?);
    let mut t = table(LEVELS);
    for f in a.field.fields()? {
        let mut row = field_cells(&f);
        row.extend(solve(sys, &f).energies.map(Cell::Num));
        t.push(row);
    }
    Ok(done(ctx, t))
}

fn transitions(ctx: &Context, a: &ManifoldArgs) -> Result<Output, CliError> {
    let m = model(ctx, &a.site)?;
    let sys = m.system(parse_state(&a.state)?);
    let mut t = table(TRANSITIONS);
    for f in a.field.fields()? {
        let table = transition_frequencies(&solve(sys, &f), &f);
        for tr in &table.entries {
            let grad = zeeman_gradient(sys, &f, tr.lower, tr.upper).map_or(f64::NAN, |g| 1e3 * g.norm());
            let mut row = field_cells(&f);
            row.extend([
                Cell::from(tr.lower + 1),
                Cell::from(tr.upper + 1),
                Cell::Num(1e3 * tr.frequency),
                Cell::Num(grad),
            ]);
            t.push(row);
        }
    }
    Ok(done(ctx, t))
}

fn absorption(ctx: &Context, a: &AbsorptionArgs) -> Result<Output, CliError> {
    let mut m = model(ctx, &a.site)?;
    if let Some(s) = &a.intensity {
        let i = parse_intensity(s)
            .ok_or_else(|| CliError::input("intensity", format!("expected overlap or uniform, got `{s}`")))?;
        m = m.with_intensity(i);
    }
    let field = a.field.single()?;
    let grid = parse_grid(&a.grid)?;
    let spectrum = absorption_spectrum(&m, &field, &grid)?;
    if a.peaks {
        let mut t = table(PEAKS);
        for p in find_peaks(&spectrum, 0.05) {
            t.push(vec![Cell::Num(p)]);
        }
        return Ok(done(ctx, t));
    }
    let mut t = table(ABSORPTION);
    for (d, v) in spectrum.detunings.iter().zip(&spectrum.amplitudes) {
        t.push(vec![Cell::Num(*d), Cell::Num(*v)]);
    }
    Ok(done(ctx, t))
}

fn shb_map(ctx: &Context, a: &ShbMapArgs) -> Result<Output, CliError> {
    let m = model(ctx, &a.site)?;
    let magnitudes = match &a.magnitudes {
        Some(s) => parse_magnitudes(s)?,
        None => return Err(CliError::input("B", "field magnitudes are required")),
    };
    let dir = parse_direction(&a.dir)?;
    let rule = parse_burn(&a.burn)?;
    let mut options = MapOptions::new(parse_grid(&a.grid)?);
    if let Some(w) = a.hole_width {
        options.hole_width = w;
    }
    let map =
        shb_field_map(&m, &dir, &magnitudes, rule, ctx.config.rates.as_ref(), &options).map_err(CliError::at("B"))?;
    let mut t = table(SHB_MAP);
    for (b, pattern) in map.fields.iter().zip(&map.patterns) {
        let burn = match rule {
            kramers_core::BurnRule::Fixed(d) => d,
            kramers_core::BurnRule::Track(i, j) => {
                kramers_core::spectra::optical_lines(&m, &FieldVector::along(&dir, *b))
                    .line(i, j)
                    .detuning
            }
        };
        for e in &pattern.entries {
            t.push(vec![
                Cell::Num(*b),
                Cell::Num(burn),
                Cell::from(e.class.0 + 1),
                Cell::from(e.class.1 + 1),
                Cell::from(e.probe.0 + 1),
                Cell::from(e.probe.1 + 1),
                Cell::from(e.polarity.name()),
                Cell::Num(e.detuning),
                Cell::Num(e.amplitude),
            ]);
        }
    }
    let mut out = done(ctx, t);
    if let Some(path) = &a.pgm {
        out.files.push((path.clone(), render_pgm(&map.amplitudes)?));
    }
    Ok(out)
}

fn odmr(ctx: &Context, a: &ManifoldArgs) -> Result<Output, CliError> {
    let m = model(ctx, &a.site)?;
    let sys = m.system(parse_state(&a.state)?);
    let mw = ctx.config.microwave();
    let mut t = table(ODMR);
    for f in a.field.fields()? {
        for line in odmr_lines(sys, &f, &mw)? {
            let mut row = field_cells(&f);
            row.extend([
                Cell::from(line.lower + 1),
                Cell::from(line.upper + 1),
                Cell::Num(line.frequency_mhz),
                Cell::Num(line.moment),
                Cell::from(usize::from(line.strong)),
            ]);
            t.push(row);
        }
    }
    Ok(done(ctx, t))
}

fn epr_map(ctx: &Context, a: &EprMapArgs) -> Result<Output, CliError> {
    let m = model(ctx, &a.site)?;
    let sys = m.system(parse_state(&a.state)?);
    let plane = Plane::parse(&a.plane)
        .ok_or_else(|| CliError::input("plane", format!("expected D1D2, bD1 or bD2, got `{}`", a.plane)))?;
    let mw = a.mw.or(ctx.config.mw_ghz).unwrap_or(9.7);
    let points = epr_angular_map(sys, plane, a.step, mw, a.bmax, &ctx.config.microwave())?;
    let mut t = table(EPR_MAP);
    for p in points {
        let r = p.resonance;
        t.push(vec![
            Cell::Num(p.angle_deg),
            Cell::Num(r.field_mt),
            Cell::from(r.lower + 1),
            Cell::from(r.upper + 1),
            Cell::from(usize::from(r.subsite.number())),
            Cell::Num(r.moment),
        ]);
    }
    Ok(done(ctx, t))
}

fn parse_free(s: &str) -> Result<FreeParams, CliError> {
    let mut free = FreeParams::default();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match item.to_ascii_lowercase().as_str() {
            "ground" => free.ground_angles = true,
            "excited" => free.excited_angles = true,
            "misalignment" => free.misalignment = true,
            "values" => free.eigenvalues = true,
            _ => {
                return Err(CliError::input(
                    "free",
                    format!("expected ground, excited, misalignment or values, got `{item}`"),
                ))
            }
        }
    }
    Ok(free)
}

fn fit_data(ctx: &Context, a: &FitArgs) -> Result<Output, CliError> {
    let cfg = &ctx.config;
    let site = a.site.site()?.or(cfg.site).unwrap_or(Site::I);
    let m = cfg.site_model(Some(site))?;
    let path = a
        .data
        .as_ref()
        .ok_or_else(|| CliError::input("data", "a data file is required"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display()), Some("data")))?;
    let data = parse_data_csv(&text).map_err(CliError::at("data"))?;
    let initial = ParamSet {
        ground: cfg.hyperfine(site, State::Ground),
        excited: cfg.hyperfine(site, State::Excited),
        misalignment: [0.0; 3],
    };
    let mut problem = FitProblem::new(m, initial, parse_free(&a.free)?);
    problem.microwave = cfg.microwave();
    if let Some(g) = cfg.gate_ghz {
        problem.gate_ghz = g;
    }
    if let Some(g) = cfg.gate_mt {
        problem.gate_mt = g;
    }
    let mut options = cfg.fit_options();
    if let Some(r) = a.restarts {
        if r == 0 {
            return Err(CliError::input("restarts", "at least one start is needed"));
        }
        options.restarts = r;
    }
    if let Some(s) = a.seed {
        options.seed = s;
    }
    let result = fit(&problem, &data, &options)?;
    let mut t = table(FIT);
    for ((name, value), se) in result.names.iter().zip(&result.values).zip(result.std_errors()) {
        t.push(vec![name.as_str().into(), Cell::Num(*value), Cell::Num(se)]);
    }
    t.push(vec![
        "rms_MHz".into(),
        Cell::Num(result.rms_mhz),
        Cell::Text(String::new()),
    ]);
    t.push(vec![
        "rms_mT".into(),
        Cell::Num(result.rms_mt),
        Cell::Text(String::new()),
    ]);
    t.push(vec![
        "chi_square".into(),
        Cell::Num(result.chi_square),
        Cell::Text(String::new()),
    ]);
    let mut out = done(ctx, t);
    if let Some(path) = &a.residuals {
        let mut r = table(RESIDUALS);
        for p in &result.residuals {
            let point = &data[p.index];
            let (lower, upper) = match p.assigned {
                Some((i, j, _)) => (Cell::from(i + 1), Cell::from(j + 1)),
                None => (Cell::Text(String::new()), Cell::Text(String::new())),
            };
            r.push(vec![
                Cell::from(p.index),
                point.kind.name().into(),
                Cell::Num(point.value),
                p.model.map_or(Cell::Text(String::new()), Cell::Num),
                Cell::Num(p.residual),
                Cell::Num(p.weighted),
                lower,
                upper,
                Cell::from(usize::from(p.outlier)),
            ]);
        }
        out.files.push((path.clone(), r.render(ctx.stamp).into_bytes()));
    }
    Ok(out)
}

fn invert(ctx: &Context, a: &InvertArgs) -> Result<Output, CliError> {
    let lines = match (&a.lines, &a.site) {
        (Some(s), None) => {
            parse_list(s).ok_or_else(|| CliError::input("lines", format!("expected numbers, got `{s}`")))?
        }
        (None, Some(s)) => {
            let site = Site::parse(s).ok_or_else(|| CliError::input("site", format!("unknown site `{s}`")))?;
            observed_odmr_lines_mhz(site).to_vec()
        }
        (Some(_), Some(_)) => return Err(CliError::input("lines", "give either --lines or --site, not both")),
        (None, None) => return Err(CliError::input("lines", "zero-field lines are required")),
    };
    let inv = invert_odmr_lines(&lines).map_err(CliError::at("lines"))?;
    let assignment: Vec<String> = inv
        .assignment
        .iter()
        .map(|(i, j)| format!("{}-{}", i + 1, j + 1))
        .collect();
    let mut t = table(INVERT);
    let mut row: Vec<Cell> = inv.magnitudes.iter().map(|&v| Cell::Num(v)).collect();
    row.push(Cell::Num(inv.rms_mhz));
    row.push(Cell::Text(assignment.join(" ")));
    t.push(row);
    Ok(done(ctx, t))
}

fn ordering(ctx: &Context, a: &OrderingArgs) -> Result<Output, CliError> {
    let m = model(ctx, &a.site)?;
    let peaks = match &a.peaks {
        Some(s) => parse_list(s).ok_or_else(|| CliError::input("peaks", format!("expected numbers, got `{s}`")))?,
        None => return Err(CliError::input("peaks", "peak positions are required")),
    };
    let report = ordering_search(&m, &peaks).map_err(CliError::at("peaks"))?;
    let mut t = table(ORDERING);
    for (k, c) in report.ranked.iter().enumerate() {
        t.push(vec![
            Cell::from(k + 1),
            Cell::Text(c.class.label()),
            Cell::Num(c.offset),
            Cell::Num(c.rms * 1e3),
            Cell::from(usize::from(report.tied.contains(&c.class))),
        ]);
    }
    Ok(done(ctx, t))
}

fn zefoz(ctx: &Context, a: &ZefozArgs) -> Result<Output, CliError> {
    let m = model(ctx, &a.site)?;
    let sys = *m.system(parse_state(&a.state)?);
    let pairs = match &a.transition {
        Some(s) => vec![parse_label(s)
            .ok_or_else(|| CliError::input("transition", format!("expected I-J with 1 ≤ I < J ≤ 4, got `{s}`")))?],
        None => LEVEL_PAIRS.to_vec(),
    };
    let mut options = ZefozOptions::default();
    if let Some(r) = a.resolution {
        options.resolution = r;
    }
    let region = Region::Ball { radius: a.radius };
    let mut t = table(ZEFOZ);
    for (i, j) in pairs {
        let transition = SpinTransition::new(sys, i, j)?;
        for c in zefoz_search(&transition, &region, &options).map_err(CliError::at("radius"))? {
            let mut row = field_cells(&c.field);
            row.push(Cell::Text(format!("{}-{}", c.transition.0 + 1, c.transition.1 + 1)));
            row.push(Cell::Num(c.frequency));
            row.push(Cell::Num(c.gradient_norm));
            row.extend(c.curvature_eigenvalues.map(Cell::Num));
            row.push(c.class.name().into());
            row.push(Cell::from(usize::from(c.stationary)));
            t.push(row);
        }
    }
    Ok(done(ctx, t))
}
