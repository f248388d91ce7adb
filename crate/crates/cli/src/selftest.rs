//! Regression checks of the preset parameters against reference values.

use kramers_core::hamiltonian::{energies, Axis, FieldVector, SpinSystem};
use kramers_core::io::{Cell, CsvTable};
use kramers_core::magres::{odmr_lines, MicrowaveOptions};
use kramers_core::presets::{
    hyperfine, observed_odmr_lines_mhz, printed_hyperfine_matrix, printed_zeeman_matrix, spin_system, zeeman, Site,
    State,
};

struct Item {
    name: String,
    pass: bool,
    detail: String,
}

fn odmr_set(site: Site, extra: &[f64], tol: f64) -> Item {
    let lines: Vec<f64> = odmr_lines(
        &spin_system(site, State::Ground),
        &FieldVector::zero(),
        &MicrowaveOptions::default(),
    )
    .map(|v| v.iter().map(|l| l.frequency_mhz).collect())
    .unwrap_or_default();
    let mut targets = observed_odmr_lines_mhz(site).to_vec();
    targets.extend_from_slice(extra);
    let mut worst = if lines.is_empty() { f64::INFINITY } else { 0.0 };
    let mut parts = Vec::new();
    for t in &targets {
        let nearest = lines
            .iter()
            .copied()
            .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()));
        if let Some(n) = nearest {
            worst = worst.max((n - t).abs());
            parts.push(format!("{t}->{n:.1}"));
        }
    }
    Item {
        name: format!("odmr {}", site.name()),
        pass: worst <= tol,
        detail: format!("worst {worst:.2} MHz (tol {tol}): {}", parts.join(" ")),
    }
}

fn matrices() -> Vec<Item> {
    let mut items = Vec::new();
    for site in Site::ALL {
        for state in State::ALL {
            let (tol_a, tol_g) = match state {
                State::Ground => (0.01, 0.01),
                State::Excited => (0.02, 0.03),
            };
            let da = hyperfine(site, state)
                .assemble()
                .max_abs_diff(&printed_hyperfine_matrix(site, state));
            let dg = zeeman(site, state)
                .assemble()
                .max_abs_diff(&printed_zeeman_matrix(site, state));
            for (tensor, d, tol, unit) in [("A", da, tol_a, " GHz"), ("g", dg, tol_g, "")] {
                items.push(Item {
                    name: format!("matrix {} {} {tensor}", site.name(), state.name()),
                    pass: d <= tol,
                    detail: format!("max deviation {d:.4}{unit} (tol {tol})"),
                });
            }
        }
    }
    items
}

/// Field of the deepest interior minimum of any adjacent-level gap, mT.
fn crossing(sys: &SpinSystem, lo: f64, hi: f64) -> (f64, f64) {
    let step = 0.05;
    let n = ((hi - lo) / step).round() as usize;
    let dir = Axis::D1.unit();
    let gaps: Vec<[f64; 3]> = (0..=n)
        .map(|k| {
            let e = energies(sys, &FieldVector::along(&dir, lo + k as f64 * step));
            [e[1] - e[0], e[2] - e[1], e[3] - e[2]]
        })
        .collect();
    let mut best = (f64::NAN, f64::INFINITY);
    for p in 0..3 {
        for k in 1..n {
            let g = gaps[k][p];
            if g < gaps[k - 1][p] && g <= gaps[k + 1][p] && g < best.1 {
                best = (lo + k as f64 * step, g);
            }
        }
    }
    best
}

fn crossing_window(state: State, center: f64, half_width: f64) -> Item {
    let (b, gap) = crossing(&spin_system(Site::I, state), 0.0, 150.0);
    Item {
        name: format!("avoided crossing site-I {} B||D1", state.name()),
        pass: (b - center).abs() <= half_width,
        detail: format!(
            "{b:.2} mT, gap {:.1} MHz (window {center} ± {half_width} mT)",
            gap * 1e3
        ),
    }
}

/// Runs every check; the flag is false when any fails.
pub fn run() -> (CsvTable, bool) {
    let mut items = vec![odmr_set(Site::I, &[339.0, 823.0], 1.0), odmr_set(Site::II, &[], 2.0)];
    items.extend(matrices());
    items.push(crossing_window(State::Ground, 30.0, 10.0));
    items.push(crossing_window(State::Excited, 80.0, 20.0));
    let mut t = CsvTable::new(&["item", "result", "detail"]);
    let mut all = true;
    for i in items {
        all &= i.pass;
        t.push(vec![
            Cell::Text(i.name),
            (if i.pass { "PASS" } else { "FAIL" }).into(),
            Cell::Text(i.detail),
        ]);
    }
    (t, all)
}
