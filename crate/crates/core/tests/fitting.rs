use kramers_core::fitting::{fit, invert_and_seed, invert_odmr_lines, residuals};
use kramers_core::hamiltonian::{energies, invert_zero_field, Axis, LEVEL_PAIRS};
use kramers_core::io::parse_data_csv;
use kramers_core::presets::{hyperfine, observed_odmr_lines_mhz, spin_system};
use kramers_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sweep(axes: &[Axis], sigma: f64, seed: u64) -> Vec<DataPoint> {
    let sys = spin_system(Site::I, State::Ground);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut data = Vec::new();
    for axis in axes {
        for k in 0..=30 {
            let field = FieldVector::along_axis(*axis, 5.0 * k as f64);
            let e = energies(&sys, &field);
            for &(i, j) in LEVEL_PAIRS.iter() {
                let v = e[j] - e[i] + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                data.push(
                    DataPoint::frequency(DataKind::Shb, State::Ground, field, v)
                        .with_label(i, j)
                        .with_sigma(2e-3),
                );
            }
        }
    }
    data
}

fn truth() -> ParamSet {
    ParamSet {
        ground: hyperfine(Site::I, State::Ground),
        excited: hyperfine(Site::I, State::Excited),
        misalignment: [0.0; 3],
    }
}

fn problem() -> FitProblem {
    FitProblem::new(
        SiteModel::preset(Site::I),
        truth(),
        FreeParams::orientation(State::Ground),
    )
}

fn quick() -> FitOptions {
    FitOptions {
        restarts: 2,
        seed: 7,
        ..FitOptions::default()
    }
}

#[test]
fn noise_free_data_is_fitted_exactly() {
    let data = sweep(&[Axis::D1, Axis::D2], 0.0, 0);
    let r = fit(&problem(), &data, &quick()).unwrap();
    assert!(r.rms_mhz * 1e-3 < 1e-6, "{}", r.rms_mhz);
    assert!(r.params.ground.orientation.distance(&truth().ground.orientation) < 1e-6);
    assert!(residuals(&problem(), &truth(), &data)
        .unwrap()
        .iter()
        .all(|p| p.residual.abs() < 1e-9));
}

#[test]
fn infinitely_uncertain_point_changes_nothing() {
    let data = sweep(&[Axis::D1, Axis::D2], 2e-3, 3);
    let base = fit(&problem(), &data, &quick()).unwrap();
    let mut extra = data.clone();
    extra.push(
        DataPoint::frequency(
            DataKind::Shb,
            State::Ground,
            FieldVector::along_axis(Axis::D1, 75.0),
            1.234,
        )
        .with_label(0, 1)
        .with_sigma(f64::INFINITY),
    );
    let more = fit(&problem(), &extra, &quick()).unwrap();
    for (a, b) in base.values.iter().zip(&more.values) {
        assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", base.values, more.values);
    }
}

#[test]
fn single_direction_is_worse_conditioned() {
    let both = fit(&problem(), &sweep(&[Axis::D1, Axis::D2], 2e-3, 11), &quick()).unwrap();
    let one = fit(&problem(), &sweep(&[Axis::D1], 2e-3, 11), &quick()).unwrap();
    let (se_both, se_one) = (both.std_errors(), one.std_errors());
    assert!(
        se_one[0] > se_both[0] && se_one[1] > se_both[1],
        "{se_one:?} vs {se_both:?}"
    );
}

#[test]
fn fixed_parameters_return_input() {
    let data = sweep(&[Axis::D2], 2e-3, 5);
    let p = FitProblem::new(SiteModel::preset(Site::I), truth(), FreeParams::default());
    let before = residuals(&p, &truth(), &data).unwrap();
    let r = fit(&p, &data, &quick()).unwrap();
    assert_eq!(r.params, truth());
    for (a, b) in before.iter().zip(&r.residuals) {
        assert_eq!(a.residual, b.residual);
    }
}

#[test]
fn overdetermined_site_two_inversion() {
    let inv = invert_odmr_lines(observed_odmr_lines_mhz(Site::II)).unwrap();
    assert!(inv.rms_mhz < 2.0, "{inv:?}");
    let expected = [0.1259, 1.1835, 4.8668];
    for (m, e) in inv.magnitudes.iter().zip(expected) {
        assert!((m - e).abs() < 2e-3, "{:?}", inv.magnitudes);
    }
}

#[test]
fn exact_lines_invert_exactly() {
    let e = energies(&spin_system(Site::II, State::Excited), &FieldVector::zero());
    let lines: Vec<f64> = LEVEL_PAIRS.iter().map(|&(i, j)| 1e3 * (e[j] - e[i])).collect();
    let inv = invert_odmr_lines(&lines).unwrap();
    let direct = invert_zero_field(&e).unwrap();
    for (a, b) in inv.magnitudes.iter().zip(direct) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn seeded_problem_fixes_magnitudes() {
    let lines = observed_odmr_lines_mhz(Site::II);
    let (inv, p) = invert_and_seed(lines, &SiteModel::preset(Site::II), State::Ground).unwrap();
    let values = p.initial.ground.values;
    for (v, m) in values.iter().zip(inv.magnitudes) {
        assert!((v.abs() - m).abs() < 1e-12);
    }
    assert_eq!(p.free_count(), 3);
}

#[test]
fn data_file_drives_a_fit() {
    let sys = spin_system(Site::I, State::Ground);
    let mut text = String::from("kind,state,dir_x,dir_y,dir_z,B_mT,value,sigma,label\n");
    for b in [10.0, 40.0, 80.0, 120.0] {
        let e = energies(&sys, &FieldVector::along_axis(Axis::D2, b));
        for &(i, j) in LEVEL_PAIRS.iter() {
            text += &format!("shb,ground,0,1,0,{b},{},0.002,{}-{}\n", e[j] - e[i], i + 1, j + 1);
        }
    }
    let data = parse_data_csv(&text).unwrap();
    assert_eq!(data.len(), 24);
    let r = fit(&problem(), &data, &quick()).unwrap();
    assert!(r.rms_mhz < 1e-3, "{}", r.rms_mhz);
}
