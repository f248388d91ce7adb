use kramers_core::hamiltonian::{
    basis_overlaps, build_hamiltonian, energies, physical_constants, solve, solve_in_frame, Axis, FieldVector,
    SpinSystem, C64, DEFAULT_GN, LEVEL_PAIRS,
};
use kramers_core::magres::{epr_angular_map, epr_resonance_fields, MicrowaveOptions, Plane};
use kramers_core::presets::{spin_system, Site, State};
use kramers_core::shb::{
    hole_pattern, populations_after_burn, populations_after_burn_for, shb_field_map, BurnRule, MapOptions, Polarity,
    RateMatrix,
};
use kramers_core::spectra::{Grid, SiteModel};
use kramers_core::tensor::{FrameRotation, RotationKind};
use kramers_core::zefoz::{sensitivity, zefoz_search, Region, SpinTransition, ZefozOptions};
use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

/// Roots of the characteristic polynomial, coefficients by Faddeev–LeVerrier
/// and roots by Durand–Kerner iteration.
fn characteristic_roots(h: &Matrix4<C64>) -> [f64; 4] {
    let n = 4;
    let mut c = [C64::new(1.0, 0.0); 5];
    let mut m = Matrix4::<C64>::zeros();
    for k in 1..=n {
        m = h * m + Matrix4::identity() * c[k - 1];
        c[k] = -(h * m).trace() / C64::new(k as f64, 0.0);
    }
    let poly = |z: C64| c.iter().fold(C64::new(0.0, 0.0), |acc, ck| acc * z + ck);
    let mut roots: Vec<C64> = (0..n).map(|k| C64::new(0.4, 0.9).powu(k as u32) * 3.0).collect();
    for _ in 0..500 {
        for i in 0..n {
            let denom = (0..n)
                .filter(|&j| j != i)
                .fold(C64::new(1.0, 0.0), |acc, j| acc * (roots[i] - roots[j]));
            let r = roots[i];
            roots[i] = r - poly(r) / denom;
        }
    }
    let mut out: Vec<f64> = roots.iter().map(|z| z.re).collect();
    out.sort_by(f64::total_cmp);
    [out[0], out[1], out[2], out[3]]
}

#[test]
fn eigenvalues_match_characteristic_polynomial() {
    let sys = spin_system(Site::I, State::Ground);
    for b in [
        FieldVector::new(100.0, 0.0, 0.0),
        FieldVector::new(12.0, -40.0, 7.5),
        FieldVector::zero(),
    ] {
        let oracle = characteristic_roots(&build_hamiltonian(&sys, &b));
        let e = energies(&sys, &b);
        for k in 0..4 {
            assert!((e[k] - oracle[k]).abs() < 1e-10, "{e:?} vs {oracle:?}");
        }
    }
}

#[test]
fn site_one_zero_field_levels() {
    let e = energies(&spin_system(Site::I, State::Ground), &FieldVector::zero());
    for (x, y) in e.iter().zip([-1.7228, -0.9028, 1.1433, 1.4823]) {
        assert!((x - y).abs() < 1e-4, "{e:?}");
    }
}

#[test]
fn magneton_ratio_and_nuclear_zeeman() {
    let c = physical_constants();
    assert!((c.mu_b / c.mu_n - 1836.15).abs() < 0.01);
    assert_eq!(c.mu_b.round(), 14.0);
    assert!((c.mu_n * DEFAULT_GN - 7.524e-3).abs() < 1e-6);
}

#[test]
fn high_field_states_are_product_states() {
    let sys = spin_system(Site::I, State::Ground);
    let field = FieldVector::along_axis(Axis::D1, 150.0);
    let z = (sys.g().matrix() * Axis::D1.unit()).normalize();
    let x = Axis::B.unit().cross(&z).normalize();
    let frame = FrameRotation::from_matrix(Matrix3::from_columns(&[x, z.cross(&x), z]), RotationKind::Generic).unwrap();
    let o = basis_overlaps(&solve_in_frame(&sys, &field, &frame));
    for k in 0..4 {
        assert!(o.column(k).max() > 0.9, "{o}");
        assert!((o.column(k).sum() - 1.0).abs() < 1e-12);
    }
    let crystal = basis_overlaps(&solve(&sys, &field));
    for k in 0..4 {
        assert!((crystal.column(k).sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn curvature_matches_second_differences() {
    let sys = spin_system(Site::I, State::Ground);
    let b = Vector3::new(20.0, 10.0, 5.0);
    let h = 0.02;
    for &(i, j) in LEVEL_PAIRS.iter() {
        let t = SpinTransition::new(sys, i, j).unwrap();
        let nu = |d: Vector3<f64>| {
            let e = energies(&sys, &FieldVector(b + d));
            1e3 * (e[j] - e[i])
        };
        let unit = |k: usize| Vector3::ith(k, h);
        let mut oracle = Matrix3::zeros();
        for k in 0..3 {
            for l in 0..3 {
                oracle[(k, l)] = if k == l {
                    (nu(unit(k)) - 2.0 * nu(Vector3::zeros()) + nu(-unit(k))) / (h * h)
                } else {
                    (nu(unit(k) + unit(l)) - nu(unit(k) - unit(l)) - nu(unit(l) - unit(k)) + nu(-unit(k) - unit(l)))
                        / (4.0 * h * h)
                };
            }
        }
        let s = sensitivity(&t, &FieldVector(b)).unwrap();
        let scale = oracle.amax();
        assert!(
            (s.curvature - oracle).amax() <= 1e-4 * scale,
            "({i},{j}) {}\n{oracle}",
            s.curvature
        );
    }
}

#[test]
fn gradient_vanishes_at_zero_field() {
    let sys = spin_system(Site::I, State::Ground);
    for &(i, j) in LEVEL_PAIRS.iter() {
        let t = SpinTransition::new(sys, i, j).unwrap();
        assert!(sensitivity(&t, &FieldVector::zero()).unwrap().gradient.norm() < 1e-9);
    }
}

#[test]
fn zero_field_is_a_zefoz_point_for_every_transition() {
    let sys = spin_system(Site::I, State::Ground);
    for &(i, j) in LEVEL_PAIRS.iter() {
        let t = SpinTransition::new(sys, i, j).unwrap();
        let c = zefoz_search(&t, &Region::Point(FieldVector::zero()), &ZefozOptions::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].field.magnitude() == 0.0 && c[0].gradient_norm < 1e-3);
    }
}

#[test]
fn zefoz_ranking_stable_under_grid_refinement() {
    let region = Region::Ball { radius: 100.0 };
    let coarse = ZefozOptions::default();
    let fine = ZefozOptions {
        resolution: 2 * coarse.resolution - 1,
        ..coarse
    };
    for site in Site::ALL {
        for state in State::ALL {
            for (i, j) in [(0, 1), (2, 3), (0, 3)] {
                let t = SpinTransition::new(spin_system(site, state), i, j).unwrap();
                let a = zefoz_search(&t, &region, &coarse).unwrap();
                let b = zefoz_search(&t, &region, &fine).unwrap();
                let (a, b) = (&a[0], &b[0]);
                assert_eq!(a.class, b.class, "{site:?} {state:?} ({i},{j})");
                assert!((a.field.0 - b.field.0).norm() < 0.1, "{:?} vs {:?}", a.field, b.field);
            }
        }
    }
}

/// Classical fourth-order Runge–Kutta for `dn/dt = M n`.
fn rk4(m: &Matrix4<f64>, start: Vector4<f64>, duration: f64, steps: usize) -> Vector4<f64> {
    let dt = duration / steps as f64;
    let mut n = start;
    for _ in 0..steps {
        let k1 = m * n;
        let k2 = m * (n + k1 * (dt / 2.0));
        let k3 = m * (n + k2 * (dt / 2.0));
        let k4 = m * (n + k3 * dt);
        n += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    n
}

#[test]
fn fast_relaxation_partner_is_depleted_with_burned_level() {
    let slow = 1.0;
    let rates = RateMatrix::symmetric(&[(0, 2, 100.0 * slow), (0, 1, slow), (1, 2, slow)], 20.0, 0.5).unwrap();
    let pumped = 2;
    let n = populations_after_burn(&rates, pumped).unwrap();
    let oracle = rk4(&rates.generator(Some(pumped)), rates.thermal(), 0.5, 20_000);
    assert!((n - oracle).amax() < 1e-9, "{n} vs {oracle}");
    let change = (n[0] - 0.25) / 0.25;
    assert!(change < -rates.epsilon, "{change}");
}

#[test]
fn long_burn_without_pump_reaches_stationary_distribution() {
    let rates = RateMatrix::symmetric(&[(0, 1, 3.0), (1, 2, 0.5), (2, 3, 7.0)], 0.0, f64::INFINITY).unwrap();
    let n = populations_after_burn(&rates, 1).unwrap();
    assert!((n - Vector4::repeat(0.25)).amax() < 1e-12);

    let e = [-1.7, -0.9, 1.1, 1.5];
    let thermal = rates.with_detailed_balance(0.05, e).unwrap();
    let n = populations_after_burn(&thermal, 1).unwrap();
    assert!((n - thermal.thermal()).amax() < 1e-9, "{n}");
    let later = populations_after_burn_for(&thermal, 1, 50.0).unwrap();
    assert!((later - n).amax() < 1e-9);
}

#[test]
fn no_rate_model_means_no_pseudo_holes() {
    let model = SiteModel::preset(Site::I);
    for b in [0.0, 20.0, 150.0] {
        let p = hole_pattern(&model, &FieldVector::along_axis(Axis::D1, b), 0.0, None).unwrap();
        assert_eq!(p.of_polarity(Polarity::PseudoHole).count(), 0);
        assert!(p.of_polarity(Polarity::Antihole).count() > 0);
    }
}

#[test]
fn map_zero_field_row_is_the_zero_field_pattern() {
    let model = SiteModel::preset(Site::I);
    let options = MapOptions::new(Grid::new(-3.0, 3.0, 0.002).unwrap());
    let map = shb_field_map(
        &model,
        &Axis::D1.unit(),
        &[0.0, 10.0, 20.0],
        BurnRule::Fixed(0.0),
        None,
        &options,
    )
    .unwrap();
    let direct = hole_pattern(&model, &FieldVector::zero(), 0.0, None).unwrap();
    assert_eq!(map.patterns[0], direct);
    assert_eq!(map.amplitudes.len(), 3);
    assert!(map.amplitudes.iter().all(|r| r.len() == options.grid.len()));
    let peak = map.amplitudes.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!((peak - 1.0).abs() < 1e-12);
}

#[test]
fn high_field_traces_are_affine() {
    let model = SiteModel::preset(Site::I);
    let fields: Vec<f64> = (0..=40).map(|k| 300.0 + 5.0 * k as f64).collect();
    let options = MapOptions::new(Grid::new(-1.0, 1.0, 0.01).unwrap());
    let map = shb_field_map(&model, &Axis::D1.unit(), &fields, BurnRule::Track(0, 0), None, &options).unwrap();
    let keys: Vec<_> = map.patterns[0]
        .entries
        .iter()
        .map(|e| (e.class, e.probe, e.polarity))
        .collect();
    let window = 9;
    let mut checked = 0;
    for key in keys {
        let trace: Vec<f64> = map
            .patterns
            .iter()
            .map(|p| {
                p.entries
                    .iter()
                    .find(|e| (e.class, e.probe, e.polarity) == key)
                    .expect("trace present")
                    .detuning
            })
            .collect();
        if trace.iter().any(|y| y.abs() < 0.1) {
            continue;
        }
        for start in 0..=fields.len() - window {
            let (xs, ys) = (&fields[start..start + window], &trace[start..start + window]);
            let n = window as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let slope = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
            for (x, y) in xs.iter().zip(ys) {
                let fit = my + slope * (x - mx);
                assert!(((y - fit) / y).abs() < 1e-3, "{key:?} at {x} mT: {y} vs {fit}");
            }
        }
        checked += 1;
    }
    assert!(checked > 10, "{checked}");
}

#[test]
fn angular_map_is_periodic_and_subsites_merge_on_axes() {
    let sys = spin_system(Site::I, State::Ground);
    let opts = MicrowaveOptions::default();
    let map = epr_angular_map(&sys, Plane::D1D2, 15.0, 9.7, 1500.0, &opts).unwrap();
    let at = |a: f64| -> Vec<f64> {
        map.iter()
            .filter(|p| p.angle_deg == a)
            .map(|p| p.resonance.field_mt)
            .collect()
    };
    let (first, last) = (at(0.0), at(180.0));
    assert!(!first.is_empty());
    assert_eq!(first.len(), last.len());
    assert!(first.iter().zip(&last).all(|(x, y)| (x - y).abs() < 1e-6));

    for plane in [Plane::BD1, Plane::BD2] {
        for angle in [0.0, 90.0] {
            let res = epr_resonance_fields(&sys, &plane.direction(angle), 9.7, 1500.0, &opts).unwrap();
            let field_of = |s| -> Vec<f64> { res.iter().filter(|r| r.subsite == s).map(|r| r.field_mt).collect() };
            let (one, two) = (
                field_of(kramers_core::Subsite::One),
                field_of(kramers_core::Subsite::Two),
            );
            assert_eq!(one.len(), two.len());
            assert!(
                one.iter().zip(&two).all(|(x, y)| (x - y).abs() < 1e-6),
                "{plane:?} {angle}: {one:?} {two:?}"
            );
        }
    }
}

#[test]
fn isotropic_system_single_epr_branch() {
    let g = 2.0023;
    let sys = SpinSystem::new(
        kramers_core::SymmetricTensor3::zero(),
        kramers_core::SymmetricTensor3::isotropic(g),
    )
    .with_gn(0.0);
    let nu = 9.7;
    let res = epr_resonance_fields(
        &sys,
        &Vector3::new(0.3, 0.4, 0.5),
        nu,
        1000.0,
        &MicrowaveOptions::default(),
    )
    .unwrap();
    let expected = nu / (physical_constants().mu_b * g) * 1e3;
    assert!(!res.is_empty());
    assert!(
        res.iter().all(|r| (r.field_mt - expected).abs() < 1e-6),
        "{res:?} vs {expected}"
    );
}
