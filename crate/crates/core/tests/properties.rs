use kramers_core::hamiltonian::{
    energies, invert_zero_field, sorted_zero_field_energies, zeeman_gradient, FieldVector, SpinSystem, Subsite,
};
use kramers_core::io::format_g9;
use kramers_core::magres::{epr_resonance_fields, odmr_lines, MicrowaveOptions};
use kramers_core::presets::{spin_system, Site, State};
use kramers_core::shb::{hole_pattern, populations_after_burn, RateMatrix};
use kramers_core::spectra::{optical_lines, SiteModel};
use kramers_core::tensor::{
    decompose_tensor, rotation_matrix, EulerAngles, FrameRotation, PrincipalTensor, SymmetricTensor3,
};
use nalgebra::Vector3;
use proptest::prelude::*;

fn angles() -> impl Strategy<Value = EulerAngles> {
    (-180.0..180.0f64, 0.0..180.0f64, -180.0..180.0f64).prop_map(|(a, b, g)| EulerAngles::new(a, b, g))
}

fn tensor(lo: f64, hi: f64) -> impl Strategy<Value = PrincipalTensor> {
    ([lo..hi, lo..hi, lo..hi], angles()).prop_map(|(v, o)| PrincipalTensor::new(v, o))
}

fn system() -> impl Strategy<Value = SpinSystem> {
    (tensor(-8.0, 8.0), tensor(0.1, 7.0)).prop_map(|(a, g)| SpinSystem::from_principal(&a, &g))
}

fn field(max: f64) -> impl Strategy<Value = FieldVector> {
    [-max..max, -max..max, -max..max].prop_map(|[x, y, z]| FieldVector::new(x, y, z))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spectrum_even_in_field(sys in system(), b in field(500.0)) {
        prop_assert!(max_diff(&energies(&sys, &b), &energies(&sys, &-b)) < 1e-9);
    }

    #[test]
    fn energies_sum_to_zero(sys in system(), b in field(500.0)) {
        prop_assert!(energies(&sys, &b).iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn second_subsite_sees_rotated_field(sys in system(), b in field(300.0)) {
        let two = sys.with_subsite(Subsite::Two);
        let rotated = b.rotated(&FrameRotation::subsite());
        prop_assert!(max_diff(&energies(&two, &b), &energies(&sys, &rotated)) < 1e-10);
    }

    #[test]
    fn zero_field_energies_depend_on_principal_values_only(a in tensor(-8.0, 8.0), g in tensor(0.1, 7.0)) {
        let sys = SpinSystem::from_principal(&a, &g);
        let closed = sorted_zero_field_energies(a.values[0], a.values[1], a.values[2]);
        prop_assert!(max_diff(&energies(&sys, &FieldVector::zero()), &closed) < 1e-9);
    }

    #[test]
    fn zero_field_inversion_round_trip(mut v in [0.0..8.0f64, 0.0..8.0, 0.0..8.0]) {
        v.sort_by(f64::total_cmp);
        let back = invert_zero_field(&sorted_zero_field_energies(v[0], v[1], v[2])).unwrap();
        prop_assert!(max_diff(&back, &v) < 1e-12, "{v:?} -> {back:?}");
    }

    #[test]
    fn decomposition_reassembles(t in tensor(-8.0, 8.0)) {
        let m = t.assemble();
        let again = decompose_tensor(&m).principal.assemble();
        prop_assert!(m.max_abs_diff(&again) < 1e-9);
    }

    #[test]
    fn equivalent_euler_triples_share_tensor(t in tensor(-8.0, 8.0)) {
        let m = t.assemble();
        for e in t.orientation.equivalents() {
            prop_assert!(PrincipalTensor::new(t.values, e).assemble().max_abs_diff(&m) < 1e-12);
        }
        prop_assert!(PrincipalTensor::new(t.values, t.orientation.canonical()).assemble().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn conjugation_preserves_invariants(t in tensor(-8.0, 8.0), r in angles()) {
        let m = t.assemble();
        let c = m.conjugate(&rotation_matrix(&r));
        prop_assert!((c.matrix().trace() - m.matrix().trace()).abs() < 1e-12);
        let (mut x, mut y) = (m.eigenvalues(), c.eigenvalues());
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        prop_assert!(max_diff(&x, &y) < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences(sys in system(), b in field(200.0), pair in 0..6usize) {
        let (i, j) = kramers_core::hamiltonian::LEVEL_PAIRS[pair];
        let e = energies(&sys, &b);
        let gaps = [e[1] - e[0], e[2] - e[1], e[3] - e[2]];
        prop_assume!(gaps.iter().all(|g| *g > 0.02));
        let grad = zeeman_gradient(&sys, &b, i, j).unwrap();
        let h = 1e-3;
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let (p, m) = (energies(&sys, &FieldVector(b.0 + d)), energies(&sys, &FieldVector(b.0 - d)));
            let fd = ((p[j] - p[i]) - (m[j] - m[i])) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() <= 1e-6 * grad.norm().max(1e-3), "{fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn zero_field_odmr_ignores_orientation(values in [-6.0..6.0f64, -6.0..6.0, -6.0..6.0], o1 in angles(), o2 in angles()) {
        let g = spin_system(Site::I, State::Ground).g();
        let freqs = |o: EulerAngles| {
            let a = PrincipalTensor::new(values, o).assemble();
            let mut f: Vec<f64> = odmr_lines(&SpinSystem::new(a, g), &FieldVector::zero(), &MicrowaveOptions::default())
                .unwrap()
                .iter()
                .map(|l| l.frequency_mhz)
                .collect();
            f.sort_by(f64::total_cmp);
            f
        };
        prop_assert!(max_diff(&freqs(o1), &freqs(o2)) < 1e-6);
    }

    #[test]
    fn formatted_numbers_parse_back(x in prop::num::f64::NORMAL) {
        let back: f64 = format_g9(x).parse().unwrap();
        prop_assert!(((back - x) / x).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hole_pattern_even_in_field(site in prop::sample::select(Site::ALL.to_vec()), b in field(150.0), burn in -1.5..1.5f64) {
        let model = SiteModel::preset(site);
        let (p, m) = (hole_pattern(&model, &b, burn, None).unwrap(), hole_pattern(&model, &-b, burn, None).unwrap());
        prop_assert_eq!(p.entries.len(), m.entries.len());
        for (x, y) in p.entries.iter().zip(&m.entries) {
            prop_assert_eq!(x.polarity, y.polarity);
            prop_assert!((x.detuning - y.detuning).abs() < 1e-9);
            prop_assert!((x.amplitude - y.amplitude).abs() < 1e-9);
        }
    }

    #[test]
    fn hole_bookkeeping_holds(site in prop::sample::select(Site::ALL.to_vec()), b in field(150.0), burn in -1.5..1.5f64) {
        let model = SiteModel::preset(site);
        let set = optical_lines(&model, &b);
        let p = kramers_core::shb::hole_pattern_from_lines(&model, &set, burn, None).unwrap();
        prop_assert!(p.bookkeeping_error(&set) < 1e-12);
    }

    #[test]
    fn burned_populations_stay_normalized(
        r in [0.0..1e3f64, 0.0..1e3, 0.0..1e3, 0.0..1e3, 0.0..1e3, 0.0..1e3],
        pump in 0.0..100.0f64,
        duration in prop::option::of(0.0..1.0f64),
        pumped in 0..4usize,
    ) {
        let pairs = [(0, 1, r[0]), (0, 2, r[1]), (0, 3, r[2]), (1, 2, r[3]), (1, 3, r[4]), (2, 3, r[5])];
        let rates = RateMatrix::symmetric(&pairs, pump, duration.unwrap_or(f64::INFINITY)).unwrap();
        let m = rates.generator(Some(pumped));
        for c in 0..4 {
            prop_assert!(m.column(c).sum().abs() < 1e-9 * m.amax().max(1.0));
        }
        let n = populations_after_burn(&rates, pumped).unwrap();
        prop_assert!((n.sum() - 1.0).abs() < 1e-9);
        prop_assert!(n.iter().all(|x| *x > -1e-9));
    }

    #[test]
    fn epr_fields_symmetric_under_c2(dir in [-1.0..1.0f64, -1.0..1.0, -1.0..1.0]) {
        let d = Vector3::from(dir);
        prop_assume!(d.norm() > 0.1);
        let sys = spin_system(Site::I, State::Ground);
        let opts = MicrowaveOptions::default();
        let fields = |v: &Vector3<f64>| {
            let mut f: Vec<f64> = epr_resonance_fields(&sys, v, 9.7, 1500.0, &opts).unwrap().iter().map(|r| r.field_mt).collect();
            f.sort_by(f64::total_cmp);
            f
        };
        let (a, b) = (fields(&d), fields(&FrameRotation::subsite().apply(&d)));
        prop_assert_eq!(a.len(), b.len());
        prop_assert!(max_diff(&a, &b) < 1e-6);
    }
}

#[test]
fn isotropic_tensor_is_scalar() {
    for o in [EulerAngles::new(10.0, 20.0, 30.0), EulerAngles::new(-75.0, 133.0, 4.0)] {
        let t = PrincipalTensor::new([2.5; 3], o).assemble();
        assert!(t.max_abs_diff(&SymmetricTensor3::isotropic(2.5)) < 1e-12);
    }
}
