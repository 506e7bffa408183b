mod common;

use photonwave_core::closedform;
use photonwave_core::detection::{DetectorBank, DetectorModel, FrequencyResponse, TimeResponse};
use photonwave_core::metrics::{
    haar_sample, hom_coincidence, search_response, GateResponse, GateSetup, SearchConfig, Shifts,
};
use photonwave_core::network::{apply_circuit, compose, beamsplitter_unitary, BeamsplitterSpec, LinearCircuit};
use photonwave_core::spectral::{overlap, overlap_by_quadrature, windowed_overlap, OverlapCache, PacketTable, SpectralAmplitude};
use photonwave_core::state::{ModeRoster, PhotonicState};
use photonwave_core::Complex64;
use proptest::prelude::*;

fn packet() -> impl Strategy<Value = SpectralAmplitude> {
    (0u8..3, 0.4f64..2.5, -2.5f64..2.5).prop_map(|(family, k, tau)| {
        let p = match family {
            0 => SpectralAmplitude::gaussian(k),
            1 => SpectralAmplitude::lorentzian(k),
            _ => SpectralAmplitude::down_conversion(k, 0.05),
        };
        p.unwrap().shifted(tau).unwrap()
    })
}

fn gaussian_packet() -> impl Strategy<Value = SpectralAmplitude> {
    (0.5f64..2.0, -1.5f64..1.5).prop_map(|(k, tau)| SpectralAmplitude::gaussian(k).unwrap().shifted(tau).unwrap())
}

fn four_mode_network() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0usize..4, 1usize..4, 0.0f64..=1.0), 1..8)
        .prop_map(|v| v.into_iter().map(|(a, d, eta)| (a, (a + d) % 4, eta)).collect())
}

fn build(elements: &[(usize, usize, f64)]) -> LinearCircuit {
    let roster = ModeRoster::new(["a", "b", "c", "d"]).unwrap();
    let stages: Vec<LinearCircuit> = elements
        .iter()
        .map(|&(a, b, eta)| beamsplitter_unitary(&roster, BeamsplitterSpec::new(a, b, eta).unwrap()).unwrap())
        .collect();
    compose(&stages).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn packets_are_normalised(p in packet()) {
        prop_assert!((p.norm_squared().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn frequency_and_time_overlaps_agree(f in packet(), g in packet()) {
        let a = overlap(&f, &g).unwrap();
        let b = windowed_overlap(&f, &g, TimeResponse::Always).unwrap();
        prop_assert!((a - b).norm() < 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn overlap_is_hermitian(f in packet(), g in packet()) {
        let a = overlap(&f, &g).unwrap();
        let b = overlap(&g, &f).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-10);
    }

    #[test]
    fn delay_overlap_depends_on_magnitude_only(k in 0.4f64..2.5, tau in 0.0f64..4.0, family in 0u8..3) {
        let p = match family {
            0 => SpectralAmplitude::gaussian(k),
            1 => SpectralAmplitude::lorentzian(k),
            _ => SpectralAmplitude::down_conversion(k, 1.0),
        }.unwrap();
        let plus = overlap(&p, &p.shifted(tau).unwrap()).unwrap().norm();
        let minus = overlap(&p, &p.shifted(-tau).unwrap()).unwrap().norm();
        prop_assert!((plus - minus).abs() < 1e-10);
        if family == 1 {
            prop_assert!((plus - (-k * tau).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_matrices_are_positive(packets in prop::collection::vec(packet(), 1..=8)) {
        let n = packets.len();
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = overlap(&packets[i], &packets[j]).unwrap();
            }
        }
        for i in 0..n {
            for j in 0..n {
                prop_assert!((m[i * n + j] - m[j * n + i].conj()).norm() < 1e-10);
            }
        }
        prop_assert!(common::min_eigenvalue(n, &m) >= -1e-10);
    }

    #[test]
    fn coincidence_follows_overlap(f in packet(), g in packet()) {
        let ov = overlap(&f, &g).unwrap().norm_sqr();
        let c = hom_coincidence(&f, &g).unwrap();
        prop_assert!((c - (0.5 - 0.5 * ov)).abs() < 1e-8);
    }

    #[test]
    fn networks_are_unitary(elements in four_mode_network()) {
        prop_assert!(build(&elements).unitarity_defect() < 1e-12);
    }

    #[test]
    fn closed_forms_are_bounded_even_and_symmetric(e in 0.01f64..10.0, k in 0.01f64..10.0, tau in -8.0f64..8.0) {
        for v in [
            closedform::gaussian_bandwidth(e, k),
            closedform::lorentzian_bandwidth(e, k),
            closedform::dc_bandwidth(e, k),
            closedform::gaussian_time(k, tau),
            closedform::lorentzian_time(k, tau),
            closedform::dc_time(k, tau),
        ] {
            prop_assert!((-1e-15..=0.5).contains(&v));
        }
        prop_assert_eq!(closedform::gaussian_time(k, tau), closedform::gaussian_time(k, -tau));
        prop_assert_eq!(closedform::lorentzian_time(k, tau), closedform::lorentzian_time(k, -tau));
        prop_assert_eq!(closedform::dc_time(k, tau), closedform::dc_time(k, -tau));
        prop_assert!((closedform::gaussian_bandwidth(e, k) - closedform::gaussian_bandwidth(k, e)).abs() < 1e-15);
        prop_assert!((closedform::lorentzian_bandwidth(e, k) - closedform::lorentzian_bandwidth(k, e)).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn circuits_conserve_photons_and_norm(elements in four_mode_network(), f in gaussian_packet(), g in packet(), seed in any::<u64>()) {
        let table = PacketTable::new();
        let ids = [table.intern(f), table.intern(g)];
        let cache = OverlapCache::new();
        cache.populate(&table, &ids).unwrap();
        let mut r = common::rng(seed);
        let input = common::random_state(&mut r, 4, 3, &ids, 3);
        let out = apply_circuit(&build(&elements), &input).unwrap();
        let counts = |s: &PhotonicState| {
            let mut v: Vec<usize> = s.terms().iter().map(|t| t.photon_count()).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let before = counts(&input);
        for n in counts(&out) {
            prop_assert!(before.contains(&n));
        }
        let (a, b) = (input.norm_squared(&cache).unwrap(), out.norm_squared(&cache).unwrap());
        prop_assert!((a - b).abs() < 1e-8 * a.max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn inner_products_are_conjugate_symmetric(f in packet(), g in packet(), seed in any::<u64>()) {
        let table = PacketTable::new();
        let ids = [table.intern(f), table.intern(g)];
        let cache = OverlapCache::new();
        cache.populate(&table, &ids).unwrap();
        let mut r = common::rng(seed);
        let x = common::random_state(&mut r, 3, 4, &ids, 4);
        let y = common::random_state(&mut r, 3, 4, &ids, 4);
        let xy = x.inner_product(&y, &cache).unwrap();
        let yx = y.inner_product(&x, &cache).unwrap();
        prop_assert!((xy - yx.conj()).norm() < 1e-10 * xy.norm().max(1.0));
        prop_assert!(x.norm_squared(&cache).unwrap() >= -1e-12);
    }

    #[test]
    fn canonical_form_is_idempotent(seed in any::<u64>()) {
        let table = PacketTable::new();
        let ids = [
            table.intern(SpectralAmplitude::gaussian(1.0).unwrap()),
            table.intern(SpectralAmplitude::lorentzian(1.0).unwrap()),
        ];
        let mut r = common::rng(seed);
        let x = common::random_state(&mut r, 3, 3, &ids, 6);
        let again = PhotonicState::from_terms(3, x.terms().iter().map(|t| (t.coefficient, t.photons.clone())).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(again, x);
    }

    #[test]
    fn gate_metrics_stay_in_unit_interval(
        control in -1.5f64..1.5,
        target in -1.5f64..1.5,
        ancilla in -1.5f64..1.5,
        band in prop::option::of(0.2f64..10.0),
        window in prop::option::of(0.3f64..5.0),
        seed in any::<u64>(),
    ) {
        let frequency = band.map_or(FrequencyResponse::Flat, |bandwidth| FrequencyResponse::GaussianBand { bandwidth });
        let time = window.map_or(TimeResponse::Always, |half_width| TimeResponse::RectWindow { half_width });
        let bank = DetectorBank::uniform(DetectorModel::new(frequency, time).unwrap());
        let setup = GateSetup::cnot(SpectralAmplitude::gaussian(1.0).unwrap(), Shifts { control, target, ancilla }, bank).unwrap();
        let response = GateResponse::for_setup(&setup).unwrap();
        for k in 0..16 {
            let m = response.evaluate(&haar_sample(seed, k)).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.fidelity));
            prop_assert!((0.0..=1.0).contains(&m.success_probability));
        }
    }
}

#[test]
fn search_is_bit_reproducible() {
    let setup = GateSetup::cnot(SpectralAmplitude::gaussian(1.0).unwrap(), Shifts { ancilla: 0.3, control: 0.1, ..Default::default() }, DetectorBank::default()).unwrap();
    let response = GateResponse::for_setup(&setup).unwrap();
    let cfg = SearchConfig::new(500, 42);
    let a = search_response(&response, &cfg).unwrap();
    let b = search_response(&response, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.f_min.to_bits(), b.f_min.to_bits());
    let c = search_response(&GateResponse::for_setup(&setup).unwrap(), &cfg).unwrap();
    assert_eq!(a, c);
}

#[test]
fn haar_samples_are_uniform_on_average() {
    let n = 4000;
    for slot in 0..4 {
        let v: Vec<f64> = (0..n).map(|k| haar_sample(17, k).amplitudes()[slot].norm_sqr()).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * se, "slot {slot}: mean {mean}, se {se}");
    }
}

#[test]
fn doubling_grid_points_leaves_overlap_unchanged() {
    let f = SpectralAmplitude::gaussian(1.0).unwrap();
    let g = SpectralAmplitude::gaussian(1.7).unwrap().shifted(0.8).unwrap();
    let a = overlap_by_quadrature(&f, &g, -40.0, 40.0, 512).unwrap();
    let b = overlap_by_quadrature(&f, &g, -40.0, 40.0, 1024).unwrap();
    assert!((a - b).norm() < 1e-8);
    assert!((a - overlap(&f, &g).unwrap()).norm() < 1e-8);
}
