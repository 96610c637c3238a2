mod common;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use common::*;
use polyloewner::eval::sup_norm;
use polyloewner::generators::{
    averaged_linear_symbol, convex_combo, from_starlike_polynomial, membership_check, perturb_starlike_delta,
    product_form, shear_linear, shear_quadratic, Atom, AtomicMeasure, DeltaSearch, GridSpec, Kernel, PolynomialSpec,
    MEMBERSHIP_TOL,
};
use polyloewner::{CatalogName, Generator, GeneratorSpec, JetMap, MultiJet, Normalization, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn h(name: CatalogName) -> Generator {
    Generator::catalog(name, name.min_dim(), 4).unwrap()
}

fn poly_generator(terms0: &[([u32; 2], f64)]) -> Generator {
    let first = MultiJet::from_terms(2, 4, terms0.iter().map(|(a, v)| (*a, c(*v, 0.0)))).unwrap();
    let second = MultiJet::from_terms(2, 4, [([0u32, 1], c(-1.0, 0.0))]).unwrap();
    let map = JetMap::new(vec![first, second], Normalization::GeneratorNormalized).unwrap();
    Generator::build(&GeneratorSpec::Polynomial(PolynomialSpec::from_jet(&map)), 2, 4).unwrap()
}

fn random_member(rng: &mut ChaCha8Rng, n: usize) -> Generator {
    let atoms = |rng: &mut ChaCha8Rng| {
        let k = rng.gen_range(1..=3);
        let raw: Vec<Atom> =
            (0..k).map(|_| Atom { angle: rng.gen_range(0.0..TAU), weight: rng.gen_range(0.05..1.0) }).collect();
        AtomicMeasure::normalized(raw).unwrap()
    };
    let product = |rng: &mut ChaCha8Rng| {
        let selectors: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=n)).collect();
        let kernels: Vec<Kernel> =
            (0..n).map(|_| if rng.gen_bool(0.2) { Kernel::Constant } else { Kernel::Atomic(atoms(rng)) }).collect();
        product_form(&selectors, &kernels, 4).unwrap()
    };
    if rng.gen_bool(0.5) {
        product(rng)
    } else {
        let names = [CatalogName::H1, CatalogName::H2, CatalogName::H3, CatalogName::H4, CatalogName::H5];
        let parts: Vec<Generator> = (0..rng.gen_range(2..=3))
            .map(|_| {
                let g = if rng.gen_bool(0.5) {
                    product(rng)
                } else {
                    Generator::catalog(names[rng.gen_range(0..names.len())], n, 4).unwrap()
                };
                let angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
                g.rotate(&angles).unwrap()
            })
            .collect();
        let raw: Vec<f64> = parts.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let rest: f64 = w[1..].iter().sum();
        w[0] = 1.0 - rest;
        convex_combo(&parts, &w).unwrap()
    }
}

#[test]
fn catalog_generators_are_members() {
    for name in CatalogName::GENERATORS {
        let cert = membership_check(&h(name), &GridSpec::with_angles(32), MEMBERSHIP_TOL);
        assert!(cert.passed(), "{name}: {cert:?}");
    }
}

#[test]
fn identity_margin_is_minus_one() {
    for n in 1..=3 {
        let cert = membership_check(&Generator::identity(n, 3), &GridSpec::with_angles(8), MEMBERSHIP_TOL);
        assert!(cert.passed());
        assert!((cert.worst_margin + 1.0).abs() < 1e-15);
    }
}

#[test]
fn planted_violator_has_exact_witness() {
    let bad = poly_generator(&[([1, 0], -1.0), ([0, 2], 2.0)]);
    let cert = membership_check(&bad, &GridSpec::reference(), MEMBERSHIP_TOL);
    assert_eq!(cert.verdict, Verdict::Fail);
    let w = &cert.witness;
    let z = &w.point;
    let j = w.coordinate - 1;
    assert!(z[j].norm() > 0.0 && (z[j].norm() - sup_norm(z)).abs() < 1e-15);
    let v = bad.eval(z).unwrap();
    assert!(((v[j] / z[j]).re - w.margin).abs() < 1e-14);
    assert!(w.margin > MEMBERSHIP_TOL);
    // the worst point has z_2^2 aligned with z_1 at the outer radius: margin -1 + 2r
    assert!((w.margin - (2.0 * 0.95 - 1.0)).abs() < 1e-12, "{w:?}");
    assert_eq!(w.coordinate, 1);
}

#[test]
fn sharp_quadratic_coefficient_sits_on_the_boundary() {
    let grid = GridSpec::reference();
    let edge = poly_generator(&[([1, 0], -1.0), ([0, 2], 1.0)]);
    assert!(membership_check(&edge, &grid, MEMBERSHIP_TOL).passed());
    let over = poly_generator(&[([1, 0], -1.0), ([0, 2], 1.1)]);
    assert!(!membership_check(&over, &grid, MEMBERSHIP_TOL).passed());
}

#[test]
fn randomized_members_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid = GridSpec::with_angles(16);
    for i in 0..40 {
        let n = if i % 4 == 3 { 3 } else { 2 };
        let g = random_member(&mut rng, n);
        let cert = membership_check(&g, &grid, MEMBERSHIP_TOL);
        assert!(cert.passed(), "#{i} {:?}: {cert:?}", g.spec());
    }
}

#[test]
fn rotations() {
    let h4 = h(CatalogName::H4);
    let r = h4.rotate(&[0.0, FRAC_PI_2]).unwrap();
    assert!((r.coeff(&[0, 2]) + 1.0).norm() < 1e-15);
    let z = [c(0.3, 0.2), c(-0.1, 0.4)];
    let v = r.eval(&z).unwrap();
    assert!((v[0] - (-z[0] - z[1] * z[1])).norm() < 1e-15);
    assert_eq!(h4.rotate(&[0.0, 0.0]).unwrap().jet(), h4.jet());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h6 = h(CatalogName::H6);
    for _ in 0..5 {
        let angles: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..TAU)).collect();
        let g = h6.rotate(&angles).unwrap();
        assert!(membership_check(&g, &GridSpec::with_angles(16), MEMBERSHIP_TOL).passed());
        let neg: Vec<f64> = angles.iter().map(|a| -a).collect();
        assert!(g.rotate(&neg).unwrap().jet().max_abs_diff(h6.jet()) < 1e-15);
    }
}

#[test]
fn product_forms_reproduce_catalog() {
    let minus_one = || Kernel::Atomic(AtomicMeasure::dirac(PI));
    let a = product_form(&[1, 2], &[minus_one(), Kernel::Constant], 4).unwrap();
    assert!(a.jet().max_abs_diff(h(CatalogName::H1).jet()) < 1e-15);
    let b = product_form(&[2, 2], &[minus_one(), Kernel::Constant], 4).unwrap();
    assert!(b.jet().max_abs_diff(h(CatalogName::H2).jet()) < 1e-15);
    let id = product_form(&[1, 2, 3], &[Kernel::Constant, Kernel::Constant, Kernel::Constant], 4).unwrap();
    assert!(id.jet().max_abs_diff(&JetMap::neg_identity(3, 4)) == 0.0);
    assert!(product_form(&[1, 3], &[Kernel::Constant, Kernel::Constant], 4).is_err());
    assert!(AtomicMeasure::new(vec![]).is_err());
    assert!(AtomicMeasure::new(vec![Atom { angle: 0.0, weight: 0.7 }]).is_err());
}

#[test]
fn linear_shear() {
    let grid = GridSpec::with_angles(32);
    let (s, cert) = shear_linear(&h(CatalogName::H2), &grid, MEMBERSHIP_TOL).unwrap();
    assert!(cert.passed());
    assert!(s.jet().max_abs_diff(h(CatalogName::H2).jet()) < 1e-15);

    let (s, cert) = shear_linear(&h(CatalogName::H4), &grid, MEMBERSHIP_TOL).unwrap();
    assert!(cert.passed());
    assert!(s.jet().max_abs_diff(&JetMap::neg_identity(2, 4)) < 1e-15);

    // (1-z)/(1+z) = 1 - 2z + 2z^2 - 2z^3 + ...
    let (s, cert) = shear_linear(&h(CatalogName::H3), &grid, MEMBERSHIP_TOL).unwrap();
    assert!(cert.passed());
    for (k, v) in [(1u32, 2.0), (2, -2.0), (3, 2.0)] {
        assert!((s.coeff(&[1, k]) - v).norm() < 1e-15, "k={k}");
    }
    assert!((s.jet().component(1).coeff(&[0, 2]) - 1.0).norm() < 1e-15);
}

#[test]
fn quadratic_shear() {
    let grid = GridSpec::with_angles(32);
    let (s, cert) = shear_quadratic(&h(CatalogName::H4), &grid, MEMBERSHIP_TOL).unwrap();
    assert!(cert.passed());
    assert!(s.jet().max_abs_diff(h(CatalogName::H4).jet()) < 1e-15);
    let (s, cert) = shear_quadratic(&h(CatalogName::H5), &grid, MEMBERSHIP_TOL).unwrap();
    assert!(cert.passed());
    assert!(s.jet().max_abs_diff(h(CatalogName::H5).jet()) < 1e-15);
    let (s, cert) = shear_quadratic(&h(CatalogName::H1), &grid, MEMBERSHIP_TOL).unwrap();
    assert!(cert.passed());
    assert_eq!(s.coeff(&[0, 2]), c(0.0, 0.0));
    assert!(s.jet().component(0).max_abs_diff(JetMap::neg_identity(2, 4).component(0)) == 0.0);
    assert!(shear_quadratic(&h(CatalogName::H6), &grid, MEMBERSHIP_TOL).is_err());
}

#[test]
fn shears_of_random_members_stay_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let grid = GridSpec::with_angles(16);
    for _ in 0..10 {
        let g = random_member(&mut rng, 2);
        let (_, a) = shear_linear(&g, &grid, MEMBERSHIP_TOL).unwrap();
        let (_, b) = shear_quadratic(&g, &grid, MEMBERSHIP_TOL).unwrap();
        assert!(a.passed() && b.passed(), "{:?}", g.spec());
        for r in [0.3, 0.6, 0.95] {
            for k in 0..32 {
                let q = averaged_linear_symbol(g.evaluator(), C::from_polar(r, TAU * k as f64 / 32.0));
                assert!(q.re >= -1e-9, "{q}");
            }
        }
    }
}

#[test]
fn starlike_polynomial_generator() {
    let f = JetMap::new(
        vec![
            MultiJet::from_terms(2, 4, [([1u32, 0], c(1.0, 0.0)), ([0, 2], c(1.0, 0.0))]).unwrap(),
            MultiJet::variable(2, 4, 1),
        ],
        Normalization::NormalizedUnivalent,
    )
    .unwrap();
    let g = from_starlike_polynomial(&f, 4).unwrap();
    assert!(g.jet().max_abs_diff(h(CatalogName::H4).jet()) < 1e-15);
    let id = from_starlike_polynomial(&JetMap::identity(2, 3), 3).unwrap();
    assert!(id.jet().max_abs_diff(&JetMap::neg_identity(2, 3)) < 1e-15);
}

#[test]
fn perturbation_thresholds() {
    let search = DeltaSearch::default();
    let z2 = JetMap::new(vec![MultiJet::from_terms(1, 3, [([2u32], c(1.0, 0.0))]).unwrap()], Normalization::General)
        .unwrap();
    let d = perturb_starlike_delta(&z2, &search).unwrap();
    let rmax = 0.95;
    assert!((d - 1.0 / (2.0 * rmax)).abs() < 2.0 * search.resolution, "{d}");

    let p = JetMap::new(
        vec![MultiJet::from_terms(2, 3, [([0u32, 2], c(1.0, 0.0))]).unwrap(), MultiJet::zero(2, 3)],
        Normalization::General,
    )
    .unwrap();
    let d = perturb_starlike_delta(&p, &search).unwrap();
    assert!(d >= 1.0 - search.resolution, "{d}");
    assert!((d - 1.0 / rmax).abs() < 2.0 * search.resolution, "{d}");

    let zero = JetMap::new(vec![MultiJet::zero(2, 3), MultiJet::zero(2, 3)], Normalization::General).unwrap();
    assert_eq!(perturb_starlike_delta(&zero, &search).unwrap(), search.upper);
    let linear = JetMap::new(vec![MultiJet::variable(2, 3, 1), MultiJet::zero(2, 3)], Normalization::General).unwrap();
    assert!(perturb_starlike_delta(&linear, &search).is_err());
}

#[test]
fn generator_specs_round_trip_through_json() {
    let specs = vec![
        GeneratorSpec::Identity,
        GeneratorSpec::Catalog { name: CatalogName::H3 },
        GeneratorSpec::FromStarlike { name: CatalogName::F5 },
        GeneratorSpec::Rotation { parent: Box::new(GeneratorSpec::Catalog { name: CatalogName::H4 }), angles: vec![0.1, 0.2] },
        GeneratorSpec::ProductForm {
            selectors: vec![2, 1],
            kernels: vec![Kernel::Constant, Kernel::Atomic(AtomicMeasure::dirac(1.0))],
        },
        GeneratorSpec::ConvexCombo {
            parts: vec![GeneratorSpec::Identity, GeneratorSpec::Catalog { name: CatalogName::H1 }],
            weights: vec![0.25, 0.75],
        },
        GeneratorSpec::ShearLinear { parent: Box::new(GeneratorSpec::Catalog { name: CatalogName::H3 }) },
    ];
    for spec in specs {
        let json = serde_json::to_string(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let a = Generator::build(&spec, 2, 4).unwrap();
        let b = Generator::build(&back, 2, 4).unwrap();
        assert_eq!(a.jet(), b.jet());
    }
}
