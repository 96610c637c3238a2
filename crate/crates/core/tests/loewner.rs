mod common;

use std::f64::consts::TAU;

use common::*;
use polyloewner::generators::{product_form, AtomicMeasure, Kernel};
use polyloewner::loewner::{evolve, limit_point, scaled_transition, EvolveOptions, DEFAULT_STEP};
use polyloewner::{
    evolve_jet, evolve_point, parametric_limit, CatalogName, Generator, GeneratorSpec, HerglotzField, Piece,
    ScheduleEntry,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn h(name: CatalogName, degree: usize) -> Generator {
    Generator::catalog(name, name.min_dim(), degree).unwrap()
}

fn h4_then_identity(degree: usize) -> HerglotzField {
    HerglotzField::new(vec![Piece { until: 1.0, generator: h(CatalogName::H4, degree) }], None).unwrap()
}

fn random_field(rng: &mut ChaCha8Rng, degree: usize) -> HerglotzField {
    let pieces = rng.gen_range(1..=3);
    let mut until = 0.0;
    let mut out = Vec::new();
    for _ in 0..pieces {
        until += rng.gen_range(0.2..1.2);
        let g = match rng.gen_range(0..3) {
            0 => {
                let names = [CatalogName::H1, CatalogName::H2, CatalogName::H3, CatalogName::H4, CatalogName::H5];
                let angles = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
                Generator::catalog(names[rng.gen_range(0..5)], 2, degree).unwrap().rotate(&angles).unwrap()
            }
            1 => {
                let m = AtomicMeasure::dirac(rng.gen_range(0.0..TAU));
                let sel = [rng.gen_range(1..=2), rng.gen_range(1..=2)];
                product_form(&sel, &[Kernel::Atomic(m), Kernel::Constant], degree).unwrap()
            }
            _ => Generator::identity(2, degree),
        };
        out.push(Piece { until, generator: g });
    }
    HerglotzField::new(out, Some(h(CatalogName::H5, degree))).unwrap()
}

#[test]
fn switched_field_matches_integral_formula() {
    let f = h4_then_identity(3);
    for t in [0.5, 1.0, 2.0, 3.0] {
        let jet = evolve_jet(&f, 0.0, t, 3, DEFAULT_STEP).unwrap();
        let got = t.exp() * jet.component(0).coeff(&[0, 2]).re;
        assert!((got - h4_switch_integral(t)).abs() < 1e-6, "t={t}: {got}");
    }
}

#[test]
fn integral_formula_error_is_fourth_order() {
    let f = h4_then_identity(3);
    let t = 2.0;
    let err = |step: f64| {
        let jet = evolve_jet(&f, 0.0, t, 3, step).unwrap();
        (t.exp() * jet.component(0).coeff(&[0, 2]).re - h4_switch_integral(t)).abs()
    };
    let ratio = err(0.1) / err(0.05);
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn constant_fields_recover_sharp_constants() {
    let cases = [
        (CatalogName::H1, vec![2, 0], 2.0),
        (CatalogName::H2, vec![1, 1], 2.0),
        (CatalogName::H3, vec![1, 1], 2.0),
        (CatalogName::H4, vec![0, 2], 1.0),
        (CatalogName::H5, vec![0, 2], 1.0),
        (CatalogName::H6, vec![0, 1, 1], 1.0),
        (CatalogName::H7, vec![0, 1, 1], 1.0),
    ];
    for (name, alpha, value) in cases {
        let lim = parametric_limit(&HerglotzField::constant(h(name, 3)), 15.0, 3, DEFAULT_STEP).unwrap();
        let a = lim.coeff(&alpha);
        assert!((a.re - value).abs() < 1e-3 && a.im.abs() < 1e-12, "{name}: {a}");
        assert!(lim.tail_bound < 1e-4);
    }
}

#[test]
fn limit_of_starlike_generator_is_the_starlike_map() {
    // a constant field -(Df)^{-1} f has e^t φ_{0,t} = f exactly in the limit
    for name in [CatalogName::F3, CatalogName::F5] {
        let f = polyloewner::catalog_get(name, 2, 4).unwrap();
        let g = Generator::catalog(name.partner(), 2, 4).unwrap();
        let lim = parametric_limit(&HerglotzField::constant(g), 20.0, 4, DEFAULT_STEP).unwrap();
        assert!(lim.jet.max_abs_diff(&f.jet) < 1e-5, "{name}: {}", lim.jet.max_abs_diff(&f.jet));
        let z = [c(0.3, 0.1), c(-0.2, 0.25)];
        let w = limit_point(&HerglotzField::constant(Generator::catalog(name.partner(), 2, 4).unwrap()), 20.0, &z, DEFAULT_STEP)
            .unwrap();
        let fz = f.evaluator.eval(&z);
        for k in 0..2 {
            assert!((w[k] - fz[k]).norm() < 1e-5, "{name}");
        }
    }
}

#[test]
fn semigroup_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let f = random_field(&mut rng, 4);
        let p02 = evolve_jet(&f, 0.0, 2.0, 4, DEFAULT_STEP).unwrap();
        let p01 = evolve_jet(&f, 0.0, 1.0, 4, DEFAULT_STEP).unwrap();
        let p12 = evolve_jet(&f, 1.0, 2.0, 4, DEFAULT_STEP).unwrap();
        assert!(p12.compose(&p01).unwrap().max_abs_diff(&p02) < 1e-8);
        for z in lattice_points(2, 20, 0.9) {
            let a = evolve_point(&f, 0.0, 2.0, &z, DEFAULT_STEP).unwrap();
            let mid = evolve_point(&f, 0.0, 1.0, &z, DEFAULT_STEP).unwrap();
            let b = evolve_point(&f, 1.0, 2.0, &mid, DEFAULT_STEP).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-8));
        }
    }
}

#[test]
fn point_flow_agrees_with_jet_flow_near_origin() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_field(&mut rng, 6);
    let jet = evolve_jet(&f, 0.0, 1.5, 6, DEFAULT_STEP).unwrap();
    let z = [c(0.02, 0.01), c(-0.015, 0.02)];
    let w = evolve_point(&f, 0.0, 1.5, &z, DEFAULT_STEP).unwrap();
    let v = jet.eval(&z);
    for k in 0..2 {
        assert!((w[k] - v[k]).norm() < 1e-11);
    }
}

#[test]
fn flow_maps_into_the_polydisc() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..3 {
        let f = random_field(&mut rng, 3);
        for z in lattice_points(2, 30, 0.97) {
            let w = evolve_point(&f, 0.0, 3.0, &z, DEFAULT_STEP).unwrap();
            let (a, b) = (polyloewner::eval::sup_norm(&w), polyloewner::eval::sup_norm(&z));
            assert!(a <= b + 1e-12);
        }
    }
}

#[test]
fn scaled_transition_is_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let f = random_field(&mut rng, 3);
    let m = scaled_transition(&f, 0.5, 2.5, 3, DEFAULT_STEP).unwrap();
    let lin = m.linear_part();
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((lin[i][j] - want).norm() < 1e-9);
        }
    }
}

#[test]
fn evolve_reports_error_estimate() {
    let f = h4_then_identity(3);
    let opts = EvolveOptions { degree: Some(3), points: lattice_points(2, 4, 0.8), ..Default::default() };
    let r = evolve(&f, 0.0, 2.0, &opts).unwrap();
    assert!(r.local_error.unwrap() < 1e-9);
    assert_eq!(r.point_orbit.as_ref().unwrap().len(), 4);
    assert!(evolve(&f, 2.0, 1.0, &opts).is_err());
    assert!(evolve_jet(&f, 0.0, 1.0, 3, -0.1).is_err());
}

#[test]
fn schedules_round_trip() {
    let entries = vec![
        ScheduleEntry { until: Some(0.5), generator: GeneratorSpec::Catalog { name: CatalogName::H2 } },
        ScheduleEntry {
            until: Some(1.5),
            generator: GeneratorSpec::Rotation {
                parent: Box::new(GeneratorSpec::Catalog { name: CatalogName::H4 }),
                angles: vec![0.0, 1.0],
            },
        },
        ScheduleEntry { until: None, generator: GeneratorSpec::Identity },
    ];
    let json = serde_json::to_string(&entries).unwrap();
    let back: Vec<ScheduleEntry> = serde_json::from_str(&json).unwrap();
    let f = HerglotzField::from_schedule(&back, 2, 3).unwrap();
    assert_eq!(f.pieces().len(), 2);
    assert_eq!(f.to_schedule(), entries);
    let bad = vec![
        ScheduleEntry { until: None, generator: GeneratorSpec::Identity },
        ScheduleEntry { until: Some(1.0), generator: GeneratorSpec::Identity },
    ];
    assert!(HerglotzField::from_schedule(&bad, 2, 3).is_err());
    let unordered = vec![
        ScheduleEntry { until: Some(2.0), generator: GeneratorSpec::Identity },
        ScheduleEntry { until: Some(1.0), generator: GeneratorSpec::Identity },
    ];
    assert!(HerglotzField::from_schedule(&unordered, 2, 3).is_err());
}
