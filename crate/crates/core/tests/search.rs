use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

use polyloewner::search::{
    bang_bang_probe, generators_for, maximize, objective, objective_at, Family, Method, SearchSpace, SOUNDNESS_TOL,
};
use polyloewner::{CatalogName, GeneratorSpec};

fn catalog(name: CatalogName) -> GeneratorSpec {
    GeneratorSpec::Catalog { name }
}

fn rotated(name: CatalogName, angles: Vec<f64>) -> GeneratorSpec {
    GeneratorSpec::Rotation { parent: Box::new(catalog(name)), angles }
}

fn fixed(alpha: Vec<u32>, specs: Vec<GeneratorSpec>) -> SearchSpace {
    SearchSpace::new(alpha.len(), alpha, 1, Family::Fixed { generators: specs }).unwrap()
}

#[test]
fn objective_examples() {
    let s = fixed(vec![0, 2], vec![catalog(CatalogName::H4)]);
    let v = objective(&[0.5], &s).unwrap();
    assert!((v - 1.0).abs() < 2.0 * (-12.0f64).exp() + 1e-6, "{v}");

    let s = fixed(vec![0, 2], vec![GeneratorSpec::Identity]);
    assert!(objective(&[0.5], &s).unwrap().abs() < 1e-15);

    let s = fixed(vec![0, 2], vec![rotated(CatalogName::H4, vec![0.0, FRAC_PI_2])]);
    let v = objective(&[0.5], &s).unwrap();
    assert!((v + 1.0).abs() < 1e-4, "{v}");
}

#[test]
fn degenerate_space_gives_zero() {
    let s = fixed(vec![0, 2], vec![GeneratorSpec::Identity]);
    let r = maximize(&s, 20, 1, Method::RandomRestartCoordinate).unwrap();
    assert_eq!(r.best_value, 0.0);
    assert!(r.evaluations <= 20);
}

#[test]
fn search_rediscovers_sharp_constants() {
    for (alpha, method) in [
        (vec![2, 0], Method::RandomRestartCoordinate),
        (vec![0, 2], Method::SimplexPolish),
    ] {
        let n = alpha.len();
        let s = SearchSpace::new(n, alpha.clone(), 1, Family::catalog_rotations(n)).unwrap();
        let r = maximize(&s, 300, 42, method).unwrap();
        assert!(r.best_value >= s.bound() - 1e-2, "{alpha:?}: {}", r.best_value);
        assert!(!r.exceeds_bound);
        assert!((objective(&r.best_params, &s).unwrap() - r.best_value).abs() <= 1e-9);
        let f = objective_at(&r.best_params, &s, s.final_horizon).unwrap();
        assert_eq!(f, r.final_value);
    }
}

#[test]
fn same_seed_same_history() {
    let s = SearchSpace::new(2, vec![1, 1], 2, Family::convex(2, 2)).unwrap();
    let a = maximize(&s, 60, 9, Method::RandomRestartCoordinate).unwrap();
    let b = maximize(&s, 60, 9, Method::RandomRestartCoordinate).unwrap();
    assert_eq!(a, b);
    let c = maximize(&s, 60, 10, Method::RandomRestartCoordinate).unwrap();
    assert_ne!(a.history, c.history);
    assert!(a.history.windows(2).all(|w| w[1].value >= w[0].value - 1e-9));
}

#[test]
fn other_families_stay_below_bounds() {
    for (alpha, family) in [
        (vec![1, 1], Family::ProductForm { atoms: 2 }),
        (vec![2, 0], Family::ProductForm { atoms: 1 }),
        (vec![0, 2], Family::convex(2, 3)),
    ] {
        let s = SearchSpace::new(2, alpha.clone(), 2, family).unwrap();
        let r = maximize(&s, 80, 3, Method::RandomRestartCoordinate).unwrap();
        assert!(r.best_value <= s.bound() + SOUNDNESS_TOL, "{alpha:?}: {}", r.best_value);
        assert!(!r.exceeds_bound);
    }
}

#[test]
fn piecewise_fields_do_not_beat_constant_ones() {
    for alpha in [vec![2, 0], vec![0, 2]] {
        let constant = SearchSpace::new(2, alpha.clone(), 1, Family::catalog_rotations(2)).unwrap();
        let piecewise = SearchSpace::new(2, alpha.clone(), 3, Family::catalog_rotations(2)).unwrap();
        let a = maximize(&constant, 120, 5, Method::RandomRestartCoordinate).unwrap();
        let b = maximize(&piecewise, 120, 5, Method::RandomRestartCoordinate).unwrap();
        assert!(b.best_value <= a.best_value + 1e-3, "{alpha:?}: piecewise {} vs constant {}", b.best_value, a.best_value);
    }
}

#[test]
fn bang_bang_probe_ranks_candidates() {
    let candidates: Vec<(String, GeneratorSpec)> =
        generators_for(3).into_iter().map(|g| (g.to_string(), catalog(g))).collect();
    let rows = bang_bang_probe(&[0, 1, 1], 3, &candidates, 15.0, 1e-2).unwrap();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0].label, "H6");
    assert_eq!(rows[1].label, "H7");
    assert!((rows[0].value - 1.0).abs() < 1e-4 && (rows[0].value - rows[1].value).abs() < 1e-4);
    assert!(rows[2].value.abs() < 1e-12);

    let rows = bang_bang_probe(&[0, 2], 2, &[("id".into(), GeneratorSpec::Identity)], 15.0, 1e-2).unwrap();
    assert_eq!(rows[0].value, 0.0);

    let pair = vec![
        ("H4".to_string(), catalog(CatalogName::H4)),
        ("H4 rotated".to_string(), rotated(CatalogName::H4, vec![0.0, FRAC_PI_3])),
    ];
    let rows = bang_bang_probe(&[0, 2], 2, &pair, 15.0, 1e-2).unwrap();
    assert!((rows[0].value - 1.0).abs() < 1e-4);
    assert!((rows[1].value + 0.5).abs() < 1e-4);
}

#[test]
fn invalid_spaces_are_rejected() {
    assert!(SearchSpace::new(2, vec![2, 0], 1, Family::Fixed { generators: vec![] }).is_err());
    assert!(SearchSpace::new(2, vec![2, 0], 1, Family::convex(2, 4)).is_err());
    let s = SearchSpace::new(2, vec![2, 0], 1, Family::catalog_rotations(2)).unwrap();
    assert!(objective(&[0.5, 0.0], &s).is_err());
    assert!(objective(&[f64::NAN, 0.0, 0.0], &s).is_err());
}
