//! Shared fixtures for the engine benchmarks.

use polyloewner::generators::GridSpec;
use polyloewner::search::{Family, SearchSpace};
use polyloewner::{CatalogName, Generator, HerglotzField, JetMap, Piece};

/// The jet of a catalog map in its minimal dimension.
pub fn catalog_map(name: CatalogName, degree: usize) -> JetMap {
    polyloewner::catalog_get(name, name.min_dim(), degree).expect("catalog map").jet
}

/// `H4` on `[0, 1)`, then `H2`.
pub fn switched_field(degree: usize) -> HerglotzField {
    let h4 = Generator::catalog(CatalogName::H4, 2, degree).expect("H4");
    let h2 = Generator::catalog(CatalogName::H2, 2, degree).expect("H2");
    HerglotzField::new(vec![Piece { until: 1.0, generator: h4 }], Some(h2)).expect("field")
}

pub fn membership_grid() -> GridSpec {
    GridSpec::with_angles(32)
}

pub fn search_space(alpha: Vec<u32>) -> SearchSpace {
    let n = alpha.len();
    SearchSpace::new(n, alpha, 1, Family::catalog_rotations(n)).expect("search space")
}
