//! Loewner evolution on the unit polydisc.
//!
//! Maps are handled as truncated power series ([`MultiJet`], [`JetMap`]) paired with
//! closed-form pointwise evaluators. Infinitesimal generators are certified on a
//! sampling grid, fields of generators are integrated with RK4, and the resulting
//! univalent maps are checked against the sharp coefficient and growth bounds.

pub mod bounds;
pub mod catalog;
pub mod error;
pub mod eval;
pub mod generators;
pub mod jet;
pub mod linalg;
pub mod loewner;
pub mod search;

pub use bounds::{BoundCheck, BoundReport, EqualityRegime};
pub use catalog::{catalog_get, CatalogName, MapRole, NamedMap};
pub use error::{Error, Result};
pub use eval::{Evaluator, JacobianEvaluator};
pub use generators::{
    membership_check, AtomicMeasure, Generator, GeneratorSpec, GridSpec, Kernel, MembershipCertificate, Verdict,
};
pub use jet::{JetMap, MultiIndex, MultiJet, Normalization, C64};
pub use loewner::{evolve_jet, evolve_point, parametric_limit, HerglotzField, Piece, ScheduleEntry};
pub use search::{maximize, Family, Method, SearchResult, SearchSpace};
