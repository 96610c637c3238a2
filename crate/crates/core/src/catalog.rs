//! The fourteen named extremal maps: starlike maps `F1..F7` and their
//! generators `H1..H7 = -(DF_j)^{-1} F_j`.
//!
//! Each map comes with a closed-form evaluator and an exact jet built from
//! jet arithmetic (never from the evaluator). Maps are defined in their minimal
//! dimension (2 for indices 1..5, 3 for 6 and 7) and extended to larger `n` by
//! the identity (F) or by `-z_k` (H) in the trailing coordinates.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::bounds::{coeff_bound_report, BoundReport, EqualityRegime};
use crate::error::{Error, Result};
use crate::eval::{Evaluator, JacobianEvaluator};
use crate::generators::{membership_check, starlike_generator_jet, Generator, GridSpec, MembershipCertificate};
use crate::jet::{jet_analytic, AnalyticPrimitive, JetMap, MultiJet, Normalization, C64};

pub const DEFAULT_DEGREE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CatalogName {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
    H7,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapRole {
    StarlikeMap,
    Generator,
}

use CatalogName::*;

impl CatalogName {
    pub const ALL: [CatalogName; 14] = [F1, F2, F3, F4, F5, F6, F7, H1, H2, H3, H4, H5, H6, H7];
    pub const STARLIKE: [CatalogName; 7] = [F1, F2, F3, F4, F5, F6, F7];
    pub const GENERATORS: [CatalogName; 7] = [H1, H2, H3, H4, H5, H6, H7];

    /// The `j` in `F_j` / `H_j`.
    pub fn index(self) -> usize {
        (self as usize) % 7 + 1
    }

    pub fn role(self) -> MapRole {
        if (self as usize) < 7 {
            MapRole::StarlikeMap
        } else {
            MapRole::Generator
        }
    }

    pub fn min_dim(self) -> usize {
        if self.index() >= 6 {
            3
        } else {
            2
        }
    }

    /// `F_j <-> H_j`.
    pub fn partner(self) -> CatalogName {
        let i = self as usize;
        Self::ALL[(i + 7) % 14]
    }
}

impl fmt::Display for CatalogName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for CatalogName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|n| n.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownMap(s.to_string()))
    }
}

/// A catalog map realized in a given ambient dimension and truncation degree.
#[derive(Clone, Debug)]
pub struct NamedMap {
    pub name: CatalogName,
    pub dim: usize,
    pub evaluator: Evaluator,
    /// Closed-form Jacobian (Cauchy-integral fallback for F7); `None` for H maps.
    pub jacobian: Option<JacobianEvaluator>,
    pub jet: JetMap,
    pub role: MapRole,
}

/// Looks up a catalog map in dimension `n >= name.min_dim()`.
pub fn catalog_get(name: CatalogName, n: usize, degree: usize) -> Result<NamedMap> {
    static REGISTRY: OnceLock<Mutex<HashMap<(CatalogName, usize, usize), NamedMap>>> = OnceLock::new();
    if n < name.min_dim() {
        return Err(Error::Domain(format!("{name} needs dimension >= {}, got {n}", name.min_dim())));
    }
    if degree < 2 {
        return Err(Error::Domain(format!("catalog jets need degree >= 2, got {degree}")));
    }
    let reg = REGISTRY.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = reg.lock().expect("catalog registry poisoned").get(&(name, n, degree)) {
        return Ok(m.clone());
    }
    let map = build(name, n, degree)?;
    reg.lock()
        .expect("catalog registry poisoned")
        .insert((name, n, degree), map.clone());
    Ok(map)
}

fn build(name: CatalogName, n: usize, degree: usize) -> Result<NamedMap> {
    let jet = build_jet(name, n, degree)?;
    let jet_for_guard = jet.clone();
    let role = name.role();
    let evaluator = Evaluator::new(n, move |z, out| eval_closed_form(name, &jet_for_guard, z, out));
    let jacobian = match role {
        MapRole::Generator => None,
        MapRole::StarlikeMap if name == F7 => Some(JacobianEvaluator::cauchy(evaluator.clone())),
        MapRole::StarlikeMap => Some(JacobianEvaluator::new(n, move |z, out| starlike_jacobian(name, n, z, out))),
    };
    Ok(NamedMap { name, dim: n, evaluator, jacobian, jet, role })
}

/// Distance to a boundary pole below which rational forms fall back to the jet.
const POLE_GUARD: f64 = 1e-6;

fn eval_closed_form(name: CatalogName, jet: &JetMap, z: &[C64], out: &mut [C64]) {
    let one = C64::new(1.0, 0.0);
    let n = z.len();
    let trailing_sign = if name.role() == MapRole::Generator { -1.0 } else { 1.0 };
    for k in name.min_dim()..n {
        out[k] = z[k] * trailing_sign;
    }
    let guarded = |d: C64| d.norm() < POLE_GUARD;
    let fallback = |out: &mut [C64]| {
        for k in 0..name.min_dim() {
            out[k] = jet.component(k).eval(z);
        }
    };
    let (z1, z2) = (z[0], z[1]);
    match name {
        F1 => {
            out[0] = z1 / ((one - z1) * (one - z1));
            out[1] = z2;
        }
        F2 => {
            out[0] = z1 * (one + z2) * (one + z2);
            out[1] = z2;
        }
        F3 => {
            if guarded(one - z2) {
                return fallback(out);
            }
            out[0] = z1 * (one + z2) / (one - z2);
            out[1] = z2 / (one - z2);
        }
        F4 => {
            out[0] = z1 + z2 * z2;
            out[1] = z2;
        }
        F5 => {
            if guarded(one - z2) {
                return fallback(out);
            }
            out[0] = (z1 - z1 * z2 + z2 * z2) / (one - z2);
            out[1] = z2 / (one - z2);
        }
        F6 => {
            out[0] = z1 + z2 * z[2];
            out[1] = z2;
            out[2] = z[2];
        }
        F7 => {
            let z3 = z[2];
            out[0] = z1 + z2 * z3 * log_quotient(z2, z3);
            out[1] = z2 / (one + z2);
            out[2] = z3 / (one + z3);
        }
        H1 => {
            out[0] = -z1 * (one - z1) / (one + z1);
            out[1] = -z2;
        }
        H2 | H3 => {
            if guarded(one + z2) {
                return fallback(out);
            }
            out[0] = -z1 * (one - z2) / (one + z2);
            out[1] = if name == H2 { -z2 } else { -z2 * (one - z2) };
        }
        H4 | H5 => {
            out[0] = -z1 + z2 * z2;
            out[1] = if name == H4 { -z2 } else { -z2 * (one - z2) };
        }
        H6 | H7 => {
            let z3 = z[2];
            out[0] = -z1 + z2 * z3;
            if name == H6 {
                out[1] = -z2;
                out[2] = -z3;
            } else {
                out[1] = -z2 * (one + z2);
                out[2] = -z3 * (one + z3);
            }
        }
    }
}

/// `(log(1+a) - log(1+b)) / (a - b)`, continuous across `a = b`.
///
/// Near the diagonal uses `atanh(x)/x` with `x = (a-b) / (2 + a + b)`.
pub fn log_quotient(a: C64, b: C64) -> C64 {
    let one = C64::new(1.0, 0.0);
    let d = a - b;
    let m1 = one + (a + b) * 0.5;
    let x = d / (m1 * 2.0);
    if x.norm() < 1e-4 {
        let x2 = x * x;
        (one + x2 / 3.0 + x2 * x2 / 5.0 + x2 * x2 * x2 / 7.0) / m1
    } else {
        ((one + a).ln() - (one + b).ln()) / d
    }
}

fn starlike_jacobian(name: CatalogName, n: usize, z: &[C64], out: &mut [C64]) {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    for (idx, o) in out.iter_mut().enumerate() {
        *o = if idx / n == idx % n { one } else { zero };
    }
    let (z1, z2) = (z[0], z[1]);
    let at = |i: usize, j: usize| i * n + j;
    match name {
        F1 => out[at(0, 0)] = (one + z1) / ((one - z1) * (one - z1) * (one - z1)),
        F2 => {
            out[at(0, 0)] = (one + z2) * (one + z2);
            out[at(0, 1)] = z1 * (one + z2) * 2.0;
        }
        F3 => {
            let w = one - z2;
            out[at(0, 0)] = (one + z2) / w;
            out[at(0, 1)] = z1 * 2.0 / (w * w);
            out[at(1, 1)] = one / (w * w);
        }
        F4 => out[at(0, 1)] = z2 * 2.0,
        F5 => {
            let w = one - z2;
            out[at(0, 1)] = (z2 * 2.0 - z2 * z2) / (w * w);
            out[at(1, 1)] = one / (w * w);
        }
        F6 => {
            out[at(0, 1)] = z[2];
            out[at(0, 2)] = z2;
        }
        _ => unreachable!("no closed-form Jacobian for {name}"),
    }
}

fn build_jet(name: CatalogName, n: usize, d: usize) -> Result<JetMap> {
    let var = |k: usize| MultiJet::variable(n, d, k);
    let one = MultiJet::constant(n, d, C64::new(1.0, 0.0));
    let mobius = |u: f64, k: usize| jet_analytic(AnalyticPrimitive::Mobius(C64::new(u, 0.0)), k, n, d);
    let geometric = |k: usize| jet_analytic(AnalyticPrimitive::Geometric, k, n, d);
    let (z1, z2) = (var(0), var(1));

    let mut comps: Vec<MultiJet> = (0..n)
        .map(|k| match name.role() {
            MapRole::StarlikeMap => var(k),
            MapRole::Generator => var(k).scale_real(-1.0),
        })
        .collect();
    match name {
        F1 => {
            let g = geometric(0)?;
            comps[0] = &z1 * &(&g * &g);
        }
        F2 => {
            let s = &one + &z2;
            comps[0] = &z1 * &(&s * &s);
        }
        F3 => {
            comps[0] = &z1 * &mobius(1.0, 1)?;
            comps[1] = &z2 * &geometric(1)?;
        }
        F4 => comps[0] = &z1 + &(&z2 * &z2),
        F5 => {
            let num = &(&z1 - &(&z1 * &z2)) + &(&z2 * &z2);
            comps[0] = &num * &geometric(1)?;
            comps[1] = &z2 * &geometric(1)?;
        }
        F6 => comps[0] = &z1 + &(&z2 * &var(2)),
        F7 => {
            let z3 = var(2);
            comps[0] = &z1 + &(&(&z2 * &z3) * &log_quotient_jet(n, d, 1, 2));
            comps[1] = &z2 * &geometric(1)?.scale_var(1, C64::new(-1.0, 0.0));
            comps[2] = &z3 * &geometric(2)?.scale_var(2, C64::new(-1.0, 0.0));
        }
        H1 => comps[0] = -&(&z1 * &mobius(-1.0, 0)?),
        H2 | H3 => {
            comps[0] = -&(&z1 * &mobius(-1.0, 1)?);
            if name == H3 {
                comps[1] = -&(&z2 * &(&one - &z2));
            }
        }
        H4 | H5 => {
            comps[0] = &(-&z1) + &(&z2 * &z2);
            if name == H5 {
                comps[1] = -&(&z2 * &(&one - &z2));
            }
        }
        H6 | H7 => {
            let z3 = var(2);
            comps[0] = &(-&z1) + &(&z2 * &z3);
            if name == H7 {
                comps[1] = -&(&z2 * &(&one + &z2));
                comps[2] = -&(&z3 * &(&one + &z3));
            }
        }
    }
    let tag = match name.role() {
        MapRole::StarlikeMap => Normalization::NormalizedUnivalent,
        MapRole::Generator => Normalization::GeneratorNormalized,
    };
    JetMap::new(comps, tag)
}

/// Jet of `(log(1+a) - log(1+b)) / (a - b)` in variables `a = z_ia`, `b = z_ib`
/// via the symmetric double series `Σ_k (-1)^{k+1}/k Σ_{i<k} a^i b^{k-1-i}`.
pub fn log_quotient_jet(n: usize, d: usize, ia: usize, ib: usize) -> MultiJet {
    let mut j = MultiJet::zero(n, d);
    for k in 1..=d + 1 {
        let c = if k % 2 == 1 { 1.0 } else { -1.0 } / k as f64;
        for i in 0..k {
            let mut e = vec![0u32; n];
            e[ia] += i as u32;
            e[ib] += (k - 1 - i) as u32;
            if (k - 1) <= d {
                let cur = j.coeff(&e);
                j.set_coeff(&e, cur + c).expect("index within truncation");
            }
        }
    }
    j
}

impl NamedMap {
    /// Wraps an H map as a [`Generator`].
    pub fn to_generator(&self) -> Result<Generator> {
        if self.role != MapRole::Generator {
            return Err(Error::Domain(format!("{} is not a generator", self.name)));
        }
        Generator::catalog(self.name, self.dim, self.jet.degree())
    }
}

/// Per-index result of [`verify_catalog`].
#[derive(Clone, Debug, Serialize)]
pub struct CatalogItem {
    pub index: usize,
    pub dim: usize,
    /// Max coefficient error of `-(DF_j)^{-1} F_j` against the `H_j` jet.
    pub jet_error: f64,
    pub jet_match: bool,
    pub membership: MembershipCertificate,
    pub bounds: BoundReport,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CatalogReport {
    pub degree: usize,
    pub tolerance: f64,
    pub items: Vec<CatalogItem>,
    pub pass: bool,
}

/// For every `j`: generator identity of `F_j`, membership of `H_j`, and the
/// sharp coefficient bound attained by `F_j`.
pub fn verify_catalog(degree: usize, tol: f64, grid: &GridSpec) -> Result<CatalogReport> {
    let mut items = Vec::new();
    for (f, h) in CatalogName::STARLIKE.iter().zip(CatalogName::GENERATORS.iter()) {
        let n = f.min_dim();
        let fmap = catalog_get(*f, n, degree)?;
        let hmap = catalog_get(*h, n, degree)?;
        let derived = starlike_generator_jet(&fmap.jet)?;
        let jet_error = derived.max_abs_diff(&hmap.jet);
        let jet_match = jet_error <= tol;
        let membership = membership_check(&hmap.to_generator()?, grid, crate::generators::MEMBERSHIP_TOL);
        let bounds = coeff_bound_report(&fmap.jet, crate::bounds::DEFAULT_TOL, EqualityRegime::ClosedForm)?;
        let flagged = bounds.checks.iter().any(|c| c.equality);
        let pass = jet_match && membership.passed() && bounds.passed() && flagged;
        items.push(CatalogItem { index: f.index(), dim: n, jet_error, jet_match, membership, bounds, pass });
    }
    let pass = items.iter().all(|i| i.pass);
    Ok(CatalogReport { degree, tolerance: tol, items, pass })
}
