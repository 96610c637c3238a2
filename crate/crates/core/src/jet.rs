//! Truncated multivariate complex power series ("jets") and maps built from them.
//!
//! A [`MultiJet`] in `n` variables truncated at total degree `D` stores one
//! coefficient per monomial `z^α` with `|α| <= D`. Coefficients live in a dense
//! vector laid out over a shared [`Basis`]: monomials are sorted in graded
//! lexicographic order, so homogeneous layers are contiguous and every product
//! or composition only ever touches layers of degree `<= D`.
//!
//! Because the inner map of a composition never has a constant term, every
//! operation here is exact on the coefficients it keeps: truncating before or
//! after the operation gives the same answer.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Exponent tuple `(α_1, …, α_n)` of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self(exponents)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// The index of the single variable `z_var` (0-based).
    pub fn unit(dim: usize, var: usize) -> Self {
        let mut e = vec![0; dim];
        e[var] = 1;
        Self(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(e: Vec<u32>) -> Self {
        Self(e)
    }
}

impl From<&[u32]> for MultiIndex {
    fn from(e: &[u32]) -> Self {
        Self(e.to_vec())
    }
}

impl<const N: usize> From<[u32; N]> for MultiIndex {
    fn from(e: [u32; N]) -> Self {
        Self(e.to_vec())
    }
}

/// Graded lexicographic: total degree first, then the exponent tuples.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Monomial layout shared by every jet of a given `(dim, degree)`.
#[derive(Debug)]
pub struct Basis {
    dim: usize,
    degree: usize,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    layer_start: Vec<usize>,
    /// `(i, j, k)` with `index[i] + index[j] = index[k]`, all `|·| <= degree`.
    products: Vec<(u32, u32, u32)>,
    /// For every non-constant monomial: a variable `v` and the position of `α - e_v`.
    parent: Vec<(usize, usize)>,
    /// `derivs[v][i] = Some((position of α - e_v, α_v))` when `α_v > 0`.
    derivs: Vec<Vec<Option<(usize, f64)>>>,
}

impl Basis {
    fn build(dim: usize, degree: usize) -> Basis {
        let mut indices = Vec::new();
        let mut layer_start = Vec::with_capacity(degree + 2);
        for d in 0..=degree {
            layer_start.push(indices.len());
            let mut layer = Vec::new();
            homogeneous_indices(dim, d as u32, &mut vec![0; dim], 0, &mut layer);
            layer.sort();
            indices.extend(layer);
        }
        layer_start.push(indices.len());
        let lookup: HashMap<_, _> = indices.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();

        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if (a.degree() + b.degree()) as usize <= degree {
                    let k = lookup[&a.plus(b)];
                    products.push((i as u32, j as u32, k as u32));
                }
            }
        }

        let mut parent = vec![(0, 0); indices.len()];
        for (i, a) in indices.iter().enumerate().skip(1) {
            let v = a.0.iter().rposition(|&e| e > 0).expect("non-constant monomial");
            let mut p = a.0.clone();
            p[v] -= 1;
            parent[i] = (v, lookup[&MultiIndex(p)]);
        }

        let derivs = (0..dim)
            .map(|v| {
                indices
                    .iter()
                    .map(|a| {
                        (a.0[v] > 0).then(|| {
                            let mut p = a.0.clone();
                            p[v] -= 1;
                            (lookup[&MultiIndex(p)], a.0[v] as f64)
                        })
                    })
                    .collect()
            })
            .collect();

        Basis { dim, degree, indices, lookup, layer_start, products, parent, derivs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// Positions of the monomials of total degree `d`.
    pub fn layer(&self, d: usize) -> std::ops::Range<usize> {
        if d > self.degree {
            return 0..0;
        }
        self.layer_start[d]..self.layer_start[d + 1]
    }
}

fn homogeneous_indices(dim: usize, remaining: u32, cur: &mut Vec<u32>, pos: usize, out: &mut Vec<MultiIndex>) {
    if pos + 1 == dim {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for e in 0..=remaining {
        cur[pos] = e;
        homogeneous_indices(dim, remaining - e, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

/// Shared basis for `(dim, degree)`; built once per process.
pub fn basis(dim: usize, degree: usize) -> Arc<Basis> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Basis>>>> = OnceLock::new();
    assert!(dim > 0, "jets need at least one variable");
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("basis cache poisoned");
    guard
        .entry((dim, degree))
        .or_insert_with(|| Arc::new(Basis::build(dim, degree)))
        .clone()
}

/// Truncated power series in `dim` complex variables.
#[derive(Clone)]
pub struct MultiJet {
    basis: Arc<Basis>,
    coeffs: Vec<C64>,
}

impl fmt::Debug for MultiJet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (a, c) in self.terms() {
            m.entry(&a.to_string(), &c);
        }
        m.finish()
    }
}

impl PartialEq for MultiJet {
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other) && self.coeffs == other.coeffs
    }
}

impl MultiJet {
    pub fn zero(dim: usize, degree: usize) -> Self {
        let basis = basis(dim, degree);
        let coeffs = vec![ZERO; basis.len()];
        Self { basis, coeffs }
    }

    pub fn constant(dim: usize, degree: usize, c: C64) -> Self {
        let mut j = Self::zero(dim, degree);
        j.coeffs[0] = c;
        j
    }

    /// The coordinate function `z_var` (0-based).
    pub fn variable(dim: usize, degree: usize, var: usize) -> Self {
        assert!(var < dim, "variable index {var} out of range for dim {dim}");
        let mut j = Self::zero(dim, degree);
        if degree >= 1 {
            let pos = j.basis.position(&MultiIndex::unit(dim, var)).unwrap();
            j.coeffs[pos] = ONE;
        }
        j
    }

    /// Builds a jet from explicit terms; terms above `degree` are truncated away.
    pub fn from_terms<I, A>(dim: usize, degree: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, C64)>,
        A: Into<MultiIndex>,
    {
        let mut j = Self::zero(dim, degree);
        for (alpha, c) in terms {
            let alpha = alpha.into();
            if alpha.dim() != dim {
                return Err(Error::Shape(format!("multiindex {alpha} has length {}, expected {dim}", alpha.dim())));
            }
            if alpha.degree() as usize > degree {
                continue;
            }
            let pos = j.basis.position(&alpha).unwrap();
            j.coeffs[pos] += c;
        }
        Ok(j)
    }

    pub(crate) fn from_raw(basis: Arc<Basis>, coeffs: Vec<C64>) -> Self {
        debug_assert_eq!(basis.len(), coeffs.len());
        Self { basis, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    /// Dense coefficients in basis order.
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    /// Coefficient of `z^α`; zero for anything outside the truncation.
    pub fn coeff(&self, alpha: &[u32]) -> C64 {
        if alpha.len() != self.dim() {
            return ZERO;
        }
        self.basis
            .position(&MultiIndex::from(alpha))
            .map_or(ZERO, |p| self.coeffs[p])
    }

    pub fn set_coeff(&mut self, alpha: &[u32], c: C64) -> Result<()> {
        let pos = self
            .basis
            .position(&MultiIndex::from(alpha))
            .ok_or_else(|| Error::Shape(format!("multiindex {alpha:?} outside the truncation")))?;
        self.coeffs[pos] = c;
        Ok(())
    }

    pub fn constant_term(&self) -> C64 {
        self.coeffs[0]
    }

    /// Nonzero terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, C64)> + '_ {
        self.basis
            .indices
            .iter()
            .zip(self.coeffs.iter())
            .filter(|(_, c)| **c != ZERO)
            .map(|(a, c)| (a, *c))
    }

    pub fn same_shape(&self, other: &MultiJet) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis)
            || (self.dim() == other.dim() && self.degree() == other.degree())
    }

    fn check_shape(&self, other: &MultiJet) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "jets of (dim, degree) = ({}, {}) and ({}, {})",
                self.dim(),
                self.degree(),
                other.dim(),
                other.degree()
            )))
        }
    }

    pub fn checked_add(&self, other: &MultiJet) -> Result<MultiJet> {
        self.check_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self::from_raw(self.basis.clone(), coeffs))
    }

    pub fn checked_sub(&self, other: &MultiJet) -> Result<MultiJet> {
        self.check_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(self.basis.clone(), coeffs))
    }

    /// Cauchy product truncated at the common degree.
    pub fn checked_mul(&self, other: &MultiJet) -> Result<MultiJet> {
        self.check_shape(other)?;
        let mut out = vec![ZERO; self.coeffs.len()];
        mul_into(&self.basis, &self.coeffs, &other.coeffs, &mut out);
        Ok(Self::from_raw(self.basis.clone(), out))
    }

    pub fn scale(&self, c: C64) -> MultiJet {
        Self::from_raw(self.basis.clone(), self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn scale_real(&self, c: f64) -> MultiJet {
        self.scale(C64::new(c, 0.0))
    }

    /// `self + c·other`, in place.
    pub fn axpy(&mut self, c: C64, other: &MultiJet) -> Result<()> {
        self.check_shape(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
        Ok(())
    }

    /// Substitutes `z_var -> c·z_var`: `a_α -> a_α c^{α_var}`.
    pub fn scale_var(&self, var: usize, c: C64) -> MultiJet {
        let coeffs = self
            .basis
            .indices
            .iter()
            .zip(&self.coeffs)
            .map(|(a, v)| v * c.powu(a.0[var]))
            .collect();
        Self::from_raw(self.basis.clone(), coeffs)
    }

    /// Keeps only the homogeneous layer of total degree `d`.
    pub fn homogeneous(&self, d: usize) -> MultiJet {
        let range = self.basis.layer(d);
        let mut out = vec![ZERO; self.coeffs.len()];
        out[range.clone()].copy_from_slice(&self.coeffs[range]);
        Self::from_raw(self.basis.clone(), out)
    }

    /// Re-expresses the jet at a lower truncation degree.
    pub fn truncate(&self, degree: usize) -> Result<MultiJet> {
        if degree > self.degree() {
            return Err(Error::Shape(format!(
                "cannot raise truncation degree from {} to {degree}",
                self.degree()
            )));
        }
        if degree == self.degree() {
            return Ok(self.clone());
        }
        let b = basis(self.dim(), degree);
        let n = b.len();
        // graded layout: the lower-degree basis is a prefix
        Ok(Self::from_raw(b, self.coeffs[..n].to_vec()))
    }

    /// `∂/∂z_var`; the top layer of the result is zero.
    pub fn partial(&self, var: usize) -> MultiJet {
        let mut out = vec![ZERO; self.coeffs.len()];
        for (i, d) in self.basis.derivs[var].iter().enumerate() {
            if let Some((target, factor)) = d {
                out[*target] += self.coeffs[i] * factor;
            }
        }
        Self::from_raw(self.basis.clone(), out)
    }

    /// Evaluates the truncated polynomial at `z`.
    pub fn eval(&self, z: &[C64]) -> C64 {
        assert_eq!(z.len(), self.dim(), "evaluation point has wrong dimension");
        let mut mono = vec![ONE; self.coeffs.len()];
        let mut acc = self.coeffs[0];
        for i in 1..self.coeffs.len() {
            let (v, p) = self.basis.parent[i];
            mono[i] = mono[p] * z[v];
            acc += self.coeffs[i] * mono[i];
        }
        acc
    }

    /// Largest coefficient modulus of `self - other`.
    ///
    /// Panics if the shapes differ.
    pub fn max_abs_diff(&self, other: &MultiJet) -> f64 {
        self.check_shape(other).expect("max_abs_diff on mismatched jets");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn to_record(&self) -> JetRecord {
        JetRecord {
            dim: self.dim(),
            degree: self.degree(),
            coeffs: self
                .terms()
                .map(|(a, c)| CoeffRecord { alpha: a.0.clone(), re: c.re, im: c.im })
                .collect(),
        }
    }

    pub fn from_record(rec: &JetRecord) -> Result<MultiJet> {
        if rec.dim == 0 {
            return Err(Error::Parse("jet dimension must be positive".into()));
        }
        let mut j = Self::zero(rec.dim, rec.degree);
        for c in &rec.coeffs {
            if c.alpha.len() != rec.dim {
                return Err(Error::Parse(format!("multiindex {:?} does not have {} entries", c.alpha, rec.dim)));
            }
            let alpha = MultiIndex(c.alpha.clone());
            let pos = j.basis.position(&alpha).ok_or_else(|| {
                Error::Parse(format!("multiindex {alpha} exceeds truncation degree {}", rec.degree))
            })?;
            j.coeffs[pos] += C64::new(c.re, c.im);
        }
        Ok(j)
    }
}

pub(crate) fn mul_into(basis: &Basis, a: &[C64], b: &[C64], out: &mut [C64]) {
    for &(i, j, k) in &basis.products {
        let (i, j) = (i as usize, j as usize);
        let ai = a[i];
        if ai == ZERO {
            continue;
        }
        out[k as usize] += ai * b[j];
    }
}

impl Serialize for MultiJet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiJet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = JetRecord::deserialize(d)?;
        MultiJet::from_record(&rec).map_err(serde::de::Error::custom)
    }
}

/// Wire format of a jet: `{ "dim", "degree", "coeffs": [{ "alpha", "re", "im" }] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JetRecord {
    pub dim: usize,
    pub degree: usize,
    pub coeffs: Vec<CoeffRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffRecord {
    pub alpha: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

impl Add for &MultiJet {
    type Output = MultiJet;
    fn add(self, rhs: &MultiJet) -> MultiJet {
        self.checked_add(rhs).expect("jet addition")
    }
}

impl Sub for &MultiJet {
    type Output = MultiJet;
    fn sub(self, rhs: &MultiJet) -> MultiJet {
        self.checked_sub(rhs).expect("jet subtraction")
    }
}

impl Mul for &MultiJet {
    type Output = MultiJet;
    fn mul(self, rhs: &MultiJet) -> MultiJet {
        self.checked_mul(rhs).expect("jet multiplication")
    }
}

impl Neg for &MultiJet {
    type Output = MultiJet;
    fn neg(self) -> MultiJet {
        self.scale_real(-1.0)
    }
}

/// One-variable analytic building blocks, expanded in a single coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticPrimitive {
    /// `log(1 + z)`
    Log1p,
    /// `1 / (1 - z)`
    Geometric,
    /// `(u + z) / (u - z)` with `|u| = 1`
    Mobius(C64),
}

/// Jet of the primitive in the variable `z_var`.
pub fn jet_analytic(primitive: AnalyticPrimitive, var: usize, dim: usize, degree: usize) -> Result<MultiJet> {
    if var >= dim {
        return Err(Error::Shape(format!("variable {var} out of range for dim {dim}")));
    }
    let coeff = |k: usize| -> Result<C64> {
        Ok(match primitive {
            AnalyticPrimitive::Log1p => {
                if k == 0 {
                    ZERO
                } else {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    C64::new(sign / k as f64, 0.0)
                }
            }
            AnalyticPrimitive::Geometric => ONE,
            AnalyticPrimitive::Mobius(u) => {
                if (u.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::Domain(format!("mobius kernel needs |u| = 1, got |u| = {}", u.norm())));
                }
                // (u+z)/(u-z) = 1 + 2 Σ_{k>=1} (z/u)^k
                if k == 0 {
                    ONE
                } else {
                    u.inv().powu(k as u32) * 2.0
                }
            }
        })
    };
    let mut j = MultiJet::zero(dim, degree);
    for k in 0..=degree {
        let mut e = vec![0u32; dim];
        e[var] = k as u32;
        j.set_coeff(&e, coeff(k)?)?;
    }
    Ok(j)
}

/// How a [`JetMap`] is normalized at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `f(0) = 0`, `Df(0) = I`.
    NormalizedUnivalent,
    /// `h(0) = 0`, `Dh(0) = -I`.
    GeneratorNormalized,
    General,
}

/// Linear part tolerance when a normalization tag is asserted.
pub const NORMALIZATION_TOL: f64 = 1e-8;

/// An n-tuple of jets sharing one basis: the germ of a map `C^n -> C^n` at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct JetMap {
    components: Vec<MultiJet>,
    normalization: Normalization,
}

pub type JetMatrix = Vec<Vec<MultiJet>>;

#[derive(Serialize, Deserialize)]
struct JetMapRecord {
    normalization: Normalization,
    components: Vec<MultiJet>,
}

impl Serialize for JetMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JetMapRecord { normalization: self.normalization, components: self.components.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for JetMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = JetMapRecord::deserialize(d)?;
        JetMap::new(rec.components, rec.normalization).map_err(serde::de::Error::custom)
    }
}

impl JetMap {
    pub fn new(components: Vec<MultiJet>, normalization: Normalization) -> Result<JetMap> {
        let first = components
            .first()
            .ok_or_else(|| Error::Shape("a jet map needs at least one component".into()))?;
        if components.len() != first.dim() {
            return Err(Error::Shape(format!(
                "{} components for a map of dimension {}",
                components.len(),
                first.dim()
            )));
        }
        for c in &components[1..] {
            first.check_shape(c)?;
        }
        let map = JetMap { components, normalization };
        map.check_normalization()?;
        Ok(map)
    }

    pub fn general(components: Vec<MultiJet>) -> Result<JetMap> {
        Self::new(components, Normalization::General)
    }

    pub fn identity(dim: usize, degree: usize) -> JetMap {
        let components = (0..dim).map(|v| MultiJet::variable(dim, degree, v)).collect();
        JetMap { components, normalization: Normalization::NormalizedUnivalent }
    }

    /// The generator `-z`.
    pub fn neg_identity(dim: usize, degree: usize) -> JetMap {
        let components = (0..dim).map(|v| MultiJet::variable(dim, degree, v).scale_real(-1.0)).collect();
        JetMap { components, normalization: Normalization::GeneratorNormalized }
    }

    fn check_normalization(&self) -> Result<()> {
        let sign = match self.normalization {
            Normalization::General => return Ok(()),
            Normalization::NormalizedUnivalent => 1.0,
            Normalization::GeneratorNormalized => -1.0,
        };
        if self.degree() == 0 {
            return Err(Error::Domain("normalized maps need truncation degree >= 1".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.constant_term().norm() > NORMALIZATION_TOL {
                return Err(Error::Domain(format!("component {} has nonzero value at 0", i + 1)));
            }
        }
        let lin = self.linear_part();
        for (i, row) in lin.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expected = if i == j { sign } else { 0.0 };
                if (v - expected).norm() > NORMALIZATION_TOL {
                    return Err(Error::Domain(format!(
                        "linear part entry ({}, {}) is {v}, expected {expected}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Re-tags the map, validating the new tag.
    pub fn with_normalization(mut self, normalization: Normalization) -> Result<JetMap> {
        self.normalization = normalization;
        self.check_normalization()?;
        Ok(self)
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn degree(&self) -> usize {
        self.components[0].degree()
    }

    pub fn components(&self) -> &[MultiJet] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &MultiJet {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<MultiJet> {
        self.components
    }

    /// `Df(0)` as a row-major matrix.
    pub fn linear_part(&self) -> Vec<Vec<C64>> {
        let n = self.dim();
        self.components
            .iter()
            .map(|c| (0..n).map(|j| c.coeff(MultiIndex::unit(n, j).exponents())).collect())
            .collect()
    }

    pub fn eval(&self, z: &[C64]) -> Vec<C64> {
        self.components.iter().map(|c| c.eval(z)).collect()
    }

    /// Componentwise scalar multiple; the result is tagged general.
    pub fn scale(&self, c: C64) -> JetMap {
        JetMap {
            components: self.components.iter().map(|j| j.scale(c)).collect(),
            normalization: Normalization::General,
        }
    }

    pub fn truncate(&self, degree: usize) -> Result<JetMap> {
        let components = self.components.iter().map(|c| c.truncate(degree)).collect::<Result<_>>()?;
        Ok(JetMap { components, normalization: self.normalization })
    }

    pub fn max_abs_diff(&self, other: &JetMap) -> f64 {
        assert_eq!(self.dim(), other.dim(), "max_abs_diff on maps of different dimension");
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Truncation of `self ∘ inner`.
    ///
    /// Exact on all kept coefficients because `inner` vanishes at 0.
    pub fn compose(&self, inner: &JetMap) -> Result<JetMap> {
        if self.dim() != inner.dim() || self.degree() != inner.degree() {
            return Err(Error::Shape(format!(
                "compose: outer (dim {}, degree {}) with inner (dim {}, degree {})",
                self.dim(),
                self.degree(),
                inner.dim(),
                inner.degree()
            )));
        }
        for (i, c) in inner.components.iter().enumerate() {
            if c.constant_term() != ZERO {
                return Err(Error::Domain(format!(
                    "inner map component {} has nonzero constant term {}",
                    i + 1,
                    c.constant_term()
                )));
            }
        }
        let basis = self.components[0].basis.clone();
        let inner_coeffs: Vec<&[C64]> = inner.components.iter().map(|c| c.coeffs()).collect();
        let outer_coeffs: Vec<&[C64]> = self.components.iter().map(|c| c.coeffs()).collect();
        let out = compose_raw(&basis, &outer_coeffs, &inner_coeffs);
        let normalization = match (self.normalization, inner.normalization) {
            (Normalization::NormalizedUnivalent, Normalization::NormalizedUnivalent) => {
                Normalization::NormalizedUnivalent
            }
            _ => Normalization::General,
        };
        Ok(JetMap {
            components: out.into_iter().map(|c| MultiJet::from_raw(basis.clone(), c)).collect(),
            normalization,
        })
    }

    /// Rotation conjugation `(e^{-iθ_k} f_k(e^{iθ_1} z_1, …, e^{iθ_n} z_n))_k`.
    ///
    /// On coefficients: `a_α -> e^{i(⟨α,θ⟩ - θ_k)} a_α` in component `k`; the
    /// normalization tag is preserved.
    pub fn rotate(&self, angles: &[f64]) -> Result<JetMap> {
        if angles.len() != self.dim() {
            return Err(Error::Shape(format!("{} rotation angles for dimension {}", angles.len(), self.dim())));
        }
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let coeffs = c
                    .basis
                    .indices
                    .iter()
                    .zip(&c.coeffs)
                    .map(|(alpha, v)| {
                        let theta: f64 = alpha.0.iter().zip(angles).map(|(e, a)| *e as f64 * a).sum::<f64>() - angles[k];
                        v * C64::from_polar(1.0, theta)
                    })
                    .collect();
                MultiJet::from_raw(c.basis.clone(), coeffs)
            })
            .collect();
        Ok(JetMap { components, normalization: self.normalization })
    }

    /// `Df` as a matrix of jets; entry `(i, j)` is `∂f_i/∂z_j`.
    pub fn jacobian(&self) -> JetMatrix {
        self.components
            .iter()
            .map(|c| (0..self.dim()).map(|j| c.partial(j)).collect())
            .collect()
    }
}

/// Raw composition on coefficient slices sharing `basis`.
///
/// Only the monomials of the inner map that the outer map uses (and their
/// parents) are built, each by one product with the monomial one degree lower.
pub(crate) fn compose_raw(basis: &Basis, outer: &[&[C64]], inner: &[&[C64]]) -> Vec<Vec<C64>> {
    let len = basis.len();
    let mut needed = vec![false; len];
    for o in outer {
        for (i, a) in o.iter().enumerate() {
            if *a != ZERO {
                needed[i] = true;
            }
        }
    }
    // parents sit at lower positions
    for i in (1..len).rev() {
        if needed[i] {
            needed[basis.parent[i].1] = true;
        }
    }
    let mut monomials: Vec<Option<Vec<C64>>> = vec![None; len];
    let mut one = vec![ZERO; len];
    one[0] = ONE;
    monomials[0] = Some(one);
    for i in 1..len {
        if !needed[i] {
            continue;
        }
        let (v, p) = basis.parent[i];
        let m = if p == 0 {
            inner[v].to_vec()
        } else {
            let mut m = vec![ZERO; len];
            mul_into(basis, monomials[p].as_ref().expect("parent built first"), inner[v], &mut m);
            m
        };
        monomials[i] = Some(m);
    }
    outer
        .iter()
        .map(|o| {
            let mut acc = vec![ZERO; len];
            for (i, a) in o.iter().enumerate() {
                if *a == ZERO {
                    continue;
                }
                let m = monomials[i].as_ref().expect("needed monomial");
                // monomial i only has terms of degree >= deg(i)
                let start = basis.layer_start[basis.indices[i].degree() as usize];
                for k in start..len {
                    acc[k] += a * m[k];
                }
            }
            acc
        })
        .collect()
}

/// Solves `A x = b` over jets, one homogeneous degree at a time.
///
/// At degree `d` the cross terms `A_e x_{d-e}` (`e >= 1`) are already known and
/// move to the right-hand side, leaving the constant system `A(0) x_d = r_d`.
pub fn jet_matrix_solve(a: &JetMatrix, b: &[MultiJet]) -> Result<Vec<MultiJet>> {
    let n = b.len();
    if n == 0 || a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::Shape(format!("jet_matrix_solve needs an {n}x{n} matrix")));
    }
    for row in a {
        for entry in row {
            b[0].check_shape(entry)?;
        }
    }
    for v in &b[1..] {
        b[0].check_shape(v)?;
    }
    let a0: Vec<Vec<C64>> = a.iter().map(|row| row.iter().map(|e| e.constant_term()).collect()).collect();
    let a0_inv = linalg::invert(&a0).ok_or(Error::Singular { point: vec![ZERO; n] })?;

    let basis = b[0].basis.clone();
    let mut x: Vec<MultiJet> = (0..n).map(|_| MultiJet::zero(b[0].dim(), b[0].degree())).collect();
    for d in 0..=basis.degree {
        let mut residual: Vec<MultiJet> = b.to_vec();
        for (i, row) in a.iter().enumerate() {
            for (j, entry) in row.iter().enumerate() {
                let prod = entry.checked_mul(&x[j])?;
                residual[i] = residual[i].checked_sub(&prod)?;
            }
        }
        for pos in basis.layer(d) {
            for i in 0..n {
                let v: C64 = (0..n).map(|j| a0_inv[i][j] * residual[j].coeffs[pos]).sum();
                x[i].coeffs[pos] = v;
            }
        }
    }
    Ok(x)
}

/// `A · x` for a jet matrix and vector.
pub fn jet_matrix_apply(a: &JetMatrix, x: &[MultiJet]) -> Result<Vec<MultiJet>> {
    a.iter()
        .map(|row| {
            let mut acc = MultiJet::zero(x[0].dim(), x[0].degree());
            for (e, xj) in row.iter().zip(x) {
                acc = acc.checked_add(&e.checked_mul(xj)?)?;
            }
            Ok(acc)
        })
        .collect()
}
