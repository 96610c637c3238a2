//! Infinitesimal generators of Loewner evolution on the polydisc.
//!
//! A generator `h` is normalized by `h(0) = 0`, `Dh(0) = -I` and belongs to the
//! class when `Re(h_j(z) / z_j) <= 0` whenever `|z_j| = ‖z‖_∞ > 0`. Membership is
//! certified numerically on a grid: a pass means no violation was found, a fail
//! carries an explicit witness point.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{catalog_get, CatalogName, MapRole};
use crate::error::{Error, Result};
use crate::eval::{check_consistency, starlike_generator_at, Evaluator, JacobianEvaluator, CONSISTENCY_TOL};
use crate::jet::{jet_matrix_solve, CoeffRecord, JetMap, MultiJet, Normalization, C64};

/// Default tolerance for membership certificates.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// One atom `(angle, weight)` of a discrete probability measure on the circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub angle: f64,
    pub weight: f64,
}

/// Finitely many atoms with nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Atom>", into = "Vec<Atom>")]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("atomic measure has no atoms".into()));
        }
        if atoms.iter().any(|a| !(a.weight >= 0.0) || !a.angle.is_finite()) {
            return Err(Error::Domain("atom weights must be nonnegative and angles finite".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("atom weights sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(mut atoms: Vec<Atom>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if !(total > 0.0) {
            return Err(Error::Domain("atomic measure has zero total weight".into()));
        }
        for a in &mut atoms {
            a.weight /= total;
        }
        Self::new(atoms)
    }

    pub fn dirac(angle: f64) -> Self {
        Self { atoms: vec![Atom { angle, weight: 1.0 }] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `p(ζ) = Σ λ_k (u_k + ζ)/(u_k - ζ)` with `u_k = e^{iα_k}`.
    pub fn herglotz(&self, zeta: C64) -> C64 {
        self.atoms
            .iter()
            .map(|a| {
                let u = C64::from_polar(1.0, a.angle);
                (u + zeta) / (u - zeta) * a.weight
            })
            .sum()
    }

    /// Jet of the Herglotz sum in variable `var`.
    pub fn herglotz_jet(&self, var: usize, dim: usize, degree: usize) -> Result<MultiJet> {
        if var >= dim {
            return Err(Error::Shape(format!("variable {var} out of range for dim {dim}")));
        }
        // c_k = 2 Σ λ e^{-ikα}, each term rounded once
        let mut acc = MultiJet::constant(dim, degree, C64::new(1.0, 0.0));
        for k in 1..=degree {
            let ck: C64 = self.atoms.iter().map(|a| C64::from_polar(2.0 * a.weight, -(k as f64) * a.angle)).sum();
            let mut e = vec![0u32; dim];
            e[var] = k as u32;
            acc.set_coeff(&e, ck)?;
        }
        Ok(acc)
    }
}

impl TryFrom<Vec<Atom>> for AtomicMeasure {
    type Error = Error;
    fn try_from(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<AtomicMeasure> for Vec<Atom> {
    fn from(m: AtomicMeasure) -> Self {
        m.atoms
    }
}

/// The Carathéodory factor of one product-form component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `p ≡ 1`
    Constant,
    Atomic(AtomicMeasure),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSpec {
    pub components: Vec<Vec<CoeffRecord>>,
}

impl PolynomialSpec {
    pub fn from_jet(map: &JetMap) -> Self {
        Self { components: map.components().iter().map(|c| c.to_record().coeffs).collect() }
    }

    fn to_jet(&self, dim: usize, min_degree: usize, normalization: Normalization) -> Result<JetMap> {
        if self.components.len() != dim {
            return Err(Error::Parse(format!("polynomial has {} components, expected {dim}", self.components.len())));
        }
        let degree = self
            .components
            .iter()
            .flatten()
            .map(|c| c.alpha.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
            .max(min_degree);
        let comps = self
            .components
            .iter()
            .map(|terms| {
                MultiJet::from_record(&crate::jet::JetRecord { dim, degree, coeffs: terms.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        JetMap::new(comps, normalization)
    }
}

/// Serializable description of how a generator is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// `-z`
    Identity,
    Catalog { name: CatalogName },
    /// `-(DF)^{-1} F` for a catalog starlike map.
    FromStarlike { name: CatalogName },
    /// `-(Df)^{-1} f` for a normalized polynomial map `f`.
    StarlikePolynomial(PolynomialSpec),
    /// `h_k = -z_k p_k(z_{j_k})`, selectors 1-based.
    ProductForm { selectors: Vec<usize>, kernels: Vec<Kernel> },
    Rotation { parent: Box<GeneratorSpec>, angles: Vec<f64> },
    ConvexCombo { parts: Vec<GeneratorSpec>, weights: Vec<f64> },
    ShearLinear { parent: Box<GeneratorSpec> },
    ShearQuadratic { parent: Box<GeneratorSpec> },
    /// The generator itself as a polynomial map.
    Polynomial(PolynomialSpec),
}

/// An element of the generator class, with closed-form evaluator and jet.
#[derive(Clone, Debug)]
pub struct Generator {
    evaluator: Evaluator,
    jet: JetMap,
    spec: GeneratorSpec,
}

impl Generator {
    fn assemble(evaluator: Evaluator, jet: JetMap, spec: GeneratorSpec, check: bool) -> Result<Generator> {
        let jet = jet.with_normalization(Normalization::GeneratorNormalized)?;
        if evaluator.dim() != jet.dim() {
            return Err(Error::Shape(format!("evaluator dim {} vs jet dim {}", evaluator.dim(), jet.dim())));
        }
        if check {
            check_consistency(&evaluator, &jet, CONSISTENCY_TOL)?;
        }
        Ok(Generator { evaluator, jet, spec })
    }

    /// Builds a generator from its description.
    pub fn build(spec: &GeneratorSpec, dim: usize, degree: usize) -> Result<Generator> {
        match spec {
            GeneratorSpec::Identity => Ok(Self::identity(dim, degree)),
            GeneratorSpec::Catalog { name } => Self::catalog(*name, dim, degree),
            GeneratorSpec::FromStarlike { name } => {
                if name.role() != MapRole::StarlikeMap {
                    return Err(Error::Domain(format!("{name} is not a starlike map")));
                }
                let f = catalog_get(*name, dim, degree)?;
                let jac = f.jacobian.clone().expect("starlike maps carry a Jacobian");
                from_starlike(&f.evaluator, &jac, &f.jet, spec.clone())
            }
            GeneratorSpec::StarlikePolynomial(p) => {
                let f = p.to_jet(dim, degree, Normalization::NormalizedUnivalent)?;
                from_starlike_polynomial(&f, degree)
            }
            GeneratorSpec::ProductForm { selectors, kernels } => {
                if selectors.len() != dim {
                    return Err(Error::Shape(format!("{} selectors for dimension {dim}", selectors.len())));
                }
                product_form(selectors, kernels, degree)
            }
            GeneratorSpec::Rotation { parent, angles } => Ok(Self::build(parent, dim, degree)?.rotate(angles)?),
            GeneratorSpec::ConvexCombo { parts, weights } => {
                let parts = parts.iter().map(|p| Self::build(p, dim, degree)).collect::<Result<Vec<_>>>()?;
                convex_combo(&parts, weights)
            }
            GeneratorSpec::ShearLinear { parent } => shear_linear_unchecked(&Self::build(parent, dim, degree)?),
            GeneratorSpec::ShearQuadratic { parent } => {
                shear_quadratic_unchecked(&Self::build(parent, dim, degree)?)
            }
            GeneratorSpec::Polynomial(p) => {
                let full = p.to_jet(dim, degree, Normalization::GeneratorNormalized)?;
                let evaluator = Evaluator::from_jet(&full);
                let jet = full.truncate(degree.min(full.degree()))?;
                // a polynomial of degree < D is already exact at D
                let jet = if jet.degree() < degree { pad(&jet, degree)? } else { jet };
                Self::assemble(evaluator, jet, spec.clone(), false)
            }
        }
    }

    /// `-z`.
    pub fn identity(dim: usize, degree: usize) -> Generator {
        let evaluator = Evaluator::new(dim, |z, out| {
            for (o, v) in out.iter_mut().zip(z) {
                *o = -v;
            }
        });
        Generator { evaluator, jet: JetMap::neg_identity(dim, degree), spec: GeneratorSpec::Identity }
    }

    pub fn catalog(name: CatalogName, dim: usize, degree: usize) -> Result<Generator> {
        if name.role() != MapRole::Generator {
            return Err(Error::Domain(format!("{name} is a starlike map, not a generator")));
        }
        let m = catalog_get(name, dim, degree)?;
        Ok(Generator { evaluator: m.evaluator, jet: m.jet, spec: GeneratorSpec::Catalog { name } })
    }

    pub fn dim(&self) -> usize {
        self.jet.dim()
    }

    pub fn degree(&self) -> usize {
        self.jet.degree()
    }

    pub fn jet(&self) -> &JetMap {
        &self.jet
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Coefficient `c_α` of the first component.
    pub fn coeff(&self, alpha: &[u32]) -> C64 {
        self.jet.component(0).coeff(alpha)
    }

    /// Pointwise value; a non-finite value (singular Jacobian) is an error.
    pub fn eval(&self, z: &[C64]) -> Result<Vec<C64>> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!("point of length {} for dimension {}", z.len(), self.dim())));
        }
        let v = self.evaluator.eval(z);
        if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Singular { point: z.to_vec() });
        }
        Ok(v)
    }

    /// Same generator with its jet truncated to a lower degree.
    pub fn truncated(&self, degree: usize) -> Result<Generator> {
        Ok(Generator { evaluator: self.evaluator.clone(), jet: self.jet.truncate(degree)?, spec: self.spec.clone() })
    }

    /// `j(z) = (e^{-iθ_k} h_k(e^{iθ_1} z_1, …, e^{iθ_n} z_n))_k`.
    ///
    /// On coefficients: `c_α -> e^{i(⟨α,θ⟩ - θ_k)} c_α` in component `k`.
    pub fn rotate(&self, angles: &[f64]) -> Result<Generator> {
        let n = self.dim();
        if angles.len() != n {
            return Err(Error::Shape(format!("{} rotation angles for dimension {n}", angles.len())));
        }
        let phases: Vec<C64> = angles.iter().map(|a| C64::from_polar(1.0, *a)).collect();
        let jet = self.jet.rotate(angles)?;
        let parent = self.evaluator.clone();
        let evaluator = Evaluator::new(n, move |z, out| {
            let w: Vec<C64> = z.iter().zip(&phases).map(|(a, p)| a * p).collect();
            parent.eval_into(&w, out);
            for (o, p) in out.iter_mut().zip(&phases) {
                *o *= p.conj();
            }
        });
        Ok(Generator {
            evaluator,
            jet,
            spec: GeneratorSpec::Rotation { parent: Box::new(self.spec.clone()), angles: angles.to_vec() },
        })
    }
}

fn pad(jet: &JetMap, degree: usize) -> Result<JetMap> {
    let comps = jet
        .components()
        .iter()
        .map(|c| {
            MultiJet::from_terms(c.dim(), degree, c.terms().map(|(a, v)| (a.clone(), v)))
        })
        .collect::<Result<Vec<_>>>()?;
    JetMap::new(comps, jet.normalization())
}

/// Jet of `-(Df)^{-1} f` for a normalized map jet.
pub fn starlike_generator_jet(f: &JetMap) -> Result<JetMap> {
    let f = f.clone().with_normalization(Normalization::NormalizedUnivalent)?;
    let x = jet_matrix_solve(&f.jacobian(), f.components())?;
    JetMap::new(x.iter().map(|c| -c).collect(), Normalization::GeneratorNormalized)
}

/// The generator `z -> -(Df(z))^{-1} f(z)` of a starlike map.
pub fn from_starlike(f: &Evaluator, df: &JacobianEvaluator, jet: &JetMap, spec: GeneratorSpec) -> Result<Generator> {
    let gen_jet = starlike_generator_jet(jet)?;
    let (f, df) = (f.clone(), df.clone());
    let evaluator = Evaluator::new(jet.dim(), move |z, out| match starlike_generator_at(&f, &df, z) {
        Some(v) => out.copy_from_slice(&v),
        None => out.fill(C64::new(f64::NAN, f64::NAN)),
    });
    Generator::assemble(evaluator, gen_jet, spec, true)
}

/// [`from_starlike`] for a polynomial map given by its (exact) jet.
pub fn from_starlike_polynomial(f: &JetMap, degree: usize) -> Result<Generator> {
    let spec = GeneratorSpec::StarlikePolynomial(PolynomialSpec::from_jet(f));
    let gen_jet = starlike_generator_jet(f)?;
    let (ev, jac) = (Evaluator::from_jet(f), JacobianEvaluator::from_jet(f));
    let evaluator = Evaluator::new(f.dim(), move |z, out| match starlike_generator_at(&ev, &jac, z) {
        Some(v) => out.copy_from_slice(&v),
        None => out.fill(C64::new(f64::NAN, f64::NAN)),
    });
    let gen_jet = match gen_jet.degree().cmp(&degree) {
        std::cmp::Ordering::Greater => gen_jet.truncate(degree)?,
        // the jet of -(Df)^{-1} f is not a polynomial; recompute at the requested degree
        std::cmp::Ordering::Less => starlike_generator_jet(&pad(f, degree)?)?,
        std::cmp::Ordering::Equal => gen_jet,
    };
    Generator::assemble(evaluator, gen_jet, spec, false)
}

/// `h_k(z) = -z_k p_k(z_{j_k})` with Carathéodory factors `p_k`.
pub fn product_form(selectors: &[usize], kernels: &[Kernel], degree: usize) -> Result<Generator> {
    let n = selectors.len();
    if kernels.len() != n || n == 0 {
        return Err(Error::Shape(format!("{} kernels for {n} selectors", kernels.len())));
    }
    if let Some(s) = selectors.iter().find(|s| **s == 0 || **s > n) {
        return Err(Error::Domain(format!("selector {s} outside 1..={n}")));
    }
    let mut comps = Vec::with_capacity(n);
    for k in 0..n {
        let zk = MultiJet::variable(n, degree, k);
        let p = match &kernels[k] {
            Kernel::Constant => MultiJet::constant(n, degree, C64::new(1.0, 0.0)),
            Kernel::Atomic(m) => m.herglotz_jet(selectors[k] - 1, n, degree)?,
        };
        comps.push(-&(&zk * &p));
    }
    let jet = JetMap::new(comps, Normalization::GeneratorNormalized)?;
    let sel: Vec<usize> = selectors.iter().map(|s| s - 1).collect();
    let ks = kernels.to_vec();
    let evaluator = Evaluator::new(n, move |z, out| {
        for k in 0..z.len() {
            let p = match &ks[k] {
                Kernel::Constant => C64::new(1.0, 0.0),
                Kernel::Atomic(m) => m.herglotz(z[sel[k]]),
            };
            out[k] = -z[k] * p;
        }
    });
    let spec = GeneratorSpec::ProductForm { selectors: selectors.to_vec(), kernels: kernels.to_vec() };
    Generator::assemble(evaluator, jet, spec, true)
}

/// Weighted average of generators; the class is convex.
pub fn convex_combo(parts: &[Generator], weights: &[f64]) -> Result<Generator> {
    if parts.is_empty() || parts.len() != weights.len() {
        return Err(Error::Shape(format!("{} parts with {} weights", parts.len(), weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Domain("convex weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("convex weights sum to {total}, not 1")));
    }
    let n = parts[0].dim();
    let degree = parts.iter().map(|p| p.degree()).min().unwrap();
    if parts.iter().any(|p| p.dim() != n) {
        return Err(Error::Shape("convex combination of generators of different dimension".into()));
    }
    let mut comps: Vec<MultiJet> = (0..n).map(|_| MultiJet::zero(n, degree)).collect();
    for (p, w) in parts.iter().zip(weights) {
        let pj = p.jet.truncate(degree)?;
        for (acc, c) in comps.iter_mut().zip(pj.components()) {
            acc.axpy(C64::new(*w, 0.0), c)?;
        }
    }
    let jet = JetMap::new(comps, Normalization::GeneratorNormalized)?;
    let evs: Vec<(Evaluator, f64)> = parts.iter().map(|p| p.evaluator.clone()).zip(weights.iter().copied()).collect();
    let evaluator = Evaluator::new(n, move |z, out| {
        let mut tmp = vec![C64::new(0.0, 0.0); z.len()];
        out.fill(C64::new(0.0, 0.0));
        for (e, w) in &evs {
            e.eval_into(z, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += t * w;
            }
        }
    });
    let spec = GeneratorSpec::ConvexCombo {
        parts: parts.iter().map(|p| p.spec.clone()).collect(),
        weights: weights.to_vec(),
    };
    Ok(Generator { evaluator, jet, spec })
}

const AVERAGING_RADIUS: f64 = 0.5;
const AVERAGING_NODES: usize = 64;

/// `1 - Σ_{k>=1} c_{(1,k)} z_2^k`, evaluated through the circle average of
/// `h_1(x e^{iθ}, z_2) / (x e^{iθ})` (only the `α_1 = 1` terms survive).
pub fn averaged_linear_symbol(g: &Evaluator, z2: C64) -> C64 {
    let mut z = [C64::new(0.0, 0.0), z2];
    let mut out = [C64::new(0.0, 0.0); 2];
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..AVERAGING_NODES {
        let w = C64::from_polar(AVERAGING_RADIUS, TAU * k as f64 / AVERAGING_NODES as f64);
        z[0] = w;
        g.eval_into(&z, &mut out);
        acc += out[0] / w;
    }
    -acc / AVERAGING_NODES as f64
}

fn require_dim2(g: &Generator, what: &str) -> Result<()> {
    if g.dim() != 2 {
        return Err(Error::Domain(format!("{what} is defined for dimension 2, got {}", g.dim())));
    }
    Ok(())
}

fn shear_linear_unchecked(g: &Generator) -> Result<Generator> {
    require_dim2(g, "shear_linear")?;
    let d = g.degree();
    let z1 = MultiJet::variable(2, d, 0);
    let mut symbol = MultiJet::constant(2, d, C64::new(1.0, 0.0));
    for k in 1..d {
        let c = g.coeff(&[1, k as u32]);
        symbol.set_coeff(&[0, k as u32], -c)?;
    }
    let first = -&(&z1 * &symbol);
    let jet = JetMap::new(vec![first, g.jet.component(1).clone()], Normalization::GeneratorNormalized)?;
    let parent = g.evaluator.clone();
    let evaluator = Evaluator::new(2, move |z, out| {
        let mut tmp = [C64::new(0.0, 0.0); 2];
        parent.eval_into(z, &mut tmp);
        out[0] = -z[0] * averaged_linear_symbol(&parent, z[1]);
        out[1] = tmp[1];
    });
    Generator::assemble(evaluator, jet, GeneratorSpec::ShearLinear { parent: Box::new(g.spec.clone()) }, true)
}

fn shear_quadratic_unchecked(g: &Generator) -> Result<Generator> {
    require_dim2(g, "shear_quadratic")?;
    let d = g.degree();
    let c02 = g.coeff(&[0, 2]);
    let first = MultiJet::from_terms(2, d, [([1, 0], C64::new(-1.0, 0.0)), ([0, 2], c02)])?;
    let jet = JetMap::new(vec![first, g.jet.component(1).clone()], Normalization::GeneratorNormalized)?;
    let parent = g.evaluator.clone();
    let evaluator = Evaluator::new(2, move |z, out| {
        let mut tmp = [C64::new(0.0, 0.0); 2];
        parent.eval_into(z, &mut tmp);
        out[0] = -z[0] + c02 * z[1] * z[1];
        out[1] = tmp[1];
    });
    Generator::assemble(evaluator, jet, GeneratorSpec::ShearQuadratic { parent: Box::new(g.spec.clone()) }, true)
}

/// `(-z_1 (1 - Σ_k c_{(1,k)} z_2^k), h_2)` with its membership certificate.
pub fn shear_linear(g: &Generator, grid: &GridSpec, tol: f64) -> Result<(Generator, MembershipCertificate)> {
    let s = shear_linear_unchecked(g)?;
    let cert = membership_check(&s, grid, tol);
    Ok((s, cert))
}

/// `(-z_1 + c_{(0,2)} z_2^2, h_2)` with its membership certificate.
pub fn shear_quadratic(g: &Generator, grid: &GridSpec, tol: f64) -> Result<(Generator, MembershipCertificate)> {
    let s = shear_quadratic_unchecked(g)?;
    let cert = membership_check(&s, grid, tol);
    Ok((s, cert))
}

/// Sample layout for membership certificates.
///
/// For each coordinate `j` and radius `r`, `z_j = r e^{iθ}` over `angles`
/// angles; every other coordinate takes modulus `f·r` for `f` in
/// `other_fractions` (each `<= 1`) and the same angle set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radii: Vec<f64>,
    pub angles: usize,
    pub other_fractions: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl GridSpec {
    /// Radii 0.1..0.9 and 0.95, 64 angles, other moduli `{0, r/2, r}`.
    pub fn reference() -> Self {
        let mut radii: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        radii.push(0.95);
        Self { radii, angles: 64, other_fractions: vec![0.0, 0.5, 1.0] }
    }

    /// Reference radii with a different angle count.
    pub fn with_angles(angles: usize) -> Self {
        Self { angles, ..Self::reference() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::Domain("grid radii must lie in (0, 1)".into()));
        }
        if self.angles < 8 {
            return Err(Error::Domain(format!("grid needs at least 8 angles, got {}", self.angles)));
        }
        if self.other_fractions.is_empty() || self.other_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Domain("other-coordinate fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Per "other" coordinate: (modulus fraction, angle index), modulus 0 once.
    fn other_options(&self) -> Vec<(f64, usize)> {
        let mut opts = Vec::new();
        for f in &self.other_fractions {
            if *f == 0.0 {
                opts.push((0.0, 0));
            } else {
                opts.extend((0..self.angles).map(|a| (*f, a)));
            }
        }
        opts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<C64>,
    /// 1-based coordinate realizing `‖z‖_∞`.
    pub coordinate: usize,
    /// `Re(h_j(z) / z_j)` at the point.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipCertificate {
    pub verdict: Verdict,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub witness: Witness,
    pub samples: usize,
    pub grid: GridSpec,
}

impl MembershipCertificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Samples `Re(h_j(z)/z_j)` where `|z_j|` is maximal and certifies `<= tol`.
///
/// The reduction is deterministic: largest margin, then smallest sample index.
pub fn membership_check(g: &Generator, grid: &GridSpec, tol: f64) -> MembershipCertificate {
    debug_assert!(grid.validate().is_ok());
    let n = g.dim();
    let na = grid.angles;
    let roots: Vec<C64> = (0..na).map(|k| C64::from_polar(1.0, TAU * k as f64 / na as f64)).collect();
    let opts = grid.other_options();
    let others = opts.len().pow(n as u32 - 1);
    let tasks = n * grid.radii.len() * na;

    let point_of = |task: usize, o: usize, z: &mut [C64]| -> usize {
        let ti = task % na;
        let ri = (task / na) % grid.radii.len();
        let j = task / (na * grid.radii.len());
        let r = grid.radii[ri];
        let mut rem = o;
        for k in 0..n {
            if k == j {
                z[k] = roots[ti] * r;
            } else {
                let (f, a) = opts[rem % opts.len()];
                rem /= opts.len();
                z[k] = roots[a] * (f * r);
            }
        }
        j
    };

    let ev = g.evaluator();
    let (margin, index) = (0..tasks)
        .into_par_iter()
        .map(|task| {
            let mut z = vec![C64::new(0.0, 0.0); n];
            let mut out = vec![C64::new(0.0, 0.0); n];
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for o in 0..others {
                let j = point_of(task, o, &mut z);
                ev.eval_into(&z, &mut out);
                let mut m = (out[j] / z[j]).re;
                if m.is_nan() {
                    m = f64::INFINITY;
                }
                if m > best.0 {
                    best = (m, task * others + o);
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), |a, b| {
            if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                a
            } else {
                b
            }
        });

    let mut z = vec![C64::new(0.0, 0.0); n];
    let j = point_of(index / others, index % others, &mut z);
    MembershipCertificate {
        verdict: Verdict::from_pass(margin <= tol),
        worst_margin: margin,
        tolerance: tol,
        witness: Witness { point: z, coordinate: j + 1, margin },
        samples: tasks * others,
        grid: grid.clone(),
    }
}

/// Bisection settings for [`perturb_starlike_delta`].
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaSearch {
    pub upper: f64,
    pub resolution: f64,
    pub grid: GridSpec,
    pub tol: f64,
}

impl Default for DeltaSearch {
    fn default() -> Self {
        Self { upper: 4.0, resolution: 1e-3, grid: GridSpec::reference(), tol: MEMBERSHIP_TOL }
    }
}

/// Largest `ε` (to the bisection resolution) for which `z + εP(z)` is starlike
/// on the grid, i.e. its generator passes the membership check.
///
/// `P` must satisfy `P(0) = 0` and `DP(0) = 0`.
pub fn perturb_starlike_delta(p: &JetMap, search: &DeltaSearch) -> Result<f64> {
    let n = p.dim();
    for (i, c) in p.components().iter().enumerate() {
        if c.constant_term() != C64::new(0.0, 0.0) {
            return Err(Error::Domain(format!("perturbation component {} has nonzero value at 0", i + 1)));
        }
    }
    if p.linear_part().iter().flatten().any(|v| *v != C64::new(0.0, 0.0)) {
        return Err(Error::Domain("perturbation must have vanishing linear part".into()));
    }
    if p.components().iter().all(|c| c.max_abs() == 0.0) {
        return Ok(search.upper);
    }
    let id = JetMap::identity(n, p.degree());
    let passes = |eps: f64| -> bool {
        let comps: Vec<MultiJet> = id
            .components()
            .iter()
            .zip(p.components())
            .map(|(a, b)| a + &b.scale_real(eps))
            .collect();
        let f = match JetMap::new(comps, Normalization::NormalizedUnivalent) {
            Ok(f) => f,
            Err(_) => return false,
        };
        match from_starlike_polynomial(&f, p.degree().max(2)) {
            Ok(g) => membership_check(&g, &search.grid, search.tol).passed(),
            Err(_) => false,
        }
    };
    if passes(search.upper) {
        let all = (1..8).all(|k| passes(search.upper * k as f64 / 8.0));
        if all {
            return Ok(search.upper);
        }
    }
    let (mut lo, mut hi) = (0.0, search.upper);
    while hi - lo > search.resolution {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for k in 1..8 {
        if !passes(lo * k as f64 / 8.0) {
            lo *= (k - 1) as f64 / 8.0;
            break;
        }
    }
    Ok(lo)
}
