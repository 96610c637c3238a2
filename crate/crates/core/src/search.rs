//! Gradient-free maximization of `Re A_α` over finite-dimensional families of
//! piecewise-constant Herglotz fields.
//!
//! A parameter vector is a flat `Vec<f64>`; [`SearchSpace::kinds`] says how each
//! entry is read (a discrete choice, an angle, a weight in `[0, 1]` or a piece
//! duration). Every point of the box decodes to a valid field, so the objective
//! is total up to integration failures, which score `-∞`.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::sharp_bound;
use crate::catalog::{CatalogName, MapRole};
use crate::error::{Error, Result};
use crate::generators::{convex_combo, product_form, AtomicMeasure, Atom, Generator, GeneratorSpec, Kernel};
use crate::loewner::{parametric_limit, HerglotzField, Piece, DEFAULT_STEP};

pub const SEARCH_HORIZON: f64 = 12.0;
pub const FINAL_HORIZON: f64 = 15.0;
pub const SEARCH_DEGREE: usize = 3;
/// Values closer than this are ties; ties go to the lexicographically smaller vector.
pub const TIE_TOL: f64 = 1e-9;
/// Admissible excess over the sharp bound.
pub const SOUNDNESS_TOL: f64 = 1e-4;

const MIN_DURATION: f64 = 0.05;
const MAX_DURATION: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// One catalog generator per piece, rotated by `n` free angles.
    CatalogRotation { names: Vec<CatalogName> },
    /// `h_k = -z_k p_k(z_{j_k})` with free selectors and `atoms` atoms per factor.
    ProductForm { atoms: usize },
    /// Convex combination of `parts` rotated catalog generators.
    ConvexCombo { names: Vec<CatalogName>, parts: usize },
    /// One of a fixed list of generators per piece.
    Fixed { generators: Vec<GeneratorSpec> },
}

impl Family {
    pub fn catalog_rotations(dim: usize) -> Family {
        Family::CatalogRotation { names: generators_for(dim) }
    }

    pub fn convex(dim: usize, parts: usize) -> Family {
        Family::ConvexCombo { names: generators_for(dim), parts }
    }
}

/// Catalog generators defined in dimension `dim`.
pub fn generators_for(dim: usize) -> Vec<CatalogName> {
    CatalogName::GENERATORS.iter().copied().filter(|g| g.min_dim() <= dim).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "size", rename_all = "kebab-case")]
pub enum ParamKind {
    /// `floor(x)` clamped into `0..k`.
    Choice(usize),
    /// Taken modulo `2π`.
    Angle,
    /// Clamped into `[0, 1]`.
    Unit,
    /// Clamped into the admissible piece lengths.
    Duration,
}

impl ParamKind {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ParamKind::Choice(k) => rng.gen_range(0..k) as f64 + 0.5,
            ParamKind::Angle => rng.gen_range(0.0..TAU),
            ParamKind::Unit => rng.gen::<f64>(),
            ParamKind::Duration => rng.gen_range(MIN_DURATION..MAX_DURATION),
        }
    }

    fn clamp(self, x: f64) -> f64 {
        match self {
            ParamKind::Choice(k) => x.clamp(0.0, k as f64 - 0.5),
            ParamKind::Angle => x.rem_euclid(TAU),
            ParamKind::Unit => x.clamp(0.0, 1.0),
            ParamKind::Duration => x.clamp(MIN_DURATION, MAX_DURATION),
        }
    }

    fn choice(x: f64, k: usize) -> usize {
        (x.max(0.0).floor() as usize).min(k - 1)
    }

    /// Initial coordinate-ascent step.
    fn step(self) -> f64 {
        match self {
            ParamKind::Choice(_) => 1.0,
            ParamKind::Angle => 0.5,
            ParamKind::Unit => 0.25,
            ParamKind::Duration => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dim: usize,
    pub alpha: Vec<u32>,
    /// Number of constant pieces; the last one is the open-ended tail.
    pub pieces: usize,
    pub family: Family,
    pub horizon: f64,
    pub final_horizon: f64,
    pub degree: usize,
    pub step: f64,
}

impl SearchSpace {
    pub fn new(dim: usize, alpha: Vec<u32>, pieces: usize, family: Family) -> Result<Self> {
        let s = Self {
            dim,
            alpha,
            pieces,
            family,
            horizon: SEARCH_HORIZON,
            final_horizon: FINAL_HORIZON,
            degree: SEARCH_DEGREE,
            step: DEFAULT_STEP,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.dim {
            return Err(Error::Shape(format!("target index of length {} in dimension {}", self.alpha.len(), self.dim)));
        }
        if self.alpha.iter().sum::<u32>() != 2 {
            return Err(Error::Domain("target index must have degree 2".into()));
        }
        if self.pieces == 0 {
            return Err(Error::Domain("at least one piece is needed".into()));
        }
        if self.degree < 2 {
            return Err(Error::Domain("search degree must be at least 2".into()));
        }
        if !(self.horizon > 0.0 && self.final_horizon > 0.0 && self.step > 0.0) {
            return Err(Error::Domain("horizons and step must be positive".into()));
        }
        let check_names = |names: &[CatalogName]| -> Result<()> {
            if names.is_empty() {
                return Err(Error::Domain("empty catalog family".into()));
            }
            for n in names {
                if n.role() != MapRole::Generator {
                    return Err(Error::Domain(format!("{n} is not a generator")));
                }
                if n.min_dim() > self.dim {
                    return Err(Error::Domain(format!("{n} needs dimension >= {}", n.min_dim())));
                }
            }
            Ok(())
        };
        match &self.family {
            Family::CatalogRotation { names } => check_names(names),
            Family::ConvexCombo { names, parts } => {
                if !(1..=3).contains(parts) {
                    return Err(Error::Domain(format!("convex family takes 1..=3 parts, got {parts}")));
                }
                check_names(names)
            }
            Family::ProductForm { atoms } => {
                if !(1..=3).contains(atoms) {
                    return Err(Error::Domain(format!("product family takes 1..=3 atoms, got {atoms}")));
                }
                Ok(())
            }
            Family::Fixed { generators } => {
                if generators.is_empty() {
                    return Err(Error::Domain("empty fixed family".into()));
                }
                Ok(())
            }
        }
    }

    fn slot_kinds(&self) -> Vec<ParamKind> {
        let n = self.dim;
        match &self.family {
            Family::CatalogRotation { names } => {
                let mut v = vec![ParamKind::Choice(names.len())];
                v.extend(std::iter::repeat(ParamKind::Angle).take(n));
                v
            }
            Family::ConvexCombo { names, parts } => {
                let mut v = Vec::new();
                for _ in 0..*parts {
                    v.push(ParamKind::Choice(names.len()));
                    v.extend(std::iter::repeat(ParamKind::Angle).take(n));
                    v.push(ParamKind::Unit);
                }
                v
            }
            Family::ProductForm { atoms } => {
                let mut v = Vec::new();
                for _ in 0..n {
                    v.push(ParamKind::Choice(n));
                    for _ in 0..*atoms {
                        v.push(ParamKind::Angle);
                        v.push(ParamKind::Unit);
                    }
                }
                v
            }
            Family::Fixed { generators } => vec![ParamKind::Choice(generators.len())],
        }
    }

    /// Layout: `slot_0, duration_0, slot_1, duration_1, …, slot_tail`.
    pub fn kinds(&self) -> Vec<ParamKind> {
        let slot = self.slot_kinds();
        let mut v = Vec::new();
        for i in 0..self.pieces {
            v.extend(&slot);
            if i + 1 < self.pieces {
                v.push(ParamKind::Duration);
            }
        }
        v
    }

    pub fn bound(&self) -> f64 {
        sharp_bound(&self.alpha)
    }

    fn decode_slot(&self, p: &[f64]) -> Result<Generator> {
        let n = self.dim;
        let d = self.degree;
        match &self.family {
            Family::CatalogRotation { names } => {
                let name = names[ParamKind::choice(p[0], names.len())];
                Generator::catalog(name, n, d)?.rotate(&p[1..=n])
            }
            Family::ConvexCombo { names, parts } => {
                let width = n + 2;
                let mut gens = Vec::with_capacity(*parts);
                let mut weights = Vec::with_capacity(*parts);
                for k in 0..*parts {
                    let q = &p[k * width..(k + 1) * width];
                    let name = names[ParamKind::choice(q[0], names.len())];
                    gens.push(Generator::catalog(name, n, d)?.rotate(&q[1..=n])?);
                    weights.push(q[n + 1].clamp(0.0, 1.0));
                }
                convex_combo(&gens, &normalize(&weights))
            }
            Family::ProductForm { atoms } => {
                let width = 1 + 2 * atoms;
                let mut selectors = Vec::with_capacity(n);
                let mut kernels = Vec::with_capacity(n);
                for k in 0..n {
                    let q = &p[k * width..(k + 1) * width];
                    selectors.push(ParamKind::choice(q[0], n) + 1);
                    let raw: Vec<f64> = (0..*atoms).map(|a| q[2 + 2 * a].clamp(0.0, 1.0)).collect();
                    let w = normalize(&raw);
                    let atoms = (0..*atoms)
                        .map(|a| Atom { angle: q[1 + 2 * a].rem_euclid(TAU), weight: w[a] })
                        .collect();
                    kernels.push(Kernel::Atomic(AtomicMeasure::new(atoms)?));
                }
                product_form(&selectors, &kernels, d)
            }
            Family::Fixed { generators } => {
                Generator::build(&generators[ParamKind::choice(p[0], generators.len())], n, d)
            }
        }
    }

    /// The field described by `params`.
    pub fn decode(&self, params: &[f64]) -> Result<HerglotzField> {
        let kinds = self.kinds();
        if params.len() != kinds.len() {
            return Err(Error::Shape(format!("{} parameters, space has {}", params.len(), kinds.len())));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite search parameter".into()));
        }
        let width = self.slot_kinds().len();
        let mut pieces = Vec::new();
        let mut until = 0.0;
        let mut at = 0;
        for i in 0..self.pieces {
            let g = self.decode_slot(&params[at..at + width])?;
            at += width;
            if i + 1 == self.pieces {
                return HerglotzField::new(pieces, Some(g));
            }
            until += ParamKind::Duration.clamp(params[at]);
            at += 1;
            pieces.push(Piece { until, generator: g });
        }
        unreachable!("the loop returns at the tail")
    }

    /// Projects `params` into the parameter box.
    pub fn clamp(&self, params: &[f64]) -> Vec<f64> {
        self.kinds().iter().zip(params).map(|(k, x)| k.clamp(*x)).collect()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.kinds().iter().map(|k| k.sample(rng)).collect()
    }
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    if total <= 1e-12 {
        return vec![1.0 / w.len() as f64; w.len()];
    }
    let mut v: Vec<f64> = w.iter().map(|x| x / total).collect();
    let rest: f64 = v[1..].iter().sum();
    v[0] = 1.0 - rest;
    v
}

/// `Re A_α` of the parametric limit at horizon `horizon`.
pub fn objective_at(params: &[f64], space: &SearchSpace, horizon: f64) -> Result<f64> {
    let field = space.decode(params)?;
    let lim = parametric_limit(&field, horizon, space.degree, space.step)?;
    Ok(lim.coeff(&space.alpha).re)
}

/// `Re A_α` at the search horizon.
pub fn objective(params: &[f64], space: &SearchSpace) -> Result<f64> {
    objective_at(params, space, space.horizon)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RandomRestartCoordinate,
    SimplexPolish,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub evaluation: usize,
    pub value: f64,
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_value: f64,
    pub best_params: Vec<f64>,
    pub evaluations: usize,
    pub history: Vec<Incumbent>,
    pub seed: u64,
    pub method: Method,
    /// Re-evaluation of the incumbent at the final horizon.
    pub final_value: f64,
    pub bound: f64,
    pub exceeds_bound: bool,
}

fn better(a: (f64, &[f64]), b: (f64, &[f64])) -> bool {
    if a.0 > b.0 + TIE_TOL {
        return true;
    }
    if (a.0 - b.0).abs() <= TIE_TOL {
        return lex_cmp(a.1, b.1) == Ordering::Less;
    }
    false
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

struct Tracker<'a> {
    space: &'a SearchSpace,
    budget: usize,
    evaluations: usize,
    best: Option<(f64, Vec<f64>)>,
    history: Vec<Incumbent>,
}

impl<'a> Tracker<'a> {
    fn remaining(&self) -> usize {
        self.budget - self.evaluations
    }

    /// Evaluates up to `remaining()` candidates in parallel and folds them in order.
    fn batch(&mut self, cands: Vec<Vec<f64>>) -> Vec<f64> {
        let cands: Vec<Vec<f64>> = cands.into_iter().take(self.remaining()).map(|c| self.space.clamp(&c)).collect();
        let space = self.space;
        let values: Vec<f64> = cands
            .par_iter()
            .map(|c| objective(c, space).ok().filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY))
            .collect();
        for (c, v) in cands.iter().zip(&values) {
            self.evaluations += 1;
            let improves = match &self.best {
                None => v.is_finite(),
                Some((bv, bp)) => v.is_finite() && better((*v, c), (*bv, bp)),
            };
            if improves {
                self.best = Some((*v, c.clone()));
                self.history.push(Incumbent { evaluation: self.evaluations, value: *v, params: c.clone() });
            }
        }
        values
    }
}

/// Best incumbent after `budget` objective evaluations; deterministic given `seed`.
pub fn maximize(space: &SearchSpace, budget: usize, seed: u64, method: Method) -> Result<SearchResult> {
    space.validate()?;
    let budget = budget.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tr = Tracker { space, budget, evaluations: 0, best: None, history: Vec::new() };
    let kinds = space.kinds();
    let initial = (budget / 5).clamp(1, 32);
    let seeds: Vec<Vec<f64>> = (0..initial).map(|_| space.sample(&mut rng)).collect();
    let values = tr.batch(seeds.clone());
    let mut starts: Vec<(f64, Vec<f64>)> = values.into_iter().zip(seeds).collect();
    starts.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| lex_cmp(&a.1, &b.1)));
    let mut starts = starts.into_iter().map(|(v, p)| (v, p));

    while tr.remaining() > 0 {
        let start = match starts.next() {
            Some(s) if s.0.is_finite() => s,
            _ => {
                let p = space.sample(&mut rng);
                let v = tr.batch(vec![p.clone()]);
                match v.first() {
                    Some(v) => (*v, p),
                    None => break,
                }
            }
        };
        match method {
            Method::RandomRestartCoordinate => coordinate_ascent(&mut tr, &kinds, start),
            Method::SimplexPolish => simplex_polish(&mut tr, &kinds, start),
        }
    }

    let (best_value, best_params) = tr
        .best
        .clone()
        .ok_or_else(|| Error::Domain("no candidate in the search space could be evaluated".into()))?;
    let final_value = objective_at(&best_params, space, space.final_horizon)?;
    let bound = space.bound();
    Ok(SearchResult {
        best_value,
        best_params,
        evaluations: tr.evaluations,
        history: tr.history,
        seed,
        method,
        final_value,
        bound,
        exceeds_bound: best_value.max(final_value) > bound + SOUNDNESS_TOL,
    })
}

const MIN_STEP: f64 = 1e-6;

fn coordinate_ascent(tr: &mut Tracker, kinds: &[ParamKind], (mut value, mut x): (f64, Vec<f64>)) {
    let mut steps: Vec<f64> = kinds.iter().map(|k| k.step()).collect();
    loop {
        if tr.remaining() == 0 {
            return;
        }
        let mut cands = Vec::new();
        for (i, k) in kinds.iter().enumerate() {
            match k {
                ParamKind::Choice(c) => {
                    let cur = ParamKind::choice(x[i], *c);
                    for other in (0..*c).filter(|o| *o != cur) {
                        let mut y = x.clone();
                        y[i] = other as f64 + 0.5;
                        cands.push(y);
                    }
                }
                _ if steps[i] >= MIN_STEP => {
                    for s in [steps[i], -steps[i]] {
                        let mut y = x.clone();
                        y[i] += s;
                        cands.push(y);
                    }
                }
                _ => {}
            }
        }
        if cands.is_empty() {
            return;
        }
        let cands: Vec<Vec<f64>> = cands.into_iter().map(|c| tr.space.clamp(&c)).collect();
        let values = tr.batch(cands.clone());
        let best = values
            .iter()
            .zip(&cands)
            .filter(|(v, _)| **v > value + TIE_TOL)
            .max_by(|a, b| a.0.total_cmp(b.0).then_with(|| lex_cmp(b.1, a.1)));
        match best {
            Some((v, c)) => {
                value = *v;
                x = c.clone();
            }
            None => {
                let mut any = false;
                for (s, k) in steps.iter_mut().zip(kinds) {
                    if !matches!(k, ParamKind::Choice(_)) {
                        *s *= 0.5;
                        any |= *s >= MIN_STEP;
                    }
                }
                if !any {
                    return;
                }
            }
        }
    }
}

/// Nelder–Mead on the continuous coordinates with the discrete ones frozen.
fn simplex_polish(tr: &mut Tracker, kinds: &[ParamKind], (value, x): (f64, Vec<f64>)) {
    let free: Vec<usize> = (0..kinds.len()).filter(|i| !matches!(kinds[*i], ParamKind::Choice(_))).collect();
    if free.is_empty() {
        // nothing continuous to polish: enumerate neighbours of the choices instead
        coordinate_ascent(tr, kinds, (value, x));
        return;
    }
    let embed = |y: &[f64]| -> Vec<f64> {
        let mut full = x.clone();
        for (i, v) in free.iter().zip(y) {
            full[*i] = *v;
        }
        full
    };
    let m = free.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = vec![(value, free.iter().map(|i| x[*i]).collect())];
    let verts: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut y = simplex[0].1.clone();
            y[j] += kinds[free[j]].step();
            y
        })
        .collect();
    let vals = tr.batch(verts.iter().map(|y| embed(y)).collect());
    if vals.len() < m {
        return;
    }
    simplex.extend(vals.into_iter().zip(verts));
    let order = |s: &mut Vec<(f64, Vec<f64>)>| s.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| lex_cmp(&a.1, &b.1)));
    loop {
        order(&mut simplex);
        let spread = simplex[0].0 - simplex[m].0;
        let size = simplex[1..]
            .iter()
            .flat_map(|(_, y)| y.iter().zip(&simplex[0].1).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if tr.remaining() == 0 || (spread.abs() <= TIE_TOL && size < MIN_STEP) || size < MIN_STEP {
            return;
        }
        let centroid: Vec<f64> =
            (0..m).map(|j| simplex[..m].iter().map(|(_, y)| y[j]).sum::<f64>() / m as f64).collect();
        let worst = simplex[m].clone();
        let along = |t: f64| -> Vec<f64> { (0..m).map(|j| centroid[j] + t * (worst.1[j] - centroid[j])).collect() };
        let eval = |tr: &mut Tracker, y: &[f64]| -> Option<f64> { tr.batch(vec![embed(y)]).first().copied() };
        let reflected = along(-1.0);
        let Some(fr) = eval(tr, &reflected) else { return };
        if fr > simplex[0].0 {
            let expanded = along(-2.0);
            let Some(fe) = eval(tr, &expanded) else { return };
            simplex[m] = if fe > fr { (fe, expanded) } else { (fr, reflected) };
        } else if fr > simplex[m - 1].0 {
            simplex[m] = (fr, reflected);
        } else {
            let contracted = if fr > worst.0 { along(-0.5) } else { along(0.5) };
            let Some(fc) = eval(tr, &contracted) else { return };
            if fc > fr.max(worst.0) {
                simplex[m] = (fc, contracted);
            } else {
                let best = simplex[0].1.clone();
                let shrunk: Vec<Vec<f64>> = simplex[1..]
                    .iter()
                    .map(|(_, y)| y.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect())
                    .collect();
                let vals = tr.batch(shrunk.iter().map(|y| embed(y)).collect());
                if vals.len() < m {
                    return;
                }
                for (k, (v, y)) in vals.into_iter().zip(shrunk).enumerate() {
                    simplex[k + 1] = (v, y);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub rank: usize,
    pub label: String,
    pub value: f64,
}

/// `Re A_α` under each constant field, ranked by value (stable on ties).
pub fn bang_bang_probe(
    alpha: &[u32],
    dim: usize,
    candidates: &[(String, GeneratorSpec)],
    horizon: f64,
    step: f64,
) -> Result<Vec<ProbeRow>> {
    if alpha.len() != dim {
        return Err(Error::Shape(format!("target index of length {} in dimension {dim}", alpha.len())));
    }
    let values = candidates
        .par_iter()
        .map(|(_, spec)| {
            let g = Generator::build(spec, dim, SEARCH_DEGREE)?;
            let lim = parametric_limit(&HerglotzField::constant(g), horizon, SEARCH_DEGREE, step)?;
            Ok(lim.coeff(alpha).re)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rows: Vec<(usize, f64)> = values.into_iter().enumerate().collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(rank, (i, value))| ProbeRow { rank: rank + 1, label: candidates[i].0.clone(), value })
        .collect())
}
