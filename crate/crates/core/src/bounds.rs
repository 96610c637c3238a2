//! Finite numerical checks of the coefficient and growth inequalities.
//!
//! Every check produces a [`BoundReport`]: one row per inequality with the
//! bound, the attained value, the margin `bound - attained` and a verdict
//! (`attained <= bound + tolerance`). Rows whose attained value sits on the
//! bound are flagged as equalities.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{sup_norm, Evaluator};
use crate::generators::{Generator, Verdict};
use crate::jet::{JetMap, MultiIndex, MultiJet, Normalization, C64};

/// Absolute slack for every bound check.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Which error regime decides equality flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EqualityRegime {
    /// Closed-form jets: within `1e-10` of the bound.
    ClosedForm,
    /// ODE-evolved maps: within `1e-3` of the bound.
    Evolved,
}

impl EqualityRegime {
    pub fn threshold(self) -> f64 {
        match self {
            EqualityRegime::ClosedForm => 1e-10,
            EqualityRegime::Evolved => 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub bound: f64,
    pub attained: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub equality: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<C64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub subject: String,
    pub tolerance: f64,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    fn new(subject: impl Into<String>, tolerance: f64) -> Self {
        Self { subject: subject.into(), tolerance, checks: Vec::new() }
    }

    fn push(&mut self, name: String, bound: f64, attained: f64, eq: f64, witness: Option<Vec<C64>>) {
        let pass = attained <= bound + self.tolerance;
        self.checks.push(BoundCheck {
            name,
            bound,
            attained,
            margin: bound - attained,
            verdict: Verdict::from_pass(pass),
            equality: (attained - bound).abs() <= eq,
            witness,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Pass)
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail)
    }

    pub fn equalities(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| c.equality)
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn min_margin(&self) -> f64 {
        self.checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min)
    }

    /// Rows `(subject, check, bound, attained, margin, verdict)`.
    pub fn csv_rows(&self) -> Vec<[String; 6]> {
        self.checks
            .iter()
            .map(|c| {
                [
                    self.subject.clone(),
                    c.name.clone(),
                    format!("{}", c.bound),
                    format!("{}", c.attained),
                    format!("{}", c.margin),
                    match c.verdict {
                        Verdict::Pass => "pass".into(),
                        Verdict::Fail => "fail".into(),
                    },
                ]
            })
            .collect()
    }
}

/// `|c_k| <= 2` for a one-variable `p = 1 + Σ c_k z^k` of positive real part.
pub fn caratheodory_check(p: &MultiJet, tol: f64, regime: EqualityRegime) -> Result<BoundReport> {
    if p.dim() != 1 {
        return Err(Error::Shape(format!("Carathéodory check needs a one-variable jet, got dim {}", p.dim())));
    }
    if (p.constant_term() - 1.0).norm() > 1e-12 {
        return Err(Error::Domain(format!("p(0) = {} but must be 1", p.constant_term())));
    }
    let mut r = BoundReport::new("caratheodory", tol);
    for k in 1..=p.degree() {
        let c = p.coeff(&[k as u32]);
        r.push(format!("c_{k}"), 2.0, c.norm(), regime.threshold(), None);
    }
    Ok(r)
}

/// Two-sided growth bounds `r/(1+r)^2 <= ‖f(z)‖_∞ <= r/(1-r)^2`, `r = ‖z‖_∞`.
pub fn koebe_check(f: &Evaluator, points: &[Vec<C64>], tol: f64, regime: EqualityRegime) -> BoundReport {
    let mut rep = BoundReport::new("koebe", tol);
    for (i, z) in points.iter().enumerate() {
        let r = sup_norm(z);
        if !(r > 0.0 && r < 1.0) {
            continue;
        }
        let v = sup_norm(&f.eval(z));
        let upper = r / ((1.0 - r) * (1.0 - r));
        let lower = r / ((1.0 + r) * (1.0 + r));
        let eq = regime.threshold() * upper.max(1.0);
        rep.push(format!("upper[{i}]"), upper, v, eq, Some(z.clone()));
        rep.push(format!("lower[{i}]"), v, lower, eq, Some(z.clone()));
    }
    rep
}

/// `count` points uniform in the polydisc of radius `max_r`, reproducible from `seed`.
pub fn random_points(dim: usize, count: usize, max_r: f64, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| C64::from_polar(max_r * rng.gen::<f64>().sqrt(), TAU * rng.gen::<f64>()))
                .collect()
        })
        .collect()
}

/// `r·direction` for each `r`, with `direction` on the unit torus.
pub fn ray_points(direction: &[C64], radii: &[f64]) -> Vec<Vec<C64>> {
    radii.iter().map(|r| direction.iter().map(|d| d * *r).collect()).collect()
}

fn first_component_degree2(f: &JetMap) -> impl Iterator<Item = (MultiIndex, C64)> + '_ {
    let c = f.component(0);
    let layer = c.basis().layer(2);
    let idx = c.basis().indices()[layer.clone()].to_vec();
    idx.into_iter().zip(c.coeffs()[layer].to_vec())
}

/// Sharp degree-2 bounds for the first component of a normalized map:
/// `|A_α| <= 2` when `α_1 != 0`, `|A_α| <= 1` when `α_1 = 0`.
pub fn coeff_bound_report(f: &JetMap, tol: f64, regime: EqualityRegime) -> Result<BoundReport> {
    if f.degree() < 2 {
        return Err(Error::Domain("coefficient bounds need degree >= 2".into()));
    }
    let f = f.clone().with_normalization(Normalization::NormalizedUnivalent)?;
    let mut r = BoundReport::new("coefficients", tol);
    for (alpha, a) in first_component_degree2(&f) {
        r.push(format!("A_{alpha}"), sharp_bound(alpha.exponents()), a.norm(), regime.threshold(), None);
    }
    Ok(r)
}

/// The sharp bound on `|A_α|` for `|α| = 2`.
pub fn sharp_bound(alpha: &[u32]) -> f64 {
    if alpha[0] != 0 {
        2.0
    } else {
        1.0
    }
}

/// `max_{w ∈ (∂D)^n} |D^2 f_i(0)(w,w)/2| <= 2` for every component.
///
/// `|P(e^{iψ}w)| = |P(w)|` for the homogeneous quadratic `P`, so `w_1 = 1` is fixed
/// and the other coordinates run over `angles` equally spaced angles.
pub fn bieberbach_degree2_check(f: &JetMap, angles: usize, tol: f64, regime: EqualityRegime) -> Result<BoundReport> {
    if f.degree() < 2 {
        return Err(Error::Domain("degree-2 check needs degree >= 2".into()));
    }
    let n = f.dim();
    let roots: Vec<C64> = (0..angles).map(|k| C64::from_polar(1.0, TAU * k as f64 / angles as f64)).collect();
    let mut rep = BoundReport::new("bieberbach-degree-2", tol);
    let total = angles.pow(n as u32 - 1);
    for (i, comp) in f.components().iter().enumerate() {
        let quad = comp.homogeneous(2);
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut w = vec![C64::new(1.0, 0.0); n];
        for flat in 0..total {
            let mut rem = flat;
            for wk in w.iter_mut().skip(1) {
                *wk = roots[rem % angles];
                rem /= angles;
            }
            let v = quad.eval(&w).norm();
            if v > best.0 {
                best = (v, w.clone());
            }
        }
        rep.push(format!("component {}", i + 1), 2.0, best.0, regime.threshold(), Some(best.1));
    }
    Ok(rep)
}

/// Coefficient families of the first generator component:
/// `|c_{k e_1}| <= 2`, `|c_{e_1 + k e_j}| <= 2`, `|c_{2 e_j}| <= 1`, `|c_{e_i + e_j}| <= 1`
/// (`i, j >= 2`), each over every coordinate relabeling and every degree in the jet.
pub fn generator_coeff_report(h: &Generator, tol: f64, regime: EqualityRegime) -> Result<BoundReport> {
    generator_jet_coeff_report(h.jet(), tol, regime)
}

pub fn generator_jet_coeff_report(h: &JetMap, tol: f64, regime: EqualityRegime) -> Result<BoundReport> {
    let h = h.clone().with_normalization(Normalization::GeneratorNormalized)?;
    let n = h.dim();
    let d = h.degree() as u32;
    let c = h.component(0);
    let mut rep = BoundReport::new("generator-coefficients", tol);
    let eq = regime.threshold();
    let push = |rep: &mut BoundReport, e: Vec<u32>, bound: f64| {
        let alpha = MultiIndex::new(e);
        rep.push(format!("c_{alpha}"), bound, c.coeff(alpha.exponents()).norm(), eq, None);
    };
    for k in 2..=d {
        let mut e = vec![0; n];
        e[0] = k;
        push(&mut rep, e, 2.0);
    }
    for j in 1..n {
        for k in 1..d {
            let mut e = vec![0; n];
            e[0] = 1;
            e[j] = k;
            push(&mut rep, e, 2.0);
        }
    }
    for i in 1..n {
        for j in i..n {
            let mut e = vec![0; n];
            e[i] += 1;
            e[j] += 1;
            push(&mut rep, e, 1.0);
        }
    }
    Ok(rep)
}

/// Angles that rotate `A_α` (coefficient `a` of `z^α` in component 1) onto the
/// positive real axis: `e^{i(⟨α,θ⟩ - θ_1)} a = |a|`.
pub fn alignment_angles(alpha: &[u32], a: C64) -> Option<Vec<f64>> {
    let n = alpha.len();
    let v = (0..n).find(|&v| alpha[v] as i64 - (v == 0) as i64 != 0)?;
    let weight = alpha[v] as f64 - if v == 0 { 1.0 } else { 0.0 };
    let mut angles = vec![0.0; n];
    angles[v] = -a.arg() / weight;
    Some(angles)
}
