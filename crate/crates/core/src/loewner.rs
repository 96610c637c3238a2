//! Loewner ODE `dw/dτ = G(w, τ)` for piecewise-constant Herglotz fields.
//!
//! Both the point flow and the jet of the evolution family `φ_{s,t}` are
//! integrated with the classical fixed-step RK4 scheme. Steps are split so that
//! every field breakpoint is hit exactly. On jets the right-hand side is the
//! composition `G ∘ φ`, which is closed and triangular in the degree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{membership_check, Generator, GeneratorSpec, GridSpec};
use crate::jet::{compose_raw, JetMap, MultiJet, Normalization, C64};

pub const DEFAULT_STEP: f64 = 1e-2;
pub const DEFAULT_HORIZON: f64 = 15.0;

/// Allowed per-step growth of `‖w‖_∞` before the flow is declared not inward.
const NORM_GROWTH_SLACK: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Piece {
    /// End of the interval; the start is the previous piece's end (or 0).
    pub until: f64,
    pub generator: Generator,
}

/// `G(·, t)`: generators on `[0, t_1), [t_1, t_2), …` and a tail for `t >= t_last`.
#[derive(Clone, Debug)]
pub struct HerglotzField {
    dim: usize,
    pieces: Vec<Piece>,
    tail: Generator,
}

impl HerglotzField {
    pub fn constant(g: Generator) -> Self {
        Self { dim: g.dim(), pieces: Vec::new(), tail: g }
    }

    /// Pieces with strictly increasing positive breakpoints; the tail defaults to `-z`.
    pub fn new(pieces: Vec<Piece>, tail: Option<Generator>) -> Result<Self> {
        let dim = match (pieces.first(), &tail) {
            (Some(p), _) => p.generator.dim(),
            (None, Some(t)) => t.dim(),
            (None, None) => return Err(Error::Domain("a field needs at least one generator".into())),
        };
        let degree = pieces.iter().map(|p| p.generator.degree()).chain(tail.iter().map(|t| t.degree())).min().unwrap();
        let tail = tail.unwrap_or_else(|| Generator::identity(dim, degree));
        let mut prev = 0.0;
        for p in &pieces {
            if !(p.until > prev) || !p.until.is_finite() {
                return Err(Error::Domain(format!("breakpoints must be strictly increasing, got {} after {prev}", p.until)));
            }
            if p.generator.dim() != dim {
                return Err(Error::Shape("field pieces have different dimensions".into()));
            }
            prev = p.until;
        }
        if tail.dim() != dim {
            return Err(Error::Shape("field tail has a different dimension".into()));
        }
        Ok(Self { dim, pieces, tail })
    }

    /// [`HerglotzField::new`], additionally certifying every generator on `grid`.
    pub fn certified(pieces: Vec<Piece>, tail: Option<Generator>, grid: &GridSpec, tol: f64) -> Result<Self> {
        let field = Self::new(pieces, tail)?;
        for g in field.generators() {
            let cert = membership_check(g, grid, tol);
            if !cert.passed() {
                return Err(Error::Domain(format!(
                    "field generator fails membership: margin {:.3e} at {:?}",
                    cert.worst_margin, cert.witness.point
                )));
            }
        }
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn tail(&self) -> &Generator {
        &self.tail
    }

    pub fn generators(&self) -> impl Iterator<Item = &Generator> {
        self.pieces.iter().map(|p| &p.generator).chain(std::iter::once(&self.tail))
    }

    /// Smallest jet degree among the generators.
    pub fn degree(&self) -> usize {
        self.generators().map(|g| g.degree()).min().unwrap()
    }

    pub fn generator_at(&self, t: f64) -> &Generator {
        self.pieces
            .iter()
            .find(|p| t < p.until)
            .map_or(&self.tail, |p| &p.generator)
    }

    /// `[s, b_1, …, b_k, t]` with the breakpoints strictly inside `(s, t)`.
    fn segments(&self, s: f64, t: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![s];
        cuts.extend(self.pieces.iter().map(|p| p.until).filter(|b| *b > s && *b < t));
        cuts.push(t);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn to_schedule(&self) -> Vec<ScheduleEntry> {
        self.pieces
            .iter()
            .map(|p| ScheduleEntry { until: Some(p.until), generator: p.generator.spec().clone() })
            .chain(std::iter::once(ScheduleEntry { until: None, generator: self.tail.spec().clone() }))
            .collect()
    }

    /// Builds a field from its schedule; an entry without `until` is the tail.
    pub fn from_schedule(entries: &[ScheduleEntry], dim: usize, degree: usize) -> Result<Self> {
        let mut pieces = Vec::new();
        let mut tail = None;
        for (i, e) in entries.iter().enumerate() {
            let g = Generator::build(&e.generator, dim, degree)?;
            match e.until {
                Some(until) => {
                    if tail.is_some() {
                        return Err(Error::Parse("schedule entries after the open-ended tail".into()));
                    }
                    pieces.push(Piece { until, generator: g });
                }
                None if i + 1 == entries.len() => tail = Some(g),
                None => return Err(Error::Parse("only the last schedule entry may omit `until`".into())),
            }
        }
        Self::new(pieces, tail)
    }
}

/// One line of a field schedule file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<f64>,
    pub generator: GeneratorSpec,
}

fn substeps(a: f64, b: f64, step: f64) -> (usize, f64) {
    let n = (((b - a) / step) - 1e-9).ceil().max(1.0) as usize;
    (n, (b - a) / n as f64)
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    Ok(())
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if !(s >= 0.0 && s <= t && t.is_finite()) {
        return Err(Error::Domain(format!("need 0 <= s <= t, got s = {s}, t = {t}")));
    }
    Ok(())
}

/// `φ_{s,t}(z)` by RK4.
pub fn evolve_point(field: &HerglotzField, s: f64, t: f64, z: &[C64], step: f64) -> Result<Vec<C64>> {
    check_step(step)?;
    check_times(s, t)?;
    let n = field.dim();
    if z.len() != n {
        return Err(Error::Shape(format!("point of length {} for a field of dimension {n}", z.len())));
    }
    if crate::eval::sup_norm(z) >= 1.0 {
        return Err(Error::Domain("initial point must lie in the open polydisc".into()));
    }
    let mut w = z.to_vec();
    let zero = C64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let mut tmp = vec![zero; n];
    for (a, b) in field.segments(s, t) {
        let g = field.generator_at(a).evaluator();
        let (count, h) = substeps(a, b, step);
        for i in 0..count {
            let before = crate::eval::sup_norm(&w);
            g.eval_into(&w, &mut k1);
            for k in 0..n {
                tmp[k] = w[k] + k1[k] * (h / 2.0);
            }
            g.eval_into(&tmp, &mut k2);
            for k in 0..n {
                tmp[k] = w[k] + k2[k] * (h / 2.0);
            }
            g.eval_into(&tmp, &mut k3);
            for k in 0..n {
                tmp[k] = w[k] + k3[k] * h;
            }
            g.eval_into(&tmp, &mut k4);
            for k in 0..n {
                w[k] += (k1[k] + k2[k] * 2.0 + k3[k] * 2.0 + k4[k]) * (h / 6.0);
            }
            let after = crate::eval::sup_norm(&w);
            let time = a + (i + 1) as f64 * h;
            if !after.is_finite() || after >= 1.0 {
                return Err(Error::Integration { time, reason: format!("iterate left the polydisc (‖w‖ = {after})") });
            }
            if after > before + NORM_GROWTH_SLACK {
                return Err(Error::Integration {
                    time,
                    reason: format!("‖w‖_∞ grew from {before} to {after}; generator does not point inward"),
                });
            }
        }
    }
    Ok(w)
}

/// RK4 integrator on the jet coefficients of `φ`.
struct JetFlow<'a> {
    field: &'a HerglotzField,
    degree: usize,
    step: f64,
    time: f64,
    state: Vec<Vec<C64>>,
}

impl<'a> JetFlow<'a> {
    fn start(field: &'a HerglotzField, s: f64, degree: usize, step: f64) -> Result<Self> {
        check_step(step)?;
        if degree == 0 {
            return Err(Error::Domain("jet degree must be positive".into()));
        }
        if field.degree() < degree {
            return Err(Error::Shape(format!(
                "field generators carry degree-{} jets, {degree} requested",
                field.degree()
            )));
        }
        let id = JetMap::identity(field.dim(), degree);
        let state = id.components().iter().map(|c| c.coeffs().to_vec()).collect();
        Ok(Self { field, degree, step, time: s, state })
    }

    fn advance_to(&mut self, t: f64) -> Result<()> {
        check_times(self.time, t)?;
        let basis = crate::jet::basis(self.field.dim(), self.degree);
        let n = self.field.dim();
        for (a, b) in self.field.segments(self.time, t) {
            let g = self.field.generator_at(a).jet().truncate(self.degree)?;
            let outer: Vec<&[C64]> = g.components().iter().map(|c| c.coeffs()).collect();
            let (count, h) = substeps(a, b, self.step);
            let rhs = |state: &[Vec<C64>]| {
                let inner: Vec<&[C64]> = state.iter().map(|c| c.as_slice()).collect();
                compose_raw(&basis, &outer, &inner)
            };
            let shifted = |state: &[Vec<C64>], k: &[Vec<C64>], c: f64| -> Vec<Vec<C64>> {
                state
                    .iter()
                    .zip(k)
                    .map(|(s, d)| s.iter().zip(d).map(|(x, y)| x + y * c).collect())
                    .collect()
            };
            for _ in 0..count {
                let k1 = rhs(&self.state);
                let k2 = rhs(&shifted(&self.state, &k1, h / 2.0));
                let k3 = rhs(&shifted(&self.state, &k2, h / 2.0));
                let k4 = rhs(&shifted(&self.state, &k3, h));
                for i in 0..n {
                    for (p, x) in self.state[i].iter_mut().enumerate() {
                        *x += (k1[i][p] + k2[i][p] * 2.0 + k3[i][p] * 2.0 + k4[i][p]) * (h / 6.0);
                    }
                }
            }
            if self.state.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::Integration { time: b, reason: "non-finite jet coefficient".into() });
            }
        }
        self.time = t;
        Ok(())
    }

    fn jet(&self) -> JetMap {
        let basis = crate::jet::basis(self.field.dim(), self.degree);
        let comps = self.state.iter().map(|c| MultiJet::from_raw(basis.clone(), c.clone())).collect();
        JetMap::general(comps).expect("flow state has consistent shape")
    }
}

/// Jet of `φ_{s,t}` to degree `degree` (tagged general).
pub fn evolve_jet(field: &HerglotzField, s: f64, t: f64, degree: usize, step: f64) -> Result<JetMap> {
    check_times(s, t)?;
    let mut flow = JetFlow::start(field, s, degree, step)?;
    flow.advance_to(t)?;
    Ok(flow.jet())
}

/// Options for [`evolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub degree: Option<usize>,
    pub step: f64,
    pub points: Vec<Vec<C64>>,
    /// Estimate the global error by re-running at twice the step (Richardson).
    pub estimate_error: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { degree: Some(crate::catalog::DEFAULT_DEGREE), step: DEFAULT_STEP, points: Vec::new(), estimate_error: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitPoint {
    pub z: Vec<C64>,
    pub value: Vec<C64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolutionResult {
    pub s: f64,
    pub t: f64,
    pub point_orbit: Option<Vec<OrbitPoint>>,
    pub jet: Option<JetMap>,
    pub step: f64,
    /// `max |y_h - y_{2h}| / 15` over all reported numbers, when requested.
    pub local_error: Option<f64>,
}

/// Point and/or jet evolution with an optional error estimate.
pub fn evolve(field: &HerglotzField, s: f64, t: f64, opts: &EvolveOptions) -> Result<EvolutionResult> {
    let run = |step: f64| -> Result<(Option<JetMap>, Vec<Vec<C64>>)> {
        let jet = opts.degree.map(|d| evolve_jet(field, s, t, d, step)).transpose()?;
        let pts = opts.points.iter().map(|z| evolve_point(field, s, t, z, step)).collect::<Result<Vec<_>>>()?;
        Ok((jet, pts))
    };
    let (jet, pts) = run(opts.step)?;
    let local_error = if opts.estimate_error {
        let (jet2, pts2) = run(2.0 * opts.step)?;
        let mut err: f64 = 0.0;
        if let (Some(a), Some(b)) = (&jet, &jet2) {
            err = err.max(a.max_abs_diff(b));
        }
        for (a, b) in pts.iter().zip(&pts2) {
            err = err.max(a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max));
        }
        Some(err / 15.0)
    } else {
        None
    };
    let jet = jet.map(|j| j.with_normalization(Normalization::General).expect("general tag"));
    let point_orbit = (!opts.points.is_empty()).then(|| {
        opts.points
            .iter()
            .zip(pts)
            .map(|(z, value)| OrbitPoint { z: z.clone(), value })
            .collect()
    });
    Ok(EvolutionResult { s, t, point_orbit, jet, step: opts.step, local_error })
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitResult {
    pub horizon: f64,
    pub step: f64,
    /// `e^T φ_{0,T}`, normalized-univalent.
    pub jet: JetMap,
    /// Max coefficient change between horizons `T - 1` and `T`.
    pub tail_bound: f64,
}

impl LimitResult {
    /// `A_α`: coefficient of `z^α` in the first component.
    pub fn coeff(&self, alpha: &[u32]) -> C64 {
        self.jet.component(0).coeff(alpha)
    }
}

/// `f ≈ e^T φ_{0,T}` with an empirical tail bound.
pub fn parametric_limit(field: &HerglotzField, horizon: f64, degree: usize, step: f64) -> Result<LimitResult> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let mut flow = JetFlow::start(field, 0.0, degree, step)?;
    let before = (horizon - 1.0).max(0.0);
    flow.advance_to(before)?;
    let earlier = flow.jet().scale(C64::new(before.exp(), 0.0));
    flow.advance_to(horizon)?;
    let jet = flow.jet().scale(C64::new(horizon.exp(), 0.0));
    let tail_bound = jet.max_abs_diff(&earlier);
    let jet = jet.with_normalization(Normalization::NormalizedUnivalent).map_err(|e| {
        Error::Domain(format!("limit jet failed normalization (step {step} too coarse?): {e}"))
    })?;
    Ok(LimitResult { horizon, step, jet, tail_bound })
}

/// `e^{t-s} φ_{s,t}`, a normalized-univalent map.
pub fn scaled_transition(field: &HerglotzField, s: f64, t: f64, degree: usize, step: f64) -> Result<JetMap> {
    let phi = evolve_jet(field, s, t, degree, step)?;
    phi.scale(C64::new((t - s).exp(), 0.0))
        .with_normalization(Normalization::NormalizedUnivalent)
}

/// `e^T φ_{0,T}(z)` pointwise.
pub fn limit_point(field: &HerglotzField, horizon: f64, z: &[C64], step: f64) -> Result<Vec<C64>> {
    let w = evolve_point(field, 0.0, horizon, z, step)?;
    Ok(w.into_iter().map(|c| c * horizon.exp()).collect())
}
