use std::f64::consts::TAU;
use std::path::Path;

use polyloewner::bounds::{
    bieberbach_degree2_check, caratheodory_check, coeff_bound_report, generator_coeff_report, koebe_check,
    random_points, BoundReport,
};
use polyloewner::catalog::{verify_catalog, CatalogReport};
use polyloewner::generators::{membership_check, Atom, AtomicMeasure, GridSpec};
use polyloewner::loewner::{evolve, limit_point, EvolveOptions};
use polyloewner::search::{maximize, Family, SearchSpace};
use polyloewner::{
    catalog_get, parametric_limit, CatalogName, EqualityRegime, Evaluator, Generator, GeneratorSpec, HerglotzField,
    JetMap, MapRole, ScheduleEntry, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use time::format_description::well_known::Rfc3339;

use crate::config::{CommandName, FamilyName, RunConfig};
use crate::{CliError, Outcome, Report, SCHEMA};

/// Jet tolerance for the catalog identities.
const CATALOG_JET_TOL: f64 = 1e-10;
/// Radius of randomly sampled evaluation points.
const SAMPLE_RADIUS: f64 = 0.9;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorFileFull {
    dim: Option<usize>,
    generator: GeneratorSpec,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GeneratorFile {
    Full(GeneratorFileFull),
    Bare(GeneratorSpec),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFileFull {
    dim: Option<usize>,
    schedule: Vec<ScheduleEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FieldFile {
    Full(FieldFileFull),
    Schedule(Vec<ScheduleEntry>),
    Constant(GeneratorSpec),
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(path.to_path_buf(), e.to_string()))
}

/// The dimension a generator description pins down, if any.
pub fn infer_dim(spec: &GeneratorSpec) -> Option<usize> {
    match spec {
        GeneratorSpec::Identity => None,
        GeneratorSpec::Catalog { name } | GeneratorSpec::FromStarlike { name } => Some(name.min_dim()),
        GeneratorSpec::StarlikePolynomial(p) | GeneratorSpec::Polynomial(p) => Some(p.components.len()),
        GeneratorSpec::ProductForm { selectors, .. } => Some(selectors.len()),
        GeneratorSpec::Rotation { angles, .. } => Some(angles.len()),
        GeneratorSpec::ConvexCombo { parts, .. } => parts.iter().find_map(infer_dim),
        GeneratorSpec::ShearLinear { .. } | GeneratorSpec::ShearQuadratic { .. } => Some(2),
    }
}

fn load_generator(cfg: &RunConfig, path: &Path) -> Result<(usize, Generator), CliError> {
    let (dim, spec) = match read_json::<GeneratorFile>(path)? {
        GeneratorFile::Full(f) => (f.dim, f.generator),
        GeneratorFile::Bare(s) => (None, s),
    };
    let dim = dim.or(cfg.dim).or_else(|| infer_dim(&spec)).unwrap_or(2);
    Ok((dim, Generator::build(&spec, dim, cfg.degree)?))
}

fn load_field(cfg: &RunConfig) -> Result<HerglotzField, CliError> {
    let path = cfg.field.as_ref().ok_or_else(|| CliError::Config(format!("{} needs --field", cfg.command)))?;
    let (dim, schedule) = match read_json::<FieldFile>(path)? {
        FieldFile::Full(f) => (f.dim, f.schedule),
        FieldFile::Schedule(s) => (None, s),
        FieldFile::Constant(g) => (None, vec![ScheduleEntry { until: None, generator: g }]),
    };
    let dim = dim
        .or(cfg.dim)
        .or_else(|| schedule.iter().find_map(|e| infer_dim(&e.generator)))
        .unwrap_or(2);
    Ok(HerglotzField::from_schedule(&schedule, dim, cfg.degree)?)
}

fn catalog_name(s: &str) -> Result<CatalogName, CliError> {
    Ok(s.parse::<CatalogName>()?)
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn bound_rows(reports: &[&BoundReport]) -> Result<String, CliError> {
    csv_table(
        &["subject", "check", "bound", "attained", "margin", "verdict"],
        reports.iter().flat_map(|r| r.csv_rows()).map(|r| r.to_vec()),
    )
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

struct Done {
    pass: bool,
    result: Value,
    csv: Option<String>,
}

/// Runs the configured command.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let done = match cfg.command {
        CommandName::VerifyCatalog => verify(cfg)?,
        CommandName::CheckGenerator => check_generator(cfg)?,
        CommandName::Evolve => evolve_cmd(cfg)?,
        CommandName::Limit => limit(cfg)?,
        CommandName::Bounds => bounds(cfg)?,
        CommandName::Search => search(cfg)?,
        CommandName::Caratheodory => caratheodory(cfg)?,
        CommandName::Catalog => catalog(cfg)?,
    };
    let timestamp = (!cfg.deterministic)
        .then(|| time::OffsetDateTime::now_utc().format(&Rfc3339).ok())
        .flatten();
    Ok(Outcome {
        report: Report {
            schema: SCHEMA,
            command: cfg.command,
            config: cfg.clone(),
            timestamp,
            verdict: Verdict::from_pass(done.pass),
            result: done.result,
        },
        csv: done.csv,
    })
}

fn verify(cfg: &RunConfig) -> Result<Done, CliError> {
    let report: CatalogReport = verify_catalog(cfg.degree, CATALOG_JET_TOL, &GridSpec::with_angles(cfg.angles))?;
    let csv = csv_table(
        &["map", "dim", "jet_error", "membership_margin", "verdict"],
        report.items.iter().map(|i| {
            vec![
                format!("F{}", i.index),
                i.dim.to_string(),
                format!("{:e}", i.jet_error),
                format!("{:e}", i.membership.worst_margin),
                if i.pass { "pass" } else { "fail" }.to_string(),
            ]
        }),
    )?;
    Ok(Done { pass: report.pass, result: to_value(&report), csv: Some(csv) })
}

fn check_generator(cfg: &RunConfig) -> Result<Done, CliError> {
    let path = cfg.file.as_ref().ok_or_else(|| CliError::Config("check-generator needs --file".into()))?;
    let (dim, g) = load_generator(cfg, path)?;
    let cert = membership_check(&g, &GridSpec::with_angles(cfg.angles), cfg.membership_tol);
    let coeffs = generator_coeff_report(&g, cfg.tol, EqualityRegime::ClosedForm)?;
    let pass = cert.passed() && coeffs.passed();
    let result = json!({
        "dim": dim,
        "degree": g.degree(),
        "generator": g.spec(),
        "membership": cert,
        "coefficients": coeffs,
    });
    Ok(Done { pass, result, csv: Some(bound_rows(&[&coeffs])?) })
}

fn evolve_cmd(cfg: &RunConfig) -> Result<Done, CliError> {
    let field = load_field(cfg)?;
    let opts = EvolveOptions {
        degree: Some(cfg.degree),
        step: cfg.step,
        points: random_points(field.dim(), cfg.points, SAMPLE_RADIUS, cfg.seed),
        estimate_error: true,
    };
    let r = evolve(&field, cfg.s, cfg.t, &opts)?;
    let pass = r.local_error.is_some_and(|e| e <= cfg.tol);
    Ok(Done { pass, result: json!({ "schedule": field.to_schedule(), "evolution": r }), csv: None })
}

fn degree2_rows(jet: &JetMap) -> Vec<Value> {
    let c = jet.component(0);
    c.terms()
        .filter(|(a, _)| a.degree() == 2)
        .map(|(a, v)| json!({ "alpha": a.exponents(), "re": v.re, "im": v.im, "abs": v.norm() }))
        .collect()
}

fn limit(cfg: &RunConfig) -> Result<Done, CliError> {
    let field = load_field(cfg)?;
    let lim = parametric_limit(&field, cfg.horizon, cfg.degree, cfg.step)?;
    let report = coeff_bound_report(&lim.jet, cfg.tol, EqualityRegime::Evolved)?;
    let result = json!({
        "schedule": field.to_schedule(),
        "horizon": lim.horizon,
        "step": lim.step,
        "tail_bound": lim.tail_bound,
        "degree2": degree2_rows(&lim.jet),
        "bounds": report,
        "jet": lim.jet,
    });
    Ok(Done { pass: report.passed(), result, csv: Some(bound_rows(&[&report])?) })
}

fn bounds(cfg: &RunConfig) -> Result<Done, CliError> {
    if let Some(name) = &cfg.map {
        let name = catalog_name(name)?;
        let dim = cfg.dim.unwrap_or(name.min_dim());
        let m = catalog_get(name, dim, cfg.degree)?;
        if m.role == MapRole::Generator {
            let r = generator_coeff_report(&m.to_generator()?, cfg.tol, EqualityRegime::ClosedForm)?;
            let csv = bound_rows(&[&r])?;
            return Ok(Done { pass: r.passed(), result: json!({ "map": name, "dim": dim, "generator": r }), csv: Some(csv) });
        }
        let pts = random_points(dim, cfg.points, 0.98, cfg.seed);
        return map_bounds(cfg, json!({ "map": name, "dim": dim }), &m.jet, &m.evaluator, &pts, EqualityRegime::ClosedForm);
    }
    let field = load_field(cfg)?;
    let lim = parametric_limit(&field, cfg.horizon, cfg.degree, cfg.step)?;
    let dim = field.dim();
    let (horizon, step) = (cfg.horizon, cfg.step);
    let f = field.clone();
    let ev = Evaluator::new(dim, move |z, out| match limit_point(&f, horizon, z, step) {
        Ok(w) => out.copy_from_slice(&w),
        Err(_) => out.fill(polyloewner::C64::new(f64::NAN, f64::NAN)),
    });
    let pts = random_points(dim, cfg.points, SAMPLE_RADIUS, cfg.seed);
    let head = json!({ "schedule": field.to_schedule(), "dim": dim, "tail_bound": lim.tail_bound });
    map_bounds(cfg, head, &lim.jet, &ev, &pts, EqualityRegime::Evolved)
}

fn map_bounds(
    cfg: &RunConfig,
    mut head: Value,
    jet: &JetMap,
    ev: &Evaluator,
    pts: &[Vec<polyloewner::C64>],
    regime: EqualityRegime,
) -> Result<Done, CliError> {
    let coeffs = coeff_bound_report(jet, cfg.tol, regime)?;
    let bieberbach = bieberbach_degree2_check(jet, cfg.angles, cfg.tol, regime)?;
    let koebe = koebe_check(ev, pts, cfg.tol, regime);
    let pass = coeffs.passed() && bieberbach.passed() && koebe.passed();
    let csv = bound_rows(&[&coeffs, &bieberbach, &koebe])?;
    head["coefficients"] = to_value(&coeffs);
    head["bieberbach"] = to_value(&bieberbach);
    head["koebe"] = to_value(&koebe);
    Ok(Done { pass, result: head, csv: Some(csv) })
}

fn search(cfg: &RunConfig) -> Result<Done, CliError> {
    let alpha = cfg.alpha.clone().ok_or_else(|| CliError::Config("search needs --alpha".into()))?;
    let dim = cfg.dim.unwrap_or(alpha.len());
    let family = match cfg.family {
        FamilyName::CatalogRotation => Family::catalog_rotations(dim),
        FamilyName::ProductForm => Family::ProductForm { atoms: cfg.atoms },
        FamilyName::ConvexCombo => Family::convex(dim, cfg.parts),
    };
    let mut space = SearchSpace::new(dim, alpha, cfg.pieces, family)?;
    space.horizon = cfg.horizon;
    space.step = cfg.step;
    space.degree = cfg.degree;
    space.final_horizon = space.final_horizon.max(cfg.horizon);
    let r = maximize(&space, cfg.budget, cfg.seed, cfg.search_method())?;
    let csv = csv_table(
        &["evaluation", "value", "params"],
        r.history.iter().map(|i| {
            vec![
                i.evaluation.to_string(),
                i.value.to_string(),
                i.params.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";"),
            ]
        }),
    )?;
    let pass = !r.exceeds_bound;
    Ok(Done { pass, result: json!({ "space": space, "search": r }), csv: Some(csv) })
}

/// `angle:weight,angle:weight,...`; weights are renormalized to sum to one.
pub fn parse_measure(s: &str) -> Result<AtomicMeasure, CliError> {
    let atoms = s
        .split(',')
        .map(|part| {
            let (a, w) = part
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("atom `{part}` is not angle:weight")))?;
            let angle = a.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad angle `{a}`")))?;
            let weight = w.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad weight `{w}`")))?;
            Ok(Atom { angle, weight })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(AtomicMeasure::normalized(atoms)?)
}

fn caratheodory(cfg: &RunConfig) -> Result<Done, CliError> {
    let mut measures = vec![match &cfg.measure {
        Some(m) => parse_measure(m)?,
        None => AtomicMeasure::dirac(0.0),
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random {
        let k = rng.gen_range(1..=4);
        let atoms = (0..k).map(|_| Atom { angle: rng.gen_range(0.0..TAU), weight: rng.gen_range(0.0..1.0) }).collect();
        measures.push(AtomicMeasure::normalized(atoms)?);
    }
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for m in &measures {
        let p = m.herglotz_jet(0, 1, cfg.degree)?;
        let r = caratheodory_check(&p, cfg.tol, EqualityRegime::ClosedForm)?;
        rows.push(r.clone());
        reports.push(json!({ "measure": m, "report": r }));
    }
    let pass = rows.iter().all(|r| r.passed());
    let refs: Vec<&BoundReport> = rows.iter().collect();
    Ok(Done { pass, result: json!({ "checks": reports }), csv: Some(bound_rows(&refs)?) })
}

fn catalog(cfg: &RunConfig) -> Result<Done, CliError> {
    match &cfg.map {
        Some(name) => {
            let name = catalog_name(name)?;
            let dim = cfg.dim.unwrap_or(name.min_dim());
            let m = catalog_get(name, dim, cfg.degree)?;
            let role = match m.role {
                MapRole::StarlikeMap => "starlike",
                MapRole::Generator => "generator",
            };
            Ok(Done { pass: true, result: json!({ "map": name, "dim": dim, "role": role, "jet": m.jet }), csv: None })
        }
        None => {
            let rows: Vec<Value> = CatalogName::ALL
                .iter()
                .map(|n| {
                    let role = match n.role() {
                        MapRole::StarlikeMap => "starlike",
                        MapRole::Generator => "generator",
                    };
                    json!({ "map": n, "role": role, "min_dim": n.min_dim(), "partner": n.partner() })
                })
                .collect();
            Ok(Done { pass: true, result: json!({ "maps": rows }), csv: None })
        }
    }
}
