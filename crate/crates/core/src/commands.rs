//! Command pipelines behind the `orlicz-mp` binary. Every command writes
//! its machine-readable output into the output directory and returns a
//! short human summary plus the process exit code.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ProblemConfig;
use crate::conjugation::{
    check_dominates, check_integrability, compute_phi_n, format_rational, loglog_slope,
    power_sum_conjugate_exponent, rational_from_f64, DominationVerdict, IntegrabilityReport,
};
use crate::error::{Error, Result};
use crate::mpa::{
    audit_assumptions, audit_growth, check_monotone_operator, concentration_functional, energy, mountain_pass_geometry,
    mountain_pass_solve, nearest_lattice_point, ps_monitor, random_bump_field, recenter, AuditReport,
    Concentration, GeometryReport, HistoryEntry, HypothesisCheck, MPResult, MonotoneReport, ProblemSpec, PsEntry, SolveVerdict,
};
use crate::rearrangement::compute_phi_circ;
use crate::sampling::Verdict;
use crate::spaces::{sobolev_norm, BoundaryRule, Field, SobolevNorm};
use crate::young::{MonotoneScalarFunction, ScalarKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAILED: i32 = 1;
pub const EXIT_NOT_INTEGRABLE: i32 = 2;
pub const EXIT_MAX_ITER: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_INPUT: i32 = 65;
pub const EXIT_IO: i32 = 74;

/// Exit code for an error that aborted a command.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_INPUT,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Conjugate,
    Audit,
    Solve,
    Diagnose,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub input: PathBuf,
    pub out: PathBuf,
    pub overrides: Vec<String>,
    pub force: bool,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
}

pub fn run(rc: &RunConfig) -> Result<Outcome> {
    let text = std::fs::read_to_string(&rc.input)?;
    let config = ProblemConfig::parse_with_overrides(&text, &rc.overrides)?;
    std::fs::create_dir_all(&rc.out)?;
    match rc.command {
        Command::Conjugate => cmd_conjugate(&config, &rc.out),
        Command::Audit => cmd_audit(&config, &rc.out),
        Command::Solve => cmd_solve(&config, &rc.out, rc.force),
        Command::Diagnose => cmd_diagnose(&config, &rc.out, rc.force),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_field(path: &Path, u: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    u.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Two-column table of a scalar function at its nodes (or at `fallback`).
fn write_table(path: &Path, header: &str, f: &MonotoneScalarFunction, fallback: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    let rows: Vec<(f64, f64)> = match f.kind() {
        ScalarKind::Table(t) => t.t.iter().copied().zip(t.values.iter().copied()).collect(),
        ScalarKind::Power { .. } => fallback.iter().map(|t| (*t, f.value(*t))).collect(),
    };
    for (t, v) in rows {
        writeln!(w, "{},{}", crate::spaces::format_sig17(t), crate::spaces::format_sig17(v))?;
    }
    w.flush()?;
    Ok(())
}

/// Window of the reported log-log slopes.
pub const SLOPE_WINDOW: [f64; 2] = [0.1, 100.0];

#[derive(Clone, Debug, Serialize)]
pub struct FittedSlopes {
    pub window: [f64; 2],
    pub phi_circ: f64,
    pub phi_n: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentsReport {
    pub dimension: usize,
    pub exponents: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub p_bar: String,
    pub p_bar_value: f64,
    pub p_bar_star: Option<String>,
    pub p_bar_star_value: Option<f64>,
    pub fitted_slopes: FittedSlopes,
    pub phi0: Verdict,
    pub phi1: Verdict,
    pub phi2: Verdict,
    pub integrability: IntegrabilityReport,
    pub phi2_detail: Option<DominationVerdict>,
}

/// The rearrangement and, when (Φ₀) and (Φ₁) hold, the Sobolev conjugate.
pub struct Conjugates {
    pub phi_circ: MonotoneScalarFunction,
    pub phi_n: Option<MonotoneScalarFunction>,
    pub integrability: IntegrabilityReport,
}

pub fn build_conjugates(config: &ProblemConfig) -> Result<Conjugates> {
    let phi = config.phi()?;
    let radii = config.radii();
    let phi_circ = compute_phi_circ(&phi, &radii, &config.volume_model())?;
    let integrability = check_integrability(&phi_circ, config.domain.n)?;
    let phi_n = if integrability.phi0.is_pass() && integrability.phi1.is_pass() {
        Some(compute_phi_n(&phi_circ, config.domain.n, &radii)?)
    } else {
        None
    };
    Ok(Conjugates {
        phi_circ,
        phi_n,
        integrability,
    })
}

pub fn cmd_conjugate(config: &ProblemConfig, out: &Path) -> Result<Outcome> {
    let n = config.domain.n;
    let phi = config.phi()?;
    let exact: Vec<_> = config
        .phi
        .exponents
        .iter()
        .map(|p| rational_from_f64(*p))
        .collect::<Result<_>>()?;
    let exps = power_sum_conjugate_exponent(&exact, n)?;
    let conj = build_conjugates(config)?;
    let radii = config.radii();
    write_table(&out.join("phi_circ.csv"), "r,phi_circ", &conj.phi_circ, &radii)?;
    let [lo, hi] = SLOPE_WINDOW;
    let mut phi2 = Verdict::Inconclusive;
    let mut detail = None;
    let mut slope_n = None;
    if let Some(pn) = &conj.phi_n {
        write_table(&out.join("phi_n.csv"), "r,phi_n", pn, &radii)?;
        slope_n = Some(loglog_slope(pn, lo, hi, 61));
        let dom = check_dominates(&phi, pn, &config.sample_plan())?;
        phi2 = dom.relation.verdict();
        detail = Some(dom);
    }
    let report = ExponentsReport {
        dimension: n,
        exponents: config.phi.exponents.clone(),
        coefficients: config.phi.coefficients.clone().unwrap_or_else(|| vec![1.0; n]),
        p_bar: format_rational(&exps.p_bar),
        p_bar_value: exps.p_bar_f64(),
        p_bar_star: exps.p_bar_star.as_ref().map(format_rational),
        p_bar_star_value: exps.p_bar_star_f64(),
        fitted_slopes: FittedSlopes {
            window: SLOPE_WINDOW,
            phi_circ: loglog_slope(&conj.phi_circ, lo, hi, 61),
            phi_n: slope_n,
        },
        phi0: conj.integrability.phi0,
        phi1: conj.integrability.phi1,
        phi2,
        integrability: conj.integrability.clone(),
        phi2_detail: detail,
    };
    write_json(&out.join("exponents.json"), &report)?;
    let exit_code = if report.phi0.is_pass() && report.phi1.is_pass() {
        EXIT_OK
    } else {
        EXIT_NOT_INTEGRABLE
    };
    let summary = format!(
        "p_bar = {} , p_bar* = {} , phi_n slope = {} , phi0 {} , phi1 {} , phi2 {}",
        report.p_bar,
        report.p_bar_star.as_deref().unwrap_or("none"),
        slope_n.map_or("n/a".to_string(), |s| format!("{s:.4}")),
        report.phi0,
        report.phi1,
        report.phi2
    );
    Ok(Outcome { exit_code, summary })
}

fn run_audit(config: &ProblemConfig, spec: &ProblemSpec) -> Result<AuditReport> {
    let conj = build_conjugates(config)?;
    audit_assumptions(spec, &conj.phi_circ, conj.phi_n.as_ref(), &config.sample_plan())
}

fn audit_summary(report: &AuditReport) -> String {
    report
        .hypotheses
        .iter()
        .map(|h| format!("{} {}", h.name, h.verdict))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Growth hypotheses only, for files without the `n_func`, `f` or `v`
/// sections; the problem hypotheses are reported inconclusive.
fn growth_only_audit(config: &ProblemConfig) -> Result<AuditReport> {
    let conj = build_conjugates(config)?;
    let mut hypotheses = audit_growth(&config.phi()?, &conj.phi_circ, conj.phi_n.as_ref(), &config.sample_plan())?;
    let missing: Vec<&str> = [("n_func", config.n_func.is_none()), ("f", config.f.is_none()), ("v", config.v.is_none())]
        .into_iter()
        .filter_map(|(name, absent)| absent.then_some(name))
        .collect();
    for name in ["n1", "f1", "f2", "f3", "v1", "v2"] {
        hypotheses.push(HypothesisCheck {
            name,
            verdict: Verdict::Inconclusive,
            evidence: serde_json::json!({ "reason": "problem sections missing", "missing": missing }),
        });
    }
    Ok(AuditReport {
        hypotheses,
        all_pass: false,
    })
}

pub fn cmd_audit(config: &ProblemConfig, out: &Path) -> Result<Outcome> {
    let report = if config.n_func.is_some() && config.f.is_some() && config.v.is_some() {
        run_audit(config, &config.problem_spec()?)?
    } else {
        growth_only_audit(config)?
    };
    write_json(&out.join("audit.json"), &report)?;
    Ok(Outcome {
        exit_code: if report.all_pass { EXIT_OK } else { EXIT_AUDIT_FAILED },
        summary: audit_summary(&report),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationSummary {
    pub radius: f64,
    pub value: f64,
    pub center: Vec<f64>,
}

impl ConcentrationSummary {
    fn new(radius: f64, c: &Concentration) -> Self {
        Self {
            radius,
            value: c.value,
            center: c.center.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PsSummary {
    pub checked: usize,
    pub all_ok: bool,
    pub entries: Vec<PsEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldNorms {
    pub sobolev: SobolevNorm,
    pub max_abs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub verdict: SolveVerdict,
    pub c_est: Option<f64>,
    pub iterations: usize,
    pub residual: Option<f64>,
    pub norms: Option<FieldNorms>,
    pub concentration: Option<ConcentrationSummary>,
    pub ps_monitor: Option<PsSummary>,
    pub forced: bool,
    pub audit: AuditReport,
    pub history: Vec<HistoryEntry>,
}

fn verdict_exit(v: SolveVerdict) -> i32 {
    match v {
        SolveVerdict::Converged => EXIT_OK,
        SolveVerdict::MaxIter => EXIT_MAX_ITER,
        SolveVerdict::DegenerateToZero => EXIT_DEGENERATE,
    }
}

/// Solve and write `solve_report.json` and `u_star.csv`; `None` when the
/// audit refused the run.
fn solve_and_report(
    config: &ProblemConfig,
    spec: &ProblemSpec,
    out: &Path,
    force: bool,
) -> Result<(Outcome, Option<MPResult>)> {
    let audit = run_audit(config, spec)?;
    if !audit.all_pass && !force {
        write_json(&out.join("audit.json"), &audit)?;
        let summary = format!("audit failed ({}); rerun with --force to solve anyway", audit_summary(&audit));
        return Ok((
            Outcome {
                exit_code: EXIT_AUDIT_FAILED,
                summary,
            },
            None,
        ));
    }
    let forced = force && !audit.all_pass;
    let result = match mountain_pass_solve(spec, &config.solver_options()) {
        Ok(r) => r,
        Err(Error::NoValley { doublings }) => {
            let report = SolveReport {
                verdict: SolveVerdict::DegenerateToZero,
                c_est: None,
                iterations: 0,
                residual: None,
                norms: None,
                concentration: None,
                ps_monitor: None,
                forced,
                audit,
                history: Vec::new(),
            };
            write_json(&out.join("solve_report.json"), &report)?;
            return Ok((
                Outcome {
                    exit_code: EXIT_DEGENERATE,
                    summary: format!("no valley point after {doublings} doublings; nothing to solve"),
                },
                None,
            ));
        }
        Err(e) => return Err(e),
    };
    let radius = config.solver.concentration_radius;
    let conc = concentration_functional(&result.u_star, radius, &spec.n_func)?;
    let ps = ps_monitor(spec, &result.iterates)?;
    let last = result.history.last().copied();
    let report = SolveReport {
        verdict: result.verdict,
        c_est: Some(result.c_est),
        iterations: last.map_or(0, |h| h.iteration),
        residual: last.map(|h| h.residual_norm),
        norms: Some(FieldNorms {
            sobolev: sobolev_norm(&spec.phi, &spec.n_func, &result.u_star)?,
            max_abs: result.u_star.max_abs(),
        }),
        concentration: Some(ConcentrationSummary::new(radius, &conc)),
        ps_monitor: Some(PsSummary {
            checked: ps.len(),
            all_ok: ps.iter().all(|e| e.ps_bound_ok),
            entries: ps,
        }),
        forced,
        audit,
        history: result.history.clone(),
    };
    write_json(&out.join("solve_report.json"), &report)?;
    write_field(&out.join("u_star.csv"), &result.u_star)?;
    let summary = format!(
        "{:?} after {} iterations: c_est = {:.10}, residual = {:.3e}, concentration(r={radius}) = {:.6}",
        result.verdict,
        report.iterations,
        result.c_est,
        report.residual.unwrap_or(f64::NAN),
        conc.value
    );
    Ok((
        Outcome {
            exit_code: verdict_exit(result.verdict),
            summary,
        },
        Some(result),
    ))
}

pub fn cmd_solve(config: &ProblemConfig, out: &Path, force: bool) -> Result<Outcome> {
    let spec = config.problem_spec()?;
    Ok(solve_and_report(config, &spec, out, force)?.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct RecenterSummary {
    pub lattice_center: Vec<f64>,
    pub energy_before: f64,
    pub energy_after: f64,
    pub concentration_after: ConcentrationSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseReport {
    pub energy: f64,
    pub concentration: ConcentrationSummary,
    /// Present under the periodic rule only.
    pub recentering: Option<RecenterSummary>,
    pub ps_monitor: PsEntry,
    pub geometry: GeometryReport,
    pub monotone_operator: MonotoneReport,
}

/// Pairs sampled by the monotone-operator diagnostic.
const MONOTONE_PAIRS: usize = 10_000;
/// Sphere radius and sample count of the geometry diagnostic.
const GEOMETRY_RHO: f64 = 0.05;
const GEOMETRY_SAMPLES: usize = 20;

/// Diagnostics of `u_star.csv` in the output directory, solving first when
/// the file is absent.
pub fn cmd_diagnose(config: &ProblemConfig, out: &Path, force: bool) -> Result<Outcome> {
    let spec = config.problem_spec()?;
    let path = out.join("u_star.csv");
    let u = if path.exists() {
        let u = Field::read_csv(BufReader::new(File::open(&path)?), spec.domain.boundary)?;
        if *u.domain() != spec.domain {
            return Err(Error::Shape(format!("{} does not match the configured grid", path.display())));
        }
        u
    } else {
        let (outcome, result) = solve_and_report(config, &spec, out, force)?;
        match result {
            Some(r) => r.u_star,
            None => return Ok(outcome),
        }
    };
    let radius = config.solver.concentration_radius;
    let conc = concentration_functional(&u, radius, &spec.n_func)?;
    let recentering = if spec.domain.boundary == BoundaryRule::Periodic {
        let center = nearest_lattice_point(&conc.center, &spec.potential.period);
        match recenter(&u, &center, &spec.potential.period) {
            Ok(w) => {
                write_field(&out.join("recentered.csv"), &w)?;
                let after = concentration_functional(&w, radius, &spec.n_func)?;
                Some(RecenterSummary {
                    lattice_center: center,
                    energy_before: energy(&spec, &u)?,
                    energy_after: energy(&spec, &w)?,
                    concentration_after: ConcentrationSummary::new(radius, &after),
                })
            }
            // lattice points that fall between grid nodes cannot be reached
            Err(Error::OffLattice(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let seed = config.solver.seed;
    let report = DiagnoseReport {
        energy: energy(&spec, &u)?,
        concentration: ConcentrationSummary::new(radius, &conc),
        recentering,
        ps_monitor: ps_monitor(&spec, std::slice::from_ref(&u))?[0],
        geometry: mountain_pass_geometry(&spec, GEOMETRY_RHO, GEOMETRY_SAMPLES, seed)?,
        monotone_operator: check_monotone_operator(&spec.phi, MONOTONE_PAIRS, seed),
    };
    write_json(&out.join("diagnose.json"), &report)?;
    let summary = format!(
        "J(u) = {:.10}, concentration(r={radius}) = {:.6} at {:?}, geometry {}, monotone violations {}",
        report.energy, conc.value, conc.center, report.geometry.verdict, report.monotone_operator.violations
    );
    Ok(Outcome {
        exit_code: EXIT_OK,
        summary,
    })
}

/// Seeded family of bump sums on a Dirichlet grid.
pub fn bump_family(domain: &crate::spaces::DomainSpec, count: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_bump_field(domain, &mut rng)).collect()
}
