//! Problem files: a line-oriented `section.key = value` grammar.
//!
//! ```text
//! # comments run to end of line
//! phi.exponents = 1.8, 2, 2.2
//! domain.n = 3
//! ```
//!
//! Sections are `phi`, `n_func`, `f`, `v`, `domain` and `solver`. Unknown
//! keys and repeated keys are errors. Physical parameters inside a present
//! section must be given; numerical knobs have documented defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mpa::{Nonlinearity, Potential, ProblemSpec, SolverOptions};
use crate::rearrangement::VolumeModel;
use crate::sampling::{log_space, SamplePlan};
use crate::spaces::{BoundaryRule, DomainSpec};
use crate::young::{growth_indices, AnisotropicGFunction, MonotoneScalarFunction};

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeChoice {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhiConfig {
    pub exponents: Vec<f64>,
    pub coefficients: Option<Vec<f64>>,
    pub volume: VolumeChoice,
    pub r_min: f64,
    pub r_max: f64,
    pub radii: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExponentSpec {
    /// The harmonic mean `p̄` of the `phi` exponents.
    HarmonicMean,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NFuncConfig {
    pub exponent: ExponentSpec,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceKind {
    Zero,
    Power { coefficient: f64, exponent: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialChoice {
    Constant { value: f64 },
    CosineProduct { base: f64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PotentialConfig {
    pub kind: PotentialChoice,
    pub period: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainConfig {
    pub n: usize,
    pub half_width: f64,
    pub points: usize,
    pub boundary: BoundaryRule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub path_points: usize,
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub store_every: usize,
    pub memory: usize,
    pub seed: u64,
    pub concentration_radius: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            path_points: o.path_points,
            step: o.descent_step,
            tol: o.tol,
            max_iter: o.max_iter,
            store_every: o.store_every,
            memory: o.memory,
            seed: 0,
            concentration_radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub phi: PhiConfig,
    pub n_func: Option<NFuncConfig>,
    pub f: Option<SourceConfig>,
    pub v: Option<PotentialConfig>,
    pub domain: DomainConfig,
    pub solver: SolverConfig,
}

const KEYS: &[&str] = &[
    "phi.exponents",
    "phi.coefficients",
    "phi.volume",
    "phi.mc_samples",
    "phi.r_min",
    "phi.r_max",
    "phi.radii",
    "n_func.exponent",
    "n_func.scale",
    "f.kind",
    "f.coefficient",
    "f.exponent",
    "f.theta",
    "v.kind",
    "v.value",
    "v.base",
    "v.amplitude",
    "v.period",
    "domain.n",
    "domain.half_width",
    "domain.points",
    "domain.boundary",
    "solver.path_points",
    "solver.step",
    "solver.tol",
    "solver.max_iter",
    "solver.store_every",
    "solver.memory",
    "solver.seed",
    "solver.concentration_radius",
];

/// Raw `key → (value, line)` entries; overrides carry line 0.
#[derive(Clone, Debug, Default)]
struct Entries(BTreeMap<String, (String, usize)>);

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = split_assignment(content).map_err(|message| Error::Parse { line, message })?;
            if map.insert(key.clone(), (value, line)).is_some() {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key {key}"),
                });
            }
        }
        Ok(Self(map))
    }

    fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = split_assignment(assignment.trim()).map_err(|message| Error::Parse { line: 0, message })?;
        self.0.insert(key, (value, 0));
        Ok(())
    }

    fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.0.keys().any(|k| k.starts_with(&prefix))
    }

    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.0.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn required(&self, key: &str) -> Result<(&str, usize)> {
        self.raw(key)
            .ok_or_else(|| Error::Validation(format!("missing key {key}")))
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key).map(|(v, line)| parse_number(v, line)).transpose()
    }

    fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    fn required_number(&self, key: &str) -> Result<f64> {
        let (v, line) = self.required(key)?;
        parse_number(v, line)
    }

    fn count_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            Some((v, line)) => parse_count(v, line),
            None => Ok(default),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|(v, line)| v.split(',').map(|x| parse_number(x, line)).collect())
            .transpose()
    }
}

fn split_assignment(content: &str) -> std::result::Result<(String, String), String> {
    let (key, value) = content
        .split_once('=')
        .ok_or_else(|| format!("expected `section.key = value`, found {content:?}"))?;
    let key = key.trim().to_string();
    let value = value.trim().to_string();
    if !KEYS.contains(&key.as_str()) {
        return Err(format!("unknown key {key:?}"));
    }
    if value.is_empty() {
        return Err(format!("empty value for {key}"));
    }
    Ok((key, value))
}

fn parse_number(text: &str, line: usize) -> Result<f64> {
    match text.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::Parse {
            line,
            message: format!("not a finite number: {:?}", text.trim()),
        }),
    }
}

fn parse_count(text: &str, line: usize) -> Result<usize> {
    text.trim().parse::<usize>().map_err(|_| Error::Parse {
        line,
        message: format!("not a nonnegative integer: {:?}", text.trim()),
    })
}

impl ProblemConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse_with_overrides(&std::fs::read_to_string(path)?, &[])
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parse `text`, then apply `key=value` overrides in order.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        for o in overrides {
            e.apply_override(o)?;
        }
        let config = Self::from_entries(&e)?;
        config.validate()?;
        Ok(config)
    }

    fn from_entries(e: &Entries) -> Result<Self> {
        let exponents = e
            .list("phi.exponents")?
            .ok_or_else(|| Error::Validation("missing key phi.exponents".into()))?;
        let volume = match e.raw("phi.volume") {
            None | Some(("exact", _)) => VolumeChoice::Exact,
            Some(("monte_carlo", _)) => VolumeChoice::MonteCarlo {
                samples: e.count_or("phi.mc_samples", 1_000_000)?,
            },
            Some((other, line)) => {
                return Err(Error::Parse {
                    line,
                    message: format!("phi.volume must be exact or monte_carlo, found {other:?}"),
                })
            }
        };
        if volume == VolumeChoice::Exact && e.raw("phi.mc_samples").is_some() {
            return Err(Error::Validation("phi.mc_samples needs phi.volume = monte_carlo".into()));
        }
        let phi = PhiConfig {
            exponents,
            coefficients: e.list("phi.coefficients")?,
            volume,
            r_min: e.number_or("phi.r_min", 1e-3)?,
            r_max: e.number_or("phi.r_max", 1e3)?,
            radii: e.count_or("phi.radii", 200)?,
        };

        let n_func = if e.has_section("n_func") {
            let (v, line) = e.required("n_func.exponent")?;
            let exponent = if v == "p_bar" {
                ExponentSpec::HarmonicMean
            } else {
                ExponentSpec::Value(parse_number(v, line)?)
            };
            Some(NFuncConfig {
                exponent,
                scale: e.number_or("n_func.scale", 1.0)?,
            })
        } else {
            None
        };

        let f = if e.has_section("f") {
            let (kind, line) = e.required("f.kind")?;
            let kind = match kind {
                "zero" => {
                    for key in ["f.coefficient", "f.exponent"] {
                        if e.raw(key).is_some() {
                            return Err(Error::Validation(format!("{key} is not used by f.kind = zero")));
                        }
                    }
                    SourceKind::Zero
                }
                "power" => SourceKind::Power {
                    coefficient: e.required_number("f.coefficient")?,
                    exponent: e.required_number("f.exponent")?,
                },
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("f.kind must be zero or power, found {other:?}"),
                    })
                }
            };
            Some(SourceConfig {
                kind,
                theta: e.required_number("f.theta")?,
            })
        } else {
            None
        };

        let n = match e.raw("domain.n") {
            Some((v, line)) => parse_count(v, line)?,
            None => return Err(Error::Validation("missing key domain.n".into())),
        };

        let v = if e.has_section("v") {
            let (kind, line) = e.required("v.kind")?;
            let kind = match kind {
                "constant" => PotentialChoice::Constant {
                    value: e.required_number("v.value")?,
                },
                "cosine_product" => PotentialChoice::CosineProduct {
                    base: e.required_number("v.base")?,
                    amplitude: e.required_number("v.amplitude")?,
                },
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("v.kind must be constant or cosine_product, found {other:?}"),
                    })
                }
            };
            let stray: &[&str] = match kind {
                PotentialChoice::Constant { .. } => &["v.base", "v.amplitude"],
                PotentialChoice::CosineProduct { .. } => &["v.value"],
            };
            if let Some(key) = stray.iter().find(|k| e.raw(k).is_some()) {
                return Err(Error::Validation(format!("{key} does not apply to v.kind = {}", kind_name(&kind))));
            }
            Some(PotentialConfig {
                kind,
                period: e.list("v.period")?.unwrap_or_else(|| vec![1.0; n]),
            })
        } else {
            None
        };

        let boundary = match e.raw("domain.boundary") {
            Some((v, line)) => v.parse::<BoundaryRule>().map_err(|err| Error::Parse {
                line,
                message: err.to_string(),
            })?,
            None => BoundaryRule::ZeroDirichlet,
        };
        let domain = DomainConfig {
            n,
            half_width: e.number_or("domain.half_width", 8.0)?,
            points: e.count_or("domain.points", if n <= 2 { 64 } else { 32 })?,
            boundary,
        };

        let d = SolverConfig::default();
        let solver = SolverConfig {
            path_points: e.count_or("solver.path_points", d.path_points)?,
            step: e.number_or("solver.step", d.step)?,
            tol: e.number_or("solver.tol", d.tol)?,
            max_iter: e.count_or("solver.max_iter", d.max_iter)?,
            store_every: e.count_or("solver.store_every", d.store_every)?,
            memory: e.count_or("solver.memory", d.memory)?,
            seed: match e.raw("solver.seed") {
                Some((v, line)) => v.parse::<u64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a seed: {v:?}"),
                })?,
                None => d.seed,
            },
            concentration_radius: e.number_or("solver.concentration_radius", d.concentration_radius)?,
        };

        Ok(Self {
            phi,
            n_func,
            f,
            v,
            domain,
            solver,
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.domain.n;
        if self.phi.exponents.len() != n {
            return Err(Error::Validation(format!(
                "phi.exponents has {} entries but domain.n = {n}",
                self.phi.exponents.len()
            )));
        }
        if let Some(c) = &self.phi.coefficients {
            if c.len() != n {
                return Err(Error::Validation(format!("phi.coefficients has {} entries, need {n}", c.len())));
            }
        }
        if !(self.phi.r_min > 0.0 && self.phi.r_max > self.phi.r_min && self.phi.radii >= 10) {
            return Err(Error::Validation("phi radii need 0 < r_min < r_max and at least 10 points".into()));
        }
        if let Some(v) = &self.v {
            if v.period.len() != n {
                return Err(Error::Validation(format!("v.period has {} entries, need {n}", v.period.len())));
            }
        }
        if self.solver.path_points < 3 || self.solver.store_every == 0 || !(self.solver.tol > 0.0) {
            return Err(Error::Validation(
                "solver needs path_points >= 3, store_every >= 1 and tol > 0".into(),
            ));
        }
        let phi = self.phi()?;
        if let Some(f) = &self.f {
            let s = growth_indices(&phi, &self.sample_plan())?.s;
            if !(f.theta > s) {
                return Err(Error::Validation(format!(
                    "f3 requires theta > s_phi (theta = {}, s_phi = {s})",
                    f.theta
                )));
            }
        }
        Ok(())
    }

    pub fn phi(&self) -> Result<AnisotropicGFunction> {
        let coefficients = self
            .phi
            .coefficients
            .clone()
            .unwrap_or_else(|| vec![1.0; self.phi.exponents.len()]);
        AnisotropicGFunction::power_sum(self.phi.exponents.clone(), coefficients)
    }

    pub fn harmonic_mean_exponent(&self) -> f64 {
        let p = &self.phi.exponents;
        p.len() as f64 / p.iter().map(|x| 1.0 / x).sum::<f64>()
    }

    pub fn sample_plan(&self) -> SamplePlan {
        SamplePlan::with_seed(self.solver.seed)
    }

    pub fn volume_model(&self) -> VolumeModel {
        match self.phi.volume {
            VolumeChoice::Exact => VolumeModel::ExactDirichlet,
            VolumeChoice::MonteCarlo { samples } => VolumeModel::monte_carlo(samples, self.solver.seed),
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        log_space(self.phi.r_min, self.phi.r_max, self.phi.radii)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        let d = &self.domain;
        DomainSpec::new(d.n, d.half_width, d.points, d.boundary)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            path_points: s.path_points,
            descent_step: s.step,
            tol: s.tol,
            max_iter: s.max_iter,
            store_every: s.store_every,
            memory: s.memory,
        }
    }

    /// The full problem; requires the `n_func`, `f` and `v` sections.
    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let missing = |s: &str| Error::Validation(format!("section {s} is required for this command"));
        let nf = self.n_func.as_ref().ok_or_else(|| missing("n_func"))?;
        let f = self.f.as_ref().ok_or_else(|| missing("f"))?;
        let v = self.v.as_ref().ok_or_else(|| missing("v"))?;
        let exponent = match nf.exponent {
            ExponentSpec::HarmonicMean => self.harmonic_mean_exponent(),
            ExponentSpec::Value(q) => q,
        };
        let n_func = MonotoneScalarFunction::power(exponent, nf.scale)?;
        let source = match f.kind {
            SourceKind::Zero => Nonlinearity::Zero,
            SourceKind::Power {
                coefficient,
                exponent,
            } => Nonlinearity::power(coefficient, exponent)?,
        };
        let potential = match v.kind {
            PotentialChoice::Constant { value } => Potential {
                kind: crate::mpa::PotentialKind::Constant(value),
                period: v.period.clone(),
            },
            PotentialChoice::CosineProduct { base, amplitude } => {
                Potential::cosine_product(base, amplitude, v.period.clone())
            }
        };
        ProblemSpec::new(self.phi()?, n_func, potential, source, f.theta, self.domain_spec()?)
    }

    /// Canonical text form; `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
        let p = &self.phi;
        let _ = writeln!(s, "phi.exponents = {}", list(&p.exponents));
        if let Some(c) = &p.coefficients {
            let _ = writeln!(s, "phi.coefficients = {}", list(c));
        }
        match p.volume {
            VolumeChoice::Exact => {
                let _ = writeln!(s, "phi.volume = exact");
            }
            VolumeChoice::MonteCarlo { samples } => {
                let _ = writeln!(s, "phi.volume = monte_carlo");
                let _ = writeln!(s, "phi.mc_samples = {samples}");
            }
        }
        let _ = writeln!(s, "phi.r_min = {}", p.r_min);
        let _ = writeln!(s, "phi.r_max = {}", p.r_max);
        let _ = writeln!(s, "phi.radii = {}", p.radii);
        if let Some(nf) = &self.n_func {
            match nf.exponent {
                ExponentSpec::HarmonicMean => {
                    let _ = writeln!(s, "n_func.exponent = p_bar");
                }
                ExponentSpec::Value(q) => {
                    let _ = writeln!(s, "n_func.exponent = {q}");
                }
            }
            let _ = writeln!(s, "n_func.scale = {}", nf.scale);
        }
        if let Some(f) = &self.f {
            match f.kind {
                SourceKind::Zero => {
                    let _ = writeln!(s, "f.kind = zero");
                }
                SourceKind::Power {
                    coefficient,
                    exponent,
                } => {
                    let _ = writeln!(s, "f.kind = power");
                    let _ = writeln!(s, "f.coefficient = {coefficient}");
                    let _ = writeln!(s, "f.exponent = {exponent}");
                }
            }
            let _ = writeln!(s, "f.theta = {}", f.theta);
        }
        if let Some(v) = &self.v {
            let _ = writeln!(s, "v.kind = {}", kind_name(&v.kind));
            match v.kind {
                PotentialChoice::Constant { value } => {
                    let _ = writeln!(s, "v.value = {value}");
                }
                PotentialChoice::CosineProduct { base, amplitude } => {
                    let _ = writeln!(s, "v.base = {base}");
                    let _ = writeln!(s, "v.amplitude = {amplitude}");
                }
            }
            let _ = writeln!(s, "v.period = {}", list(&v.period));
        }
        let d = &self.domain;
        let _ = writeln!(s, "domain.n = {}", d.n);
        let _ = writeln!(s, "domain.half_width = {}", d.half_width);
        let _ = writeln!(s, "domain.points = {}", d.points);
        let _ = writeln!(s, "domain.boundary = {}", d.boundary.as_str());
        let o = &self.solver;
        let _ = writeln!(s, "solver.path_points = {}", o.path_points);
        let _ = writeln!(s, "solver.step = {}", o.step);
        let _ = writeln!(s, "solver.tol = {}", o.tol);
        let _ = writeln!(s, "solver.max_iter = {}", o.max_iter);
        let _ = writeln!(s, "solver.store_every = {}", o.store_every);
        let _ = writeln!(s, "solver.memory = {}", o.memory);
        let _ = writeln!(s, "solver.seed = {}", o.seed);
        let _ = writeln!(s, "solver.concentration_radius = {}", o.concentration_radius);
        s
    }
}

fn kind_name(kind: &PotentialChoice) -> &'static str {
    match kind {
        PotentialChoice::Constant { .. } => "constant",
        PotentialChoice::CosineProduct { .. } => "cosine_product",
    }
}
