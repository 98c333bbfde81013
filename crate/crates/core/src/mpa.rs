//! The energy `J(u) = ∫ Φ(∇u) + V N(u) − F(u)`, its discrete derivative,
//! the hypothesis audit, a mountain-pass solver and the concentration and
//! recentering diagnostics.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::conjugation::{check_dominates, check_equivalent, check_integrability};
use crate::error::{Error, Result};
use crate::sampling::{SamplePlan, Verdict};
use crate::spaces::{
    forward_gradient, gradient_adjoint, luxemburg_norm, sobolev_norm, BoundaryRule, DomainSpec, Field,
    VectorField,
};
use crate::young::{
    check_delta2_nabla2, conjugate_scalar, growth_indices, AnisotropicGFunction, GrowthIndices,
    MonotoneScalarFunction, ScalarKind,
};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The source term `f` together with its antiderivative `F`.
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    /// `f(t) = c|t|^{q−2}t`, `F(t) = c|t|^q/q`.
    Power { coefficient: f64, exponent: f64 },
    Callable { f: ScalarFn, antiderivative: ScalarFn },
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "Zero"),
            Nonlinearity::Power {
                coefficient,
                exponent,
            } => write!(f, "Power {{ coefficient: {coefficient}, exponent: {exponent} }}"),
            Nonlinearity::Callable { .. } => write!(f, "Callable"),
        }
    }
}

impl Nonlinearity {
    pub fn power(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient.is_finite() && exponent.is_finite() && exponent > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "nonlinearity needs a finite coefficient and exponent > 1, got ({coefficient}, {exponent})"
            )));
        }
        Ok(Nonlinearity::Power {
            coefficient,
            exponent,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Power {
                coefficient,
                exponent,
            } => {
                if t == 0.0 {
                    0.0
                } else {
                    coefficient * t.abs().powf(exponent - 1.0) * t.signum()
                }
            }
            Nonlinearity::Callable { f, .. } => f(t),
        }
    }

    pub fn antiderivative(&self, t: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Power {
                coefficient,
                exponent,
            } => {
                if t == 0.0 {
                    0.0
                } else {
                    coefficient * t.abs().powf(*exponent) / exponent
                }
            }
            Nonlinearity::Callable { antiderivative, .. } => antiderivative(t),
        }
    }
}

#[derive(Clone)]
pub enum PotentialKind {
    Constant(f64),
    /// `base + amplitude·∏ cos(2π xᵢ/periodᵢ)`.
    CosineProduct { base: f64, amplitude: f64 },
    Callable(PointFn),
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Constant(c) => write!(f, "Constant({c})"),
            PotentialKind::CosineProduct { base, amplitude } => {
                write!(f, "CosineProduct {{ base: {base}, amplitude: {amplitude} }}")
            }
            PotentialKind::Callable(_) => write!(f, "Callable"),
        }
    }
}

/// A potential with its declared lattice period.
#[derive(Clone, Debug)]
pub struct Potential {
    pub kind: PotentialKind,
    pub period: Vec<f64>,
}

impl Potential {
    pub fn constant(value: f64, dim: usize) -> Self {
        Self {
            kind: PotentialKind::Constant(value),
            period: vec![1.0; dim],
        }
    }

    pub fn cosine_product(base: f64, amplitude: f64, period: Vec<f64>) -> Self {
        Self {
            kind: PotentialKind::CosineProduct { base, amplitude },
            period,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::Constant(c) => *c,
            PotentialKind::CosineProduct { base, amplitude } => {
                let prod: f64 = x
                    .iter()
                    .zip(&self.period)
                    .map(|(xi, p)| (2.0 * std::f64::consts::PI * xi / p).cos())
                    .product();
                base + amplitude * prod
            }
            PotentialKind::Callable(v) => v(x),
        }
    }
}

/// A fully specified problem on a grid.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub phi: AnisotropicGFunction,
    pub n_func: MonotoneScalarFunction,
    pub potential: Potential,
    pub f: Nonlinearity,
    pub theta: f64,
    pub domain: DomainSpec,
    growth: GrowthIndices,
    v_nodes: Vec<f64>,
    phi_tilde: Option<AnisotropicGFunction>,
    n_tilde: Option<MonotoneScalarFunction>,
}

impl ProblemSpec {
    /// Checks the structural invariants: matching dimensions, a finite
    /// potential on the grid, `f(0) = F(0) = 0` and `θ > s_Φ`. The remaining
    /// hypotheses are reported by [`audit_assumptions`].
    pub fn new(
        phi: AnisotropicGFunction,
        n_func: MonotoneScalarFunction,
        potential: Potential,
        f: Nonlinearity,
        theta: f64,
        domain: DomainSpec,
    ) -> Result<Self> {
        if phi.dim() != domain.dim {
            return Err(Error::Shape(format!(
                "phi has dimension {} but the domain has {}",
                phi.dim(),
                domain.dim
            )));
        }
        if potential.period.len() != domain.dim || potential.period.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Validation("potential period must be positive per axis".into()));
        }
        if f.value(0.0) != 0.0 || f.antiderivative(0.0) != 0.0 {
            return Err(Error::Validation("f(0) and F(0) must vanish".into()));
        }
        let growth = growth_indices(&phi, &SamplePlan::default())?;
        if !(theta > growth.s) {
            return Err(Error::Validation(format!(
                "f3 requires theta > s_phi (theta = {theta}, s_phi = {})",
                growth.s
            )));
        }
        let v_nodes: Vec<f64> = (0..domain.len()).map(|i| potential.value(&domain.coords(i))).collect();
        if v_nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential on the grid".into()));
        }
        let phi_tilde = phi.complementary().ok();
        let n_tilde = conjugate_scalar(&n_func).ok();
        Ok(Self {
            phi,
            n_func,
            potential,
            f,
            theta,
            domain,
            growth,
            v_nodes,
            phi_tilde,
            n_tilde,
        })
    }

    pub fn growth(&self) -> GrowthIndices {
        self.growth
    }

    pub fn s_phi(&self) -> f64 {
        self.growth.s
    }

    pub fn potential_at_nodes(&self) -> &[f64] {
        &self.v_nodes
    }

    fn check_field(&self, u: &Field) -> Result<()> {
        if *u.domain() != self.domain {
            return Err(Error::Shape("field lives on a different grid".into()));
        }
        Ok(())
    }
}

/// The three integrals making up `J`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyParts {
    /// `∫Φ(∇u)`
    pub gradient: f64,
    /// `∫V N(|u|)`
    pub potential: f64,
    /// `∫F(u)`
    pub source: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.gradient + self.potential - self.source
    }
}

pub fn energy_parts(spec: &ProblemSpec, u: &Field) -> Result<EnergyParts> {
    spec.check_field(u)?;
    let d = &spec.domain;
    let n = d.dim;
    let vol = d.cell_volume();
    let mut du = vec![0.0; d.len() * n];
    forward_gradient(d, u.values(), &mut du);
    let gradient: f64 = du.chunks(n).map(|v| spec.phi.value(v)).sum::<f64>() * vol;
    let mut potential = 0.0;
    let mut source = 0.0;
    for (x, v) in u.values().iter().zip(&spec.v_nodes) {
        potential += v * spec.n_func.value(x.abs());
        source += spec.f.antiderivative(*x);
    }
    let parts = EnergyParts {
        gradient,
        potential: potential * vol,
        source: source * vol,
    };
    if !parts.total().is_finite() {
        return Err(Error::NonFinite(format!("energy parts {parts:?}")));
    }
    Ok(parts)
}

/// Midpoint quadrature of `Φ(∇u) + V N(|u|) − F(u)`.
pub fn energy(spec: &ProblemSpec, u: &Field) -> Result<f64> {
    Ok(energy_parts(spec, u)?.total())
}

/// Discrete residual `g` with `Σ g·v hⁿ = J′(u)v` for every grid field `v`.
pub fn energy_gradient(spec: &ProblemSpec, u: &Field) -> Result<Field> {
    spec.check_field(u)?;
    let d = &spec.domain;
    let n = d.dim;
    let mut du = vec![0.0; d.len() * n];
    forward_gradient(d, u.values(), &mut du);
    let mut flux = vec![0.0; du.len()];
    for (v, out) in du.chunks(n).zip(flux.chunks_mut(n)) {
        spec.phi.gradient_into(v, out);
    }
    let mut g = vec![0.0; d.len()];
    gradient_adjoint(d, &flux, &mut g);
    for (i, ((gi, x), v)) in g.iter_mut().zip(u.values()).zip(&spec.v_nodes).enumerate() {
        if d.boundary == BoundaryRule::ZeroDirichlet && d.is_pinned(i) {
            continue;
        }
        let zero_order = if *x == 0.0 {
            spec.n_func.derivative(0.0) * 0.0
        } else {
            v * spec.n_func.derivative(x.abs()) * x.signum()
        };
        *gi += zero_order - spec.f.value(*x);
    }
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("gradient at node {i}")));
    }
    Ok(Field::from_raw(d, g))
}

/// `J(s·w)` as a function of the scale `s`.
enum Fiber<'a> {
    /// `Σ cₖ s^{pₖ}`
    PowerLaw(Vec<(f64, f64)>),
    Generic { spec: &'a ProblemSpec, w: &'a Field },
}

impl<'a> Fiber<'a> {
    fn new(spec: &'a ProblemSpec, w: &'a Field) -> Self {
        let d = &spec.domain;
        let vol = d.cell_volume();
        let parts = spec.phi.power_sum_parts();
        let n_pow = match spec.n_func.kind() {
            ScalarKind::Power { exponent, scale } => Some((*exponent, *scale)),
            ScalarKind::Table(_) => None,
        };
        let f_pow = match &spec.f {
            Nonlinearity::Zero => Some(None),
            Nonlinearity::Power {
                coefficient,
                exponent,
            } => Some(Some((*exponent, coefficient / exponent))),
            Nonlinearity::Callable { .. } => None,
        };
        let (Some((p, a)), Some((qn, kn)), Some(fp)) = (parts, n_pow, f_pow) else {
            return Fiber::Generic { spec, w };
        };
        let n = d.dim;
        let mut du = vec![0.0; d.len() * n];
        forward_gradient(d, w.values(), &mut du);
        let mut terms = Vec::with_capacity(n + 2);
        for k in 0..n {
            let s: f64 = du.chunks(n).map(|v| abs_pow(v[k], p[k])).sum();
            terms.push((p[k], a[k] * s * vol));
        }
        let s: f64 = w.values().iter().zip(&spec.v_nodes).map(|(x, v)| v * abs_pow(*x, qn)).sum();
        terms.push((qn, kn * s * vol));
        if let Some((q, c)) = fp {
            let s: f64 = w.values().iter().map(|x| abs_pow(*x, q)).sum();
            terms.push((q, -c * s * vol));
        }
        Fiber::PowerLaw(terms)
    }

    fn value(&self, s: f64) -> f64 {
        match self {
            Fiber::PowerLaw(terms) => terms.iter().map(|(p, c)| c * s.powf(*p)).sum(),
            Fiber::Generic { spec, w } => energy(spec, &w.scaled(s)).unwrap_or(f64::NAN),
        }
    }
}

fn abs_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(p)
    }
}

pub const MAX_DOUBLINGS: usize = 60;

/// A point `e = t·seed` with `J(e) < 0`.
#[derive(Clone, Debug)]
pub struct Valley {
    pub point: Field,
    pub scale: f64,
    pub doublings: usize,
}

/// Double `t` from 1 until `J(t·seed) < 0`.
pub fn find_valley_point(spec: &ProblemSpec, seed_shape: &Field) -> Result<Valley> {
    spec.check_field(seed_shape)?;
    if seed_shape.is_zero() {
        return Err(Error::InvalidArgument("seed shape is identically zero".into()));
    }
    let fiber = Fiber::new(spec, seed_shape);
    for k in 0..=MAX_DOUBLINGS {
        let t = 2f64.powi(k as i32);
        if fiber.value(t) < 0.0 {
            return Ok(Valley {
                point: seed_shape.scaled(t),
                scale: t,
                doublings: k,
            });
        }
    }
    Err(Error::NoValley {
        doublings: MAX_DOUBLINGS,
    })
}

/// Maximum of `J` along the ray through `w`.
#[derive(Clone, Copy, Debug)]
struct RayMax {
    scale: f64,
    value: f64,
}

/// Locate `argmax_{s>0} J(s·w)`: find the valley end `T` of the segment
/// `[0, T]`, sample it at `points` equispaced nodes, then refine the best
/// node by golden-section search. `None` if `J` is negative all along the
/// ray (the maximum sits at the origin).
fn ray_max(spec: &ProblemSpec, w: &Field, points: usize) -> Result<Option<RayMax>> {
    let fiber = Fiber::new(spec, w);
    let mut t = 1.0;
    if fiber.value(t) >= 0.0 {
        let mut k = 0;
        while fiber.value(t) >= 0.0 {
            t *= 2.0;
            k += 1;
            if k > MAX_DOUBLINGS {
                return Err(Error::NoValley {
                    doublings: MAX_DOUBLINGS,
                });
            }
        }
    } else {
        let mut k = 0;
        while fiber.value(t / 2.0) < 0.0 {
            t /= 2.0;
            k += 1;
            if k > MAX_DOUBLINGS {
                return Ok(None);
            }
        }
    }
    let p = points.max(3);
    let step = t / p as f64;
    let mut best = (0usize, 0.0f64);
    for k in 1..p {
        let v = fiber.value(k as f64 * step);
        if v > best.1 {
            best = (k, v);
        }
    }
    if best.0 == 0 {
        // the maximum hides below the first node; shrink until it shows
        let mut hi = step;
        for _ in 0..MAX_DOUBLINGS {
            hi /= 2.0;
            if fiber.value(hi) > 0.0 {
                break;
            }
        }
        if !(fiber.value(hi) > 0.0) {
            return Ok(None);
        }
        return Ok(Some(golden_max(&fiber, 0.0, 2.0 * hi)));
    }
    let lo = (best.0 - 1) as f64 * step;
    let hi = (best.0 + 1) as f64 * step;
    Ok(Some(golden_max(&fiber, lo, hi)))
}

fn golden_max(fiber: &Fiber<'_>, mut a: f64, mut b: f64) -> RayMax {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = fiber.value(x1);
    let mut f2 = fiber.value(x2);
    for _ in 0..200 {
        if b - a <= 1e-13 * b {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = fiber.value(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = fiber.value(x2);
        }
    }
    if f1 >= f2 {
        RayMax { scale: x1, value: f1 }
    } else {
        RayMax { scale: x2, value: f2 }
    }
}

/// Conjugate gradients for `(DᵀD + I)x = b` on the free nodes.
fn precondition(domain: &DomainSpec, b: &[f64]) -> Vec<f64> {
    let n = domain.dim;
    let mut grad = vec![0.0; domain.len() * n];
    let apply = |x: &[f64], out: &mut [f64], grad: &mut [f64]| {
        forward_gradient(domain, x, grad);
        gradient_adjoint(domain, grad, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi;
        }
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; b.len()];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return x;
    }
    let mut rr = dot(&r, &r);
    for _ in 0..1000 {
        apply(&p, &mut ap, &mut grad);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= 1e-12 * b_norm {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

/// Dual-norm proxy of `J′(u)` given its residual `g`: with `r` solving
/// `(DᵀD + I)r = g`, the functional is `v ↦ Σ(Dr·Dv + r·v)hⁿ` and its norm
/// is bounded through Hölder by `‖Dr‖_Φ̃ + ‖r‖_Ñ`.
pub fn residual_dual_norm(spec: &ProblemSpec, g: &Field) -> Result<f64> {
    spec.check_field(g)?;
    let r = precondition(&spec.domain, g.values());
    dual_norm_of_preconditioned(spec, &r)
}

fn dual_norm_of_preconditioned(spec: &ProblemSpec, r: &[f64]) -> Result<f64> {
    let d = &spec.domain;
    let mut dr = vec![0.0; d.len() * d.dim];
    forward_gradient(d, r, &mut dr);
    let dr = VectorField::new(d, dr)?;
    let r = Field::from_raw(d, r.to_vec());
    let flux_part = match (&spec.phi_tilde, &spec.n_tilde) {
        (Some(pt), _) => luxemburg_norm(pt, &dr)?,
        (None, Some(nt)) => luxemburg_norm(nt, &dr)?,
        (None, None) => l2(dr.values(), d),
    };
    let zero_part = match &spec.n_tilde {
        Some(nt) => luxemburg_norm(nt, &r)?,
        None => l2(r.values(), d),
    };
    Ok(flux_part + zero_part)
}

fn l2(v: &[f64], d: &DomainSpec) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * d.cell_volume()).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverOptions {
    /// Nodes on the sampled path segment `[0, e]`.
    pub path_points: usize,
    /// Initial step as a fraction of the iterate size.
    pub descent_step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Stored iterate spacing.
    pub store_every: usize,
    /// Number of stored secant pairs.
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            path_points: 21,
            descent_step: 0.1,
            tol: 1e-4,
            max_iter: 2000,
            store_every: 10,
            memory: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveVerdict {
    Converged,
    MaxIter,
    DegenerateToZero,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub max_path_energy: f64,
    pub residual_norm: f64,
}

#[derive(Clone, Debug)]
pub struct MPResult {
    pub u_star: Field,
    pub c_est: f64,
    pub history: Vec<HistoryEntry>,
    pub verdict: SolveVerdict,
    /// Snapshots every `store_every` iterations, always including the last.
    pub iterates: Vec<Field>,
    /// End point `e` of the final path, `J(e) < 0`.
    pub valley: Field,
}

/// Centred Gaussian `exp(−|x|²/2)`, the default seed shape.
pub fn default_seed_shape(domain: &DomainSpec) -> Field {
    Field::from_fn(domain, |x| (-0.5 * x.iter().map(|t| t * t).sum::<f64>()).exp())
        .expect("gaussian is finite")
}

/// Nontriviality floor on `∫Φ(∇u) + V N(u)`.
const COLLAPSE_FLOOR: f64 = 1e-12;
/// Relative slack in the sufficient-decrease test absorbing roundoff.
const ROUNDOFF: f64 = 1e-14;

struct Iterate {
    u: Field,
    energy: f64,
    g: Field,
    /// `(DᵀD + I)⁻¹ g`
    r: Vec<f64>,
    residual: f64,
    parts: EnergyParts,
}

fn make_iterate(spec: &ProblemSpec, u: Field, energy: f64) -> Result<Iterate> {
    let g = energy_gradient(spec, &u)?;
    let r = precondition(&spec.domain, g.values());
    let residual = dual_norm_of_preconditioned(spec, &r)?;
    let parts = energy_parts(spec, &u)?;
    Ok(Iterate {
        u,
        energy,
        g,
        r,
        residual,
        parts,
    })
}

/// Mountain-pass level by path deformation over straight paths.
///
/// Every path is the segment from 0 to a valley point `e` on a ray; its
/// maximum sits at the ray maximum `u`. Each iteration moves `u` along a
/// limited-memory quasi-Newton direction preconditioned by `DᵀD + I`,
/// projects back onto its ray maximum and halves the step until the
/// maximum path energy decreases. At a ray maximum `J′(u)u = 0`, so a
/// vanishing tangential residual makes `u` a critical point.
pub fn mountain_pass_solve(spec: &ProblemSpec, opts: &SolverOptions) -> Result<MPResult> {
    mountain_pass_solve_from(spec, &default_seed_shape(&spec.domain), opts)
}

pub fn mountain_pass_solve_from(spec: &ProblemSpec, seed: &Field, opts: &SolverOptions) -> Result<MPResult> {
    find_valley_point(spec, seed)?;
    let d = &spec.domain;
    let vol = d.cell_volume();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };

    let start = ray_max(spec, seed, opts.path_points)?.ok_or(Error::NoValley { doublings: 0 })?;
    let mut cur = make_iterate(spec, seed.scaled(start.scale), start.value)?;
    let mut history = Vec::new();
    let mut iterates = vec![cur.u.clone()];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut verdict = SolveVerdict::MaxIter;
    let mut first_step = true;
    let mut iteration = 0;

    loop {
        history.push(HistoryEntry {
            iteration,
            max_path_energy: cur.energy,
            residual_norm: cur.residual,
        });
        if cur.parts.gradient + cur.parts.potential < COLLAPSE_FLOOR || !(cur.energy > 0.0) {
            verdict = SolveVerdict::DegenerateToZero;
            break;
        }
        if cur.residual <= opts.tol {
            verdict = SolveVerdict::Converged;
            break;
        }
        if iteration >= opts.max_iter {
            break;
        }
        iteration += 1;

        let mut direction = lbfgs_direction(d, &cur, &memory);
        let mut slope = dot(cur.g.values(), &direction);
        if !(slope < 0.0) {
            memory.clear();
            direction = cur.r.iter().map(|x| -x).collect();
            slope = dot(cur.g.values(), &direction);
        }
        let mut alpha = if first_step || memory.is_empty() {
            let un = dot(cur.u.values(), cur.u.values()).sqrt();
            let dn = dot(&direction, &direction).sqrt();
            opts.descent_step * un / dn
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = cur.u.values().iter().zip(&direction).map(|(u, p)| u + alpha * p).collect();
            let trial = Field::from_raw(d, trial);
            if let Some(rm) = ray_max(spec, &trial, opts.path_points)? {
                let bound = cur.energy + 1e-4 * alpha * slope * vol + ROUNDOFF * cur.energy.abs();
                if rm.value <= bound && rm.value > 0.0 {
                    accepted = Some((trial.scaled(rm.scale), rm.value));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((u_new, e_new)) = accepted else {
            if !memory.is_empty() {
                memory.clear();
                continue;
            }
            // no decrease available along the preconditioned gradient
            break;
        };
        first_step = false;
        let next = make_iterate(spec, u_new, e_new)?;
        let s: Vec<f64> = next.u.values().iter().zip(cur.u.values()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.values().iter().zip(cur.g.values()).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > opts.memory {
                memory.pop_front();
            }
        }
        cur = next;
        if iteration % opts.store_every.max(1) == 0 {
            iterates.push(cur.u.clone());
        }
    }
    if iterates.last() != Some(&cur.u) {
        iterates.push(cur.u.clone());
    }
    let valley = find_valley_point(spec, &cur.u)
        .map(|v| v.point)
        .unwrap_or_else(|_| cur.u.scaled(2.0));
    Ok(MPResult {
        c_est: cur.energy,
        u_star: cur.u,
        history,
        verdict,
        iterates,
        valley,
    })
}

/// Two-loop recursion with initial matrix `γ (DᵀD + I)⁻¹`.
fn lbfgs_direction(d: &DomainSpec, cur: &Iterate, memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    if memory.is_empty() {
        return cur.r.iter().map(|x| -x).collect();
    }
    let mut q = cur.g.values().to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let (s_last, y_last, _) = memory.back().expect("nonempty");
    let py = precondition(d, y_last);
    let gamma = dot(s_last, y_last) / dot(y_last, &py);
    let mut z: Vec<f64> = precondition(d, &q).into_iter().map(|x| gamma * x).collect();
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &z);
        for (zi, si) in z.iter_mut().zip(s) {
            *zi += (a - b) * si;
        }
    }
    z.iter().map(|x| -x).collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PsEntry {
    pub energy: f64,
    pub residual_dual_norm: f64,
    /// `(θ − s_Φ)/θ ∫Φ(∇u) + V N(u)`
    pub lhs: f64,
    /// `J(u) − J′(u)u/θ`
    pub rhs: f64,
    pub ps_bound_ok: bool,
}

/// Evaluate the bounding inequality of Palais-Smale sequences on iterates.
pub fn ps_monitor(spec: &ProblemSpec, iterates: &[Field]) -> Result<Vec<PsEntry>> {
    let theta = spec.theta;
    let s = spec.s_phi();
    iterates
        .iter()
        .map(|u| {
            let parts = energy_parts(spec, u)?;
            let g = energy_gradient(spec, u)?;
            let energy = parts.total();
            let lhs = (theta - s) / theta * (parts.gradient + parts.potential);
            let rhs = energy - g.inner(u) / theta;
            let slack = 1e-12 * (lhs.abs() + rhs.abs());
            Ok(PsEntry {
                energy,
                residual_dual_norm: residual_dual_norm(spec, &g)?,
                lhs,
                rhs,
                ps_bound_ok: lhs <= rhs + slack,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Concentration {
    pub value: f64,
    pub center: Vec<f64>,
    pub center_index: usize,
}

/// `max_y Σ_{|x−y|≤r} N(|u(x)|) hⁿ` over grid centres `y`, with periodic
/// wrap-around. Ties go to the first centre in index order.
pub fn concentration_functional(u: &Field, r: f64, n_func: &MonotoneScalarFunction) -> Result<Concentration> {
    let d = u.domain();
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius {r} must be > 0")));
    }
    if r > d.half_width / 2.0 {
        return Err(Error::RadiusTooLarge {
            r,
            half_width: d.half_width,
        });
    }
    let h = d.spacing();
    let reach = (r / h + 1e-9).floor() as i64;
    let m = d.points as i64;
    let n = d.dim;
    let mut offsets: Vec<Vec<i64>> = Vec::new();
    let mut o = vec![-reach; n];
    loop {
        let dist2: f64 = o.iter().map(|k| (*k as f64 * h).powi(2)).sum();
        if dist2 <= r * r * (1.0 + 1e-12) {
            offsets.push(o.clone());
        }
        let mut k = n;
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if o[k] < reach {
                o[k] += 1;
                break;
            }
            o[k] = -reach;
            if k == 0 {
                k = usize::MAX;
                break;
            }
        }
        if k == usize::MAX {
            break;
        }
    }
    let density: Vec<f64> = u.values().iter().map(|x| n_func.value(x.abs())).collect();
    let vol = d.cell_volume();
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut idx_buf = vec![0usize; n];
    for c in 0..d.len() {
        let center = d.multi_index(c);
        let mut sum = 0.0;
        for off in &offsets {
            for k in 0..n {
                idx_buf[k] = (center[k] as i64 + off[k]).rem_euclid(m) as usize;
            }
            sum += density[d.flat_index(&idx_buf)];
        }
        if sum > best.0 {
            best = (sum, c);
        }
    }
    Ok(Concentration {
        value: best.0 * vol,
        center: d.coords(best.1),
        center_index: best.1,
    })
}

/// Lattice point closest to `x`.
pub fn nearest_lattice_point(x: &[f64], period: &[f64]) -> Vec<f64> {
    x.iter().zip(period).map(|(xi, p)| (xi / p).round() * p).collect()
}

/// Cyclic translation `w(x) = u(x + center)` moving `center` to the origin.
pub fn recenter(u: &Field, center: &[f64], period: &[f64]) -> Result<Field> {
    let d = u.domain();
    if d.boundary != BoundaryRule::Periodic {
        return Err(Error::InvalidArgument("recentering needs the periodic rule".into()));
    }
    if center.len() != d.dim || period.len() != d.dim {
        return Err(Error::Shape("center and period must match the dimension".into()));
    }
    let h = d.spacing();
    let mut shift = vec![0usize; d.dim];
    for k in 0..d.dim {
        let cells = center[k] / period[k];
        let nodes = center[k] / h;
        if (cells - cells.round()).abs() > 1e-9 || (nodes - nodes.round()).abs() > 1e-9 {
            return Err(Error::OffLattice(center.to_vec()));
        }
        shift[k] = (nodes.round() as i64).rem_euclid(d.points as i64) as usize;
    }
    let m = d.points;
    let mut out = vec![0.0; d.len()];
    let mut src = vec![0usize; d.dim];
    for (i, o) in out.iter_mut().enumerate() {
        let j = d.multi_index(i);
        for k in 0..d.dim {
            src[k] = (j[k] + shift[k]) % m;
        }
        *o = u.values()[d.flat_index(&src)];
    }
    Ok(Field::from_raw(d, out))
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub verdict: Verdict,
    pub evidence: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub hypotheses: Vec<HypothesisCheck>,
    pub all_pass: bool,
}

impl AuditReport {
    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.hypotheses.iter().find(|h| h.name == name)
    }
}

/// Decay verdict for a ratio sampled at the near end and 4 decades away.
fn decay_verdict(near: f64, far: f64) -> (Verdict, f64) {
    if far == 0.0 {
        return (Verdict::Pass, 0.0);
    }
    if near == 0.0 || !near.is_finite() || !far.is_finite() {
        return (Verdict::Inconclusive, f64::NAN);
    }
    let factor = far / near;
    let verdict = if factor <= 0.1 {
        Verdict::Pass
    } else if factor >= 1.0 - 1e-9 {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    (verdict, factor)
}

/// `max_{±} |f(±t)·(±t)| / g(t)`
fn source_ratio(f: &Nonlinearity, g: impl Fn(f64) -> f64, t: f64) -> f64 {
    let num = (f.value(t) * t).abs().max((f.value(-t) * t).abs());
    num / g(t)
}

/// The hypotheses that involve only Φ: (Φ₀), (Φ₁), (Φ₂) and Δ₂.
pub fn audit_growth(
    phi: &AnisotropicGFunction,
    phi_circ: &MonotoneScalarFunction,
    phi_n: Option<&MonotoneScalarFunction>,
    plan: &SamplePlan,
) -> Result<Vec<HypothesisCheck>> {
    let n = phi.dim();
    let mut out = Vec::new();

    let integ = check_integrability(phi_circ, n)?;
    out.push(HypothesisCheck {
        name: "phi0",
        verdict: integ.phi0,
        evidence: json!({ "lower_exponent": integ.lower_exponent, "integral_0_1": integ.phi0_value }),
    });
    out.push(HypothesisCheck {
        name: "phi1",
        verdict: integ.phi1,
        evidence: json!({ "upper_exponent": integ.upper_exponent }),
    });
    out.push(match phi_n {
        Some(pn) => {
            let dom = check_dominates(phi, pn, plan)?;
            HypothesisCheck {
                name: "phi2",
                verdict: dom.relation.verdict(),
                evidence: serde_json::to_value(&dom)?,
            }
        }
        None => HypothesisCheck {
            name: "phi2",
            verdict: Verdict::Inconclusive,
            evidence: json!({ "reason": "Sobolev conjugate unavailable" }),
        },
    });

    let doubling = check_delta2_nabla2(phi, plan);
    out.push(HypothesisCheck {
        name: "delta2",
        verdict: doubling.delta2,
        evidence: serde_json::to_value(&doubling)?,
    });
    Ok(out)
}

/// Report every standing hypothesis with its evidence.
pub fn audit_assumptions(
    spec: &ProblemSpec,
    phi_circ: &MonotoneScalarFunction,
    phi_n: Option<&MonotoneScalarFunction>,
    plan: &SamplePlan,
) -> Result<AuditReport> {
    let mut out = audit_growth(&spec.phi, phi_circ, phi_n, plan)?;

    let eq = check_equivalent(&spec.n_func, phi_circ, plan)?;
    out.push(HypothesisCheck {
        name: "n1",
        verdict: eq.verdict,
        evidence: json!({
            "forward_c": eq.forward.c_est,
            "backward_c": eq.backward.c_est,
            "forward_slopes": [eq.forward.slope_a, eq.forward.slope_b],
        }),
    });

    let (near, far) = (1e-2, 1e-6);
    let n_func = &spec.n_func;
    let r_near = source_ratio(&spec.f, |t| n_func.value(t), near);
    let r_far = source_ratio(&spec.f, |t| n_func.value(t), far);
    let (verdict, factor) = decay_verdict(r_near, r_far);
    out.push(HypothesisCheck {
        name: "f1",
        verdict,
        evidence: json!({ "t": [near, far], "ratio": [r_near, r_far], "decay_factor": factor }),
    });

    out.push(match phi_n {
        Some(pn) => {
            let (near, far) = (1e2, 1e6);
            let r_near = source_ratio(&spec.f, |t| pn.value(t), near);
            let r_far = source_ratio(&spec.f, |t| pn.value(t), far);
            let (verdict, factor) = decay_verdict(r_near, r_far);
            HypothesisCheck {
                name: "f2",
                verdict,
                evidence: json!({ "t": [near, far], "ratio": [r_near, r_far], "decay_factor": factor }),
            }
        }
        None => HypothesisCheck {
            name: "f2",
            verdict: Verdict::Inconclusive,
            evidence: json!({ "reason": "Sobolev conjugate unavailable" }),
        },
    });

    out.push(audit_f3(spec));
    let (v1, v2) = audit_potential(spec);
    out.push(v1);
    out.push(v2);

    let all_pass = out.iter().all(|h| h.verdict.is_pass());
    Ok(AuditReport {
        hypotheses: out,
        all_pass,
    })
}

fn audit_f3(spec: &ProblemSpec) -> HypothesisCheck {
    let theta = spec.theta;
    let f = &spec.f;
    let mut worst = 0.0f64;
    let mut worst_t = 0.0;
    for k in -60..=60 {
        let mag = 10f64.powf(k as f64 / 10.0);
        for t in [mag, -mag] {
            let lhs = theta * f.antiderivative(t);
            let rhs = t * f.value(t);
            let excess = (lhs - rhs) / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
            if excess > worst {
                worst = excess;
                worst_t = t;
            }
        }
    }
    // F′ = f by central differences
    let mut fd_err = 0.0f64;
    for t in [-3.0, -0.7, 0.2, 0.9, 2.5] {
        let h = 1e-5 * (1.0 + f64::abs(t));
        let fd = (f.antiderivative(t + h) - f.antiderivative(t - h)) / (2.0 * h);
        let exact = f.value(t);
        fd_err = fd_err.max((fd - exact).abs() / exact.abs().max(1.0));
    }
    let theta_ok = theta > spec.s_phi();
    let ok = theta_ok && worst <= 1e-12 && fd_err <= 1e-5 && f.antiderivative(0.0) == 0.0;
    HypothesisCheck {
        name: "f3",
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        evidence: json!({
            "theta": theta,
            "s_phi": spec.s_phi(),
            "max_relative_violation": worst,
            "worst_t": worst_t,
            "antiderivative_fd_error": fd_err,
        }),
    }
}

fn audit_potential(spec: &ProblemSpec) -> (HypothesisCheck, HypothesisCheck) {
    let n = spec.domain.dim;
    let period = &spec.potential.period;
    let mut v0 = f64::INFINITY;
    let mut residual = 0.0f64;
    let mut scale = 1.0f64;
    let count = 4usize.pow(n as u32);
    let mut x = vec![0.0; n];
    let mut shifted = vec![0.0; n];
    for idx in 0..count {
        let mut rest = idx;
        for k in 0..n {
            x[k] = period[k] * (rest % 4) as f64 / 4.0;
            rest /= 4;
        }
        let v = spec.potential.value(&x);
        v0 = v0.min(v);
        scale = scale.max(v.abs());
        for k in 0..n {
            shifted.copy_from_slice(&x);
            shifted[k] += period[k];
            residual = residual.max((spec.potential.value(&shifted) - v).abs());
        }
    }
    let v1 = HypothesisCheck {
        name: "v1",
        verdict: if v0 > 0.0 && v0.is_finite() { Verdict::Pass } else { Verdict::Fail },
        evidence: json!({ "v0": v0, "samples": count }),
    };
    let v2 = HypothesisCheck {
        name: "v2",
        verdict: if residual <= 1e-12 * scale { Verdict::Pass } else { Verdict::Fail },
        evidence: json!({ "translation_residual": residual, "period": period }),
    };
    (v1, v2)
}

#[derive(Clone, Debug, Serialize)]
pub struct GeometryReport {
    pub rho: f64,
    /// Minimum of `J` over the sampled sphere `‖u‖ = ρ`.
    pub alpha: f64,
    pub samples: usize,
    pub valley_energy: f64,
    pub verdict: Verdict,
}

/// Seeded sum of a few Gaussian bumps inside the inner half of the box.
pub fn random_bump_field(domain: &DomainSpec, rng: &mut ChaCha8Rng) -> Field {
    let n = domain.dim;
    let count = rng.random_range(1..=3);
    let bumps: Vec<(Vec<f64>, f64, f64)> = (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..n)
                .map(|_| (rng.random::<f64>() - 0.5) * domain.half_width)
                .collect();
            let width = domain.half_width * (0.1 + 0.15 * rng.random::<f64>());
            let amp = 0.5 + rng.random::<f64>();
            (c, width, amp)
        })
        .collect();
    Field::from_fn(domain, |x| {
        bumps
            .iter()
            .map(|(c, w, a)| {
                let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - ci).powi(2)).sum();
                a * (-0.5 * r2 / (w * w)).exp()
            })
            .sum()
    })
    .expect("bumps are finite")
}

/// Mountain-pass geometry: `J ≥ α > 0` on sampled fields of norm `ρ`
/// while `J(e) < 0` at the valley point of the default seed.
pub fn mountain_pass_geometry(spec: &ProblemSpec, rho: f64, samples: usize, seed: u64) -> Result<GeometryReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = f64::INFINITY;
    for _ in 0..samples {
        let w = random_bump_field(&spec.domain, &mut rng);
        let norm = sobolev_norm(&spec.phi, &spec.n_func, &w)?.total;
        alpha = alpha.min(energy(spec, &w.scaled(rho / norm))?);
    }
    let valley = find_valley_point(spec, &default_seed_shape(&spec.domain))?;
    let valley_energy = energy(spec, &valley.point)?;
    Ok(GeometryReport {
        rho,
        alpha,
        samples,
        valley_energy,
        verdict: if alpha > 0.0 && valley_energy < 0.0 { Verdict::Pass } else { Verdict::Fail },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotoneReport {
    pub pairs: usize,
    pub violations: usize,
    /// Smallest `(∇Φ(x)−∇Φ(y))·(x−y)` relative to `(|∇Φ(x)|+|∇Φ(y)|)|x−y|`.
    pub min_normalized: f64,
}

/// Count seeded pairs violating `(∇Φ(x) − ∇Φ(y))·(x − y) ≥ 0`; magnitudes
/// are log-uniform over `[10⁻³, 10³]` per component.
pub fn check_monotone_operator(phi: &AnisotropicGFunction, pairs: usize, seed: u64) -> MonotoneReport {
    let n = phi.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let mag = 10f64.powf(rng.random_range(-3.0..3.0));
                if rng.random::<bool>() { mag } else { -mag }
            })
            .collect()
    };
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    let mut violations = 0;
    let mut min_normalized = f64::INFINITY;
    for _ in 0..pairs {
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        phi.gradient_into(&x, &mut gx);
        phi.gradient_into(&y, &mut gy);
        let mut prod = 0.0;
        let mut dist = 0.0;
        let mut size = 0.0;
        for k in 0..n {
            prod += (gx[k] - gy[k]) * (x[k] - y[k]);
            dist += (x[k] - y[k]).powi(2);
            size += gx[k].powi(2) + gy[k].powi(2);
        }
        let scale = size.sqrt() * dist.sqrt();
        let normalized = if scale > 0.0 { prod / scale } else { 0.0 };
        min_normalized = min_normalized.min(normalized);
        if normalized < -1e-12 {
            violations += 1;
        }
    }
    MonotoneReport {
        pairs,
        violations,
        min_normalized,
    }
}
