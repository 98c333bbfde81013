//! Scalar and anisotropic Young functions: evaluation, gradients,
//! complementary functions and sampled growth diagnostics.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::{dot, log_space, loglog_fit, norm2, SamplePlan, Verdict};

pub type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Step used for central-difference gradients of callable functions.
pub fn fd_step(v: &[f64]) -> f64 {
    1e-5 * (1.0 + norm2(v))
}

#[derive(Clone)]
pub enum GKind {
    /// `Σ aᵢ |vᵢ|^{pᵢ}`
    PowerSum {
        exponents: Vec<f64>,
        coefficients: Vec<f64>,
    },
    Callable {
        value: ValueFn,
        gradient: Option<GradientFn>,
    },
}

/// An n-dimensional G-function `Φ: ℝⁿ → [0, ∞)` with its gradient.
#[derive(Clone)]
pub struct AnisotropicGFunction {
    dim: usize,
    kind: GKind,
}

impl fmt::Debug for AnisotropicGFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            GKind::PowerSum {
                exponents,
                coefficients,
            } => f
                .debug_struct("PowerSum")
                .field("exponents", exponents)
                .field("coefficients", coefficients)
                .finish(),
            GKind::Callable { gradient, .. } => f
                .debug_struct("Callable")
                .field("dim", &self.dim)
                .field("analytic_gradient", &gradient.is_some())
                .finish(),
        }
    }
}

impl AnisotropicGFunction {
    pub fn power_sum(exponents: Vec<f64>, coefficients: Vec<f64>) -> Result<Self> {
        if exponents.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "dimension must be at least 2, got {}",
                exponents.len()
            )));
        }
        if exponents.len() != coefficients.len() {
            return Err(Error::Shape(format!(
                "{} exponents but {} coefficients",
                exponents.len(),
                coefficients.len()
            )));
        }
        // p = 1 is admitted so that level-set volumes of cross-polytopes can
        // be computed; such functions fail the N-function check.
        if let Some(p) = exponents.iter().find(|p| !(p.is_finite() && **p >= 1.0)) {
            return Err(Error::InvalidArgument(format!("exponent {p} must be >= 1")));
        }
        if let Some(a) = coefficients.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidArgument(format!("coefficient {a} must be > 0")));
        }
        Ok(Self {
            dim: exponents.len(),
            kind: GKind::PowerSum {
                exponents,
                coefficients,
            },
        })
    }

    /// Power sum with unit coefficients.
    pub fn power_sum_unit(exponents: &[f64]) -> Result<Self> {
        Self::power_sum(exponents.to_vec(), vec![1.0; exponents.len()])
    }

    /// Callable kind; the gradient falls back to central differences.
    pub fn callable(dim: usize, value: ValueFn) -> Result<Self> {
        Self::callable_with_gradient(dim, value, None)
    }

    pub fn callable_with_gradient(
        dim: usize,
        value: ValueFn,
        gradient: Option<GradientFn>,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        Ok(Self {
            dim,
            kind: GKind::Callable { value, gradient },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &GKind {
        &self.kind
    }

    /// `Some((p, a))` for the power-sum kind.
    pub fn power_sum_parts(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            GKind::PowerSum {
                exponents,
                coefficients,
            } => Some((exponents, coefficients)),
            GKind::Callable { .. } => None,
        }
    }

    /// Complementary function `Φ̃(w) = sup_v (w·v − Φ(v))`, available in closed
    /// form for power sums with all exponents above 1.
    pub fn complementary(&self) -> Result<Self> {
        let (p, a) = self.power_sum_parts().ok_or_else(|| {
            Error::InvalidArgument("complementary function needs the power-sum kind".into())
        })?;
        let mut exponents = Vec::with_capacity(p.len());
        let mut coefficients = Vec::with_capacity(p.len());
        for (&q, &k) in p.iter().zip(a) {
            if q <= 1.0 + 1e-9 {
                return Err(Error::Sublinear { exponent: q });
            }
            let dual = q / (q - 1.0);
            exponents.push(dual);
            coefficients.push((q - 1.0) * k * (k * q).powf(-dual));
        }
        Self::power_sum(exponents, coefficients)
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        match &self.kind {
            GKind::PowerSum {
                exponents,
                coefficients,
            } => v
                .iter()
                .zip(exponents)
                .zip(coefficients)
                .map(|((x, p), a)| a * abs_pow(*x, *p))
                .sum(),
            GKind::Callable { value, .. } => value(v),
        }
    }

    /// Writes `∇Φ(v)` into `out`.
    pub fn gradient_into(&self, v: &[f64], out: &mut [f64]) {
        match &self.kind {
            GKind::PowerSum {
                exponents,
                coefficients,
            } => {
                for i in 0..v.len() {
                    out[i] = coefficients[i] * exponents[i] * signed_pow(v[i], exponents[i] - 1.0);
                }
            }
            GKind::Callable {
                gradient: Some(g), ..
            } => g(v, out),
            GKind::Callable {
                value,
                gradient: None,
            } => {
                let h = fd_step(v);
                let mut x = v.to_vec();
                for i in 0..v.len() {
                    x[i] = v[i] + h;
                    let up = value(&x);
                    x[i] = v[i] - h;
                    let down = value(&x);
                    x[i] = v[i];
                    out[i] = (up - down) / (2.0 * h);
                }
            }
        }
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.gradient_into(v, &mut out);
        out
    }

    /// Value and gradient at a finite point.
    pub fn evaluate(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        if v.len() != self.dim {
            return Err(Error::Shape(format!(
                "point has {} components, function has dimension {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{v:?}")));
        }
        Ok((self.value(v), self.gradient(v)))
    }

    /// `v·∇Φ(v) / Φ(v)`, the quantity whose extremes define the indices.
    pub fn euler_ratio(&self, v: &[f64]) -> f64 {
        dot(v, &self.gradient(v)) / self.value(v)
    }

    /// Sampled refutation of the N-function axioms: `Φ(0)=0`, evenness,
    /// positivity off 0, midpoint convexity and superlinear growth.
    pub fn check_n_function(&self, plan: &SamplePlan) -> Result<()> {
        let zero = vec![0.0; self.dim];
        if self.value(&zero) != 0.0 {
            return Err(Error::Validation("Phi(0) != 0".into()));
        }
        let dirs = plan.directions(self.dim);
        let radii = plan.radii();
        let pts: Vec<Vec<f64>> = dirs
            .iter()
            .flat_map(|d| radii.iter().map(move |r| d.iter().map(|x| x * r).collect()))
            .collect();
        for v in &pts {
            let val = self.value(v);
            if !(val > 0.0) {
                return Err(Error::Validation(format!("Phi not positive at {v:?}")));
            }
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            if (self.value(&neg) - val).abs() > 1e-12 * val.abs().max(1e-300) {
                return Err(Error::Validation(format!("Phi not even at {v:?}")));
            }
        }
        // midpoint convexity on pairs (k, k + stride)
        let stride = radii.len() + 7;
        for k in 0..pts.len() {
            let x = &pts[k];
            let y = &pts[(k + stride) % pts.len()];
            let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
            let rhs = 0.5 * (self.value(x) + self.value(y));
            if self.value(&mid) > rhs * (1.0 + 1e-12) {
                return Err(Error::Validation(format!(
                    "midpoint convexity violated between {x:?} and {y:?}"
                )));
            }
        }
        let top = plan.r_max;
        for d in &dirs {
            let at = |r: f64| {
                let v: Vec<f64> = d.iter().map(|x| x * r).collect();
                self.value(&v) / r
            };
            if !(at(top) > at(top / 10.0)) {
                return Err(Error::Validation(format!(
                    "Phi(v)/|v| not increasing along direction {d:?}"
                )));
            }
        }
        Ok(())
    }
}

fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

/// `|x|^q sign(x)`, with `0` at `x = 0`.
fn signed_pow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if q == 1.0 {
        x
    } else {
        x.abs().powf(q).copysign(x)
    }
}

/// How a sampled table is interpolated between abscissae.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Piecewise power law (linear in log-log coordinates).
    LogLog,
    /// Right-continuous steps: `f(t) = values[k]` on `[t_k, t_{k+1})`.
    Step,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    /// Power-law extrapolation exponent below `t[0]`.
    pub lower_exponent: Option<f64>,
    /// Power-law extrapolation exponent above the last abscissa.
    pub upper_exponent: Option<f64>,
    pub interpolation: Interpolation,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarKind {
    /// `t ↦ scale · t^exponent`
    Power { exponent: f64, scale: f64 },
    Table(Table),
}

/// Nondecreasing `g: [0, ∞) → [0, ∞)` with `g(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneScalarFunction {
    kind: ScalarKind,
}

impl MonotoneScalarFunction {
    pub fn power(exponent: f64, scale: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "power needs exponent > 0 and scale > 0, got {exponent}, {scale}"
            )));
        }
        Ok(Self {
            kind: ScalarKind::Power { exponent, scale },
        })
    }

    /// Table with explicit extrapolation exponents.
    pub fn table(
        t: Vec<f64>,
        values: Vec<f64>,
        lower_exponent: Option<f64>,
        upper_exponent: Option<f64>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if t.len() != values.len() || t.is_empty() {
            return Err(Error::Shape(format!(
                "{} abscissae and {} values",
                t.len(),
                values.len()
            )));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("abscissae must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("values must be nondecreasing".into()));
        }
        if t.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("table entries".into()));
        }
        match interpolation {
            Interpolation::LogLog => {
                if !(t[0] > 0.0) || !(values[0] > 0.0) {
                    return Err(Error::InvalidArgument(
                        "log-log tables need positive abscissae and values".into(),
                    ));
                }
            }
            Interpolation::Step => {
                if t[0] < 0.0 || values[0] < 0.0 {
                    return Err(Error::InvalidArgument("negative step table entries".into()));
                }
            }
        }
        Ok(Self {
            kind: ScalarKind::Table(Table {
                t,
                values,
                lower_exponent,
                upper_exponent,
                interpolation,
            }),
        })
    }

    /// Log-log table whose extrapolation exponents are least-squares fits on
    /// the lowest and highest decade (at least 10 points each).
    pub fn table_with_fitted_tails(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let (lo, hi) = fit_endpoint_exponents(&t, &values)?;
        Self::table(t, values, Some(lo), Some(hi), Interpolation::LogLog)
    }

    pub fn kind(&self) -> &ScalarKind {
        &self.kind
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            ScalarKind::Power { exponent, scale } => scale * t.powf(*exponent),
            ScalarKind::Table(tab) => tab.value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return match &self.kind {
                ScalarKind::Power { exponent, scale } if *exponent == 1.0 => *scale,
                _ => 0.0,
            };
        }
        match &self.kind {
            ScalarKind::Power { exponent, scale } => exponent * scale * t.powf(exponent - 1.0),
            ScalarKind::Table(tab) => match tab.interpolation {
                Interpolation::Step => 0.0,
                Interpolation::LogLog => tab.value(t) * tab.local_slope(t) / t,
            },
        }
    }

    /// Least `t` with `g(t) ≥ y`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if y.is_nan() {
            return Err(Error::NonFinite("inverse of NaN".into()));
        }
        if y <= 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            ScalarKind::Power { exponent, scale } => Ok((y / scale).powf(1.0 / exponent)),
            ScalarKind::Table(tab) => tab.inverse(y),
        }
    }

    /// Exponents `(q₀, q∞)` governing behaviour near 0 and at infinity.
    pub fn endpoint_exponents(&self) -> Result<(f64, f64)> {
        match &self.kind {
            ScalarKind::Power { exponent, .. } => Ok((*exponent, *exponent)),
            ScalarKind::Table(tab) => match (tab.lower_exponent, tab.upper_exponent) {
                (Some(lo), Some(hi)) => Ok((lo, hi)),
                _ => fit_endpoint_exponents(&tab.t, &tab.values),
            },
        }
    }
}

impl Table {
    fn value(&self, t: f64) -> f64 {
        let m = self.t.len() - 1;
        match self.interpolation {
            Interpolation::Step => {
                let k = self.t.partition_point(|x| *x <= t);
                if k == 0 {
                    0.0
                } else {
                    self.values[k - 1]
                }
            }
            Interpolation::LogLog => {
                if t < self.t[0] {
                    match self.lower_exponent {
                        Some(q) => self.values[0] * (t / self.t[0]).powf(q),
                        None => self.values[0] * t / self.t[0],
                    }
                } else if t > self.t[m] {
                    match self.upper_exponent {
                        Some(q) => self.values[m] * (t / self.t[m]).powf(q),
                        None => f64::INFINITY,
                    }
                } else {
                    let k = self.segment(t);
                    let s = self.segment_slope(k);
                    self.values[k] * (t / self.t[k]).powf(s)
                }
            }
        }
    }

    /// Segment index `k` with `t_k ≤ t ≤ t_{k+1}`.
    fn segment(&self, t: f64) -> usize {
        let k = self.t.partition_point(|x| *x <= t);
        k.saturating_sub(1).min(self.t.len().saturating_sub(2))
    }

    fn segment_slope(&self, k: usize) -> f64 {
        if self.t.len() < 2 {
            return 0.0;
        }
        (self.values[k + 1] / self.values[k]).ln() / (self.t[k + 1] / self.t[k]).ln()
    }

    fn local_slope(&self, t: f64) -> f64 {
        let m = self.t.len() - 1;
        if t < self.t[0] {
            self.lower_exponent.unwrap_or(1.0)
        } else if t > self.t[m] {
            self.upper_exponent.unwrap_or(f64::INFINITY)
        } else {
            self.segment_slope(self.segment(t))
        }
    }

    fn inverse(&self, y: f64) -> Result<f64> {
        let m = self.t.len() - 1;
        match self.interpolation {
            Interpolation::Step => {
                let k = self.values.partition_point(|v| *v < y);
                if k > m {
                    Err(Error::OutOfRange { y })
                } else {
                    Ok(self.t[k])
                }
            }
            Interpolation::LogLog => {
                if y <= self.values[0] {
                    return Ok(match self.lower_exponent {
                        Some(q) => self.t[0] * (y / self.values[0]).powf(1.0 / q),
                        None => self.t[0] * y / self.values[0],
                    });
                }
                if y > self.values[m] {
                    return match self.upper_exponent {
                        Some(q) if q > 0.0 => Ok(self.t[m] * (y / self.values[m]).powf(1.0 / q)),
                        _ => Err(Error::OutOfRange { y }),
                    };
                }
                let k = self.values.partition_point(|v| *v < y);
                // values[k-1] < y <= values[k]
                let s = self.segment_slope(k - 1);
                let t = self.t[k - 1] * (y / self.values[k - 1]).powf(1.0 / s);
                Ok(t.clamp(self.t[k - 1], self.t[k]))
            }
        }
    }
}

/// Least-squares power-law exponents on the lowest and highest decade of a
/// table, using at least 10 points per end.
pub fn fit_endpoint_exponents(t: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    const MIN_POINTS: usize = 10;
    if t.len() < MIN_POINTS || t[0] <= 0.0 {
        return Err(Error::TableTooShort(format!(
            "{} positive abscissae, need at least {MIN_POINTS}",
            t.len()
        )));
    }
    let m = t.len();
    let low_count = t.partition_point(|x| *x <= 10.0 * t[0]).max(MIN_POINTS);
    let high_count = (m - t.partition_point(|x| *x < t[m - 1] / 10.0)).max(MIN_POINTS);
    let (lo, _) = loglog_fit(&t[..low_count], &values[..low_count]);
    let (hi, _) = loglog_fit(&t[m - high_count..], &values[m - high_count..]);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::TableTooShort("endpoint fit degenerate".into()));
    }
    Ok((lo, hi))
}

/// Complementary function `M̃(s) = sup_t (s t − M(t))`.
///
/// Powers map to powers in closed form; log-log tables are transformed
/// pointwise on a logarithmic grid spanning the range of `M'`.
pub fn conjugate_scalar(m: &MonotoneScalarFunction) -> Result<MonotoneScalarFunction> {
    let (q_lo, q_hi) = m.endpoint_exponents()?;
    if q_hi <= 1.0 + 1e-9 {
        return Err(Error::Sublinear { exponent: q_hi });
    }
    if q_lo <= 1.0 + 1e-9 {
        return Err(Error::Sublinear { exponent: q_lo });
    }
    match m.kind() {
        ScalarKind::Power { exponent, scale } => {
            let q = *exponent;
            let dual = q / (q - 1.0);
            MonotoneScalarFunction::power(dual, (q - 1.0) * scale * (scale * q).powf(-dual))
        }
        ScalarKind::Table(tab) => {
            if tab.interpolation != Interpolation::LogLog {
                return Err(Error::InvalidArgument(
                    "conjugate of a step table is not defined".into(),
                ));
            }
            let t_lo = tab.t[0];
            let t_hi = *tab.t.last().unwrap();
            let s_lo = m.derivative(t_lo);
            let s_hi = m.derivative(t_hi);
            if !(s_hi > s_lo && s_lo > 0.0) {
                return Err(Error::InvalidArgument("derivative range degenerate".into()));
            }
            let slopes = log_space(s_lo, s_hi, tab.t.len().max(10));
            let mut values = Vec::with_capacity(slopes.len());
            for &s in &slopes {
                // least t with M'(t) ≥ s, bisection in log t
                let (mut a, mut b) = (t_lo.ln(), t_hi.ln());
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if m.derivative(mid.exp()) >= s {
                        b = mid;
                    } else {
                        a = mid;
                    }
                    if b - a < 1e-14 {
                        break;
                    }
                }
                let t = b.exp();
                let candidates = [a.exp(), t];
                let best = candidates
                    .iter()
                    .map(|&x| s * x - m.value(x))
                    .fold(f64::NEG_INFINITY, f64::max);
                values.push(best.max(0.0));
            }
            // enforce monotonicity against roundoff in the sup
            for k in 1..values.len() {
                if values[k] < values[k - 1] {
                    values[k] = values[k - 1];
                }
            }
            MonotoneScalarFunction::table(
                slopes,
                values,
                Some(q_lo / (q_lo - 1.0)),
                Some(q_hi / (q_hi - 1.0)),
                Interpolation::LogLog,
            )
        }
    }
}

/// Infimum/supremum growth exponents `(i, s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthIndices {
    pub i: f64,
    pub s: f64,
}

impl GrowthIndices {
    pub fn new(i: f64, s: f64) -> Self {
        Self { i, s }
    }
}

/// Anything whose growth indices can be sampled.
pub enum IndexSubject<'a> {
    Anisotropic(&'a AnisotropicGFunction),
    Scalar(&'a MonotoneScalarFunction),
}

impl<'a> From<&'a AnisotropicGFunction> for IndexSubject<'a> {
    fn from(f: &'a AnisotropicGFunction) -> Self {
        IndexSubject::Anisotropic(f)
    }
}

impl<'a> From<&'a MonotoneScalarFunction> for IndexSubject<'a> {
    fn from(f: &'a MonotoneScalarFunction) -> Self {
        IndexSubject::Scalar(f)
    }
}

/// Ratio cap above which an index is declared unbounded.
pub const INDEX_CAP: f64 = 1e3;

/// Sampled `inf`/`sup` of `v·∇Φ(v)/Φ(v)` (or `t g'(t)/g(t)`), rounded outward
/// to the 10⁻³ grid so downstream strict inequalities stay conservative.
pub fn growth_indices<'a>(
    subject: impl Into<IndexSubject<'a>>,
    plan: &SamplePlan,
) -> Result<GrowthIndices> {
    let radii = plan.radii();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut record = |ratio: f64| -> Result<()> {
        if !ratio.is_finite() || ratio > INDEX_CAP {
            return Err(Error::UnboundedIndex {
                sampled: ratio,
                cap: INDEX_CAP,
            });
        }
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        Ok(())
    };
    match subject.into() {
        IndexSubject::Anisotropic(phi) => {
            for d in plan.directions(phi.dim()) {
                for &r in &radii {
                    let v: Vec<f64> = d.iter().map(|x| x * r).collect();
                    record(phi.euler_ratio(&v))?;
                }
            }
        }
        IndexSubject::Scalar(g) => {
            for &r in &radii {
                record(r * g.derivative(r) / g.value(r))?;
            }
        }
    }
    Ok(GrowthIndices {
        i: round_down(lo),
        s: round_up(hi),
    })
}

fn round_down(x: f64) -> f64 {
    (x * 1e3 + 1e-6).floor() / 1e3
}

fn round_up(x: f64) -> f64 {
    (x * 1e3 - 1e-6).ceil() / 1e3
}

/// `(min(t^i, t^s), max(t^i, t^s))`.
pub fn xi_bounds(idx: &GrowthIndices, t: f64) -> (f64, f64) {
    let a = t.powf(idx.i);
    let b = t.powf(idx.s);
    (a.min(b), a.max(b))
}

/// Sampled doubling constants `K₁Φ(v) ≤ Φ(2v) ≤ K₂Φ(v)`.
#[derive(Clone, Debug, Serialize)]
pub struct DoublingReport {
    pub k1_est: f64,
    pub k2_est: f64,
    pub k1_witness: Vec<f64>,
    pub k2_witness: Vec<f64>,
    pub delta2: Verdict,
    pub nabla2: Verdict,
    pub verdict: Verdict,
}

/// Ratio `Φ(2v)/Φ(v)` above which the `Δ₂` side is declared violated.
pub const DOUBLING_CAP: f64 = 1e6;

pub fn check_delta2_nabla2(phi: &AnisotropicGFunction, plan: &SamplePlan) -> DoublingReport {
    let radii = plan.radii();
    let mut k1 = (f64::INFINITY, Vec::new());
    let mut k2 = (f64::NEG_INFINITY, Vec::new());
    let mut unbounded = false;
    for d in plan.directions(phi.dim()) {
        let ratios: Vec<f64> = radii
            .iter()
            .map(|r| {
                let v: Vec<f64> = d.iter().map(|x| x * r).collect();
                let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
                phi.value(&v2) / phi.value(&v)
            })
            .collect();
        for (ratio, r) in ratios.iter().zip(&radii) {
            let v: Vec<f64> = d.iter().map(|x| x * r).collect();
            if !ratio.is_finite() {
                unbounded = true;
                if k2.1.is_empty() || k2.0.is_finite() {
                    k2 = (f64::INFINITY, v);
                }
                continue;
            }
            if *ratio < k1.0 {
                k1 = (*ratio, v.clone());
            }
            if *ratio > k2.0 {
                k2 = (*ratio, v);
            }
        }
    }
    let delta2 = if unbounded || k2.0 > DOUBLING_CAP {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    let nabla2 = if k1.0 > 1.0 + 1e-6 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    DoublingReport {
        k1_est: k1.0,
        k2_est: k2.0,
        k1_witness: k1.1,
        k2_witness: k2.1,
        delta2,
        nabla2,
        verdict: delta2.and(nabla2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p227() -> AnisotropicGFunction {
        AnisotropicGFunction::power_sum_unit(&[2.0, 2.0, 7.0]).unwrap()
    }

    #[test]
    fn evaluate_power_sum_examples() {
        let (v, g) = p227().evaluate(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
        let (v, g) = p227().evaluate(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(g, vec![2.0, 2.0, 7.0]);
        let phi = AnisotropicGFunction::power_sum_unit(&[2.0, 2.0]).unwrap();
        let (v, g) = phi.evaluate(&[3.0, 4.0]).unwrap();
        assert_eq!(v, 25.0);
        assert_eq!(g, vec![6.0, 8.0]);
    }

    #[test]
    fn evaluate_rejects_nonfinite() {
        assert!(matches!(
            p227().evaluate(&[f64::NAN, 0.0, 0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(p227().evaluate(&[0.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn constructor_validation() {
        assert!(AnisotropicGFunction::power_sum_unit(&[2.0]).is_err());
        assert!(AnisotropicGFunction::power_sum(vec![2.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(AnisotropicGFunction::power_sum(vec![2.0, 2.0], vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn callable_fd_gradient_matches_analytic() {
        let phi = AnisotropicGFunction::callable(
            2,
            Arc::new(|v: &[f64]| v[0] * v[0] + v[1].abs().powf(3.0)),
        )
        .unwrap();
        let g = phi.gradient(&[1.5, -2.0]);
        assert!((g[0] - 3.0).abs() < 1e-6);
        assert!((g[1] + 12.0).abs() < 1e-6);
    }

    #[test]
    fn n_function_check() {
        let plan = SamplePlan::default();
        p227().check_n_function(&plan).unwrap();
        let cross = AnisotropicGFunction::power_sum_unit(&[1.0, 1.0]).unwrap();
        assert!(cross.check_n_function(&plan).is_err());
    }

    #[test]
    fn conjugate_of_powers() {
        let half_square = MonotoneScalarFunction::power(2.0, 0.5).unwrap();
        let c = conjugate_scalar(&half_square).unwrap();
        assert_eq!(c, half_square);

        let quartic = MonotoneScalarFunction::power(4.0, 0.25).unwrap();
        match conjugate_scalar(&quartic).unwrap().kind() {
            ScalarKind::Power { exponent, scale } => {
                assert!((exponent - 4.0 / 3.0).abs() < 1e-14);
                assert!((scale - 0.75).abs() < 1e-14);
            }
            _ => panic!("expected power"),
        }
    }

    #[test]
    fn conjugate_of_sampled_cubic() {
        let t = log_space(1e-3, 1e3, 200);
        let v: Vec<f64> = t.iter().map(|x| x.powi(3) / 3.0).collect();
        let table = MonotoneScalarFunction::table_with_fitted_tails(t, v).unwrap();
        let c = conjugate_scalar(&table).unwrap();
        for s in log_space(1e-4, 1e4, 41) {
            let want = 2.0 / 3.0 * s.powf(1.5);
            assert!(
                (c.value(s) - want).abs() <= 1e-6 * want,
                "s={s}: {} vs {want}",
                c.value(s)
            );
        }
    }

    #[test]
    fn conjugate_rejects_sublinear() {
        let lin = MonotoneScalarFunction::power(1.0, 1.0).unwrap();
        assert!(matches!(conjugate_scalar(&lin), Err(Error::Sublinear { .. })));
        let sqrt = MonotoneScalarFunction::power(0.5, 1.0).unwrap();
        assert!(matches!(conjugate_scalar(&sqrt), Err(Error::Sublinear { .. })));
    }

    #[test]
    fn young_inequality_with_equality_on_graph() {
        let m = MonotoneScalarFunction::power(2.6, 1.3).unwrap();
        let mt = conjugate_scalar(&m).unwrap();
        let grid = log_space(1e-2, 1e2, 25);
        for &t in &grid {
            for &s in &grid {
                assert!(s * t <= (m.value(t) + mt.value(s)) * (1.0 + 1e-12));
            }
            let s = m.derivative(t);
            let gap = m.value(t) + mt.value(s) - s * t;
            assert!(gap.abs() <= 1e-10 * s * t);
        }
    }

    #[test]
    fn doubling_constants() {
        let plan = SamplePlan::default();
        let rep = check_delta2_nabla2(&p227(), &plan);
        assert!((rep.k2_est - 128.0).abs() < 1e-9);
        assert!((rep.k1_est - 4.0).abs() < 1e-9);
        assert_eq!(rep.verdict, Verdict::Pass);
        assert_eq!(rep.k2_witness.iter().filter(|x| **x != 0.0).count(), 1);

        let quad = AnisotropicGFunction::power_sum_unit(&[2.0, 2.0]).unwrap();
        let rep = check_delta2_nabla2(&quad, &plan);
        assert!((rep.k1_est - 4.0).abs() < 1e-9 && (rep.k2_est - 4.0).abs() < 1e-9);
    }

    #[test]
    fn exponential_violates_delta2() {
        let phi = AnisotropicGFunction::callable(
            2,
            Arc::new(|v: &[f64]| {
                let r = norm2(v);
                // expm1 keeps the small-|v| values accurate
                r.exp_m1() - r
            }),
        )
        .unwrap();
        let plan = SamplePlan::default();
        let rep = check_delta2_nabla2(&phi, &plan);
        assert_eq!(rep.nabla2, Verdict::Pass);
        assert_eq!(rep.delta2, Verdict::Fail);
        // oracle: the ratio along one ray grows without bound
        let ray = |r: f64| ((2.0 * r).exp_m1() - 2.0 * r) / (r.exp_m1() - r);
        assert!(ray(20.0) > ray(10.0) && ray(30.0) > DOUBLING_CAP);
    }

    #[test]
    fn indices_of_power_sums() {
        let plan = SamplePlan::default();
        // oracle: the ratio is a weighted mean of the exponents, extremal on axes
        let axis_ratio = |phi: &AnisotropicGFunction, i: usize| {
            let mut v = vec![0.0; phi.dim()];
            v[i] = 0.7;
            phi.euler_ratio(&v)
        };
        let idx = growth_indices(&p227(), &plan).unwrap();
        assert_eq!((idx.i, idx.s), (axis_ratio(&p227(), 0), axis_ratio(&p227(), 2)));
        assert_eq!((idx.i, idx.s), (2.0, 7.0));

        let phi = AnisotropicGFunction::power_sum_unit(&[1.8, 2.0, 2.2]).unwrap();
        let idx = growth_indices(&phi, &plan).unwrap();
        assert!((idx.i - 1.8).abs() < 1e-12 && (idx.s - 2.2).abs() < 1e-12);

        let cube = MonotoneScalarFunction::power(3.0, 1.0).unwrap();
        let idx = growth_indices(&cube, &plan).unwrap();
        assert_eq!((idx.i, idx.s), (3.0, 3.0));
    }

    #[test]
    fn indices_round_outward() {
        let phi = AnisotropicGFunction::power_sum_unit(&[1.8004, 2.2004]).unwrap();
        let idx = growth_indices(&phi, &SamplePlan::default()).unwrap();
        assert_eq!(idx.i, 1.8);
        assert!((idx.s - 2.201).abs() < 1e-12);
    }

    #[test]
    fn unbounded_index_reported() {
        let phi = AnisotropicGFunction::callable(
            2,
            Arc::new(|v: &[f64]| {
                let r = norm2(v);
                r.exp_m1() - r
            }),
        )
        .unwrap();
        assert!(matches!(
            growth_indices(&phi, &SamplePlan::default()),
            Err(Error::UnboundedIndex { .. })
        ));
    }

    #[test]
    fn xi_bound_examples() {
        let idx = GrowthIndices::new(2.0, 7.0);
        assert_eq!(xi_bounds(&idx, 1.0), (1.0, 1.0));
        assert_eq!(xi_bounds(&idx, 2.0), (4.0, 128.0));
        assert_eq!(xi_bounds(&idx, 0.5), (0.5f64.powi(7), 0.25));
    }

    #[test]
    fn step_table_left_continuous_inverse() {
        let step = MonotoneScalarFunction::table(
            vec![0.0, 1.0],
            vec![0.0, 5.0],
            None,
            None,
            Interpolation::Step,
        )
        .unwrap();
        assert_eq!(step.inverse(3.0).unwrap(), 1.0);
        assert_eq!(step.value(0.999), 0.0);
        assert_eq!(step.value(1.0), 5.0);
        assert!(matches!(step.inverse(6.0), Err(Error::OutOfRange { .. })));
    }
}
