//! Grid fields on the truncated box `[−L, L]ⁿ`, modulars, Luxemburg and
//! Orlicz-Sobolev norms, and empirical checks of the norm inequalities.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::young::{xi_bounds, AnisotropicGFunction, GKind, GrowthIndices, MonotoneScalarFunction, ScalarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    ZeroDirichlet,
    Periodic,
}

impl BoundaryRule {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryRule::ZeroDirichlet => "zero_dirichlet",
            BoundaryRule::Periodic => "periodic",
        }
    }
}

impl std::str::FromStr for BoundaryRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_dirichlet" => Ok(BoundaryRule::ZeroDirichlet),
            "periodic" => Ok(BoundaryRule::Periodic),
            other => Err(Error::InvalidArgument(format!("unknown boundary rule {other:?}"))),
        }
    }
}

/// Uniform grid with `m` nodes per axis at `x_j = −L + j h`, `h = 2L/m`.
///
/// Under the periodic rule node `m` is identified with node 0. Under the
/// Dirichlet rule the face `j = 0` is pinned to zero and the node beyond
/// `j = m − 1` is a zero ghost, so both rules have `mⁿ` cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
    pub boundary: BoundaryRule,
}

impl DomainSpec {
    pub fn new(dim: usize, half_width: f64, points: usize, boundary: BoundaryRule) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidArgument(format!("half-width {half_width} must be > 0")));
        }
        if points < 8 {
            return Err(Error::InvalidArgument(format!("{points} points per axis, need >= 8")));
        }
        if (points as f64).powi(dim as i32) > 1e8 {
            return Err(Error::InvalidArgument("grid too large".into()));
        }
        Ok(Self {
            dim,
            half_width,
            points,
            boundary,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Number of nodes (and of cells).
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index stride of axis `k`; axis 0 varies slowest.
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            out[k] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, j| acc * self.points + j)
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(idx)
            .into_iter()
            .map(|j| -self.half_width + j as f64 * h)
            .collect()
    }

    /// Nodes pinned to zero by the Dirichlet rule.
    pub fn is_pinned(&self, idx: usize) -> bool {
        if self.boundary != BoundaryRule::ZeroDirichlet {
            return false;
        }
        let mut rest = idx;
        for _ in 0..self.dim {
            if rest.is_multiple_of(self.points) {
                return true;
            }
            rest /= self.points;
        }
        false
    }

    /// Mask of free nodes (`true` where values may be nonzero).
    pub fn free_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| !self.is_pinned(i)).collect()
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("value {} at index {i}", values[i]))),
        None => Ok(()),
    }
}

/// Real values on the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    domain: DomainSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(domain: &DomainSpec) -> Self {
        Self {
            domain: domain.clone(),
            values: vec![0.0; domain.len()],
        }
    }

    /// Sample `f` at every node; pinned nodes are set to zero.
    pub fn from_fn(domain: &DomainSpec, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..domain.len())
            .map(|i| if domain.is_pinned(i) { 0.0 } else { f(&domain.coords(i)) })
            .collect::<Vec<_>>();
        Self::new(domain, values)
    }

    /// Validated constructor; pinned nodes must already be zero.
    pub fn new(domain: &DomainSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Shape(format!(
                "{} values for {} nodes",
                values.len(),
                domain.len()
            )));
        }
        check_finite(&values)?;
        if let Some(i) = (0..values.len()).find(|&i| values[i] != 0.0 && domain.is_pinned(i)) {
            return Err(Error::Validation(format!("boundary node {i} is not zero")));
        }
        Ok(Self {
            domain: domain.clone(),
            values,
        })
    }

    pub(crate) fn from_raw(domain: &DomainSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.len());
        Self {
            domain: domain.clone(),
            values,
        }
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self::from_raw(&self.domain, self.values.iter().map(|v| lambda * v).collect())
    }

    /// `self + lambda·other`.
    pub fn add_scaled(&self, lambda: f64, other: &Field) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + lambda * b)
            .collect();
        Ok(Self::from_raw(&self.domain, values))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// `Σ self·other hⁿ`.
    pub fn inner(&self, other: &Field) -> f64 {
        dot(&self.values, &other.values) * self.domain.cell_volume()
    }

    /// CSV with header `x1,...,xn,value`, rows in flat index order, numbers
    /// printed with 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let n = self.domain.dim;
        let header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        let mut line = String::new();
        for (i, v) in self.values.iter().enumerate() {
            line.clear();
            for x in self.domain.coords(i) {
                line.push_str(&format_sig17(x));
                line.push(',');
            }
            line.push_str(&format_sig17(*v));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Inverse of [`Field::write_csv`]; the grid is recovered from the node
    /// coordinates and the boundary rule must be supplied.
    pub fn read_csv(input: impl BufRead, boundary: BoundaryRule) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty file".into(),
            })??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let dim = cols.len().saturating_sub(1);
        let expected: Vec<String> = (1..=dim).map(|k| format!("x{k}")).chain(["value".into()]).collect();
        if dim == 0 || cols != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("bad header {header:?}"),
            });
        }
        let mut first: Option<Vec<f64>> = None;
        let mut last: Vec<f64> = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let nums = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: lineno + 2,
                    message: e.to_string(),
                })?;
            if nums.len() != dim + 1 {
                return Err(Error::Parse {
                    line: lineno + 2,
                    message: format!("expected {} columns, found {}", dim + 1, nums.len()),
                });
            }
            if first.is_none() {
                first = Some(nums[..dim].to_vec());
            }
            last = nums[..dim].to_vec();
            values.push(nums[dim]);
        }
        let first = first.ok_or_else(|| Error::Parse {
            line: 2,
            message: "no data rows".into(),
        })?;
        let points = (values.len() as f64).powf(1.0 / dim as f64).round() as usize;
        if points.pow(dim as u32) != values.len() {
            return Err(Error::Shape(format!("{} rows is not a full grid", values.len())));
        }
        let half_width = -first[0];
        let domain = DomainSpec::new(dim, half_width, points, boundary)?;
        let h = domain.spacing();
        let expect_last = -half_width + (points - 1) as f64 * h;
        if last.iter().any(|x| (x - expect_last).abs() > 1e-9 * half_width.max(1.0)) {
            return Err(Error::Shape("coordinates do not match a centred grid".into()));
        }
        Field::new(&domain, values)
    }
}

/// Shortest form carrying 17 significant digits.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One n-vector per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    domain: DomainSpec,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(domain: &DomainSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() * domain.dim {
            return Err(Error::Shape(format!(
                "{} values for {} cells of dimension {}",
                values.len(),
                domain.len(),
                domain.dim
            )));
        }
        check_finite(&values)?;
        Ok(Self {
            domain: domain.clone(),
            values,
        })
    }

    pub fn constant(domain: &DomainSpec, v: &[f64]) -> Result<Self> {
        if v.len() != domain.dim {
            return Err(Error::Shape("vector length differs from dimension".into()));
        }
        Self::new(domain, v.iter().copied().cycle().take(domain.len() * domain.dim).collect())
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell(&self, idx: usize) -> &[f64] {
        let n = self.domain.dim;
        &self.values[idx * n..(idx + 1) * n]
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| lambda * v).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward differences of nodal values into `out` (cell-major, `n` per cell).
pub(crate) fn forward_gradient(domain: &DomainSpec, u: &[f64], out: &mut [f64]) {
    let n = domain.dim;
    let m = domain.points;
    let inv_h = 1.0 / domain.spacing();
    let periodic = domain.boundary == BoundaryRule::Periodic;
    for k in 0..n {
        let stride = domain.stride(k);
        for idx in 0..u.len() {
            let j = (idx / stride) % m;
            let next = if j + 1 < m {
                u[idx + stride]
            } else if periodic {
                u[idx + stride - m * stride]
            } else {
                0.0
            };
            out[idx * n + k] = (next - u[idx]) * inv_h;
        }
    }
}

/// Transpose of [`forward_gradient`]: `Σ_cells ∇u·w = Σ_nodes u·(Dᵀw)`.
/// Pinned nodes receive zero.
pub(crate) fn gradient_adjoint(domain: &DomainSpec, w: &[f64], out: &mut [f64]) {
    let n = domain.dim;
    let m = domain.points;
    let inv_h = 1.0 / domain.spacing();
    let periodic = domain.boundary == BoundaryRule::Periodic;
    out.iter_mut().for_each(|x| *x = 0.0);
    for k in 0..n {
        let stride = domain.stride(k);
        for idx in 0..out.len() {
            let j = (idx / stride) % m;
            let prev = if j > 0 {
                w[(idx - stride) * n + k]
            } else if periodic {
                w[(idx + (m - 1) * stride) * n + k]
            } else {
                0.0
            };
            out[idx] += (prev - w[idx * n + k]) * inv_h;
        }
    }
    if !periodic {
        for (idx, x) in out.iter_mut().enumerate() {
            if domain.is_pinned(idx) {
                *x = 0.0;
            }
        }
    }
}

/// Discrete gradient by forward differences, wrapped under the periodic rule.
pub fn gradient_field(u: &Field) -> VectorField {
    let mut out = vec![0.0; u.domain.len() * u.domain.dim];
    forward_gradient(&u.domain, &u.values, &mut out);
    VectorField {
        domain: u.domain.clone(),
        values: out,
    }
}

/// `−div_h w`, the adjoint of [`gradient_field`].
pub fn divergence_adjoint(w: &VectorField) -> Field {
    let mut out = vec![0.0; w.domain.len()];
    gradient_adjoint(&w.domain, &w.values, &mut out);
    Field::from_raw(&w.domain, out)
}

/// A grid function integrated by the midpoint rule.
pub trait GridData {
    fn domain(&self) -> &DomainSpec;
    /// Values per node (1) or per cell (`n`).
    fn components(&self) -> usize;
    fn raw(&self) -> &[f64];
}

impl GridData for Field {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    fn components(&self) -> usize {
        1
    }
    fn raw(&self) -> &[f64] {
        &self.values
    }
}

impl GridData for VectorField {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }
    fn components(&self) -> usize {
        self.domain.dim
    }
    fn raw(&self) -> &[f64] {
        &self.values
    }
}

/// A growth function that can be integrated over grid data.
///
/// Scalar functions act on the Euclidean length of each grid value.
pub trait Gauge {
    /// Required number of components, `None` for scalar functions.
    fn components(&self) -> Option<usize>;
    fn eval_point(&self, v: &[f64]) -> f64;
    /// `Σ cᵢ |vᵢ|^{pᵢ}` style decomposition: per-point contributions to
    /// `(exponent, weight)` terms so that `G(v/k) = Σ weight·k^{−exponent}`.
    fn power_terms(&self) -> Option<Vec<(usize, f64, f64)>>;
}

impl Gauge for AnisotropicGFunction {
    fn components(&self) -> Option<usize> {
        Some(self.dim())
    }
    fn eval_point(&self, v: &[f64]) -> f64 {
        self.value(v)
    }
    fn power_terms(&self) -> Option<Vec<(usize, f64, f64)>> {
        match self.kind() {
            GKind::PowerSum {
                exponents,
                coefficients,
            } => Some(
                exponents
                    .iter()
                    .zip(coefficients)
                    .enumerate()
                    .map(|(k, (p, a))| (k, *p, *a))
                    .collect(),
            ),
            GKind::Callable { .. } => None,
        }
    }
}

/// Marker index for a term acting on the Euclidean length.
const RADIAL: usize = usize::MAX;

impl Gauge for MonotoneScalarFunction {
    fn components(&self) -> Option<usize> {
        None
    }
    fn eval_point(&self, v: &[f64]) -> f64 {
        let r = if v.len() == 1 { v[0].abs() } else { crate::sampling::norm2(v) };
        self.value(r)
    }
    fn power_terms(&self) -> Option<Vec<(usize, f64, f64)>> {
        match self.kind() {
            ScalarKind::Power { exponent, scale } => Some(vec![(RADIAL, *exponent, *scale)]),
            ScalarKind::Table(_) => None,
        }
    }
}

fn check_shapes(g: &(impl Gauge + ?Sized), w: &(impl GridData + ?Sized)) -> Result<()> {
    match g.components() {
        Some(c) if c != w.components() => Err(Error::Shape(format!(
            "function of {c} variables applied to data with {} components",
            w.components()
        ))),
        _ => Ok(()),
    }
}

/// Homogeneous decomposition of the modular: `∫G(w/k) = Σ weight·k^{−exp}`.
fn power_modular(g: &(impl Gauge + ?Sized), w: &(impl GridData + ?Sized)) -> Option<Vec<(f64, f64)>> {
    let terms = g.power_terms()?;
    let c = w.components();
    let vol = w.domain().cell_volume();
    let raw = w.raw();
    Some(
        terms
            .into_iter()
            .map(|(k, p, a)| {
                let sum: f64 = if k == RADIAL {
                    raw.chunks(c)
                        .map(|v| {
                            let r = if c == 1 { v[0].abs() } else { crate::sampling::norm2(v) };
                            if r == 0.0 { 0.0 } else { r.powf(p) }
                        })
                        .sum()
                } else {
                    raw.chunks(c)
                        .map(|v| {
                            let x = v[k].abs();
                            if x == 0.0 { 0.0 } else { x.powf(p) }
                        })
                        .sum()
                };
                (p, a * sum * vol)
            })
            .collect(),
    )
}

fn modular_scaled(g: &(impl Gauge + ?Sized), w: &(impl GridData + ?Sized), inv_k: f64) -> f64 {
    let c = w.components();
    let mut buf = vec![0.0; c];
    let mut sum = 0.0;
    for v in w.raw().chunks(c) {
        for (b, x) in buf.iter_mut().zip(v) {
            *b = x * inv_k;
        }
        sum += g.eval_point(&buf);
    }
    sum * w.domain().cell_volume()
}

/// Midpoint-rule modular `Σ G(w) hⁿ`.
pub fn modular(g: &(impl Gauge + ?Sized), w: &(impl GridData + ?Sized)) -> Result<f64> {
    check_shapes(g, w)?;
    let value = modular_scaled(g, w, 1.0);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("modular = {value}")));
    }
    Ok(value)
}

pub const LUXEMBURG_RTOL: f64 = 1e-10;
const K_LO: f64 = 1e-12;
const K_HI: f64 = 1e12;

/// `inf{k > 0 : Σ G(w/k) hⁿ ≤ 1}` by bisection in `ln k`.
pub fn luxemburg_norm(g: &(impl Gauge + ?Sized), w: &(impl GridData + ?Sized)) -> Result<f64> {
    check_shapes(g, w)?;
    if w.raw().iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }
    check_finite(w.raw())?;
    let terms = power_modular(g, w);
    let eval = |k: f64| -> f64 {
        match &terms {
            Some(ts) => ts.iter().map(|(p, wgt)| wgt * k.powf(-p)).sum(),
            None => modular_scaled(g, w, 1.0 / k),
        }
    };
    let (mut lo, mut hi) = (K_LO, K_HI);
    let mut expansions = 0;
    while !(eval(lo) > 1.0) {
        lo *= 0.5;
        expansions += 1;
        if expansions > 2000 || lo == 0.0 {
            return Err(Error::NotBracketed("modular stays below 1 as k → 0".into()));
        }
    }
    expansions = 0;
    while !(eval(hi) <= 1.0) {
        hi *= 2.0;
        expansions += 1;
        if expansions > 2000 || !hi.is_finite() {
            return Err(Error::NotBracketed("modular stays above 1 as k → ∞".into()));
        }
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..400 {
        if b - a <= LUXEMBURG_RTOL {
            break;
        }
        let mid = 0.5 * (a + b);
        if eval(mid.exp()) <= 1.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(b.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SobolevNorm {
    pub grad_part: f64,
    pub zero_order_part: f64,
    pub total: f64,
}

/// `‖∇u‖_Φ + ‖u‖_N`.
pub fn sobolev_norm(
    phi: &AnisotropicGFunction,
    n_func: &MonotoneScalarFunction,
    u: &Field,
) -> Result<SobolevNorm> {
    let grad_part = luxemburg_norm(phi, &gradient_field(u))?;
    let zero_order_part = luxemburg_norm(n_func, u)?;
    Ok(SobolevNorm {
        grad_part,
        zero_order_part,
        total: grad_part + zero_order_part,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ModularNormReport {
    pub norm: f64,
    pub modular: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// `modular − lower` and `upper − modular`.
    pub slack_lower: f64,
    pub slack_upper: f64,
}

/// Relative tolerance absorbing the bisection error of the norm.
const SANDWICH_RTOL: f64 = 1e-8;

/// Check `ξ(‖w‖) ≤ ∫G(w) ≤ ξ̄(‖w‖)` for the power envelopes of `idx`.
pub fn verify_modular_norm_bounds(
    g: &(impl Gauge + ?Sized),
    w: &(impl GridData + ?Sized),
    idx: &GrowthIndices,
) -> Result<ModularNormReport> {
    let norm = luxemburg_norm(g, w)?;
    let modular = modular(g, w)?;
    let (lower, upper) = if norm == 0.0 { (0.0, 0.0) } else { xi_bounds(idx, norm) };
    let tol = SANDWICH_RTOL * modular.max(upper);
    Ok(ModularNormReport {
        norm,
        modular,
        lower,
        upper,
        lower_ok: lower <= modular + tol,
        upper_ok: modular <= upper + tol,
        slack_lower: modular - lower,
        slack_upper: upper - modular,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SobolevReport {
    /// `‖u‖_{Φₙ}/‖∇u‖_Φ` per field, 0 for the zero field.
    pub norm_ratios: Vec<f64>,
    pub k_est: f64,
    /// Smallest `K` of the supplied grid for which the integral form
    /// `∫Φₙ(|u|/(K (∫Φ(∇u))^{1/n})) ≤ ∫Φ(∇u)` holds for every field.
    pub k_integral: Option<f64>,
}

/// Empirical constant in `‖u‖_{Φₙ} ≤ K‖∇u‖_Φ` over a family of
/// compactly supported fields.
pub fn verify_sobolev_inequality(
    phi: &AnisotropicGFunction,
    phi_n: &MonotoneScalarFunction,
    fields: &[Field],
    k_grid: &[f64],
) -> Result<SobolevReport> {
    let mut norm_ratios = Vec::with_capacity(fields.len());
    let mut integral_data = Vec::with_capacity(fields.len());
    for u in fields {
        if u.domain.boundary != BoundaryRule::ZeroDirichlet {
            return Err(Error::InvalidArgument("fields must be compactly supported".into()));
        }
        if u.is_zero() {
            norm_ratios.push(0.0);
            continue;
        }
        let grad = gradient_field(u);
        let grad_norm = luxemburg_norm(phi, &grad)?;
        if grad_norm == 0.0 {
            return Err(Error::Validation("nonzero field with zero gradient".into()));
        }
        norm_ratios.push(luxemburg_norm(phi_n, u)? / grad_norm);
        integral_data.push((u, modular(phi, &grad)?));
    }
    let k_est = norm_ratios.iter().fold(0.0, |m: f64, r| m.max(*r));
    let mut grid = k_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut k_integral = None;
    'grid: for &k in &grid {
        for (u, energy) in &integral_data {
            let denom = k * energy.powf(1.0 / u.domain.dim as f64);
            if modular(phi_n, &u.scaled(1.0 / denom))? > *energy {
                continue 'grid;
            }
        }
        k_integral = Some(k);
        break;
    }
    Ok(SobolevReport {
        norm_ratios,
        k_est,
        k_integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::young::growth_indices;
    use crate::sampling::SamplePlan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dom(n: usize, l: f64, m: usize, b: BoundaryRule) -> DomainSpec {
        DomainSpec::new(n, l, m, b).unwrap()
    }

    fn sq() -> MonotoneScalarFunction {
        MonotoneScalarFunction::power(2.0, 1.0).unwrap()
    }

    fn random_field(d: &DomainSpec, rng: &mut ChaCha8Rng, amp: f64) -> Field {
        Field::from_fn(d, |_| amp * (2.0 * rng.random::<f64>() - 1.0)).unwrap()
    }

    #[test]
    fn domain_validation() {
        assert!(DomainSpec::new(2, 0.0, 16, BoundaryRule::Periodic).is_err());
        assert!(DomainSpec::new(2, 1.0, 4, BoundaryRule::Periodic).is_err());
        let d = dom(3, 8.0, 32, BoundaryRule::ZeroDirichlet);
        assert_eq!(d.spacing(), 0.5);
        assert_eq!(d.len(), 32768);
        let idx = d.flat_index(&[3, 5, 7]);
        assert_eq!(d.multi_index(idx), vec![3, 5, 7]);
        assert_eq!(d.coords(d.flat_index(&[16, 16, 16])), vec![0.0, 0.0, 0.0]);
        assert!(d.is_pinned(d.flat_index(&[0, 5, 7])));
        assert!(!d.is_pinned(d.flat_index(&[31, 5, 7])));
    }

    #[test]
    fn field_rejects_bad_values() {
        let d = dom(2, 1.0, 8, BoundaryRule::ZeroDirichlet);
        assert!(Field::new(&d, vec![0.0; 10]).is_err());
        let mut v = vec![0.0; 64];
        v[9] = f64::NAN;
        assert!(matches!(Field::new(&d, v), Err(Error::NonFinite(_))));
        let mut v = vec![0.0; 64];
        v[0] = 1.0;
        assert!(matches!(Field::new(&d, v), Err(Error::Validation(_))));
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let d = dom(2, 1.0, 8, BoundaryRule::Periodic);
        let u = Field::from_fn(&d, |_| 3.5).unwrap();
        assert!(gradient_field(&u).is_zero());
    }

    #[test]
    fn gradient_of_linear_function() {
        let d = dom(2, 2.0, 16, BoundaryRule::ZeroDirichlet);
        let u = Field::from_fn(&d, |x| x[0]).unwrap();
        let g = gradient_field(&u);
        for idx in 0..d.len() {
            let j = d.multi_index(idx);
            if j.iter().all(|&a| a >= 1 && a + 1 < d.points) {
                assert!((g.cell(idx)[0] - 1.0).abs() < 1e-12);
                assert!(g.cell(idx)[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn periodic_gradient_error_is_first_order() {
        let l = 2.0;
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&m| {
                let d = dom(2, l, m, BoundaryRule::Periodic);
                let k = std::f64::consts::PI / l;
                let u = Field::from_fn(&d, |x| (k * x[0]).sin()).unwrap();
                let g = gradient_field(&u);
                (0..d.len())
                    .map(|i| {
                        let x = d.coords(i);
                        // forward difference is centred at the cell midpoint
                        (g.cell(i)[0] - k * (k * x[0]).cos()).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let h = 2.0 * l / 16.0;
        let k = std::f64::consts::PI / l;
        // Taylor bound: |D⁺u − u'| ≤ h/2 · max|u''|
        assert!(errs[0] <= 0.5 * h * k * k + 1e-12);
        assert!(errs[1] < 0.55 * errs[0] && errs[2] < 0.55 * errs[1]);
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for b in [BoundaryRule::Periodic, BoundaryRule::ZeroDirichlet] {
            let d = dom(3, 1.5, 8, b);
            let u = random_field(&d, &mut rng, 1.0);
            let w = VectorField::new(
                &d,
                (0..d.len() * 3).map(|_| rng.random::<f64>() - 0.5).collect(),
            )
            .unwrap();
            let lhs = dot(gradient_field(&u).values(), w.values());
            let rhs = dot(u.values(), divergence_adjoint(&w).values());
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{b:?}");
        }
    }

    #[test]
    fn modular_examples() {
        let d = dom(2, 0.5, 8, BoundaryRule::Periodic);
        assert_eq!(modular(&sq(), &Field::zeros(&d)).unwrap(), 0.0);
        let c = Field::from_fn(&d, |_| 1.7).unwrap();
        assert!((modular(&sq(), &c).unwrap() - 1.7 * 1.7).abs() < 1e-12);
        let d = dom(2, 1.5, 8, BoundaryRule::Periodic);
        let phi = AnisotropicGFunction::power_sum_unit(&[2.0, 2.0]).unwrap();
        let w = VectorField::constant(&d, &[1.0, 1.0]).unwrap();
        assert!((modular(&phi, &w).unwrap() - 2.0 * 9.0).abs() < 1e-12);
        let bad = VectorField::constant(&dom(3, 1.0, 8, BoundaryRule::Periodic), &[1.0; 3]).unwrap();
        assert!(matches!(modular(&phi, &bad), Err(Error::Shape(_))));
    }

    #[test]
    fn luxemburg_examples() {
        let d = dom(2, 0.5, 8, BoundaryRule::Periodic);
        let c = Field::from_fn(&d, |_| 2.5).unwrap();
        assert!((luxemburg_norm(&sq(), &c).unwrap() - 2.5).abs() < 1e-9);
        assert_eq!(luxemburg_norm(&sq(), &Field::zeros(&d)).unwrap(), 0.0);
        let quartic = MonotoneScalarFunction::power(4.0, 1.0).unwrap();
        let d = dom(2, 2.0, 8, BoundaryRule::Periodic);
        let c = Field::from_fn(&d, |_| 0.3).unwrap();
        assert!((luxemburg_norm(&quartic, &c).unwrap() - 0.6).abs() < 1e-9);
    }

    #[test]
    fn luxemburg_generic_path_matches_power_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = dom(2, 1.0, 8, BoundaryRule::Periodic);
        let phi = AnisotropicGFunction::power_sum_unit(&[2.0, 7.0]).unwrap();
        let same = AnisotropicGFunction::callable(
            2,
            std::sync::Arc::new(|v: &[f64]| v[0].abs().powi(2) + v[1].abs().powi(7)),
        )
        .unwrap();
        let u = random_field(&d, &mut rng, 3.0);
        let g = gradient_field(&u);
        let a = luxemburg_norm(&phi, &g).unwrap();
        let b = luxemburg_norm(&same, &g).unwrap();
        assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn sobolev_norm_examples() {
        let d = dom(2, 2.0, 16, BoundaryRule::ZeroDirichlet);
        let phi = AnisotropicGFunction::power_sum_unit(&[2.0, 3.0]).unwrap();
        let n = MonotoneScalarFunction::power(2.5, 1.0).unwrap();
        let z = sobolev_norm(&phi, &n, &Field::zeros(&d)).unwrap();
        assert_eq!((z.grad_part, z.zero_order_part, z.total), (0.0, 0.0, 0.0));
        let u = Field::from_fn(&d, |x| (-(x[0] * x[0] + x[1] * x[1])).exp()).unwrap();
        let a = sobolev_norm(&phi, &n, &u).unwrap().total;
        let b = sobolev_norm(&phi, &n, &u.scaled(2.0)).unwrap().total;
        assert!((b - 2.0 * a).abs() <= 1e-6 * a);
    }

    #[test]
    fn sobolev_norm_grid_refinement() {
        let phi = AnisotropicGFunction::power_sum_unit(&[2.0, 2.0]).unwrap();
        let n = MonotoneScalarFunction::power(2.0, 1.0).unwrap();
        let l = 2.0;
        let total = |m: usize| {
            let d = dom(2, l, m, BoundaryRule::ZeroDirichlet);
            let u = Field::from_fn(&d, |x| (1.0 - (x[0] * x[0] + x[1] * x[1]).sqrt() / l).max(0.0))
                .unwrap();
            sobolev_norm(&phi, &n, &u).unwrap().total
        };
        let coarse = total(32);
        let fine = total(128);
        assert!((coarse - fine).abs() <= 0.05 * fine, "{coarse} vs {fine}");
    }

    #[test]
    fn sandwich_is_tight_for_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = dom(2, 1.0, 8, BoundaryRule::Periodic);
        let idx = GrowthIndices::new(2.0, 2.0);
        for _ in 0..5 {
            let u = random_field(&d, &mut rng, 4.0);
            let r = verify_modular_norm_bounds(&sq(), &u, &idx).unwrap();
            assert!(r.lower_ok && r.upper_ok);
            assert!(r.slack_lower.abs() <= 1e-6 * r.modular);
            assert!(r.slack_upper.abs() <= 1e-6 * r.modular);
        }
        let r = verify_modular_norm_bounds(&sq(), &Field::zeros(&d), &idx).unwrap();
        assert_eq!((r.lower, r.modular, r.upper), (0.0, 0.0, 0.0));
        assert!(r.lower_ok && r.upper_ok);
    }

    #[test]
    fn sandwich_for_anisotropic_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let phi = AnisotropicGFunction::power_sum_unit(&[2.0, 7.0]).unwrap();
        let idx = growth_indices(&phi, &SamplePlan::default()).unwrap();
        let d = dom(2, 1.0, 8, BoundaryRule::Periodic);
        for k in 0..20 {
            let amp = 10f64.powf(-2.0 + 4.0 * k as f64 / 19.0);
            let w = VectorField::new(&d, (0..d.len() * 2).map(|_| amp * (rng.random::<f64>() - 0.5)).collect())
                .unwrap();
            let r = verify_modular_norm_bounds(&phi, &w, &idx).unwrap();
            assert!(r.lower_ok && r.upper_ok, "{r:?}");
        }
    }

    #[test]
    fn sobolev_inequality_zero_field() {
        let d = dom(3, 2.0, 8, BoundaryRule::ZeroDirichlet);
        let phi = AnisotropicGFunction::power_sum_unit(&[2.0, 2.0, 2.0]).unwrap();
        let pn = MonotoneScalarFunction::power(6.0, 1.0).unwrap();
        let r = verify_sobolev_inequality(&phi, &pn, &[Field::zeros(&d)], &[1.0]).unwrap();
        assert_eq!(r.norm_ratios, vec![0.0]);
        let periodic = Field::zeros(&dom(3, 2.0, 8, BoundaryRule::Periodic));
        assert!(verify_sobolev_inequality(&phi, &pn, &[periodic], &[1.0]).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for b in [BoundaryRule::Periodic, BoundaryRule::ZeroDirichlet] {
            let d = dom(2, 1.3, 8, b);
            let u = Field::from_fn(&d, |_| rng.random::<f64>() * 1e-7 - 3e-8).unwrap();
            let mut buf = Vec::new();
            u.write_csv(&mut buf).unwrap();
            let back = Field::read_csv(buf.as_slice(), b).unwrap();
            assert_eq!(back.domain(), u.domain());
            assert!(back.values().iter().zip(u.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        assert!(Field::read_csv("x1,y\n".as_bytes(), BoundaryRule::Periodic).is_err());
        assert!(Field::read_csv("x1,x2,value\n1,2\n".as_bytes(), BoundaryRule::Periodic).is_err());
    }
}
