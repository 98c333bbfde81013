//! Isotropic rearrangement `Φ∘` of a G-function through the Lebesgue volume
//! of its sublevel sets.
//!
//! `Φ∘(r)` is the least `t` whose sublevel set `{Φ ≤ t}` has the volume of
//! the ball of radius `r`. When the volume is discontinuous in `t` (flat
//! pieces of a callable `Φ`) the least-`t` convention makes `Φ∘` the
//! left-continuous choice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::sampling::SamplePlan;
use crate::young::{AnisotropicGFunction, MonotoneScalarFunction};

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeModel {
    /// Closed-form Dirichlet integral, power sums only.
    ExactDirichlet,
    /// Hit-or-miss sampling in an axis-aligned box around the sublevel set.
    MonteCarlo {
        samples: usize,
        seed: u64,
        inflation: f64,
    },
}

impl VolumeModel {
    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        VolumeModel::MonteCarlo {
            samples,
            seed,
            inflation: 1.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub stderr: f64,
}

/// Volume of the Euclidean unit ball in `ℝⁿ`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    std::f64::consts::PI.powf(h) / gamma(h + 1.0)
}

/// `(D, σ)` with `λ({Σ aᵢ|vᵢ|^{pᵢ} ≤ t}) = D t^σ`.
pub fn dirichlet_constants(exponents: &[f64], coefficients: &[f64]) -> (f64, f64) {
    let sigma: f64 = exponents.iter().map(|p| 1.0 / p).sum();
    let prod: f64 = exponents
        .iter()
        .zip(coefficients)
        .map(|(p, a)| 2.0 * gamma(1.0 + 1.0 / p) * a.powf(-1.0 / p))
        .product();
    (prod / gamma(1.0 + sigma), sigma)
}

/// `λ({v ∈ ℝⁿ : Φ(v) ≤ t})`.
pub fn level_set_volume(
    phi: &AnisotropicGFunction,
    t: f64,
    model: &VolumeModel,
) -> Result<VolumeEstimate> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("level t = {t} must be > 0")));
    }
    match model {
        VolumeModel::ExactDirichlet => {
            let (p, a) = phi.power_sum_parts().ok_or(Error::ExactVolumeUnsupported)?;
            let (d, sigma) = dirichlet_constants(p, a);
            Ok(VolumeEstimate {
                volume: d * t.powf(sigma),
                stderr: 0.0,
            })
        }
        VolumeModel::MonteCarlo {
            samples,
            seed,
            inflation,
        } => {
            if *samples == 0 {
                return Err(Error::InvalidArgument("zero Monte-Carlo samples".into()));
            }
            let half_widths = bounding_box(phi, t, *inflation)?;
            let box_volume: f64 = half_widths.iter().map(|b| 2.0 * b).product();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut v = vec![0.0; phi.dim()];
            let mut hits = 0usize;
            for _ in 0..*samples {
                for (x, b) in v.iter_mut().zip(&half_widths) {
                    *x = rng.random_range(-*b..*b);
                }
                if phi.value(&v) <= t {
                    hits += 1;
                }
            }
            let frac = hits as f64 / *samples as f64;
            Ok(VolumeEstimate {
                volume: frac * box_volume,
                stderr: box_volume * (frac * (1.0 - frac) / *samples as f64).sqrt(),
            })
        }
    }
}

/// Axis half-widths of a box containing `{Φ ≤ t}`.
///
/// Power sums use the exact intercepts `(t/aᵢ)^{1/pᵢ}`. Callable functions
/// ray-march along the sample-plan directions and take the largest
/// projection of the boundary point on each axis; since the directions only
/// sample the support function, the inflation is at least 1.1 there.
fn bounding_box(phi: &AnisotropicGFunction, t: f64, inflation: f64) -> Result<Vec<f64>> {
    if let Some((p, a)) = phi.power_sum_parts() {
        return Ok(p
            .iter()
            .zip(a)
            .map(|(p, a)| (t / a).powf(1.0 / p) * inflation)
            .collect());
    }
    let dirs = SamplePlan::default().directions(phi.dim());
    let mut widths = vec![0.0f64; phi.dim()];
    for d in &dirs {
        let rho = radial_extent(phi, d, t)?;
        for (w, x) in widths.iter_mut().zip(d) {
            *w = w.max(rho * x.abs());
        }
    }
    Ok(widths.into_iter().map(|w| w * inflation.max(1.1)).collect())
}

/// Largest `ρ` with `Φ(ρd) ≤ t` along the unit direction `d`.
fn radial_extent(phi: &AnisotropicGFunction, d: &[f64], t: f64) -> Result<f64> {
    let at = |r: f64| phi.value(&d.iter().map(|x| x * r).collect::<Vec<_>>());
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut steps = 0;
    while at(hi) <= t {
        lo = hi;
        hi *= 2.0;
        steps += 1;
        if steps > 2000 {
            return Err(Error::NotBracketed("sublevel set appears unbounded".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) <= t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Relative bisection tolerance on `t`.
pub const BISECTION_RTOL: f64 = 1e-8;
pub const BISECTION_MAX_ITER: usize = 200;

/// Tabulate `Φ∘` on the given radii.
pub fn compute_phi_circ(
    phi: &AnisotropicGFunction,
    radii: &[f64],
    model: &VolumeModel,
) -> Result<MonotoneScalarFunction> {
    phi.check_n_function(&SamplePlan::default())?;
    let n = phi.dim();
    let omega = unit_ball_volume(n);
    let volume = |t: f64| level_set_volume(phi, t, model).map(|e| e.volume);
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let target = omega * r.powi(n as i32);
        values.push(least_level_with_volume(&volume, target, phi, r)?);
    }
    // sampling noise can break monotonicity; keep the running max and drop
    // repeated values so the table is strictly increasing
    let mut t_out = Vec::with_capacity(radii.len());
    let mut v_out: Vec<f64> = Vec::with_capacity(radii.len());
    for (&r, &v) in radii.iter().zip(&values) {
        let v = v_out.last().map_or(v, |last| v.max(*last));
        if v_out.last().is_some_and(|last| v <= *last) {
            continue;
        }
        t_out.push(r);
        v_out.push(v);
    }
    MonotoneScalarFunction::table_with_fitted_tails(t_out, v_out)
}

fn least_level_with_volume(
    volume: &dyn Fn(f64) -> Result<f64>,
    target: f64,
    phi: &AnisotropicGFunction,
    r: f64,
) -> Result<f64> {
    let mut probe = vec![0.0; phi.dim()];
    probe[0] = r;
    let guess = phi.value(&probe).max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = (guess, guess);
    let mut expansions = 0;
    while volume(hi)? < target {
        hi *= 4.0;
        expansions += 1;
        if expansions > BISECTION_MAX_ITER || !hi.is_finite() {
            return Err(Error::NotBracketed(format!("no upper level for radius {r}")));
        }
    }
    expansions = 0;
    while lo > 0.0 && volume(lo)? >= target {
        lo /= 4.0;
        expansions += 1;
        if expansions > BISECTION_MAX_ITER {
            return Err(Error::NotBracketed(format!("no lower level for radius {r}")));
        }
    }
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_RTOL * hi {
            break;
        }
        let mid = (lo * hi).sqrt();
        if volume(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Least `t` with `f(t) ≥ y`.
pub fn left_cont_inverse(f: &MonotoneScalarFunction, y: f64) -> Result<f64> {
    f.inverse(y)
}

/// Harmonic-mean exponent `p̄ = n / Σ 1/pᵢ` and the constant `κ` with
/// `Φ∘(r) = κ r^{p̄}` for a power sum.
pub fn power_sum_rearrangement(exponents: &[f64], coefficients: &[f64]) -> (f64, f64) {
    let n = exponents.len();
    let (d, sigma) = dirichlet_constants(exponents, coefficients);
    let p_bar = n as f64 / sigma;
    let kappa = (unit_ball_volume(n) / d).powf(1.0 / sigma);
    (p_bar, kappa)
}
