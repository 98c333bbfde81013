//! Sobolev conjugate `Φₙ = Φ∘ ∘ H⁻¹`, the integrability conditions on `Φ∘`
//! and the essential-domination relations between growth functions.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::sampling::{loglog_fit, SamplePlan, Verdict};
use crate::young::{AnisotropicGFunction, Interpolation, MonotoneScalarFunction, ScalarKind};

/// Margin on the exponent tests: `(1−q₀)/(n−1) > −1 + EXPONENT_MARGIN` for
/// a convergent lower integral, `(1−q∞)/(n−1) ≥ −1 − EXPONENT_MARGIN` for a
/// divergent upper one. The borderline power `q = n` therefore fails (Φ₀)
/// and passes (Φ₁), matching the logarithmic behaviour of the integrand.
pub const EXPONENT_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct IntegrabilityReport {
    pub phi0: Verdict,
    /// `∫₀¹ (t/Φ∘(t))^{1/(n−1)} dt` when finite.
    pub phi0_value: Option<f64>,
    pub phi1: Verdict,
    pub lower_exponent: f64,
    pub upper_exponent: f64,
}

/// Decide (Φ₀) and (Φ₁) from the endpoint power laws of `Φ∘`.
pub fn check_integrability(phi_circ: &MonotoneScalarFunction, n: usize) -> Result<IntegrabilityReport> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("dimension {n} < 2")));
    }
    let (q0, q_inf) = phi_circ.endpoint_exponents()?;
    let nm1 = (n - 1) as f64;
    let a0 = (1.0 - q0) / nm1;
    let a_inf = (1.0 - q_inf) / nm1;
    let phi0 = if a0 > -1.0 + EXPONENT_MARGIN {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let phi1 = if a_inf >= -1.0 - EXPONENT_MARGIN {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let phi0_value = if phi0.is_pass() {
        Some(SobolevScale::build(phi_circ, n)?.integral(1.0))
    } else {
        None
    };
    Ok(IntegrabilityReport {
        phi0,
        phi0_value,
        phi1,
        lower_exponent: q0,
        upper_exponent: q_inf,
    })
}

/// Power-law piece `C t^a` of the integrand `(t/Φ∘(t))^{1/(n−1)}`.
#[derive(Clone, Copy, Debug)]
struct PowerTail {
    coeff: f64,
    exponent: f64,
}

impl PowerTail {
    /// `∫_{lo}^{hi} C t^a dt`, with `lo = 0` allowed when `a > −1`.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let b = self.exponent + 1.0;
        if b.abs() < 1e-12 {
            self.coeff * (hi / lo).ln()
        } else {
            self.coeff * (hi.powf(b) - lo.powf(b)) / b
        }
    }
}

/// The map `H(s) = (∫₀^s (t/Φ∘(t))^{1/(n−1)} dt)^{(n−1)/n}` with its inverse.
///
/// The integrand is integrated in closed form on the power-law tails of
/// `Φ∘` and by adaptive Gauss-Kronrod quadrature between table nodes.
#[derive(Clone, Debug)]
pub struct SobolevScale {
    phi_circ: MonotoneScalarFunction,
    n: usize,
    nodes: Vec<f64>,
    /// `∫₀^{nodes[k]}` of the integrand.
    cumulative: Vec<f64>,
    lower: PowerTail,
    upper: PowerTail,
}

impl SobolevScale {
    /// Requires (Φ₀); fails with [`Error::IntegrabilityFailed`] otherwise.
    pub fn build(phi_circ: &MonotoneScalarFunction, n: usize) -> Result<Self> {
        let (q0, q_inf) = phi_circ.endpoint_exponents()?;
        let nm1 = (n - 1) as f64;
        if (1.0 - q0) / nm1 <= -1.0 + EXPONENT_MARGIN {
            return Err(Error::IntegrabilityFailed { exponent: q0 });
        }
        let (nodes, node_values) = match phi_circ.kind() {
            ScalarKind::Power { scale, .. } => (vec![1.0], vec![*scale]),
            ScalarKind::Table(tab) => {
                if tab.interpolation != Interpolation::LogLog {
                    return Err(Error::InvalidArgument("H needs a log-log table".into()));
                }
                (tab.t.clone(), tab.values.clone())
            }
        };
        let tail = |t: f64, v: f64, q: f64| PowerTail {
            coeff: (t.powf(q) / v).powf(1.0 / nm1),
            exponent: (1.0 - q) / nm1,
        };
        let m = nodes.len() - 1;
        let lower = tail(nodes[0], node_values[0], q0);
        let upper = tail(nodes[m], node_values[m], q_inf);
        let mut scale = Self {
            phi_circ: phi_circ.clone(),
            n,
            cumulative: Vec::with_capacity(nodes.len()),
            nodes,
            lower,
            upper,
        };
        let mut acc = lower.integral(0.0, scale.nodes[0]);
        scale.cumulative.push(acc);
        for k in 0..m {
            acc += scale.segment_integral(scale.nodes[k], scale.nodes[k + 1]);
            scale.cumulative.push(acc);
        }
        Ok(scale)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    fn integrand(&self, t: f64) -> f64 {
        (t / self.phi_circ.value(t)).powf(1.0 / (self.n - 1) as f64)
    }

    /// Quadrature of the integrand over `[lo, hi]` inside the table, in the
    /// variable `u = ln t`.
    fn segment_integral(&self, lo: f64, hi: f64) -> f64 {
        let (v, _) = quadrature::integrate(
            |u: f64| {
                let t = u.exp();
                self.integrand(t) * t
            },
            lo.ln(),
            hi.ln(),
            0.0,
            1e-12,
            64,
        );
        v
    }

    /// `∫₀^s (t/Φ∘(t))^{1/(n−1)} dt`.
    pub fn integral(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let m = self.nodes.len() - 1;
        if s <= self.nodes[0] {
            return self.lower.integral(0.0, s);
        }
        if s >= self.nodes[m] {
            return self.cumulative[m] + self.upper.integral(self.nodes[m], s);
        }
        let k = self.nodes.partition_point(|x| *x <= s) - 1;
        self.cumulative[k] + self.segment_integral(self.nodes[k], s)
    }

    /// `H(s)`.
    pub fn value(&self, s: f64) -> f64 {
        let nm1 = (self.n - 1) as f64;
        self.integral(s).powf(nm1 / self.n as f64)
    }

    /// Left-continuous inverse of `H`; `+∞` beyond the supremum of `H` when
    /// the upper integral converges.
    pub fn inverse(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let nm1 = (self.n - 1) as f64;
        let target = r.powf(self.n as f64 / nm1);
        let m = self.nodes.len() - 1;
        if target <= self.cumulative[0] {
            let b = self.lower.exponent + 1.0;
            return (target * b / self.lower.coeff).powf(1.0 / b);
        }
        if target >= self.cumulative[m] {
            let extra = target - self.cumulative[m];
            let b = self.upper.exponent + 1.0;
            let tm = self.nodes[m];
            if b.abs() < 1e-12 {
                return tm * (extra / self.upper.coeff).exp();
            }
            let base = tm.powf(b) + extra * b / self.upper.coeff;
            return if base <= 0.0 {
                f64::INFINITY
            } else {
                base.powf(1.0 / b)
            };
        }
        // cumulative[k-1] < target <= cumulative[k]
        let k = self.cumulative.partition_point(|c| *c < target);
        let (mut lo, mut hi) = (self.nodes[k - 1].ln(), self.nodes[k].ln());
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let val = self.cumulative[k - 1] + self.segment_integral(self.nodes[k - 1], mid.exp());
            if val >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        hi.exp()
    }
}

/// `H(s)` for a rearrangement satisfying (Φ₀).
pub fn compute_h(phi_circ: &MonotoneScalarFunction, n: usize, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("s = {s} must be >= 0")));
    }
    Ok(SobolevScale::build(phi_circ, n)?.value(s))
}

/// Tabulate `Φₙ(r) = Φ∘(H⁻¹(r))` on `radii`.
///
/// Only the (Φ₁)-divergent case is built; when the upper integral
/// converges `Φₙ` jumps to infinity and the construction is refused.
pub fn compute_phi_n(
    phi_circ: &MonotoneScalarFunction,
    n: usize,
    radii: &[f64],
) -> Result<MonotoneScalarFunction> {
    let report = check_integrability(phi_circ, n)?;
    if !report.phi0.is_pass() {
        return Err(Error::IntegrabilityFailed {
            exponent: report.lower_exponent,
        });
    }
    if !report.phi1.is_pass() {
        return Err(Error::BoundedConjugate {
            p_bar: report.upper_exponent,
            n,
        });
    }
    let scale = SobolevScale::build(phi_circ, n)?;
    let mut t = Vec::with_capacity(radii.len());
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let s = scale.inverse(r);
        let v = phi_circ.value(s);
        if !(v.is_finite() && v > 0.0) {
            continue;
        }
        if values.last().is_some_and(|last| v <= *last) {
            continue;
        }
        t.push(r);
        values.push(v);
    }
    MonotoneScalarFunction::table_with_fitted_tails(t, values)
}

/// Least-squares log-log slope of `f` on `count` log-spaced points in `[lo, hi]`.
pub fn loglog_slope(f: &MonotoneScalarFunction, lo: f64, hi: f64, count: usize) -> f64 {
    let ts = crate::sampling::log_space(lo, hi, count);
    let vs: Vec<f64> = ts.iter().map(|t| f.value(*t)).collect();
    loglog_fit(&ts, &vs).0
}

/// Exact harmonic-mean and Sobolev exponents of a power sum.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugateExponents {
    pub p_bar: BigRational,
    /// `None` when `p̄ ≥ n` (the conjugate is bounded, outside (Φ₁)).
    pub p_bar_star: Option<BigRational>,
}

impl ConjugateExponents {
    pub fn p_bar_f64(&self) -> f64 {
        self.p_bar.to_f64().unwrap_or(f64::NAN)
    }

    pub fn p_bar_star_f64(&self) -> Option<f64> {
        self.p_bar_star.as_ref().and_then(|r| r.to_f64())
    }
}

/// `p̄ = n/Σ(1/pᵢ)` and `p̄* = n p̄/(n − p̄)` in exact rational arithmetic.
pub fn power_sum_conjugate_exponent(p: &[BigRational], n: usize) -> Result<ConjugateExponents> {
    if p.len() != n {
        return Err(Error::Shape(format!("{} exponents for dimension {n}", p.len())));
    }
    if p.iter().any(|x| *x <= BigRational::zero()) {
        return Err(Error::InvalidArgument("exponents must be positive".into()));
    }
    let n_r = BigRational::from_integer(BigInt::from(n));
    let sum: BigRational = p.iter().map(|x| x.recip()).fold(BigRational::zero(), |a, b| a + b);
    let p_bar = &n_r / sum;
    let p_bar_star = if p_bar < n_r {
        Some(&n_r * &p_bar / (&n_r - &p_bar))
    } else {
        None
    };
    Ok(ConjugateExponents { p_bar, p_bar_star })
}

/// Exact rational value of a decimal literal such as `2`, `1.8`, `-0.25`,
/// `2.5e-1` or a fraction `7/2`.
pub fn parse_decimal_rational(text: &str) -> Result<BigRational> {
    let s = text.trim();
    let bad = || Error::InvalidArgument(format!("not a decimal number: {text:?}"));
    if let Some((num, den)) = s.split_once('/') {
        let num = parse_decimal_rational(num)?;
        let den = parse_decimal_rational(den)?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(num / den);
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits: BigInt = format!("{int_part}{frac_part}0").parse::<BigInt>().map_err(|_| bad())? / 10;
    let ten = BigInt::from(10);
    let mut value = BigRational::new(digits, num_traits::pow(ten.clone(), frac_part.len()));
    if exp >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, exp as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, (-exp) as usize));
    }
    Ok(if neg { -value } else { value })
}

/// Exact rational for the shortest decimal that round-trips `x`.
pub fn rational_from_f64(x: f64) -> Result<BigRational> {
    parse_decimal_rational(&format!("{x}"))
}

/// `a/b` rendered as `"a/b"`, or `"a"` for integers.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// A growth function compared by [`check_dominates`].
pub trait GrowthFunction {
    /// 1 for scalar functions of `|v|`.
    fn dimension(&self) -> usize;
    fn eval(&self, v: &[f64]) -> f64;
}

impl GrowthFunction for AnisotropicGFunction {
    fn dimension(&self) -> usize {
        self.dim()
    }
    fn eval(&self, v: &[f64]) -> f64 {
        self.value(v)
    }
}

impl GrowthFunction for MonotoneScalarFunction {
    fn dimension(&self) -> usize {
        1
    }
    fn eval(&self, v: &[f64]) -> f64 {
        self.value(crate::sampling::norm2(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Dominates,
    Fails,
    Inconclusive,
}

impl Relation {
    pub fn verdict(self) -> Verdict {
        match self {
            Relation::Dominates => Verdict::Pass,
            Relation::Fails => Verdict::Fail,
            Relation::Inconclusive => Verdict::Inconclusive,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationVerdict {
    pub relation: Relation,
    pub c_est: Option<f64>,
    pub threshold_radius: f64,
    pub witness: Option<Vec<f64>>,
    /// Largest top-decade log-log slope of `A` over the sampled directions.
    pub slope_a: f64,
    pub slope_b: f64,
}

/// Relative slack on the slope comparison.
pub const SLOPE_RTOL: f64 = 0.02;

/// `A ≺≺ B`: `A(v) ≤ B(C v)` for some `C` and all large `v`.
///
/// A scalar `B` compared against an n-dimensional `A` is lifted radially,
/// `B(Cv) := B(C|v|)`. Failure is declared when, along some direction, the
/// top-decade log-log slope of `A` exceeds that of `B` by more than
/// [`SLOPE_RTOL`]; otherwise `C` is searched over `2⁻⁴…2¹⁰` and the threshold
/// `r₀` over the sampled radii, requiring at least the top decade.
pub fn check_dominates(
    a: &dyn GrowthFunction,
    b: &dyn GrowthFunction,
    plan: &SamplePlan,
) -> Result<DominationVerdict> {
    let dim = a.dimension();
    if b.dimension() != dim && b.dimension() != 1 {
        return Err(Error::Shape(format!(
            "cannot compare dimension {dim} against dimension {}",
            b.dimension()
        )));
    }
    let radii = plan.radii();
    let dirs = if dim == 1 {
        vec![vec![1.0]]
    } else {
        plan.directions(dim)
    };
    let top_start = radii.partition_point(|r| *r < plan.r_max / 10.0 * (1.0 - 1e-12));
    let top = &radii[top_start..];
    let scaled = |d: &[f64], r: f64| -> Vec<f64> { d.iter().map(|x| x * r).collect() };
    let b_at = |d: &[f64], r: f64| -> f64 {
        if b.dimension() == 1 {
            b.eval(&[r])
        } else {
            b.eval(&scaled(d, r))
        }
    };

    let mut worst: Option<(f64, usize)> = None;
    let mut slope_a_max = f64::NEG_INFINITY;
    let mut slope_b_at_worst = f64::NAN;
    for (k, d) in dirs.iter().enumerate() {
        let av: Vec<f64> = top.iter().map(|r| a.eval(&scaled(d, *r))).collect();
        let bv: Vec<f64> = top.iter().map(|r| b_at(d, *r)).collect();
        let (sa, _) = loglog_fit(top, &av);
        let (sb, _) = loglog_fit(top, &bv);
        let excess = sa - sb;
        if sa > slope_a_max {
            slope_a_max = sa;
        }
        if worst.is_none_or(|(e, _)| excess > e + 1e-9) {
            worst = Some((excess, k));
            slope_b_at_worst = sb;
        }
    }
    let (excess, k) = worst.expect("at least one direction");
    if excess > SLOPE_RTOL * slope_b_at_worst.abs() {
        return Ok(DominationVerdict {
            relation: Relation::Fails,
            c_est: None,
            threshold_radius: plan.r_max,
            witness: Some(scaled(&dirs[k], plan.r_max)),
            slope_a: slope_a_max,
            slope_b: slope_b_at_worst,
        });
    }

    for j in -4..=10 {
        let c = 2f64.powi(j);
        // smallest index from which every radius dominates in every direction
        let mut first_ok = radii.len();
        for idx in (0..radii.len()).rev() {
            let r = radii[idx];
            let ok = dirs.iter().all(|d| a.eval(&scaled(d, r)) <= b_at(d, c * r));
            if !ok {
                break;
            }
            first_ok = idx;
        }
        if first_ok <= top_start {
            return Ok(DominationVerdict {
                relation: Relation::Dominates,
                c_est: Some(c),
                threshold_radius: radii[first_ok],
                witness: None,
                slope_a: slope_a_max,
                slope_b: slope_b_at_worst,
            });
        }
    }
    Ok(DominationVerdict {
        relation: Relation::Inconclusive,
        c_est: None,
        threshold_radius: plan.r_max,
        witness: None,
        slope_a: slope_a_max,
        slope_b: slope_b_at_worst,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceVerdict {
    pub verdict: Verdict,
    pub forward: DominationVerdict,
    pub backward: DominationVerdict,
}

/// `A ≈ B`: domination in both directions.
pub fn check_equivalent(
    a: &dyn GrowthFunction,
    b: &dyn GrowthFunction,
    plan: &SamplePlan,
) -> Result<EquivalenceVerdict> {
    if a.dimension() != b.dimension() {
        return Err(Error::Shape("equivalence needs equal dimensions".into()));
    }
    let forward = check_dominates(a, b, plan)?;
    let backward = check_dominates(b, a, plan)?;
    Ok(EquivalenceVerdict {
        verdict: forward.relation.verdict().and(backward.relation.verdict()),
        forward,
        backward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rearrangement::{compute_phi_circ, VolumeModel};
    use crate::sampling::log_space;

    fn rat(s: &str) -> BigRational {
        parse_decimal_rational(s).unwrap()
    }

    fn power(q: f64) -> MonotoneScalarFunction {
        MonotoneScalarFunction::power(q, 1.0).unwrap()
    }

    fn sampled_power(q: f64, kappa: f64) -> MonotoneScalarFunction {
        let t = log_space(1e-3, 1e3, 200);
        let v = t.iter().map(|x| kappa * x.powf(q)).collect();
        MonotoneScalarFunction::table_with_fitted_tails(t, v).unwrap()
    }

    /// Closed form `H(s) = c s^{(n−p)/n}` for `Φ∘ = κ t^p`.
    fn h_oracle(p: f64, kappa: f64, n: usize, s: f64) -> f64 {
        let nf = n as f64;
        let c = ((nf - 1.0) / (nf - p)).powf((nf - 1.0) / nf) * kappa.powf(-1.0 / nf);
        c * s.powf((nf - p) / nf)
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(format_rational(&rat("1.8")), "9/5");
        assert_eq!(format_rational(&rat("2")), "2");
        assert_eq!(format_rational(&rat("-0.25")), "-1/4");
        assert_eq!(format_rational(&rat("2.5e-1")), "1/4");
        assert_eq!(format_rational(&rat("7/2")), "7/2");
        assert_eq!(format_rational(&rational_from_f64(2.2).unwrap()), "11/5");
        assert!(parse_decimal_rational("abc").is_err());
        assert!(parse_decimal_rational("1/0").is_err());
    }

    #[test]
    fn conjugate_exponent_examples() {
        let e = power_sum_conjugate_exponent(&[rat("2"), rat("2"), rat("2"), rat("7")], 4).unwrap();
        assert_eq!(format_rational(&e.p_bar), "56/23");
        assert_eq!(format_rational(e.p_bar_star.as_ref().unwrap()), "56/9");
        let e = power_sum_conjugate_exponent(&[rat("2"), rat("2"), rat("7")], 3).unwrap();
        assert_eq!(format_rational(e.p_bar_star.as_ref().unwrap()), "21");
        let e = power_sum_conjugate_exponent(&[rat("2"), rat("2"), rat("2")], 3).unwrap();
        assert_eq!(format_rational(e.p_bar_star.as_ref().unwrap()), "6");
        let e = power_sum_conjugate_exponent(&[rat("4"), rat("4")], 2).unwrap();
        assert!(e.p_bar_star.is_none());
        assert!(power_sum_conjugate_exponent(&[rat("2")], 2).is_err());
    }

    #[test]
    fn integrability_examples() {
        let r = check_integrability(&power(2.0), 3).unwrap();
        assert_eq!((r.phi0, r.phi1), (Verdict::Pass, Verdict::Pass));
        // ∫₀¹ t^{-1/2} dt = 2
        assert!((r.phi0_value.unwrap() - 2.0).abs() < 1e-12);

        let r = check_integrability(&power(2.0), 2).unwrap();
        assert_eq!(r.phi0, Verdict::Fail);
        assert!(r.phi0_value.is_none());

        let r = check_integrability(&sampled_power(21.0 / 8.0, 1.3), 3).unwrap();
        assert_eq!((r.phi0, r.phi1), (Verdict::Pass, Verdict::Pass));

        // bounded conjugate: p > n
        let r = check_integrability(&power(4.0), 3).unwrap();
        assert_eq!(r.phi1, Verdict::Fail);
    }

    #[test]
    fn integrability_needs_enough_table_points() {
        let short = MonotoneScalarFunction::table(
            vec![1.0, 2.0, 3.0],
            vec![1.0, 4.0, 9.0],
            None,
            None,
            Interpolation::LogLog,
        )
        .unwrap();
        assert!(matches!(
            check_integrability(&short, 3),
            Err(Error::TableTooShort(_))
        ));
    }

    #[test]
    fn h_examples() {
        assert_eq!(compute_h(&power(2.0), 3, 0.0).unwrap(), 0.0);
        let h1 = compute_h(&power(2.0), 3, 1.0).unwrap();
        assert!((h1 - 2f64.powf(2.0 / 3.0)).abs() < 1e-13);
        assert!(matches!(
            compute_h(&power(2.0), 2, 1.0),
            Err(Error::IntegrabilityFailed { .. })
        ));
    }

    #[test]
    fn h_table_matches_closed_form() {
        for (p, kappa, n) in [(2.0, 1.0, 3), (21.0 / 8.0, 0.7, 3), (56.0 / 23.0, 2.0, 4), (1.5, 1.0, 2)] {
            let f = sampled_power(p, kappa);
            let scale = SobolevScale::build(&f, n).unwrap();
            for s in [1e-6, 1e-3, 0.05, 1.0, 17.0, 1e3, 1e6] {
                let want = h_oracle(p, kappa, n, s);
                let got = scale.value(s);
                assert!((got - want).abs() <= 1e-9 * want, "p={p} s={s}: {got} vs {want}");
                let back = scale.inverse(got);
                assert!((back - s).abs() <= 1e-9 * s, "inverse at s={s}: {back}");
            }
        }
    }

    #[test]
    fn h_doubling_ratio() {
        let p = 21.0 / 8.0;
        let scale = SobolevScale::build(&sampled_power(p, 1.0), 3).unwrap();
        let want = 2f64.powf((3.0 - p) / 3.0);
        for s in [1e-2, 0.5, 3.0, 200.0] {
            let ratio = scale.value(2.0 * s) / scale.value(s);
            assert!((ratio - want).abs() <= 0.01 * want);
        }
    }

    #[test]
    fn phi_n_slopes_match_exponent_oracle() {
        let radii = log_space(1e-3, 1e3, 200);
        for (p, want) in [
            (vec![2.0, 2.0, 2.0, 7.0], 56.0 / 9.0),
            (vec![2.0, 2.0, 7.0], 21.0),
            (vec![2.0, 2.0, 2.0], 6.0),
            (vec![1.8, 2.0, 2.2], 3.0 * 1.986622 / (3.0 - 1.986622)),
        ] {
            let phi = AnisotropicGFunction::power_sum_unit(&p).unwrap();
            let pc = compute_phi_circ(&phi, &radii, &VolumeModel::ExactDirichlet).unwrap();
            let pn = compute_phi_n(&pc, p.len(), &radii).unwrap();
            let slope = loglog_slope(&pn, 0.1, 100.0, 61);
            assert!((slope - want).abs() <= 0.02 * want, "{p:?}: {slope} vs {want}");
        }
    }

    #[test]
    fn phi_n_of_isotropic_quadratic() {
        let radii = log_space(1e-3, 1e3, 200);
        let pn = compute_phi_n(&power(2.0), 3, &radii).unwrap();
        let slope = loglog_slope(&pn, 0.1, 100.0, 61);
        assert!((slope - 6.0).abs() < 1e-6);
    }

    #[test]
    fn phi_n_refuses_bounded_case() {
        let radii = log_space(1e-3, 1e3, 50);
        let t = log_space(1e-3, 1e3, 120);
        let v = t.iter().map(|x| if *x < 1.0 { x * x } else { x.powi(4) }).collect();
        let quartic_tail = MonotoneScalarFunction::table_with_fitted_tails(t, v).unwrap();
        assert!(matches!(
            compute_phi_n(&quartic_tail, 3, &radii),
            Err(Error::BoundedConjugate { .. })
        ));
        assert!(matches!(
            compute_phi_n(&power(4.0), 3, &radii),
            Err(Error::IntegrabilityFailed { .. })
        ));
        assert!(matches!(
            compute_phi_n(&power(2.0), 2, &radii),
            Err(Error::IntegrabilityFailed { .. })
        ));
    }

    fn phi_and_conjugate(p: &[f64]) -> (AnisotropicGFunction, MonotoneScalarFunction) {
        let radii = log_space(1e-3, 1e3, 200);
        let phi = AnisotropicGFunction::power_sum_unit(p).unwrap();
        let pc = compute_phi_circ(&phi, &radii, &VolumeModel::ExactDirichlet).unwrap();
        let pn = compute_phi_n(&pc, p.len(), &radii).unwrap();
        (phi, pn)
    }

    #[test]
    fn phi2_fails_for_four_dimensional_example() {
        let (phi, pn) = phi_and_conjugate(&[2.0, 2.0, 2.0, 7.0]);
        let v = check_dominates(&phi, &pn, &SamplePlan::default()).unwrap();
        assert_eq!(v.relation, Relation::Fails);
        let w = v.witness.unwrap();
        assert!(w[..3].iter().all(|x| *x == 0.0) && w[3] != 0.0, "{w:?}");
    }

    #[test]
    fn phi2_holds_for_three_dimensional_example() {
        let (phi, pn) = phi_and_conjugate(&[2.0, 2.0, 7.0]);
        let v = check_dominates(&phi, &pn, &SamplePlan::default()).unwrap();
        assert_eq!(v.relation, Relation::Dominates);
        assert!(v.c_est.is_some());
    }

    #[test]
    fn identity_domination() {
        let sq = power(2.0);
        let plan = SamplePlan::default();
        let v = check_dominates(&sq, &sq, &plan).unwrap();
        assert_eq!(v.relation, Relation::Dominates);
        assert_eq!(v.c_est, Some(1.0));
        assert_eq!(check_equivalent(&sq, &sq, &plan).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn domination_relation_properties() {
        let plan = SamplePlan::default();
        let fs = [power(1.5), sampled_power(2.0, 3.0), power(2.0), power(3.0)];
        let rel = |a: &MonotoneScalarFunction, b: &MonotoneScalarFunction| {
            check_dominates(a, b, &plan).unwrap().relation
        };
        for a in &fs {
            assert_eq!(rel(a, a), Relation::Dominates);
            for b in &fs {
                let ab = check_equivalent(a, b, &plan).unwrap().verdict;
                let ba = check_equivalent(b, a, &plan).unwrap().verdict;
                assert_eq!(ab, ba);
                for c in &fs {
                    if rel(a, b) == Relation::Dominates && rel(b, c) == Relation::Dominates {
                        assert_eq!(rel(a, c), Relation::Dominates);
                    }
                }
            }
        }
        assert_eq!(rel(&power(3.0), &power(2.0)), Relation::Fails);
    }
}
