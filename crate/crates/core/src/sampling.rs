//! Sample plans for sup/inf estimates and the tri-state verdict type.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Outcome of a sampled hypothesis check. Sampling can refute a global
/// statement but never prove it, so `Pass` means "no counterexample found".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Conjunction: any failure fails, otherwise any doubt is inconclusive.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Radii and directions over which infima and suprema are estimated.
///
/// Directions are the `2n` signed axes, then the sign diagonals
/// `(±1,…,±1)/√n` (at most `diagonal_cap` of them), then
/// `random_directions` uniform unit vectors drawn from `seed`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub r_min: f64,
    pub r_max: f64,
    pub radii_count: usize,
    pub random_directions: usize,
    pub diagonal_cap: usize,
    pub seed: u64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self {
            r_min: 1e-3,
            r_max: 1e3,
            radii_count: 61,
            random_directions: 256,
            diagonal_cap: 256,
            seed: 0,
        }
    }
}

impl SamplePlan {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn radii(&self) -> Vec<f64> {
        log_space(self.r_min, self.r_max, self.radii_count)
    }

    pub fn directions(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut dirs = Vec::new();
        for axis in 0..dim {
            for sign in [1.0, -1.0] {
                let mut d = vec![0.0; dim];
                d[axis] = sign;
                dirs.push(d);
            }
        }
        if dim > 1 {
            let total = if dim >= 63 { usize::MAX } else { 1usize << dim };
            let count = total.min(self.diagonal_cap);
            let scale = 1.0 / (dim as f64).sqrt();
            for mask in 0..count {
                dirs.push(
                    (0..dim)
                        .map(|i| if mask >> i & 1 == 1 { -scale } else { scale })
                        .collect(),
                );
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut drawn = 0;
        while drawn < self.random_directions {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                dirs.push(v.into_iter().map(|x| x / norm).collect());
                drawn += 1;
            }
        }
        dirs
    }
}

/// `count` log-uniform points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| {
            if k == count - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Least-squares fit of `log v = log c + q log t`; returns `(q, c)`.
pub fn loglog_fit(ts: &[f64], vs: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(vs)
        .filter(|(t, v)| **t > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let q = sxy / sxx;
    (q, (my - q * mx).exp())
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
