//! Optimal sampling proportions for Bernoulli best-arm identification.
//!
//! For means `μ` with a unique best arm `b`, the optimal allocation `w`
//! maximizes
//!
//! ```text
//!   min_{a≠b} inf_λ [ w_b d(μ_b, λ) + w_a d(μ_a, λ) ]
//! ```
//!
//! where `d` is the Bernoulli KL divergence. With `m_a(x) = (μ_b + x μ_a)/(1+x)`
//! and `g_a(x) = d(μ_b, m_a(x)) + x d(μ_a, m_a(x))`, the solution is
//! `w_a / w_b = x_a(y*)`, where `x_a = g_a^{-1}` and `y*` solves
//!
//! ```text
//!   Σ_{a≠b} d(μ_b, m_a(x_a(y))) / d(μ_a, m_a(x_a(y))) = 1
//! ```
//!
//! on `(0, min_a d(μ_b, μ_a))`. The left-hand side increases from 0 to ∞ on
//! that interval, so the root is bracketed.
//!
//! The optimal weights are not in general ordered like the means: with two
//! arms both below 1/2, the worse arm receives the larger share.

use crate::error::{Error, Result};

/// Means are clipped into `[MEAN_CLIP, 1 - MEAN_CLIP]` before solving.
pub const MEAN_CLIP: f64 = 1e-6;

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200;

/// Bernoulli KL divergence `d(p, q)`, with `0 ln 0 = 0`.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    fn term(a: f64, b: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else {
            a * (a / b).ln()
        }
    }
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// Per-node sampling proportions summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(k: usize) -> Self {
        WeightVector(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, node: usize) -> f64 {
        self.0[node]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Optimal allocation for the given per-node means.
///
/// Degenerate inputs: a single node gets weight 1; all-equal means give
/// uniform weights; several nodes tied for the maximum share the mass
/// equally and every other node gets zero (the limit of the optimal weights
/// as the top means merge).
pub fn optimal_weights(means: &[f64]) -> Result<WeightVector> {
    let k = means.len();
    if k == 0 {
        return Err(Error::invalid("means", "at least one node is required"));
    }
    if let Some(bad) = means.iter().find(|m| !m.is_finite()) {
        return Err(Error::invalid("means", format!("{bad} is not finite")));
    }
    if k == 1 {
        return Ok(WeightVector(vec![1.0]));
    }
    let mu: Vec<f64> = means.iter().map(|m| m.clamp(MEAN_CLIP, 1.0 - MEAN_CLIP)).collect();
    let top = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..k).filter(|&i| mu[i] == top).collect();
    if tied.len() == k {
        return Ok(WeightVector::uniform(k));
    }
    if tied.len() > 1 {
        let share = 1.0 / tied.len() as f64;
        let mut w = vec![0.0; k];
        for i in tied {
            w[i] = share;
        }
        return Ok(WeightVector(w));
    }

    let best = tied[0];
    let others: Vec<f64> = (0..k).filter(|&i| i != best).map(|i| mu[i]).collect();
    let ratios = solve_ratios(mu[best], &others);

    let norm = 1.0 + ratios.iter().sum::<f64>();
    let mut w = Vec::with_capacity(k);
    let mut it = ratios.iter();
    for i in 0..k {
        w.push(if i == best { 1.0 / norm } else { it.next().copied().unwrap_or(0.0) / norm });
    }
    Ok(WeightVector(w))
}

/// Returns `x_a(y*) = w_a / w_b` for each suboptimal mean.
fn solve_ratios(best: f64, others: &[f64]) -> Vec<f64> {
    let y_max = others.iter().map(|&a| bernoulli_kl(best, a)).fold(f64::INFINITY, f64::min);
    let objective = |y: f64| -> f64 {
        others
            .iter()
            .map(|&a| {
                let m = invert_gap(best, a, y);
                let d = bernoulli_kl(a, m);
                // Rounding can leave d at or below zero when m is next to a.
                if d > 0.0 {
                    bernoulli_kl(best, m) / d
                } else {
                    f64::INFINITY
                }
            })
            .sum::<f64>()
            - 1.0
    };
    // The objective diverges at y_max and is not representable just inside
    // it; shrink the bracket until the upper end is finite.
    let (mut lo, mut f_lo) = (0.0, -1.0);
    let mut hi = y_max * (1.0 - 1e-12);
    let mut f_hi = objective(hi);
    for _ in 0..MAX_ITERATIONS {
        if f_hi.is_finite() {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = objective(mid);
        if f_mid <= 0.0 {
            (lo, f_lo) = (mid, f_mid);
        } else {
            (hi, f_hi) = (mid, f_mid);
        }
    }
    let y_star = if f_hi <= 0.0 { hi } else { find_root(objective, lo, f_lo, hi, f_hi, TOLERANCE * y_max) };
    others
        .iter()
        .map(|&a| {
            let m = invert_gap(best, a, y_star);
            (best - m) / (m - a)
        })
        .collect()
}

/// Solves `g_a(x) = y` and returns the mixture mean `m_a(x)` rather than `x`.
///
/// Working in `m ∈ (a, best]` keeps the search bracketed: `G(m) = g_a(x(m))`
/// decreases from `d(best, a)` at `m = a` to 0 at `m = best`, with
/// `x(m) = (best - m)/(m - a)` and `G'(m) = -d(a, m) (best - a)/(m - a)^2`.
fn invert_gap(best: f64, a: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return best;
    }
    let gap = |m: f64| {
        let x = (best - m) / (m - a);
        bernoulli_kl(best, m) + x * bernoulli_kl(a, m) - y
    };
    // Safeguarded Newton: fall back to bisection whenever the step leaves the
    // bracket.
    let (mut lo, mut hi) = (a, best);
    let mut m = 0.5 * (a + best);
    for _ in 0..MAX_ITERATIONS {
        let r = gap(m);
        if r == 0.0 {
            return m;
        }
        // r > 0: root lies at larger m.
        if r > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let slope = -bernoulli_kl(a, m) * (best - a) / ((m - a) * (m - a));
        let newton = m - r / slope;
        let next = if slope < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - m).abs() <= 4.0 * f64::EPSILON * m || hi - lo <= 4.0 * f64::EPSILON * m {
            return next;
        }
        m = next;
    }
    m
}

/// Brent's method on a bracket with `f(a) < 0 < f(b)`.
fn find_root(mut f: impl FnMut(f64) -> f64, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64, tol: f64) -> f64 {
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITERATIONS {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    b
}
