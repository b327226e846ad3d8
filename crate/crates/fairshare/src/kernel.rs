//! Numerical primitives of the fair allocation solver.
//!
//! Everything in here is a stateless pure function over slices: the
//! alpha-fair utility, the per-request proximal update (closed form through
//! the unique positive root of a polynomial), its l1 switching-cost variant,
//! and the Euclidean projection onto a capped simplex.

use crate::error::{Error, Result};

/// Relative tolerance of the positive-root solver.
const ROOT_TOL: f64 = 1e-12;
/// Tolerance of the l1 proximal solver (bisection on the aggregate).
const L1_TOL: f64 = 1e-10;
const L1_MAX_ITERS: usize = 400;

/// Sum of per-request alpha-fair utilities `w_r log y_r` (alpha = 1) or
/// `w_r y_r^{1-alpha} / (1-alpha)` otherwise. All aggregates must be
/// strictly positive.
pub fn alpha_utility(y: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    debug_assert_eq!(y.len(), weights.len());
    let mut total = 0.0;
    for (&yr, &wr) in y.iter().zip(weights) {
        if yr <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "aggregate must be > 0 for utility evaluation, got {yr}"
            )));
        }
        total += if alpha == 1.0 {
            wr * yr.ln()
        } else {
            wr * yr.powf(1.0 - alpha) / (1.0 - alpha)
        };
    }
    Ok(total)
}

/// Euclidean projection of `point` onto `{z >= 0, sum z <= radius}`.
///
/// Sort-based: O(n log n). If the positive part of the point already fits
/// under the cap the projection is just the clamp to the orthant; otherwise
/// the cap is active and the classic simplex threshold applies.
pub fn project_simplex(point: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius > 0.0, "simplex radius must be positive");
    let clamped_sum: f64 = point.iter().map(|&v| v.max(0.0)).sum();
    if clamped_sum <= radius {
        return point.iter().map(|&v| v.max(0.0)).collect();
    }
    // Cap active: project onto {z >= 0, sum z = radius}.
    let mut sorted: Vec<f64> = point.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - radius) / (i + 1) as f64;
        if i + 1 == sorted.len() || sorted[i + 1] <= t {
            tau = t;
            break;
        }
    }
    point.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Unique positive root of `y^{alpha+1} - s * y^alpha - lw = 0`, `lw > 0`.
///
/// For alpha = 1 this is the quadratic closed form; otherwise a bracketed
/// Newton iteration with bisection fallback. The left side is negative at 0
/// and eventually increasing, so the bracket `[0, max(s,0) + lw^{1/(a+1)} + 1]`
/// always contains the root.
pub fn positive_root(s: f64, lw: f64, alpha: f64) -> f64 {
    assert!(lw > 0.0, "lw must be positive");
    assert!(alpha > 0.0, "alpha must be positive");
    if alpha == 1.0 {
        return (s + (s * s + 4.0 * lw).sqrt()) / 2.0;
    }
    let f = |y: f64| -> f64 {
        if y <= 0.0 {
            return -lw;
        }
        y.powf(alpha + 1.0) - s * y.powf(alpha) - lw
    };
    let mut lo = 0.0;
    let mut hi = s.max(0.0) + lw.powf(1.0 / (alpha + 1.0)) + 1.0;
    debug_assert!(f(hi) >= 0.0);
    let mut y = hi;
    for _ in 0..200 {
        let fy = f(y);
        if fy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let dfy = (alpha + 1.0) * y.powf(alpha) - alpha * s * y.powf(alpha - 1.0);
        let mut next = if dfy.abs() > 0.0 { y - fy / dfy } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= ROOT_TOL * y.abs().max(1.0) {
            return next;
        }
        y = next;
    }
    y
}

/// Inputs of the per-request proximal update.
///
/// `anchor` holds one value per path of the request (the consensus point
/// minus lambda times the dual). `switching`, when present, adds the
/// l1 reconfiguration price `theta * sum |x_p - baseline_p|` to the
/// objective.
#[derive(Debug, Clone)]
pub struct ProxInput<'a> {
    pub anchor: &'a [f64],
    pub lambda: f64,
    pub weight: f64,
    pub alpha: f64,
    pub switching: Option<Switching<'a>>,
}

#[derive(Debug, Clone)]
pub struct Switching<'a> {
    pub theta: f64,
    pub baseline: &'a [f64],
}

impl ProxInput<'_> {
    fn check(&self) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.weight <= 0.0 {
            return Err(Error::InvalidParameter(format!("weight must be > 0, got {}", self.weight)));
        }
        if self.alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.anchor.is_empty() || self.anchor.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("anchor must be non-empty and finite".into()));
        }
        if let Some(sw) = &self.switching {
            if sw.theta < 0.0 {
                return Err(Error::InvalidParameter(format!("theta must be >= 0, got {}", sw.theta)));
            }
            if sw.baseline.len() != self.anchor.len() {
                return Err(Error::InvalidParameter("baseline/anchor length mismatch".into()));
            }
        }
        Ok(())
    }
}

/// Exact minimizer of
/// `g_r(sum_p x_p) + (1/2 lambda) sum_p (x_p - anchor_p)^2`
/// where `g_r(y) = -w log y` (alpha = 1) or `-w y^{1-alpha}/(1-alpha)`.
///
/// The aggregate solves `y^{a+1} - S y^a - n*lambda*w = 0` with
/// `S = sum anchor` and `n` the number of paths; each path then receives
/// `x_p = lambda w / y^a + anchor_p`. Individual `x_p` may come out
/// negative; only the aggregate is constrained positive here, the per-link
/// projection is what enforces nonnegativity downstream.
pub fn prox_request(input: &ProxInput) -> Result<Vec<f64>> {
    input.check()?;
    if let Some(sw) = &input.switching {
        if sw.theta > 0.0 {
            return prox_request_l1(input);
        }
    }
    let n = input.anchor.len() as f64;
    let s: f64 = input.anchor.iter().sum();
    let y = positive_root(s, n * input.lambda * input.weight, input.alpha);
    let share = input.lambda * input.weight / y.powf(input.alpha);
    Ok(input.anchor.iter().map(|&a| share + a).collect())
}

/// Minimizer of the switching-cost proximal objective
/// `g_r(sum x) + theta * sum |x_p - baseline_p| + (1/2 lambda) sum (x_p - anchor_p)^2`.
///
/// Solved by a bisection on the aggregate y: for the optimum, the
/// multiplier on the aggregate equals `w / y^alpha`, and for a fixed
/// multiplier `mu` each coordinate is the shifted soft threshold
/// `x_p(mu) = baseline_p + soft(anchor_p + lambda*mu - baseline_p, lambda*theta)`.
/// `sum_p x_p(w/y^alpha) - y` is strictly decreasing in y, so the root is
/// unique. With theta = 0 this reduces exactly to the smooth update.
pub fn prox_request_l1(input: &ProxInput) -> Result<Vec<f64>> {
    input.check()?;
    let sw = input
        .switching
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("prox_request_l1 requires switching parameters".into()))?;
    if sw.theta == 0.0 {
        let mut plain = input.clone();
        plain.switching = None;
        return prox_request(&plain);
    }
    let lam = input.lambda;
    let lt = lam * sw.theta;
    let coords = |mu: f64| -> Vec<f64> {
        input
            .anchor
            .iter()
            .zip(sw.baseline)
            .map(|(&a, &b)| {
                let t = a + lam * mu;
                if t > b + lt {
                    t - lt
                } else if t < b - lt {
                    t + lt
                } else {
                    b
                }
            })
            .collect()
    };
    let excess = |y: f64| -> f64 {
        let mu = input.weight / y.powf(input.alpha);
        coords(mu).iter().sum::<f64>() - y
    };
    // excess(y) -> +inf as y -> 0+ and -> -inf as y -> inf.
    let mut lo = 1e-12;
    let mut hi = {
        let smooth_s: f64 = input.anchor.iter().sum();
        let base: f64 = sw.baseline.iter().map(|b| b.abs()).sum();
        let n = input.anchor.len() as f64;
        positive_root(smooth_s.max(0.0), n * lam * input.weight, input.alpha) + base + 1.0
    };
    let mut grow = 0;
    while excess(hi) > 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::ProxDiverged(format!(
                "no bracket for aggregate after {grow} doublings (hi = {hi:e})"
            )));
        }
    }
    while excess(lo) < 0.0 {
        lo /= 2.0;
        if lo < 1e-300 {
            return Err(Error::ProxDiverged("aggregate collapsed to zero".into()));
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..L1_MAX_ITERS {
        y = 0.5 * (lo + hi);
        if excess(y) > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        if hi - lo <= L1_TOL * y.max(1.0) {
            break;
        }
    }
    let mu = input.weight / y.powf(input.alpha);
    Ok(coords(mu))
}
