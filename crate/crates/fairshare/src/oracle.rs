//! Independent high-precision reference: certifies fairness of candidate
//! allocations via the variational optimality condition, produces reference
//! optima for small instances, and checks the derived aggregate lower
//! bound against them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lp;
use crate::solver::{penalty_bound, CompiledInstance, SolverState, StopCriteria};
use crate::model::Instance;
use crate::partition::partition_domains;

/// Feasibility slack tolerated when checking a candidate against the
/// capacities.
const FEAS_TOL: f64 = 1e-6;

/// Outcome of a fairness check. The candidate maximizes the weighted
/// alpha-fair utility iff no feasible allocation improves the linearized
/// utility, i.e. iff `violation` is zero up to the tolerance.
#[derive(Debug, Clone)]
pub struct Certificate {
    /// Per-request aggregates of the candidate.
    pub candidate_y: BTreeMap<String, f64>,
    /// Maximum of the optimality linear form over the feasible set;
    /// nonnegative, and zero exactly at the optimum.
    pub violation: f64,
    pub tolerance: f64,
}

impl Certificate {
    pub fn certified(&self) -> bool {
        self.violation <= self.tolerance
    }
}

/// Certifies a per-path candidate allocation (ordered like
/// `instance.paths`). Solves `max_x sum_r (w_r / y_r^alpha) (Bx)_r` over
/// the capacity polytope by exact LP and reports the gap to the
/// candidate's own linearized utility.
pub fn fairness_certificate(
    instance: &Instance,
    candidate_x: &[f64],
    tolerance: f64,
) -> Result<Certificate> {
    let compiled = CompiledInstance::compile(instance)?;
    if candidate_x.len() != compiled.path_ids.len() {
        return Err(Error::Certification(format!(
            "candidate has {} entries, instance has {} paths",
            candidate_x.len(),
            compiled.path_ids.len()
        )));
    }
    for li in 0..compiled.link_ids.len() {
        let load: f64 = compiled.link_paths[li].iter().map(|&p| candidate_x[p]).sum();
        if load > compiled.capacity[li] + FEAS_TOL {
            return Err(Error::Certification(format!(
                "candidate overloads link {} ({} > {})",
                compiled.link_ids[li], load, compiled.capacity[li]
            )));
        }
    }
    let y = compiled.aggregates(candidate_x);
    for (r, &yr) in y.iter().enumerate() {
        if yr <= 0.0 {
            return Err(Error::Certification(format!(
                "candidate aggregate for request {} is not strictly positive ({yr})",
                compiled.request_ids[r]
            )));
        }
    }
    // Linearized utility coefficient per path: w_r / y_r^alpha.
    let coeff: Vec<f64> = (0..compiled.path_ids.len())
        .map(|p| {
            let r = compiled.path_request[p];
            compiled.weights[r] / y[r].powf(compiled.alpha)
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..compiled.link_ids.len())
        .map(|li| {
            let mut row = vec![0.0; compiled.path_ids.len()];
            for &p in &compiled.link_paths[li] {
                row[p] = 1.0;
            }
            row
        })
        .collect();
    let sol = lp::maximize(&coeff, &rows, &compiled.capacity)?;
    let candidate_value: f64 =
        (0..y.len()).map(|r| compiled.weights[r] * y[r].powf(1.0 - compiled.alpha)).sum();
    Ok(Certificate {
        candidate_y: compiled.request_ids.iter().cloned().zip(y).collect(),
        violation: sol.objective - candidate_value,
        tolerance,
    })
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    /// Per-request aggregates, ordered like `instance.requests`.
    pub y: Vec<f64>,
    /// Per-path allocation, ordered like `instance.paths`.
    pub x: Vec<f64>,
    pub certificate: Certificate,
}

/// High-precision reference optimum for a desk-scale instance: runs the
/// single-domain solver down to the given residual threshold (1e-6 by
/// default) and returns the result only if the fairness certificate
/// accepts it.
pub fn solve_reference(instance: &Instance, tol: Option<f64>) -> Result<ReferenceSolution> {
    let tol = tol.unwrap_or(1e-6);
    let partition = partition_domains(instance, 1, 0)?;
    let lambda = penalty_bound(instance)?.lambda_star;
    let mut state = SolverState::new(instance, &partition, lambda, None)?;
    let trace = state.solve(
        &StopCriteria { residual_threshold: tol, max_iters: 2_000_000, wall_clock: None },
        None,
    )?;
    if !trace.converged {
        return Err(Error::Certification(format!(
            "reference solve did not reach residual {tol} within budget"
        )));
    }
    let x = state.feasible_point();
    let weight_sum: f64 = state.compiled.weights.iter().sum();
    let certificate = fairness_certificate(instance, &x, 1e-4 * weight_sum)?;
    if !certificate.certified() {
        return Err(Error::Certification(format!(
            "reference solution failed certification: violation {} > {}",
            certificate.violation, certificate.tolerance
        )));
    }
    let y = state.compiled.aggregates(&x);
    Ok(ReferenceSolution { y, x, certificate })
}

/// Per-request comparison of the derived lower bound against the
/// reference optimum.
#[derive(Debug, Clone)]
pub struct LowerBoundReport {
    pub d: BTreeMap<String, f64>,
    pub y_star: BTreeMap<String, f64>,
    /// Smallest `y*_r - d_r`; the bound holds iff this is >= -1e-6.
    pub worst_margin: f64,
    pub holds: bool,
}

/// Checks `d_r <= y*_r + 1e-6` for every request.
pub fn lower_bound_check(instance: &Instance) -> Result<LowerBoundReport> {
    let bound = penalty_bound(instance)?;
    let reference = solve_reference(instance, None)?;
    let ids: Vec<String> = instance.requests.iter().map(|r| r.id.clone()).collect();
    let y_star: BTreeMap<String, f64> =
        ids.iter().cloned().zip(reference.y.iter().copied()).collect();
    let worst_margin = ids
        .iter()
        .map(|id| y_star[id] - bound.d[id])
        .fold(f64::INFINITY, f64::min);
    Ok(LowerBoundReport { d: bound.d, y_star, worst_margin, holds: worst_margin >= -1e-6 })
}
