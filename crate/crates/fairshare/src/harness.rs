//! Experiment orchestration: convergence-versus-domains studies with
//! message accounting, and switching-cost sweeps measuring reconfiguration
//! counts, fairness, and movement.
//!
//! Independent (domains, seed, theta) cells may run concurrently; each
//! cell owns its solver state, and results are sorted before writing so
//! output bodies are byte-identical across re-runs with the same seeds.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{read_instance, Instance};
use crate::oracle::solve_reference;
use crate::partition::partition_domains;
use crate::solver::{penalty_bound, IterationTrace, SolverState, StopCriteria};
use crate::topology::{
    assemble_instance, generate_barabasi_albert, generate_fat_tree, generate_fat_tree_requests,
    generate_requests, LinkMode,
};

/// Where the experiment's instance comes from: a file, an inline
/// description, or one of the generators (re-seeded per experiment seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    File { path: String },
    Inline { instance: Instance },
    BarabasiAlbert {
        nodes: usize,
        min_degree: usize,
        requests: usize,
        paths_min: usize,
        paths_max: usize,
        capacity: f64,
        alpha: f64,
        #[serde(default)]
        directed: bool,
    },
    FatTree {
        pods: usize,
        paths_per_request: usize,
        capacity: f64,
        alpha: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// The derived penalty initialization.
    Derived,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Convergence,
    Reconfig,
}

fn default_domains() -> Vec<usize> {
    vec![1, 2, 4]
}
fn default_threshold() -> f64 {
    1e-2
}
fn default_max_iters() -> u64 {
    10_000
}
fn default_theta_grid() -> Vec<f64> {
    // Geometric ladder covering the regime before the reconfiguration
    // count plateaus.
    vec![0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
}
fn default_weight_range() -> (f64, f64) {
    (1.0, 10.0)
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    #[serde(default = "default_domains")]
    pub domain_counts: Vec<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_threshold")]
    pub residual_threshold: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: u64,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: Vec<f64>,
    #[serde(default = "default_weight_range")]
    pub weight_range: (f64, f64),
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("seeds must be nonempty".into()));
        }
        if self.theta_grid.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidParameter("theta must be >= 0".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter("epsilon must be > 0".into()));
        }
        if self.domain_counts.is_empty() {
            return Err(Error::InvalidParameter("domain counts must be nonempty".into()));
        }
        if let Some(l) = self.lambda {
            if l <= 0.0 {
                return Err(Error::InvalidParameter("lambda must be > 0".into()));
            }
        }
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter(format!("bad weight range [{lo}, {hi}]")));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Content hash of the canonical JSON form, for the run manifest.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

fn build_instance(source: &InstanceSource, seed: u64) -> Result<Instance> {
    match source {
        InstanceSource::File { path } => read_instance(path),
        InstanceSource::Inline { instance } => Ok(instance.clone()),
        InstanceSource::BarabasiAlbert {
            nodes,
            min_degree,
            requests,
            paths_min,
            paths_max,
            capacity,
            alpha,
            directed,
        } => {
            let topo = generate_barabasi_albert(*nodes, *min_degree, seed)?;
            let specs = generate_requests(&topo, *requests, (*paths_min, *paths_max), seed)?;
            let mode = if *directed { LinkMode::Directed } else { LinkMode::Undirected };
            assemble_instance(&topo, &specs, *alpha, *capacity, mode)
        }
        InstanceSource::FatTree { pods, paths_per_request, capacity, alpha } => {
            let topo = generate_fat_tree(*pods)?;
            let specs = generate_fat_tree_requests(&topo, *paths_per_request, seed)?;
            assemble_instance(&topo, &specs, *alpha, *capacity, LinkMode::Undirected)
        }
    }
}

fn lambda_for(config: &ExperimentConfig, instance: &Instance) -> Result<f64> {
    match config.lambda {
        Some(l) => Ok(l),
        None => Ok(penalty_bound(instance)?.lambda_star),
    }
}

/// Reference fairness for the gap column: exact certificate-backed
/// optimum at desk scale, a long tightened self-run otherwise.
fn reference_fairness(instance: &Instance, config: &ExperimentConfig) -> Result<f64> {
    if instance.paths.len() <= 200 {
        let sol = solve_reference(instance, None)?;
        let part = partition_domains(instance, 1, 0)?;
        let st = SolverState::new(instance, &part, 1.0, None)?;
        return Ok(st.fairness(&sol.x));
    }
    let part = partition_domains(instance, 1, 0)?;
    let mut st = SolverState::new(instance, &part, lambda_for(config, instance)?, None)?;
    st.solve(
        &StopCriteria {
            residual_threshold: (config.residual_threshold * 1e-2).max(1e-8),
            max_iters: config.max_iters.saturating_mul(10),
            wall_clock: None,
        },
        None,
    )?;
    Ok(st.fairness(&st.feasible_point()))
}

/// Runs `f` over `items` with at most `workers` threads, preserving the
/// input order of the results.
fn map_parallel<T, R, F>(items: Vec<T>, workers: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let workers = workers.max(1);
    let items: Vec<(usize, T)> = items.into_iter().enumerate().collect();
    let queue = Mutex::new(items);
    let results: Mutex<Vec<Option<R>>> = {
        let n = queue.lock().unwrap().len();
        Mutex::new((0..n).map(|_| None).collect())
    };
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().pop();
                let Some((idx, item)) = next else { break };
                let out = f(item);
                results.lock().unwrap()[idx] = Some(out);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.unwrap()).collect()
}

#[derive(Debug, Clone)]
pub struct ConvergenceCell {
    pub domains: usize,
    pub seed: u64,
    pub reference: f64,
    pub trace: IterationTrace,
}

/// Mean optimality gap and 95% confidence half-width across seeds at one
/// iteration, per domain count.
#[derive(Debug, Clone)]
pub struct GapSummary {
    pub domains: usize,
    pub iteration: u64,
    pub mean_gap: f64,
    pub ci_half_width: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceResults {
    pub cells: Vec<ConvergenceCell>,
    pub summary: Vec<GapSummary>,
}

/// Two-sided 95% half-width under the t-distribution; zero for a single
/// sample.
fn t_ci_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let t = StudentsT::new(0.0, 1.0, n as f64 - 1.0)
        .expect("valid dof")
        .inverse_cdf(0.975);
    t * (var / n as f64).sqrt()
}

pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceResults> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &m in &config.domain_counts {
        for &seed in &config.seeds {
            jobs.push((m, seed));
        }
    }
    let outcomes = map_parallel(jobs, config.workers, |(m, seed)| -> Result<ConvergenceCell> {
        let instance = build_instance(&config.instance, seed)?;
        let reference = reference_fairness(&instance, config)?;
        let partition = partition_domains(&instance, m, seed)?;
        let lambda = lambda_for(config, &instance)?;
        let mut state = SolverState::new(&instance, &partition, lambda, None)?;
        let trace = state.solve(
            &StopCriteria {
                residual_threshold: config.residual_threshold,
                max_iters: config.max_iters,
                wall_clock: None,
            },
            Some(reference),
        )?;
        // Re-check feasibility of the final recorded point rather than
        // trusting the solver.
        let feasible = state.feasible_point();
        if state.min_slack(&feasible) < -1e-9 || feasible.iter().any(|&v| v < -1e-12) {
            return Err(Error::Certification("recorded point violates capacities".into()));
        }
        Ok(ConvergenceCell { domains: m, seed, reference, trace })
    });
    let mut cells = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        cells.push(outcome?);
    }
    cells.sort_by_key(|c| (c.domains, c.seed));
    let summary = summarize_gaps(&cells);
    Ok(ConvergenceResults { cells, summary })
}

/// Per (domains, iteration) mean gap across seeds, carrying each seed's
/// last recorded gap forward once its run has stopped. Iteration 0 is the
/// 100% gap of the zero initialization, by convention.
fn summarize_gaps(cells: &[ConvergenceCell]) -> Vec<GapSummary> {
    let mut by_domains: BTreeMap<usize, Vec<&ConvergenceCell>> = BTreeMap::new();
    for c in cells {
        by_domains.entry(c.domains).or_default().push(c);
    }
    let mut out = Vec::new();
    for (&m, group) in &by_domains {
        let horizon = group.iter().map(|c| c.trace.rows.len()).max().unwrap_or(0);
        out.push(GapSummary {
            domains: m,
            iteration: 0,
            mean_gap: 1.0,
            ci_half_width: 0.0,
            samples: group.len(),
        });
        for it in 0..horizon {
            let gaps: Vec<f64> = group
                .iter()
                .filter_map(|c| {
                    let row = c.trace.rows.get(it).or_else(|| c.trace.rows.last())?;
                    row.gap
                })
                .collect();
            if gaps.is_empty() {
                continue;
            }
            out.push(GapSummary {
                domains: m,
                iteration: (it + 1) as u64,
                mean_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
                ci_half_width: t_ci_half_width(&gaps),
                samples: gaps.len(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigResult {
    pub seed: u64,
    pub theta: f64,
    /// Paths moved by more than epsilon from the incumbent.
    pub n: usize,
    /// Achieved fairness under the new weights.
    pub phi: f64,
    /// Total movement over the reconfigured paths.
    pub psi: f64,
    pub converged: bool,
}

pub fn run_reconfig(config: &ExperimentConfig) -> Result<Vec<ReconfigResult>> {
    config.validate()?;
    let seeds = config.seeds.clone();
    let outcomes = map_parallel(seeds, config.workers, |seed| -> Result<Vec<ReconfigResult>> {
        let mut instance = build_instance(&config.instance, seed)?;
        for r in &mut instance.requests {
            r.weight = 1.0;
        }
        // Incumbent allocation: the optimum under unit weights.
        let x0 = solve_reference(&instance, None)?.x;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = config.weight_range;
        for r in &mut instance.requests {
            r.weight = rng.gen_range(lo..=hi);
        }
        let partition = partition_domains(&instance, config.domain_counts[0], seed)?;
        let lambda = lambda_for(config, &instance)?;
        let init: BTreeMap<String, f64> = instance
            .paths
            .iter()
            .zip(&x0)
            .map(|(p, &v)| (p.id.clone(), v))
            .collect();
        let mut out = Vec::new();
        for &theta in &config.theta_grid {
            let mut state = SolverState::new(&instance, &partition, lambda, Some(&init))?;
            state.set_switching(theta, x0.clone())?;
            let trace = state.solve(
                &StopCriteria {
                    residual_threshold: config.residual_threshold,
                    max_iters: config.max_iters,
                    wall_clock: None,
                },
                None,
            )?;
            let x = state.feasible_point();
            let mut n = 0usize;
            let mut psi = 0.0;
            for (&xa, &xb) in x.iter().zip(&x0) {
                let delta = (xa - xb).abs();
                if delta > config.epsilon {
                    n += 1;
                    psi += delta;
                }
            }
            out.push(ReconfigResult {
                seed,
                theta,
                n,
                phi: state.fairness(&x),
                psi,
                converged: trace.converged,
            });
        }
        Ok(out)
    });
    let mut results = Vec::new();
    for outcome in outcomes {
        results.extend(outcome?);
    }
    results.sort_by(|a, b| (a.seed, a.theta).partial_cmp(&(b.seed, b.theta)).unwrap());
    Ok(results)
}

/// Per-pair and per-domain float counts for one convergence cell set,
/// cross-checked against the incidence closed form by the solver's own
/// accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub domains: usize,
    pub seed: u64,
    pub from: usize,
    pub to: usize,
    pub floats_per_round: u64,
}

pub fn overhead_report(cells: &[ConvergenceCell]) -> Vec<OverheadRow> {
    let mut out = Vec::new();
    for c in cells {
        for &(from, to, floats_per_round) in &c.trace.pair_floats {
            out.push(OverheadRow { domains: c.domains, seed: c.seed, from, to, floats_per_round });
        }
    }
    out.sort_by_key(|r| (r.domains, r.seed, r.from, r.to));
    out
}

/// Header line carrying the run timestamp and config hash; everything
/// after it is deterministic for fixed seeds.
pub fn csv_header(config: &ExperimentConfig) -> String {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# generated_unix={} config_sha256={} version={}\n", now, config.hash(), env!("CARGO_PKG_VERSION"))
}

pub fn convergence_csv_body(results: &ConvergenceResults) -> String {
    let mut out = String::from("domains,iteration,mean_gap,ci_half_width,samples\n");
    for row in &results.summary {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.domains, row.iteration, row.mean_gap, row.ci_half_width, row.samples
        ));
    }
    out
}

pub fn reconfig_csv_body(results: &[ReconfigResult]) -> String {
    let mut out = String::from("seed,theta,n,phi,psi,converged\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.seed, r.theta, r.n, r.phi, r.psi, r.converged
        ));
    }
    out
}

pub fn overhead_csv_body(rows: &[OverheadRow]) -> String {
    let mut out = String::from("domains,seed,from_domain,to_domain,floats_per_round\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.domains, r.seed, r.from, r.to, r.floats_per_round
        ));
    }
    out
}

/// Run manifest: config hash, seeds, library version.
pub fn manifest_json(config: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(&serde_json::json!({
        "config_sha256": config.hash(),
        "seeds": config.seeds,
        "version": env!("CARGO_PKG_VERSION"),
    }))
    .expect("manifest serializes")
}
