//! The distributed consensus ADMM engine.
//!
//! One round executes, in order: the consensus stage (averaging every
//! private copy of each path variable), the dual updates, the primal stage
//! (per-request proximal updates and per-link simplex projections), and the
//! construction of the per-domain contributions exchanged with peers.
//! Rounds are synchronous; a round is over when every domain has finished.
//!
//! All reductions run in a fixed ascending (domain, link, path) order so
//! results are bitwise reproducible regardless of how work is scheduled.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::kernel::{alpha_utility, project_simplex, prox_request, prox_request_l1, ProxInput, Switching};
use crate::lp;
use crate::model::{validate, Instance, Path, Request};
use crate::partition::Partition;

/// Index-resolved instance: ids mapped to dense indices, incidence lists
/// sorted ascending.
#[derive(Debug, Clone)]
pub struct CompiledInstance {
    pub alpha: f64,
    pub link_ids: Vec<String>,
    pub capacity: Vec<f64>,
    pub path_ids: Vec<String>,
    /// Per path: link indices, ascending.
    pub path_links: Vec<Vec<usize>>,
    pub path_request: Vec<usize>,
    pub request_ids: Vec<String>,
    pub weights: Vec<f64>,
    /// Per request: path indices, ascending.
    pub request_paths: Vec<Vec<usize>>,
    /// Per link: path indices traversing it, ascending (the slot order of
    /// the z and u copies).
    pub link_paths: Vec<Vec<usize>>,
    /// Per path: slot of this path within each of its links' copy vectors,
    /// parallel to `path_links`.
    pub path_slots: Vec<Vec<usize>>,
}

impl CompiledInstance {
    pub fn compile(instance: &Instance) -> Result<Self> {
        let report = validate(instance);
        if !report.is_ok() {
            return Err(Error::InvalidInstance(report.to_string()));
        }
        let link_index: BTreeMap<&str, usize> =
            instance.links.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
        let path_index: BTreeMap<&str, usize> =
            instance.paths.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();

        let mut path_links = Vec::with_capacity(instance.paths.len());
        for p in &instance.paths {
            let mut links: Vec<usize> = p.links.iter().map(|l| link_index[l.as_str()]).collect();
            links.sort_unstable();
            path_links.push(links);
        }
        let mut path_request = vec![usize::MAX; instance.paths.len()];
        let mut request_paths = Vec::with_capacity(instance.requests.len());
        for (ri, r) in instance.requests.iter().enumerate() {
            let mut paths: Vec<usize> = r.paths.iter().map(|p| path_index[p.as_str()]).collect();
            paths.sort_unstable();
            for &p in &paths {
                path_request[p] = ri;
            }
            request_paths.push(paths);
        }
        let mut link_paths = vec![Vec::new(); instance.links.len()];
        for (pi, links) in path_links.iter().enumerate() {
            for &li in links {
                link_paths[li].push(pi);
            }
        }
        for slots in &mut link_paths {
            slots.sort_unstable();
        }
        let mut path_slots = vec![Vec::new(); instance.paths.len()];
        for (pi, links) in path_links.iter().enumerate() {
            for &li in links {
                let slot = link_paths[li].binary_search(&pi).unwrap();
                path_slots[pi].push(slot);
            }
        }
        Ok(CompiledInstance {
            alpha: instance.alpha,
            link_ids: instance.links.iter().map(|l| l.id.clone()).collect(),
            capacity: instance.links.iter().map(|l| l.capacity).collect(),
            path_ids: instance.paths.iter().map(|p| p.id.clone()).collect(),
            path_links,
            path_request,
            request_ids: instance.requests.iter().map(|r| r.id.clone()).collect(),
            weights: instance.requests.iter().map(|r| r.weight).collect(),
            request_paths,
            link_paths,
            path_slots,
        })
    }

    /// Number of private copies of path `p`: one per traversed link plus
    /// the owning request's copy.
    pub fn multiplicity(&self, p: usize) -> usize {
        self.path_links[p].len() + 1
    }

    pub fn total_copies(&self) -> usize {
        (0..self.path_ids.len()).map(|p| self.multiplicity(p)).sum()
    }

    /// Per-request aggregates of a per-path allocation.
    pub fn aggregates(&self, alloc: &[f64]) -> Vec<f64> {
        self.request_paths
            .iter()
            .map(|paths| paths.iter().map(|&p| alloc[p]).sum())
            .collect()
    }
}

/// One domain's share of a path's copies: which of the path's links it
/// owns, and whether it owns the request-side x copy.
#[derive(Debug, Clone)]
struct PathGroup {
    domain: usize,
    /// Positions into `path_links[p]`, ascending.
    link_positions: Vec<usize>,
    owns_x: bool,
}

#[derive(Debug, Clone)]
struct DomainLayout {
    num_domains: usize,
    /// Per path: participating domains ascending, with their copy shares.
    path_groups: Vec<Vec<PathGroup>>,
}

impl DomainLayout {
    fn build(compiled: &CompiledInstance, partition: &Partition) -> Result<Self> {
        let num_domains = partition.num_domains;
        let mut link_domain = vec![0usize; compiled.link_ids.len()];
        for (i, id) in compiled.link_ids.iter().enumerate() {
            link_domain[i] = *partition
                .link_domain
                .get(id)
                .ok_or_else(|| Error::Partition(format!("link {id} missing from partition")))?;
        }
        let mut request_domain = vec![0usize; compiled.request_ids.len()];
        for (i, id) in compiled.request_ids.iter().enumerate() {
            let d = partition
                .domain_requests
                .iter()
                .position(|set| set.contains(id))
                .ok_or_else(|| Error::Partition(format!("request {id} missing from partition")))?;
            request_domain[i] = d;
        }
        let mut path_groups = Vec::with_capacity(compiled.path_ids.len());
        for (p, links) in compiled.path_links.iter().enumerate() {
            let owner = request_domain[compiled.path_request[p]];
            let mut by_domain: BTreeMap<usize, PathGroup> = BTreeMap::new();
            for (pos, &li) in links.iter().enumerate() {
                let d = link_domain[li];
                by_domain
                    .entry(d)
                    .or_insert_with(|| PathGroup { domain: d, link_positions: Vec::new(), owns_x: false })
                    .link_positions
                    .push(pos);
            }
            by_domain
                .entry(owner)
                .or_insert_with(|| PathGroup { domain: owner, link_positions: Vec::new(), owns_x: false })
                .owns_x = true;
            path_groups.push(by_domain.into_values().collect());
        }
        Ok(DomainLayout { num_domains, path_groups })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
}

/// Switching-cost mode: an l1 price on moving away from the incumbent
/// path-wise allocation.
#[derive(Debug, Clone)]
pub struct SwitchingConfig {
    pub theta: f64,
    /// Baseline allocation per path index.
    pub baseline: Vec<f64>,
}

/// Full solver state: every private copy, consensus point, duals, penalty.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub instance: Instance,
    pub compiled: CompiledInstance,
    pub partition: Partition,
    layout: DomainLayout,
    pub lambda: f64,
    pub iteration: u64,
    /// Request-side copies x^m_p, one per path (each path has one owner).
    pub x: Vec<f64>,
    /// Duals paired with x.
    pub v: Vec<f64>,
    /// Link-side copies z^j_p, indexed [link][slot].
    pub z: Vec<Vec<f64>>,
    /// Duals paired with z.
    pub u: Vec<Vec<f64>>,
    pub z_tilde: Vec<f64>,
    prev_z_tilde: Vec<f64>,
    pub switching: Option<SwitchingConfig>,
    /// Floats transmitted between each ordered domain pair in the last
    /// round, flattened row-major.
    pub floats_last_round: Vec<u64>,
}

impl SolverState {
    /// Builds the initial state. All primal copies take the initial point
    /// (zero by default, or a per-path-id map), duals start at zero.
    pub fn new(
        instance: &Instance,
        partition: &Partition,
        lambda: f64,
        init_point: Option<&BTreeMap<String, f64>>,
    ) -> Result<Self> {
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
        }
        let compiled = CompiledInstance::compile(instance)?;
        let layout = DomainLayout::build(&compiled, partition)?;
        let init = |p: usize| -> f64 {
            init_point.and_then(|m| m.get(&compiled.path_ids[p])).copied().unwrap_or(0.0)
        };
        let x: Vec<f64> = (0..compiled.path_ids.len()).map(init).collect();
        let z: Vec<Vec<f64>> = compiled
            .link_paths
            .iter()
            .map(|paths| paths.iter().map(|&p| init(p)).collect())
            .collect();
        let u: Vec<Vec<f64>> = compiled.link_paths.iter().map(|ps| vec![0.0; ps.len()]).collect();
        let m = partition.num_domains;
        Ok(SolverState {
            instance: instance.clone(),
            compiled: compiled.clone(),
            partition: partition.clone(),
            layout,
            lambda,
            iteration: 0,
            v: vec![0.0; compiled.path_ids.len()],
            z_tilde: vec![0.0; compiled.path_ids.len()],
            prev_z_tilde: vec![0.0; compiled.path_ids.len()],
            x,
            z,
            u,
            switching: None,
            floats_last_round: vec![0; m * m],
        })
    }

    pub fn num_domains(&self) -> usize {
        self.layout.num_domains
    }

    pub fn set_switching(&mut self, theta: f64, baseline: Vec<f64>) -> Result<()> {
        if theta < 0.0 {
            return Err(Error::InvalidParameter(format!("theta must be >= 0, got {theta}")));
        }
        if baseline.len() != self.compiled.path_ids.len() {
            return Err(Error::InvalidParameter("baseline length mismatch".into()));
        }
        self.switching = Some(SwitchingConfig { theta, baseline });
        Ok(())
    }

    /// Consensus stage: rebuilds the consensus point from the per-domain
    /// contributions and records the floats each domain sends its peers.
    /// Contributions are summed in ascending domain order, and inside a
    /// domain in ascending link order, mirroring the exchange protocol.
    fn consensus(&mut self) {
        let m = self.layout.num_domains;
        for c in self.floats_last_round.iter_mut() {
            *c = 0;
        }
        std::mem::swap(&mut self.prev_z_tilde, &mut self.z_tilde);
        for p in 0..self.compiled.path_ids.len() {
            let groups = &self.layout.path_groups[p];
            let mut total = 0.0;
            for g in groups {
                let mut contribution = 0.0;
                for &pos in &g.link_positions {
                    let li = self.compiled.path_links[p][pos];
                    let slot = self.compiled.path_slots[p][pos];
                    contribution += self.z[li][slot];
                }
                if g.owns_x {
                    contribution += self.x[p];
                }
                total += contribution;
            }
            self.z_tilde[p] = total / (self.compiled.multiplicity(p) as f64);
            // Each participating domain ships its one contribution float to
            // every peer that also holds copies of this path.
            for g in groups {
                for h in groups {
                    if g.domain != h.domain {
                        self.floats_last_round[g.domain * m + h.domain] += 1;
                    }
                }
            }
        }
    }

    /// Dual then primal update for every link: `u += (z - z~)/lambda`
    /// followed by the Euclidean projection of `z~ - lambda u` onto the
    /// link's capacity simplex.
    fn update_links(&mut self) -> Result<()> {
        let lambda = self.lambda;
        let mut point = Vec::new();
        for li in 0..self.compiled.link_ids.len() {
            let paths = &self.compiled.link_paths[li];
            point.clear();
            for (slot, &p) in paths.iter().enumerate() {
                self.u[li][slot] += (self.z[li][slot] - self.z_tilde[p]) / lambda;
                point.push(self.z_tilde[p] - lambda * self.u[li][slot]);
            }
            if !point.is_empty() {
                self.z[li] = project_simplex(&point, self.compiled.capacity[li]);
            }
        }
        Ok(())
    }

    /// Dual then primal update for every request: `v += (x - z~)/lambda`
    /// followed by the proximal update with anchor `z~ - lambda v`.
    fn update_requests(&mut self) -> Result<()> {
        let lambda = self.lambda;
        let mut anchor = Vec::new();
        let mut baseline = Vec::new();
        for r in 0..self.compiled.request_ids.len() {
            let paths = &self.compiled.request_paths[r];
            if paths.is_empty() {
                continue;
            }
            anchor.clear();
            for &p in paths {
                self.v[p] += (self.x[p] - self.z_tilde[p]) / lambda;
                anchor.push(self.z_tilde[p] - lambda * self.v[p]);
            }
            let switching = self.switching.as_ref().map(|sw| {
                baseline.clear();
                baseline.extend(paths.iter().map(|&p| sw.baseline[p]));
                sw.theta
            });
            let input = ProxInput {
                anchor: &anchor,
                lambda,
                weight: self.compiled.weights[r],
                alpha: self.compiled.alpha,
                switching: switching.map(|theta| Switching { theta, baseline: &baseline }),
            };
            let out = match &input.switching {
                Some(_) => prox_request_l1(&input)?,
                None => prox_request(&input)?,
            };
            for (&p, &val) in paths.iter().zip(&out) {
                self.x[p] = val;
            }
        }
        Ok(())
    }

    /// One synchronous round: consensus, dual updates, primal updates.
    pub fn iterate(&mut self) -> Result<()> {
        self.consensus();
        self.update_links()?;
        self.update_requests()?;
        self.iteration += 1;
        Ok(())
    }

    /// Consensus residuals: primal is the copy-to-consensus deviation,
    /// dual the scaled consensus movement weighted by copy multiplicity;
    /// both normalized by the square root of the total copy count.
    pub fn residuals(&self) -> Residuals {
        let n = self.compiled.total_copies().max(1) as f64;
        let mut primal_sq = 0.0;
        let mut dual_sq = 0.0;
        for p in 0..self.compiled.path_ids.len() {
            let zt = self.z_tilde[p];
            let dx = self.x[p] - zt;
            primal_sq += dx * dx;
            for (pos, &li) in self.compiled.path_links[p].iter().enumerate() {
                let slot = self.compiled.path_slots[p][pos];
                let dz = self.z[li][slot] - zt;
                primal_sq += dz * dz;
            }
            let dt = zt - self.prev_z_tilde[p];
            dual_sq += self.compiled.multiplicity(p) as f64 * dt * dt;
        }
        Residuals {
            primal: (primal_sq / n).sqrt(),
            dual: (dual_sq / n).sqrt() / self.lambda,
        }
    }

    /// The anytime-feasible allocation: per path, the minimum over the
    /// link-side copies. Capacity-feasible at every iteration because each
    /// link copy respects its own simplex.
    pub fn feasible_point(&self) -> Vec<f64> {
        (0..self.compiled.path_ids.len())
            .map(|p| {
                self.compiled.path_links[p]
                    .iter()
                    .zip(&self.compiled.path_slots[p])
                    .map(|(&li, &slot)| self.z[li][slot])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    /// Smallest capacity slack of an allocation; nonnegative means feasible.
    pub fn min_slack(&self, alloc: &[f64]) -> f64 {
        let mut slack = f64::INFINITY;
        for li in 0..self.compiled.link_ids.len() {
            let load: f64 =
                self.compiled.link_paths[li].iter().map(|&p| alloc[p]).sum();
            slack = slack.min(self.compiled.capacity[li] - load);
        }
        slack
    }

    /// Achieved fairness of a per-path allocation; NaN while some
    /// aggregate is still zero.
    pub fn fairness(&self, alloc: &[f64]) -> f64 {
        let y = self.compiled.aggregates(alloc);
        alpha_utility(&y, &self.compiled.weights, self.compiled.alpha).unwrap_or(f64::NAN)
    }

    /// Closed-form floats per round between ordered domain pairs:
    /// |C_m intersect C_n| where C_m collects the paths domain m holds
    /// copies of (traversing paths plus paths of its own requests).
    pub fn expected_pair_floats(&self) -> Vec<u64> {
        let m = self.layout.num_domains;
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
        for p in 0..self.compiled.path_ids.len() {
            for g in &self.layout.path_groups[p] {
                sets[g.domain].insert(p);
            }
        }
        let mut out = vec![0u64; m * m];
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    out[a * m + b] = sets[a].intersection(&sets[b]).count() as u64;
                }
            }
        }
        out
    }

    /// Runs rounds until both residuals drop below the threshold or the
    /// budget runs out, recording one trace row per round.
    pub fn solve(&mut self, stop: &StopCriteria, reference: Option<f64>) -> Result<IterationTrace> {
        let mut trace = IterationTrace {
            rows: Vec::new(),
            converged: false,
            num_domains: self.layout.num_domains,
            pair_floats: Vec::new(),
        };
        let started = std::time::Instant::now();
        while self.iteration < stop.max_iters {
            self.iterate()?;
            let res = self.residuals();
            let feas = self.feasible_point();
            let fairness = self.fairness(&feas);
            let gap = reference.map(|phi_star| optimality_gap(phi_star, fairness));
            trace.rows.push(TraceRow {
                iteration: self.iteration,
                primal_residual: res.primal,
                dual_residual: res.dual,
                fairness,
                gap,
                min_slack: self.min_slack(&feas),
                floats_total: self.floats_last_round.iter().sum(),
            });
            if res.primal < stop.residual_threshold && res.dual < stop.residual_threshold {
                trace.converged = true;
                break;
            }
            if let Some(deadline) = stop.wall_clock {
                if started.elapsed() >= deadline {
                    break;
                }
            }
        }
        let m = self.layout.num_domains;
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    trace.pair_floats.push((a, b, self.floats_last_round[a * m + b]));
                }
            }
        }
        Ok(trace)
    }

    /// Applies an on-the-fly traffic change, warm-starting from the current
    /// primal/dual state.
    pub fn apply_event(&mut self, event: Event) -> Result<()> {
        match event {
            Event::WeightChange { request, weight } => {
                if !(weight > 0.0 && weight.is_finite()) {
                    return Err(Error::InvalidParameter(format!("weight must be > 0, got {weight}")));
                }
                let idx = self
                    .compiled
                    .request_ids
                    .iter()
                    .position(|id| id == &request)
                    .ok_or_else(|| Error::UnknownId(format!("request {request}")))?;
                self.compiled.weights[idx] = weight;
                self.instance.requests.iter_mut().find(|r| r.id == request).unwrap().weight =
                    weight;
                Ok(())
            }
            Event::RequestAdd { request, paths } => {
                if self.instance.request(&request.id).is_some() {
                    return Err(Error::InvalidParameter(format!(
                        "request {} already exists",
                        request.id
                    )));
                }
                self.instance.paths.extend(paths);
                self.instance.requests.push(request);
                self.recompile()
            }
            Event::RequestRemove { request } => {
                let Some(pos) = self.instance.requests.iter().position(|r| r.id == request) else {
                    return Err(Error::UnknownId(format!("request {request}")));
                };
                let removed = self.instance.requests.remove(pos);
                self.instance.paths.retain(|p| !removed.paths.contains(&p.id));
                self.recompile()
            }
            Event::BaselineReset { theta } => {
                let baseline = self.feasible_point();
                self.set_switching(theta, baseline)
            }
        }
    }

    /// Rebuilds the index structures after the instance changed, carrying
    /// existing copies and duals over by id; new entries start at zero.
    fn recompile(&mut self) -> Result<()> {
        let compiled = CompiledInstance::compile(&self.instance)?;
        // Re-derive the per-domain request sets against the unchanged link
        // assignment.
        let link_domain = self.partition.link_domain.clone();
        let mut domain_paths = vec![BTreeSet::new(); self.partition.num_domains];
        for p in &self.instance.paths {
            for l in &p.links {
                domain_paths[link_domain[l]].insert(p.id.clone());
            }
        }
        // Same source-domain rule as the original partitioning.
        let mut domain_requests = vec![BTreeSet::new(); self.partition.num_domains];
        for r in &self.instance.requests {
            let d = request_home_domain(&self.instance, r, &link_domain)?;
            domain_requests[d].insert(r.id.clone());
        }
        self.partition.domain_paths = domain_paths;
        self.partition.domain_requests = domain_requests;
        let layout = DomainLayout::build(&compiled, &self.partition)?;

        let old_path: BTreeMap<&str, usize> =
            self.compiled.path_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let old_link: BTreeMap<&str, usize> =
            self.compiled.link_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

        let map_path = |id: &str| old_path.get(id).copied();
        let x: Vec<f64> = compiled
            .path_ids
            .iter()
            .map(|id| map_path(id).map_or(0.0, |i| self.x[i]))
            .collect();
        let v: Vec<f64> = compiled
            .path_ids
            .iter()
            .map(|id| map_path(id).map_or(0.0, |i| self.v[i]))
            .collect();
        let z_tilde: Vec<f64> = compiled
            .path_ids
            .iter()
            .map(|id| map_path(id).map_or(0.0, |i| self.z_tilde[i]))
            .collect();
        let prev_z_tilde: Vec<f64> = compiled
            .path_ids
            .iter()
            .map(|id| map_path(id).map_or(0.0, |i| self.prev_z_tilde[i]))
            .collect();
        let mut z = Vec::with_capacity(compiled.link_ids.len());
        let mut u = Vec::with_capacity(compiled.link_ids.len());
        for (li, id) in compiled.link_ids.iter().enumerate() {
            let old_li = old_link[id.as_str()];
            let mut zrow = Vec::new();
            let mut urow = Vec::new();
            for &p in &compiled.link_paths[li] {
                let entry = map_path(&compiled.path_ids[p]).and_then(|old_p| {
                    self.compiled.link_paths[old_li]
                        .binary_search(&old_p)
                        .ok()
                        .map(|slot| (self.z[old_li][slot], self.u[old_li][slot]))
                });
                let (zv, uv) = entry.unwrap_or((0.0, 0.0));
                zrow.push(zv);
                urow.push(uv);
            }
            z.push(zrow);
            u.push(urow);
        }
        if let Some(sw) = &mut self.switching {
            let baseline: Vec<f64> = compiled
                .path_ids
                .iter()
                .map(|id| map_path(id).map_or(0.0, |i| sw.baseline[i]))
                .collect();
            sw.baseline = baseline;
        }
        self.compiled = compiled;
        self.layout = layout;
        self.x = x;
        self.v = v;
        self.z = z;
        self.u = u;
        self.z_tilde = z_tilde;
        self.prev_z_tilde = prev_z_tilde;
        Ok(())
    }
}

fn request_home_domain(
    instance: &Instance,
    request: &Request,
    link_domain: &BTreeMap<String, usize>,
) -> Result<usize> {
    if let Some(node) = &request.source_node {
        let incident = instance
            .edges
            .iter()
            .filter(|e| &e.from == node || &e.to == node)
            .map(|e| e.link.as_str())
            .min();
        if let Some(link) = incident {
            return Ok(link_domain[link]);
        }
    }
    let first_path = request
        .paths
        .iter()
        .min()
        .ok_or_else(|| Error::InvalidInstance(format!("request {} has no paths", request.id)))?;
    let path: &Path = instance
        .paths
        .iter()
        .find(|p| &p.id == first_path)
        .ok_or_else(|| Error::UnknownId(format!("path {first_path}")))?;
    Ok(link_domain[&path.links[0]])
}

/// Relative optimality gap convention: 1.0 while the feasible point still
/// has zero aggregates (utility undefined), relative difference otherwise.
pub fn optimality_gap(phi_star: f64, phi: f64) -> f64 {
    if phi.is_nan() {
        return 1.0;
    }
    if phi_star.abs() > 1e-12 {
        (phi_star - phi).abs() / phi_star.abs()
    } else {
        (phi_star - phi).abs()
    }
}

#[derive(Debug, Clone)]
pub struct StopCriteria {
    pub residual_threshold: f64,
    pub max_iters: u64,
    pub wall_clock: Option<std::time::Duration>,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria { residual_threshold: 1e-2, max_iters: 10_000, wall_clock: None }
    }
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: u64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub fairness: f64,
    pub gap: Option<f64>,
    pub min_slack: f64,
    pub floats_total: u64,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
    pub converged: bool,
    pub num_domains: usize,
    /// `(from, to, floats per round)` for every ordered domain pair.
    pub pair_floats: Vec<(usize, usize, u64)>,
}

impl IterationTrace {
    /// CSV body, deterministic: shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,primal_residual,dual_residual,fairness_value,optimality_gap,feasible_min_slack,floats_sent_total\n",
        );
        for row in &self.rows {
            let gap = row.gap.map_or(String::new(), |g| g.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.iteration,
                row.primal_residual,
                row.dual_residual,
                row.fairness,
                gap,
                row.min_slack,
                row.floats_total
            ));
        }
        out
    }

    /// Companion per-pair message table.
    pub fn messages_csv(&self) -> String {
        let mut out = String::from("from_domain,to_domain,floats_per_round\n");
        for &(a, b, n) in &self.pair_floats {
            out.push_str(&format!("{a},{b},{n}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum Event {
    WeightChange { request: String, weight: f64 },
    RequestAdd { request: Request, paths: Vec<Path> },
    RequestRemove { request: String },
    BaselineReset { theta: f64 },
}

/// The derived penalty initialization: utopic aggregates, local midpoints,
/// the aggregate lower bound, and the penalty that balances the extreme
/// curvatures of the objective.
#[derive(Debug, Clone)]
pub struct PenaltyBound {
    pub a: BTreeMap<String, f64>,
    pub rho: BTreeMap<String, f64>,
    pub d: BTreeMap<String, f64>,
    pub lambda_star: f64,
}

/// Computes utopic aggregates by a small exact LP per request (packing its
/// own paths alone into the network), the weight-share midpoints, the
/// alpha-dependent lower bound, and lambda*.
pub fn penalty_bound(instance: &Instance) -> Result<PenaltyBound> {
    let compiled = CompiledInstance::compile(instance)?;
    let alpha = compiled.alpha;
    let nreq = compiled.request_ids.len();
    if nreq == 0 {
        return Err(Error::InvalidParameter("penalty bound needs at least one request".into()));
    }

    // Utopic aggregate a_r: max sum of r's path variables subject to the
    // capacities of the links r touches, all other requests at zero.
    let mut a = vec![0.0; nreq];
    for r in 0..nreq {
        let paths = &compiled.request_paths[r];
        let mut touched: Vec<usize> = paths
            .iter()
            .flat_map(|&p| compiled.path_links[p].iter().copied())
            .collect();
        touched.sort_unstable();
        touched.dedup();
        let rows: Vec<Vec<f64>> = touched
            .iter()
            .map(|&li| {
                paths
                    .iter()
                    .map(|&p| if compiled.path_links[p].contains(&li) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = touched.iter().map(|&li| compiled.capacity[li]).collect();
        let sol = lp::maximize(&vec![1.0; paths.len()], &rows, &b)?;
        a[r] = sol.objective;
        if a[r] <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "request {} has a zero-capacity cut (a_r = 0)",
                compiled.request_ids[r]
            )));
        }
    }

    // R(r): requests sharing a link with r (including r).
    let link_sets: Vec<BTreeSet<usize>> = (0..nreq)
        .map(|r| {
            compiled.request_paths[r]
                .iter()
                .flat_map(|&p| compiled.path_links[p].iter().copied())
                .collect()
        })
        .collect();
    let contenders: Vec<Vec<usize>> = (0..nreq)
        .map(|r| {
            (0..nreq)
                .filter(|&s| !link_sets[r].is_disjoint(&link_sets[s]))
                .collect()
        })
        .collect();

    let w = &compiled.weights;
    let rho: Vec<f64> = (0..nreq)
        .map(|r| {
            let wsum: f64 = contenders[r].iter().map(|&s| w[s]).sum();
            w[r] / wsum * a[r]
        })
        .collect();

    let d: Vec<f64> = if alpha >= 1.0 {
        let dagger = (0..nreq)
            .min_by(|&i, &j| rho[i].partial_cmp(&rho[j]).unwrap())
            .unwrap();
        (0..nreq)
            .map(|r| rho[dagger].powf(1.0 - 1.0 / alpha) * rho[r].powf(1.0 / alpha))
            .collect()
    } else {
        (0..nreq)
            .map(|r| {
                let denom: f64 =
                    contenders[r].iter().map(|&s| w[s] * a[s].powf(1.0 - alpha)).sum();
                (w[r] * a[r] / denom).powf(1.0 / alpha)
            })
            .collect()
    };

    let min_curv = (0..nreq).map(|r| w[r] / a[r].powf(alpha + 1.0)).fold(f64::INFINITY, f64::min);
    let max_curv = (0..nreq).map(|r| w[r] / d[r].powf(alpha + 1.0)).fold(0.0_f64, f64::max);
    let lambda_star = alpha * (min_curv * max_curv).powf(-0.5);

    let ids = &compiled.request_ids;
    Ok(PenaltyBound {
        a: ids.iter().cloned().zip(a).collect(),
        rho: ids.iter().cloned().zip(rho).collect(),
        d: ids.iter().cloned().zip(d).collect(),
        lambda_star,
    })
}
