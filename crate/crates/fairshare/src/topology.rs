//! Synthetic topologies and request generation.
//!
//! Two generators are provided: preferential-attachment (Barabasi-Albert)
//! graphs and k-ary fat trees with an extra root above the core layer.
//! Requests are drawn between uniformly random endpoints and routed along
//! k-shortest loop-free paths (hop count metric, lexicographic tie-break),
//! then assembled into an [`Instance`](crate::model::Instance).

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{EdgeMeta, Instance, Link, Path, Request};

/// An undirected multigraph-free topology. Edges are stored as `(u, v)`
/// with `u < v`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

/// Whether an undirected topology edge becomes one shared capacity resource
/// or one resource per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkMode {
    Undirected,
    Directed,
}

impl Topology {
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(n) = stack.pop() {
            for &nb in &adj[n] {
                if !seen[nb] {
                    seen[nb] = true;
                    count += 1;
                    stack.push(nb);
                }
            }
        }
        count == self.nodes.len()
    }
}

/// Barabasi-Albert preferential attachment: a complete seed core on
/// `min_degree + 1` nodes, then each new node attaches `min_degree` edges to
/// distinct existing nodes with probability proportional to degree.
pub fn generate_barabasi_albert(num_nodes: usize, min_degree: usize, seed: u64) -> Result<Topology> {
    if min_degree < 1 || num_nodes <= min_degree {
        return Err(Error::InvalidParameter(format!(
            "need num_nodes > min_degree >= 1, got ({num_nodes}, {min_degree})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = min_degree + 1;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    // Each edge endpoint appears once here; sampling an index uniformly is
    // degree-proportional sampling of a node.
    let mut endpoints: Vec<usize> = Vec::new();
    for u in 0..core.min(num_nodes) {
        for v in (u + 1)..core.min(num_nodes) {
            edges.push((u, v));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    for new in core..num_nodes {
        let mut targets = BTreeSet::new();
        while targets.len() < min_degree {
            let t = endpoints[rng.gen_range(0..endpoints.len())];
            targets.insert(t);
        }
        for &t in &targets {
            edges.push((t.min(new), t.max(new)));
            endpoints.push(t);
            endpoints.push(new);
        }
    }
    edges.sort_unstable();
    Ok(Topology { nodes: (0..num_nodes).map(|i| format!("n{i}")).collect(), edges })
}

/// Node-count bookkeeping for a fat tree built by [`generate_fat_tree`].
#[derive(Debug, Clone, Copy)]
pub struct FatTreeShape {
    pub pods: usize,
    pub num_core: usize,
    pub num_agg: usize,
    pub num_edge: usize,
    pub num_servers: usize,
}

impl FatTreeShape {
    pub fn new(pods: usize) -> Self {
        let half = pods / 2;
        FatTreeShape {
            pods,
            num_core: half * half,
            num_agg: pods * half,
            num_edge: pods * half,
            num_servers: pods * half * half,
        }
    }

    pub fn num_nodes(&self) -> usize {
        1 + self.num_core + self.num_agg + self.num_edge + self.num_servers
    }

    pub fn num_links(&self) -> usize {
        // root-core + core-agg + agg-edge + edge-server.
        self.num_core + 3 * self.pods * (self.pods / 2) * (self.pods / 2)
    }
}

/// Standard k-ary fat tree (k = pods) with one extra root node connected to
/// every core switch. Node 0 is the root; names carry the role.
pub fn generate_fat_tree(pods: usize) -> Result<Topology> {
    if pods < 2 || pods % 2 != 0 {
        return Err(Error::InvalidParameter(format!("pods must be even and >= 2, got {pods}")));
    }
    let half = pods / 2;
    let shape = FatTreeShape::new(pods);
    let mut nodes = vec!["root".to_string()];
    let core_base = nodes.len();
    for i in 0..shape.num_core {
        nodes.push(format!("core{i}"));
    }
    let agg_base = nodes.len();
    for p in 0..pods {
        for a in 0..half {
            nodes.push(format!("agg{p}_{a}"));
        }
    }
    let edge_base = nodes.len();
    for p in 0..pods {
        for e in 0..half {
            nodes.push(format!("edge{p}_{e}"));
        }
    }
    let srv_base = nodes.len();
    for p in 0..pods {
        for e in 0..half {
            for h in 0..half {
                nodes.push(format!("srv{p}_{e}_{h}"));
            }
        }
    }

    let mut edges = Vec::new();
    for i in 0..shape.num_core {
        edges.push((0, core_base + i));
    }
    for p in 0..pods {
        for a in 0..half {
            let agg = agg_base + p * half + a;
            // Aggregation switch a talks to core group a.
            for i in 0..half {
                edges.push((core_base + a * half + i, agg));
            }
            for e in 0..half {
                edges.push((agg, edge_base + p * half + e));
            }
        }
        for e in 0..half {
            let edge = edge_base + p * half + e;
            for h in 0..half {
                edges.push((edge, srv_base + (p * half + e) * half + h));
            }
        }
    }
    let mut edges: Vec<(usize, usize)> =
        edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect();
    edges.sort_unstable();
    edges.dedup();
    Ok(Topology { nodes, edges })
}

/// Lexicographically-smallest shortest path (hop count) from `src` to `dst`
/// avoiding banned nodes and banned undirected edges.
fn shortest_path(
    adj: &[Vec<usize>],
    src: usize,
    dst: usize,
    banned_nodes: &[bool],
    banned_edges: &BTreeSet<(usize, usize)>,
) -> Option<Vec<usize>> {
    let allowed = |a: usize, b: usize| !banned_edges.contains(&(a.min(b), a.max(b)));
    if banned_nodes[src] || banned_nodes[dst] {
        return None;
    }
    // Distances to dst, then a greedy forward walk picking the smallest
    // neighbor that decreases the distance: that walk is the lexicographic
    // minimum among shortest paths.
    let mut dist = vec![usize::MAX; adj.len()];
    dist[dst] = 0;
    let mut queue = std::collections::VecDeque::from([dst]);
    while let Some(n) = queue.pop_front() {
        for &nb in &adj[n] {
            if !banned_nodes[nb] && allowed(n, nb) && dist[nb] == usize::MAX {
                dist[nb] = dist[n] + 1;
                queue.push_back(nb);
            }
        }
    }
    if dist[src] == usize::MAX {
        return None;
    }
    let mut path = vec![src];
    let mut cur = src;
    while cur != dst {
        let next = adj[cur]
            .iter()
            .copied()
            .find(|&nb| !banned_nodes[nb] && allowed(cur, nb) && dist[nb] + 1 == dist[cur])?;
        path.push(next);
        cur = next;
    }
    Some(path)
}

/// Yen's algorithm: up to `k` shortest loop-free paths as node sequences,
/// deterministic (candidates ordered by length then node sequence).
pub fn k_shortest_paths(topo: &Topology, src: usize, dst: usize, k: usize) -> Vec<Vec<usize>> {
    let adj = topo.adjacency();
    let no_nodes = vec![false; topo.nodes.len()];
    let no_edges = BTreeSet::new();
    let Some(first) = shortest_path(&adj, src, dst, &no_nodes, &no_edges) else {
        return Vec::new();
    };
    let mut accepted: Vec<Vec<usize>> = vec![first];
    let mut candidates: BTreeSet<(usize, Vec<usize>)> = BTreeSet::new();
    while accepted.len() < k {
        let last = accepted.last().unwrap().clone();
        for i in 0..last.len() - 1 {
            let spur = last[i];
            let root = &last[..=i];
            let mut banned_edges = BTreeSet::new();
            for p in &accepted {
                if p.len() > i && p[..=i] == *root {
                    let (a, b) = (p[i], p[i + 1]);
                    banned_edges.insert((a.min(b), a.max(b)));
                }
            }
            let mut banned_nodes = vec![false; topo.nodes.len()];
            for &n in &root[..i] {
                banned_nodes[n] = true;
            }
            if let Some(tail) = shortest_path(&adj, spur, dst, &banned_nodes, &banned_edges) {
                let mut full = root[..i].to_vec();
                full.extend(tail);
                candidates.insert((full.len(), full));
            }
        }
        let Some(best) = candidates.iter().next().cloned() else {
            break;
        };
        candidates.remove(&best);
        accepted.push(best.1);
    }
    accepted
}

/// A generated request before link-level assembly: endpoints plus routed
/// node paths.
#[derive(Debug, Clone)]
pub struct RequestSpec {
    pub source: usize,
    pub dest: usize,
    pub node_paths: Vec<Vec<usize>>,
}

/// Draws `count` requests between uniformly random distinct endpoints, each
/// routed along `k` shortest paths with `k` uniform in `paths_range`.
pub fn generate_requests(
    topo: &Topology,
    count: usize,
    paths_range: (usize, usize),
    seed: u64,
) -> Result<Vec<RequestSpec>> {
    let (lo, hi) = paths_range;
    if lo < 1 || hi < lo {
        return Err(Error::InvalidParameter(format!("bad paths range [{lo}, {hi}]")));
    }
    if topo.nodes.len() < 2 {
        return Err(Error::InvalidParameter("topology needs at least two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let source = rng.gen_range(0..topo.nodes.len());
        let dest = loop {
            let d = rng.gen_range(0..topo.nodes.len());
            if d != source {
                break d;
            }
        };
        let k = rng.gen_range(lo..=hi);
        let node_paths = k_shortest_paths(topo, source, dest, k);
        if node_paths.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no path between {} and {}",
                topo.nodes[source], topo.nodes[dest]
            )));
        }
        out.push(RequestSpec { source, dest, node_paths });
    }
    Ok(out)
}

/// Fat-tree traffic model: per server, two requests to the root and one to
/// another uniformly random server, each over `paths_per_request` shortest
/// paths.
pub fn generate_fat_tree_requests(
    topo: &Topology,
    paths_per_request: usize,
    seed: u64,
) -> Result<Vec<RequestSpec>> {
    let servers: Vec<usize> = topo
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("srv"))
        .map(|(i, _)| i)
        .collect();
    if servers.is_empty() {
        return Err(Error::InvalidParameter("topology has no server nodes".into()));
    }
    let root = topo
        .nodes
        .iter()
        .position(|n| n == "root")
        .ok_or_else(|| Error::InvalidParameter("topology has no root node".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &s in &servers {
        for _ in 0..2 {
            let node_paths = k_shortest_paths(topo, s, root, paths_per_request);
            out.push(RequestSpec { source: s, dest: root, node_paths });
        }
        let other = loop {
            let o = servers[rng.gen_range(0..servers.len())];
            if o != s {
                break o;
            }
        };
        let node_paths = k_shortest_paths(topo, s, other, paths_per_request);
        out.push(RequestSpec { source: s, dest: other, node_paths });
    }
    Ok(out)
}

/// Turns a topology plus routed requests into a solver instance. Every
/// topology edge becomes one link (`Undirected`) or one per direction
/// (`Directed`); all links get the same `capacity` and all requests
/// weight 1.
pub fn assemble_instance(
    topo: &Topology,
    specs: &[RequestSpec],
    alpha: f64,
    capacity: f64,
    mode: LinkMode,
) -> Result<Instance> {
    if capacity <= 0.0 {
        return Err(Error::InvalidParameter(format!("capacity must be > 0, got {capacity}")));
    }
    let mut links = Vec::new();
    let mut edges = Vec::new();
    let mut edge_index = std::collections::BTreeMap::new();
    for (i, &(u, v)) in topo.edges.iter().enumerate() {
        edge_index.insert((u, v), i);
        match mode {
            LinkMode::Undirected => {
                links.push(Link { id: format!("l{i}"), capacity });
                edges.push(EdgeMeta {
                    link: format!("l{i}"),
                    from: topo.nodes[u].clone(),
                    to: topo.nodes[v].clone(),
                });
            }
            LinkMode::Directed => {
                links.push(Link { id: format!("l{i}f"), capacity });
                links.push(Link { id: format!("l{i}r"), capacity });
                edges.push(EdgeMeta {
                    link: format!("l{i}f"),
                    from: topo.nodes[u].clone(),
                    to: topo.nodes[v].clone(),
                });
                edges.push(EdgeMeta {
                    link: format!("l{i}r"),
                    from: topo.nodes[v].clone(),
                    to: topo.nodes[u].clone(),
                });
            }
        }
    }
    let mut paths = Vec::new();
    let mut requests = Vec::new();
    for (ri, spec) in specs.iter().enumerate() {
        if spec.source == spec.dest {
            return Err(Error::InvalidParameter(format!("request {ri} has coinciding endpoints")));
        }
        let rid = format!("r{ri}");
        let mut path_ids = Vec::new();
        for (pi, nodes) in spec.node_paths.iter().enumerate() {
            let pid = format!("{rid}:p{pi}");
            let mut link_ids = Vec::new();
            for w in nodes.windows(2) {
                let (a, b) = (w[0], w[1]);
                let idx = *edge_index.get(&(a.min(b), a.max(b))).ok_or_else(|| {
                    Error::InvalidParameter(format!("path uses unknown edge {a}-{b}"))
                })?;
                let lid = match mode {
                    LinkMode::Undirected => format!("l{idx}"),
                    // Direction of traversal picks the resource.
                    LinkMode::Directed if a < b => format!("l{idx}f"),
                    LinkMode::Directed => format!("l{idx}r"),
                };
                link_ids.push(lid);
            }
            paths.push(Path { id: pid.clone(), links: link_ids });
            path_ids.push(pid);
        }
        requests.push(Request {
            id: rid,
            weight: 1.0,
            paths: path_ids,
            source_node: Some(topo.nodes[spec.source].clone()),
        });
    }
    Ok(Instance { alpha, links, paths, requests, nodes: topo.nodes.clone(), edges })
}
