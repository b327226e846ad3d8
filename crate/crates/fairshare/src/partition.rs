//! Splitting the set of links into connected, near-balanced domains.
//!
//! The partitioning heuristic is seeded multi-source region growing over
//! the line graph of links (two links are adjacent when they share an
//! endpoint), followed by a rebalancing pass that moves boundary links from
//! oversized to undersized domains whenever connectivity survives the move.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path as FsPath;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub num_domains: usize,
    /// link id -> domain index.
    pub link_domain: BTreeMap<String, usize>,
    /// Paths traversing each domain via at least one link.
    pub domain_paths: Vec<BTreeSet<String>>,
    /// Requests originating in each domain.
    pub domain_requests: Vec<BTreeSet<String>>,
}

/// On-disk form: only the assignment; the derived sets are recomputed
/// against an instance on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartitionFile {
    num_domains: usize,
    link_domain: BTreeMap<String, usize>,
}

impl Partition {
    /// Domain sizes in links.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_domains];
        for &d in self.link_domain.values() {
            sizes[d] += 1;
        }
        sizes
    }
}

/// Adjacency over links: indices into `instance.links`, two links adjacent
/// when their edges share a node. Requires edge metadata for every link.
fn line_graph(instance: &Instance) -> Result<Vec<Vec<usize>>> {
    let idx: BTreeMap<&str, usize> =
        instance.links.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
    let mut node_links: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut covered = vec![false; instance.links.len()];
    for e in &instance.edges {
        let li = *idx
            .get(e.link.as_str())
            .ok_or_else(|| Error::UnknownId(format!("edge link {}", e.link)))?;
        covered[li] = true;
        node_links.entry(e.from.as_str()).or_default().push(li);
        node_links.entry(e.to.as_str()).or_default().push(li);
    }
    if let Some(i) = covered.iter().position(|&c| !c) {
        return Err(Error::Partition(format!(
            "link {} has no edge metadata; cannot reason about connectivity",
            instance.links[i].id
        )));
    }
    let mut adj = vec![BTreeSet::new(); instance.links.len()];
    for links in node_links.values() {
        for &a in links {
            for &b in links {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    Ok(adj.into_iter().map(|s| s.into_iter().collect()).collect())
}

fn domain_connected(members: &[bool], adj: &[Vec<usize>]) -> bool {
    let count = members.iter().filter(|&&m| m).count();
    if count <= 1 {
        return true;
    }
    let start = members.iter().position(|&m| m).unwrap();
    let mut seen = vec![false; members.len()];
    seen[start] = true;
    let mut stack = vec![start];
    let mut reached = 1;
    while let Some(n) = stack.pop() {
        for &nb in &adj[n] {
            if members[nb] && !seen[nb] {
                seen[nb] = true;
                reached += 1;
                stack.push(nb);
            }
        }
    }
    reached == count
}

/// Partitions the links of `instance` into `num_domains` connected,
/// near-balanced domains and derives the per-domain path and request sets.
pub fn partition_domains(instance: &Instance, num_domains: usize, seed: u64) -> Result<Partition> {
    let n = instance.links.len();
    if num_domains < 1 || num_domains > n {
        return Err(Error::Partition(format!(
            "need 1 <= domains <= {n} links, got {num_domains}"
        )));
    }
    if num_domains == 1 {
        let link_domain = instance.links.iter().map(|l| (l.id.clone(), 0)).collect();
        return derive_partition(instance, link_domain, 1);
    }
    let adj = line_graph(instance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut assign = vec![usize::MAX; n];
    for (d, &s) in order[..num_domains].iter().enumerate() {
        assign[s] = d;
    }
    let mut sizes = vec![1usize; num_domains];
    let mut remaining = n - num_domains;
    while remaining > 0 {
        // Smallest domain with an unassigned neighbor grows first.
        let mut grown = false;
        let mut by_size: Vec<usize> = (0..num_domains).collect();
        by_size.sort_by_key(|&d| (sizes[d], d));
        'outer: for &d in &by_size {
            for i in 0..n {
                if assign[i] == d {
                    for &nb in &adj[i] {
                        if assign[nb] == usize::MAX {
                            assign[nb] = d;
                            sizes[d] += 1;
                            remaining -= 1;
                            grown = true;
                            break 'outer;
                        }
                    }
                }
            }
        }
        if !grown {
            return Err(Error::Partition(
                "link graph is disconnected; cannot grow connected domains".into(),
            ));
        }
    }

    // Rebalancing: move boundary links from the largest to the smallest
    // domain while the donor stays connected.
    for _ in 0..4 * n {
        let max_d = (0..num_domains).max_by_key(|&d| (sizes[d], d)).unwrap();
        let min_d = (0..num_domains).min_by_key(|&d| (sizes[d], d)).unwrap();
        if sizes[max_d] <= sizes[min_d] + 1 {
            break;
        }
        let mut moved = false;
        // Any donor with size excess >= 2 over any adjacent smaller domain.
        let mut donors: Vec<usize> = (0..num_domains).collect();
        donors.sort_by_key(|&d| std::cmp::Reverse(sizes[d]));
        'donors: for &donor in &donors {
            for i in 0..n {
                if assign[i] != donor {
                    continue;
                }
                for &nb in &adj[i] {
                    let target = assign[nb];
                    if target != donor && sizes[donor] >= sizes[target] + 2 {
                        let mut members: Vec<bool> = (0..n).map(|j| assign[j] == donor).collect();
                        members[i] = false;
                        if domain_connected(&members, &adj) {
                            assign[i] = target;
                            sizes[donor] -= 1;
                            sizes[target] += 1;
                            moved = true;
                            break 'donors;
                        }
                    }
                }
            }
        }
        if !moved {
            break;
        }
    }

    let link_domain =
        instance.links.iter().enumerate().map(|(i, l)| (l.id.clone(), assign[i])).collect();
    derive_partition(instance, link_domain, num_domains)
}

/// Domain of a request: the domain owning the smallest-id link incident to
/// its source node; requests without node metadata fall back to the first
/// link of their first path.
fn request_domain(
    instance: &Instance,
    request_idx: usize,
    link_domain: &BTreeMap<String, usize>,
) -> Result<usize> {
    let r = &instance.requests[request_idx];
    if let Some(node) = &r.source_node {
        let incident = instance
            .edges
            .iter()
            .filter(|e| &e.from == node || &e.to == node)
            .map(|e| e.link.as_str())
            .min();
        if let Some(link) = incident {
            return link_domain
                .get(link)
                .copied()
                .ok_or_else(|| Error::UnknownId(format!("link {link}")));
        }
    }
    let first_path = r
        .paths
        .iter()
        .min()
        .ok_or_else(|| Error::InvalidInstance(format!("request {} has no paths", r.id)))?;
    let path = instance
        .paths
        .iter()
        .find(|p| &p.id == first_path)
        .ok_or_else(|| Error::UnknownId(format!("path {first_path}")))?;
    let link = &path.links[0];
    link_domain.get(link).copied().ok_or_else(|| Error::UnknownId(format!("link {link}")))
}

fn derive_partition(
    instance: &Instance,
    link_domain: BTreeMap<String, usize>,
    num_domains: usize,
) -> Result<Partition> {
    let mut domain_paths = vec![BTreeSet::new(); num_domains];
    for p in &instance.paths {
        for l in &p.links {
            let d = *link_domain.get(l).ok_or_else(|| Error::UnknownId(format!("link {l}")))?;
            domain_paths[d].insert(p.id.clone());
        }
    }
    let mut domain_requests = vec![BTreeSet::new(); num_domains];
    for i in 0..instance.requests.len() {
        let d = request_domain(instance, i, &link_domain)?;
        domain_requests[d].insert(instance.requests[i].id.clone());
    }
    Ok(Partition { num_domains, link_domain, domain_paths, domain_requests })
}

pub fn read_partition(path: impl AsRef<FsPath>, instance: &Instance) -> Result<Partition> {
    let text = std::fs::read_to_string(path)?;
    let file: PartitionFile = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    for l in &instance.links {
        let d = file
            .link_domain
            .get(&l.id)
            .ok_or_else(|| Error::Partition(format!("link {} missing from partition", l.id)))?;
        if *d >= file.num_domains {
            return Err(Error::Partition(format!("domain index {d} out of range")));
        }
    }
    derive_partition(instance, file.link_domain, file.num_domains)
}

pub fn write_partition(partition: &Partition, path: impl AsRef<FsPath>) -> Result<()> {
    let file = PartitionFile {
        num_domains: partition.num_domains,
        link_domain: partition.link_domain.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Schema { path: "<serialize>".into(), message: e.to_string() })?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Checks that each domain's links induce a connected subgraph.
pub fn check_connected(instance: &Instance, partition: &Partition) -> Result<bool> {
    let adj = line_graph(instance)?;
    for d in 0..partition.num_domains {
        let members: Vec<bool> = instance
            .links
            .iter()
            .map(|l| partition.link_domain.get(&l.id) == Some(&d))
            .collect();
        if !domain_connected(&members, &adj) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linear_two_link_instance;
    use crate::topology::{assemble_instance, generate_barabasi_albert, generate_requests, LinkMode};

    #[test]
    fn single_domain_is_trivial() {
        let inst = linear_two_link_instance();
        let part = partition_domains(&inst, 1, 0).unwrap();
        assert_eq!(part.sizes(), vec![2]);
        assert_eq!(part.domain_paths[0].len(), 3);
        assert_eq!(part.domain_requests[0].len(), 3);
    }

    #[test]
    fn two_domains_on_two_link_path() {
        let inst = linear_two_link_instance();
        let part = partition_domains(&inst, 2, 0).unwrap();
        assert_eq!(part.sizes(), vec![1, 1]);
        assert!(check_connected(&inst, &part).unwrap());
    }

    #[test]
    fn rejects_too_many_domains() {
        let inst = linear_two_link_instance();
        assert!(partition_domains(&inst, 3, 0).is_err());
        assert!(partition_domains(&inst, 0, 0).is_err());
    }

    fn ba_instance(seed: u64) -> Instance {
        let topo = generate_barabasi_albert(50, 4, seed).unwrap();
        let specs = generate_requests(&topo, 20, (1, 3), seed + 1).unwrap();
        assemble_instance(&topo, &specs, 1.0, 100.0, LinkMode::Undirected).unwrap()
    }

    #[test]
    fn ba_four_domains_connected_and_balanced() {
        let inst = ba_instance(5);
        let part = partition_domains(&inst, 4, 9).unwrap();
        assert!(check_connected(&inst, &part).unwrap());
        let sizes = part.sizes();
        let total: usize = sizes.iter().sum();
        assert_eq!(total, inst.links.len());
        let ideal = inst.links.len() as f64 / 4.0;
        for s in sizes {
            assert!((s as f64 - ideal).abs() <= 1.0, "domain size {s} vs ideal {ideal}");
        }
    }

    #[test]
    fn domains_partition_links_and_requests() {
        let inst = ba_instance(8);
        let part = partition_domains(&inst, 3, 1).unwrap();
        assert_eq!(part.link_domain.len(), inst.links.len());
        let req_total: usize = part.domain_requests.iter().map(|s| s.len()).sum();
        assert_eq!(req_total, inst.requests.len());
        // No request in two domains.
        for i in 0..part.num_domains {
            for j in 0..i {
                assert!(part.domain_requests[i].is_disjoint(&part.domain_requests[j]));
            }
        }
    }

    #[test]
    fn domain_paths_match_incidence() {
        let inst = ba_instance(13);
        let part = partition_domains(&inst, 4, 2).unwrap();
        for (d, expect) in part.domain_paths.iter().enumerate() {
            let mut computed = BTreeSet::new();
            for p in &inst.paths {
                if p.links.iter().any(|l| part.link_domain[l] == d) {
                    computed.insert(p.id.clone());
                }
            }
            assert_eq!(&computed, expect);
        }
    }

    #[test]
    fn partition_file_round_trip() {
        let inst = ba_instance(3);
        let part = partition_domains(&inst, 4, 4).unwrap();
        let dir = std::env::temp_dir().join(format!("fairshare-part-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("part.json");
        write_partition(&part, &file).unwrap();
        let back = read_partition(&file, &inst).unwrap();
        assert_eq!(part, back);
        std::fs::remove_dir_all(&dir).ok();
    }
}
