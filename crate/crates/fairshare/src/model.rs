//! Network instances: links, paths, requests and their incidence structure,
//! validation, and the JSON file format.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A capacity resource. Links are undirected with a single capacity; a
/// directed pair of resources is modelled as two links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub capacity: f64,
}

/// An established path: an ordered set of link ids. Paths are private to
/// their owning request; two requests never share a path object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub id: String,
    pub links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub weight: f64,
    pub paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_node: Option<String>,
}

/// Topology metadata attached to an instance so that domain partitioning
/// can reason about connectivity. `link` names the capacity resource
/// realized by the edge between `from` and `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMeta {
    pub link: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub alpha: f64,
    pub links: Vec<Link>,
    pub paths: Vec<Path>,
    pub requests: Vec<Request>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

/// Report-style validation output: empty iff the instance is well-formed.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "instance is well-formed")?;
        }
        for v in &self.violations {
            writeln!(f, "{}: {}", v.subject, v.message)?;
        }
        Ok(())
    }
}

/// 0/1 incidence maps between links, paths and requests.
#[derive(Debug, Clone, Default)]
pub struct Incidence {
    pub link_to_paths: BTreeMap<String, BTreeSet<String>>,
    pub request_to_paths: BTreeMap<String, BTreeSet<String>>,
    pub path_to_links: BTreeMap<String, BTreeSet<String>>,
}

impl Instance {
    pub fn link(&self, id: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn request(&self, id: &str) -> Option<&Request> {
        self.requests.iter().find(|r| r.id == id)
    }
}

/// Collects every structural violation: dangling ids, nonpositive
/// capacities or weights, empty paths, duplicate ids, shared paths,
/// alpha <= 0. Never fails; returns the full list.
pub fn validate(instance: &Instance) -> ValidationReport {
    let mut out = ValidationReport::default();
    let mut push = |subject: &str, message: String| {
        out.violations.push(Violation { subject: subject.to_string(), message });
    };

    if instance.alpha <= 0.0 || !instance.alpha.is_finite() {
        push("alpha", format!("fairness exponent must be > 0 and finite, got {}", instance.alpha));
    }

    let mut link_ids = BTreeSet::new();
    for l in &instance.links {
        if !link_ids.insert(l.id.as_str()) {
            push(&l.id, "duplicate link id".into());
        }
        if !(l.capacity > 0.0 && l.capacity.is_finite()) {
            push(&l.id, format!("nonpositive capacity {}", l.capacity));
        }
    }

    let mut path_ids = BTreeSet::new();
    for p in &instance.paths {
        if !path_ids.insert(p.id.as_str()) {
            push(&p.id, "duplicate path id".into());
        }
        if p.links.is_empty() {
            push(&p.id, "empty path".into());
        }
        let mut seen = BTreeSet::new();
        for l in &p.links {
            if !link_ids.contains(l.as_str()) {
                push(&p.id, format!("dangling link id {l}"));
            }
            if !seen.insert(l.as_str()) {
                push(&p.id, format!("repeated link id {l}"));
            }
        }
    }

    let mut req_ids = BTreeSet::new();
    let mut path_owner: BTreeMap<&str, &str> = BTreeMap::new();
    for r in &instance.requests {
        if !req_ids.insert(r.id.as_str()) {
            push(&r.id, "duplicate request id".into());
        }
        if !(r.weight > 0.0 && r.weight.is_finite()) {
            push(&r.id, format!("nonpositive weight {}", r.weight));
        }
        if r.paths.is_empty() {
            push(&r.id, "request has no paths".into());
        }
        let mut seen = BTreeSet::new();
        for p in &r.paths {
            if !path_ids.contains(p.as_str()) {
                push(&r.id, format!("dangling path id {p}"));
            }
            if !seen.insert(p.as_str()) {
                push(&r.id, format!("repeated path id {p}"));
            }
            if let Some(other) = path_owner.insert(p.as_str(), r.id.as_str()) {
                push(&r.id, format!("path {p} already belongs to request {other}"));
            }
        }
    }
    for p in &instance.paths {
        if !path_owner.contains_key(p.id.as_str()) {
            push(&p.id, "path belongs to no request".into());
        }
    }

    if !instance.edges.is_empty() {
        let nodes: BTreeSet<&str> = instance.nodes.iter().map(String::as_str).collect();
        for e in &instance.edges {
            if !link_ids.contains(e.link.as_str()) {
                push(&e.link, "edge references unknown link".into());
            }
            for n in [&e.from, &e.to] {
                if !nodes.contains(n.as_str()) {
                    push(&e.link, format!("edge references unknown node {n}"));
                }
            }
        }
    }
    out
}

/// Builds the incidence maps. Fails when the instance does not validate.
pub fn build_incidence(instance: &Instance) -> Result<Incidence> {
    let report = validate(instance);
    if !report.is_ok() {
        return Err(Error::InvalidInstance(report.to_string()));
    }
    let mut inc = Incidence::default();
    for l in &instance.links {
        inc.link_to_paths.entry(l.id.clone()).or_default();
    }
    for p in &instance.paths {
        inc.path_to_links.insert(p.id.clone(), p.links.iter().cloned().collect());
        for l in &p.links {
            inc.link_to_paths.get_mut(l).unwrap().insert(p.id.clone());
        }
    }
    for r in &instance.requests {
        inc.request_to_paths.insert(r.id.clone(), r.paths.iter().cloned().collect());
    }
    Ok(inc)
}

pub fn read_instance(path: impl AsRef<FsPath>) -> Result<Instance> {
    let text = std::fs::read_to_string(&path)?;
    parse_instance(&text)
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let instance: Instance = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    Ok(instance)
}

pub fn write_instance(instance: &Instance, path: impl AsRef<FsPath>) -> Result<()> {
    std::fs::write(path, instance_to_string(instance)?)?;
    Ok(())
}

pub fn instance_to_string(instance: &Instance) -> Result<String> {
    serde_json::to_string_pretty(instance)
        .map_err(|e| Error::Schema { path: "<serialize>".into(), message: e.to_string() })
}

#[cfg(test)]
pub(crate) fn linear_two_link_instance() -> Instance {
    // n0 -j1- n1 -j2- n2; r0 spans both links, r1/r2 one each.
    Instance {
        alpha: 1.0,
        links: vec![
            Link { id: "j1".into(), capacity: 1.0 },
            Link { id: "j2".into(), capacity: 1.0 },
        ],
        paths: vec![
            Path { id: "p0".into(), links: vec!["j1".into(), "j2".into()] },
            Path { id: "p1".into(), links: vec!["j1".into()] },
            Path { id: "p2".into(), links: vec!["j2".into()] },
        ],
        requests: vec![
            Request { id: "r0".into(), weight: 1.0, paths: vec!["p0".into()], source_node: None },
            Request { id: "r1".into(), weight: 1.0, paths: vec!["p1".into()], source_node: None },
            Request { id: "r2".into(), weight: 1.0, paths: vec!["p2".into()], source_node: None },
        ],
        nodes: vec!["n0".into(), "n1".into(), "n2".into()],
        edges: vec![
            EdgeMeta { link: "j1".into(), from: "n0".into(), to: "n1".into() },
            EdgeMeta { link: "j2".into(), from: "n1".into(), to: "n2".into() },
        ],
    }
}
