//! Hard-dependency graph over a package database: compilation statistics,
//! exclusion propagation and the layered batch plan used for mass rebuilds.

use crate::metadata::{DepSpec, PackageRecord};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Packages shipped with R itself; never packaged separately.
pub const BASE_PACKAGES: &[&str] = &[
    "base",
    "compiler",
    "datasets",
    "graphics",
    "grDevices",
    "grid",
    "methods",
    "parallel",
    "splines",
    "stats",
    "stats4",
    "tcltk",
    "tools",
    "utils",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DepField {
    Depends,
    Imports,
    LinkingTo,
}

/// Depends and Imports: what counts as a hard dependency at run time.
pub const RUNTIME_FIELDS: &[DepField] = &[DepField::Depends, DepField::Imports];
/// Run-time fields plus LinkingTo, which also constrains build order.
pub const BUILD_FIELDS: &[DepField] = &[DepField::Depends, DepField::Imports, DepField::LinkingTo];

fn field_deps(record: &PackageRecord, field: DepField) -> &[DepSpec] {
    match field {
        DepField::Depends => &record.depends,
        DepField::Imports => &record.imports,
        DepField::LinkingTo => &record.linking_to,
    }
}

/// Names of the hard dependencies of `record` in `fields`, without `R` and
/// the ignore list.
pub fn hard_dep_names<'a>(
    record: &'a PackageRecord,
    fields: &[DepField],
    ignore: &BTreeSet<String>,
) -> BTreeSet<&'a str> {
    fields
        .iter()
        .flat_map(|f| field_deps(record, *f))
        .map(|d| d.name.as_str())
        .filter(|n| *n != "R" && !ignore.contains(*n) && *n != record.name)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate package {0} in database")]
    DuplicatePackage(String),
    #[error("dependency cycle among: {}", .0.join(", "))]
    CycleDetected(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DepGraph {
    pub nodes: BTreeSet<String>,
    /// node -> in-database hard dependencies
    pub edges: BTreeMap<String, BTreeSet<String>>,
    /// node -> dependencies missing from the database
    pub external_refs: BTreeMap<String, BTreeSet<String>>,
}

impl DepGraph {
    pub fn deps(&self, node: &str) -> impl Iterator<Item = &String> {
        self.edges.get(node).into_iter().flatten()
    }

    /// node -> packages that depend on it
    pub fn reverse_edges(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut rev: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (from, targets) in &self.edges {
            for to in targets {
                rev.entry(to.as_str()).or_default().insert(from.as_str());
            }
        }
        rev
    }

    /// Subgraph induced by `keep`; edges leaving it are dropped, not moved to
    /// `external_refs`.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> DepGraph {
        let nodes: BTreeSet<String> = self.nodes.intersection(keep).cloned().collect();
        let edges = nodes
            .iter()
            .filter_map(|n| {
                let targets: BTreeSet<String> =
                    self.deps(n).filter(|d| nodes.contains(*d)).cloned().collect();
                (!targets.is_empty()).then(|| (n.clone(), targets))
            })
            .collect();
        let external_refs = self
            .external_refs
            .iter()
            .filter(|(n, _)| nodes.contains(*n))
            .map(|(n, r)| (n.clone(), r.clone()))
            .collect();
        DepGraph {
            nodes,
            edges,
            external_refs,
        }
    }
}

pub fn default_ignore() -> BTreeSet<String> {
    BASE_PACKAGES.iter().map(|s| s.to_string()).collect()
}

/// Builds the graph with the default base-package ignore list.
pub fn build_graph(db: &[PackageRecord], fields: &[DepField]) -> Result<DepGraph, GraphError> {
    build_graph_with_ignore(db, fields, &default_ignore())
}

pub fn build_graph_with_ignore(
    db: &[PackageRecord],
    fields: &[DepField],
    ignore: &BTreeSet<String>,
) -> Result<DepGraph, GraphError> {
    let mut graph = DepGraph::default();
    for rec in db {
        if !graph.nodes.insert(rec.name.clone()) {
            return Err(GraphError::DuplicatePackage(rec.name.clone()));
        }
    }
    for rec in db {
        for dep in hard_dep_names(rec, fields, ignore) {
            let slot = if graph.nodes.contains(dep) {
                &mut graph.edges
            } else {
                &mut graph.external_refs
            };
            slot.entry(rec.name.clone())
                .or_default()
                .insert(dep.to_string());
        }
    }
    Ok(graph)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompilationStats {
    pub total: usize,
    /// packages that compile code themselves
    pub direct: BTreeSet<String>,
    /// packages that don't, but hard-depend (transitively) on one that does
    pub indirect_only: BTreeSet<String>,
}

impl CompilationStats {
    pub fn either(&self) -> BTreeSet<String> {
        self.direct.union(&self.indirect_only).cloned().collect()
    }

    pub fn either_count(&self) -> usize {
        self.direct.len() + self.indirect_only.len()
    }

    fn pct(&self, n: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * n as f64 / self.total as f64
        }
    }

    pub fn direct_pct(&self) -> f64 {
        self.pct(self.direct.len())
    }

    pub fn indirect_only_pct(&self) -> f64 {
        self.pct(self.indirect_only.len())
    }

    /// Sum of the two parts, so the identity holds bit for bit.
    pub fn either_pct(&self) -> f64 {
        self.direct_pct() + self.indirect_only_pct()
    }
}

/// Compilation statistics over Depends + Imports.
///
/// Walks reverse edges out of the compiled packages, so anything reached
/// needs compilation somewhere in its dependency closure. Cycles need no
/// special handling here.
pub fn compilation_stats(db: &[PackageRecord]) -> Result<CompilationStats, GraphError> {
    let graph = build_graph(db, RUNTIME_FIELDS)?;
    let rev = graph.reverse_edges();
    let direct: BTreeSet<String> = db
        .iter()
        .filter(|r| r.needs_compilation)
        .map(|r| r.name.clone())
        .collect();

    let mut seen: BTreeSet<&str> = direct.iter().map(String::as_str).collect();
    let mut stack: Vec<&str> = seen.iter().copied().collect();
    while let Some(node) = stack.pop() {
        for &dependent in rev.get(node).into_iter().flatten() {
            if seen.insert(dependent) {
                stack.push(dependent);
            }
        }
    }
    let indirect_only = seen
        .into_iter()
        .filter(|n| !direct.contains(*n))
        .map(str::to_string)
        .collect();
    Ok(CompilationStats {
        total: db.len(),
        direct,
        indirect_only,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionKind {
    MissingUpstreamDep,
    UnsupportedSysreq,
    DependsOnExcluded,
}

impl ExclusionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionKind::MissingUpstreamDep => "MissingUpstreamDep",
            ExclusionKind::UnsupportedSysreq => "UnsupportedSysreq",
            ExclusionKind::DependsOnExcluded => "DependsOnExcluded",
        }
    }
}

impl fmt::Display for ExclusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExclusionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MissingUpstreamDep" => Ok(ExclusionKind::MissingUpstreamDep),
            "UnsupportedSysreq" => Ok(ExclusionKind::UnsupportedSysreq),
            "DependsOnExcluded" => Ok(ExclusionKind::DependsOnExcluded),
            other => Err(format!("unknown exclusion kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExclusionReason {
    pub kind: ExclusionKind,
    pub detail: String,
}

impl ExclusionReason {
    pub fn new(kind: ExclusionKind, detail: impl Into<String>) -> Self {
        ExclusionReason {
            kind,
            detail: detail.into(),
        }
    }
}

pub type Exclusions = BTreeMap<String, ExclusionReason>;

/// Closes the exclusion set under "depends on".
///
/// Nodes with dependencies missing from the database are seeded as
/// `MissingUpstreamDep` unless `base` already has a reason for them. A node
/// excluded by propagation names the excluded direct dependency closest to a
/// seed (ties broken by name). Entries in `base` are kept as given.
pub fn propagate_exclusions(graph: &DepGraph, base: &Exclusions) -> Exclusions {
    let mut out: Exclusions = base
        .iter()
        .filter(|(n, _)| graph.nodes.contains(*n))
        .map(|(n, r)| (n.clone(), r.clone()))
        .collect();
    for (node, missing) in &graph.external_refs {
        out.entry(node.clone()).or_insert_with(|| {
            let names: Vec<&str> = missing.iter().map(String::as_str).collect();
            ExclusionReason::new(
                ExclusionKind::MissingUpstreamDep,
                format!("missing {}", names.join(", ")),
            )
        });
    }

    let rev = graph.reverse_edges();
    let mut frontier: Vec<String> = out.keys().cloned().collect();
    while !frontier.is_empty() {
        let mut next: Vec<String> = Vec::new();
        for node in &frontier {
            for &dependent in rev.get(node.as_str()).into_iter().flatten() {
                if !out.contains_key(dependent) {
                    out.insert(
                        dependent.to_string(),
                        ExclusionReason::new(ExclusionKind::DependsOnExcluded, node.clone()),
                    );
                    next.push(dependent.to_string());
                }
            }
        }
        next.sort();
        frontier = next;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CyclePolicy {
    /// Put every strongly-connected component in a single batch.
    #[default]
    Collapse,
    /// Fail with `CycleDetected`.
    Reject,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchPlan {
    pub batches: Vec<BTreeSet<String>>,
    pub excluded: Exclusions,
}

impl BatchPlan {
    /// 1-based batch index of every scheduled package.
    pub fn batch_index(&self) -> HashMap<&str, usize> {
        self.batches
            .iter()
            .enumerate()
            .flat_map(|(i, b)| b.iter().map(move |n| (n.as_str(), i + 1)))
            .collect()
    }

    /// Checks that every scheduled package only needs packages from earlier
    /// batches. Returns the first offending (package, dependency) pair.
    pub fn check_validity(&self, graph: &DepGraph) -> Result<(), (String, String)> {
        let index = self.batch_index();
        for (pkg, &i) in &index {
            for dep in graph.deps(pkg) {
                if self.excluded.contains_key(dep) {
                    continue;
                }
                match index.get(dep.as_str()) {
                    Some(&j) if j < i => {}
                    _ => return Err((pkg.to_string(), dep.clone())),
                }
            }
        }
        Ok(())
    }

    /// `batch<TAB>name` lines, then `EXCLUDED<TAB>name<TAB>kind<TAB>detail`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, batch) in self.batches.iter().enumerate() {
            for name in batch {
                out.push_str(&format!("{}\t{}\n", i + 1, name));
            }
        }
        for (name, reason) in &self.excluded {
            out.push_str(&format!(
                "EXCLUDED\t{}\t{}\t{}\n",
                name,
                reason.kind,
                sanitize(&reason.detail)
            ));
        }
        out
    }
}

fn sanitize(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn batch_plan(graph: &DepGraph, excluded: &Exclusions) -> Result<BatchPlan, GraphError> {
    batch_plan_with(graph, excluded, CyclePolicy::Collapse)
}

/// Layers the non-excluded packages so each batch depends only on earlier
/// ones; a package lands right after its deepest dependency.
pub fn batch_plan_with(
    graph: &DepGraph,
    excluded: &Exclusions,
    policy: CyclePolicy,
) -> Result<BatchPlan, GraphError> {
    let mut g: DiGraph<&str, ()> = DiGraph::new();
    let mut index = HashMap::new();
    for node in graph.nodes.iter().filter(|n| !excluded.contains_key(*n)) {
        index.insert(node.as_str(), g.add_node(node.as_str()));
    }
    for (from, targets) in &graph.edges {
        let Some(&a) = index.get(from.as_str()) else {
            continue;
        };
        for to in targets {
            if let Some(&b) = index.get(to.as_str()) {
                g.add_edge(a, b, ());
            }
        }
    }

    let sccs = tarjan_scc(&g);
    let mut component = vec![0usize; g.node_count()];
    for (ci, members) in sccs.iter().enumerate() {
        for n in members {
            component[n.index()] = ci;
        }
    }
    if policy == CyclePolicy::Reject {
        if let Some(cycle) = sccs.iter().find(|c| c.len() > 1) {
            let mut names: Vec<String> = cycle.iter().map(|n| g[*n].to_string()).collect();
            names.sort();
            return Err(GraphError::CycleDetected(names));
        }
    }

    // component -> components it depends on
    let mut needs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); sccs.len()];
    for e in g.raw_edges() {
        let (a, b) = (component[e.source().index()], component[e.target().index()]);
        if a != b {
            needs[a].insert(b);
        }
    }

    let mut layer: Vec<Option<usize>> = vec![None; sccs.len()];
    let mut batches = Vec::new();
    let mut placed = 0;
    while placed < sccs.len() {
        let ready: Vec<usize> = (0..sccs.len())
            .filter(|&c| layer[c].is_none())
            .filter(|&c| needs[c].iter().all(|d| layer[*d].is_some()))
            .collect();
        debug_assert!(!ready.is_empty(), "condensation is acyclic");
        let mut batch = BTreeSet::new();
        for &c in &ready {
            layer[c] = Some(batches.len());
            batch.extend(sccs[c].iter().map(|n| g[*n].to_string()));
        }
        placed += ready.len();
        batches.push(batch);
    }

    let excluded = excluded
        .iter()
        .filter(|(n, _)| graph.nodes.contains(*n))
        .map(|(n, r)| (n.clone(), r.clone()))
        .collect();
    Ok(BatchPlan { batches, excluded })
}
