//! Daily sync planning: diff the upstream database against what the binary
//! repository holds, and mass-rebuild planning.

use crate::depgraph::{
    batch_plan, build_graph, propagate_exclusions, BatchPlan, Exclusions, GraphError, BUILD_FIELDS,
};
use crate::metadata::{compare_versions, PackageRecord, VersionString};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("repo state line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoEntry {
    pub version: VersionString,
    pub release: u32,
}

/// What the binary repository currently publishes, keyed by upstream name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepoState {
    pub packages: BTreeMap<String, RepoEntry>,
}

impl RepoState {
    /// `name<TAB>version<TAB>release` per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<RepoState, SyncError> {
        let mut packages = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let bad = |reason: &str| SyncError::MalformedLine {
                line,
                reason: reason.to_string(),
            };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            let [name, version, release] = cols[..] else {
                return Err(bad("expected name, version and release"));
            };
            let version = VersionString::parse(version).map_err(|_| bad("invalid version"))?;
            let release = release
                .trim()
                .parse::<u32>()
                .ok()
                .filter(|r| *r > 0)
                .ok_or_else(|| bad("release must be a positive integer"))?;
            if packages
                .insert(name.trim().to_string(), RepoEntry { version, release })
                .is_some()
            {
                return Err(bad("duplicate package"));
            }
        }
        Ok(RepoState { packages })
    }

    pub fn render(&self) -> String {
        self.packages
            .iter()
            .map(|(name, e)| format!("{name}\t{}\t{}\n", e.version, e.release))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BuildReason {
    New,
    Updated,
    ForcedRebuild,
}

impl fmt::Display for BuildReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BuildReason::New => "New",
            BuildReason::Updated => "Updated",
            BuildReason::ForcedRebuild => "ForcedRebuild",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildItem {
    pub name: String,
    pub reason: BuildReason,
    /// 1-based layer within this plan's build set.
    pub batch: usize,
    pub version: VersionString,
    pub release: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncPlan {
    pub removals: BTreeSet<String>,
    pub builds: Vec<BuildItem>,
    pub unchanged: usize,
}

impl SyncPlan {
    pub fn is_empty(&self) -> bool {
        self.removals.is_empty() && self.builds.is_empty()
    }

    /// `REMOVE name` lines, then `BUILD batch name reason` lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for name in &self.removals {
            out.push_str(&format!("REMOVE {name}\n"));
        }
        for b in &self.builds {
            out.push_str(&format!("BUILD {} {} {}\n", b.batch, b.name, b.reason));
        }
        out
    }

    /// The repository as it looks once every action in the plan succeeded.
    pub fn apply(&self, repo: &RepoState) -> RepoState {
        let mut next = repo.clone();
        for name in &self.removals {
            next.packages.remove(name);
        }
        for b in &self.builds {
            next.packages.insert(
                b.name.clone(),
                RepoEntry {
                    version: b.version.clone(),
                    release: b.release,
                },
            );
        }
        next
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SyncOptions {
    /// Also rebuild every not-excluded package that (transitively) depends on
    /// an updated one.
    pub rebuild_dependents: bool,
}

/// Diffs `upstream` against `repo`.
///
/// Exclusions are re-propagated over the upstream graph, so dependents of an
/// excluded package and packages with missing upstream deps never get built.
pub fn plan_sync(
    upstream: &[PackageRecord],
    repo: &RepoState,
    excluded: &Exclusions,
    opts: SyncOptions,
) -> Result<SyncPlan, SyncError> {
    let graph = build_graph(upstream, BUILD_FIELDS)?;
    let excluded = propagate_exclusions(&graph, excluded);
    let by_name: BTreeMap<&str, &PackageRecord> =
        upstream.iter().map(|r| (r.name.as_str(), r)).collect();

    let removals: BTreeSet<String> = repo
        .packages
        .keys()
        .filter(|n| !by_name.contains_key(n.as_str()) || excluded.contains_key(*n))
        .cloned()
        .collect();

    let mut reasons: BTreeMap<String, (BuildReason, u32)> = BTreeMap::new();
    for rec in upstream.iter().filter(|r| !excluded.contains_key(&r.name)) {
        match repo.packages.get(&rec.name) {
            None => {
                reasons.insert(rec.name.clone(), (BuildReason::New, 1));
            }
            Some(have) => match compare_versions(&rec.version, &have.version) {
                Ordering::Greater => {
                    reasons.insert(rec.name.clone(), (BuildReason::Updated, 1));
                }
                // a downgrade cannot reuse the old release number
                Ordering::Less => {
                    reasons.insert(rec.name.clone(), (BuildReason::Updated, have.release + 1));
                }
                Ordering::Equal => {}
            },
        }
    }

    if opts.rebuild_dependents {
        let rev = graph.reverse_edges();
        let mut stack: Vec<String> = reasons
            .iter()
            .filter(|(_, (r, _))| *r == BuildReason::Updated)
            .map(|(n, _)| n.clone())
            .collect();
        while let Some(node) = stack.pop() {
            for &dep in rev.get(node.as_str()).into_iter().flatten() {
                if excluded.contains_key(dep) || reasons.contains_key(dep) {
                    continue;
                }
                if let Some(have) = repo.packages.get(dep) {
                    reasons.insert(dep.to_string(), (BuildReason::ForcedRebuild, have.release + 1));
                    stack.push(dep.to_string());
                }
            }
        }
    }

    let build_set: BTreeSet<String> = reasons.keys().cloned().collect();
    let layered = batch_plan(&graph.restrict(&build_set), &Exclusions::new())?;
    let mut builds = Vec::with_capacity(build_set.len());
    for (i, batch) in layered.batches.iter().enumerate() {
        for name in batch {
            let (reason, release) = reasons[name];
            builds.push(BuildItem {
                name: name.clone(),
                reason,
                batch: i + 1,
                version: by_name[name.as_str()].version.clone(),
                release,
            });
        }
    }
    let unchanged = repo
        .packages
        .keys()
        .filter(|n| !removals.contains(*n) && !reasons.contains_key(*n))
        .count();
    Ok(SyncPlan {
        removals,
        builds,
        unchanged,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MassRebuild {
    pub plan: BatchPlan,
    /// Release every scheduled package is rebuilt with.
    pub releases: BTreeMap<String, u32>,
}

impl MassRebuild {
    /// `batch<TAB>name<TAB>release` lines followed by the exclusion lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, batch) in self.plan.batches.iter().enumerate() {
            for name in batch {
                out.push_str(&format!("{}\t{}\t{}\n", i + 1, name, self.releases[name]));
            }
        }
        let excluded = BatchPlan {
            batches: Vec::new(),
            excluded: self.plan.excluded.clone(),
        };
        out.push_str(&excluded.render());
        out
    }
}

/// Schedules every non-excluded upstream package, bumping the release of
/// those already in the repository.
pub fn plan_mass_rebuild(
    upstream: &[PackageRecord],
    repo: &RepoState,
    excluded: &Exclusions,
) -> Result<MassRebuild, SyncError> {
    let graph = build_graph(upstream, BUILD_FIELDS)?;
    let excluded = propagate_exclusions(&graph, excluded);
    let plan = batch_plan(&graph, &excluded)?;
    let releases = plan
        .batches
        .iter()
        .flatten()
        .map(|n| {
            let release = repo.packages.get(n).map_or(1, |e| e.release + 1);
            (n.clone(), release)
        })
        .collect();
    Ok(MassRebuild { plan, releases })
}
