//! The three-call bridge between R package names and the system package
//! manager: `discover`, `install` and `remove`.
//!
//! [`Bridge`] holds the logic and is used as-is in direct mode. [`Server`]
//! exposes the same calls over a Unix socket and runs them one at a time;
//! [`Client`] talks to it. Both sides implement [`BridgeApi`] and return the
//! same [`Outcome`] values.
//!
//! Names that cannot be satisfied from the system repositories come back in
//! `not_found` so the caller can build them from source instead.

mod client;
pub mod protocol;
mod server;

pub use client::Client;
pub use protocol::{BridgeMessage, Kind, Op, Status};
pub use server::{AuditRecord, Server, ServerHandle};

use crate::depgraph::{hard_dep_names, BUILD_FIELDS};
use crate::fakepm::{Connector, ConnectorError};
use crate::metadata::PackageRecord;
use crate::recipegen::{system_name, NameTransform};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Probe names always used by [`discover`].
pub const BASE_PROBES: &[&str] = &["Rcpp", "MASS"];

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("no package names given")]
    EmptyRequest,
    #[error("no naming convention covers any probe package")]
    NoMappingFound,
    #[error("backend failure: {0}")]
    Backend(#[from] ConnectorError),
    #[error("cannot bind {path}: {source}")]
    SocketBind {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("service error: {0}")]
    Remote(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("admin file line {line}: {reason}")]
    AdminLine { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How R package names map onto system package names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Mapping {
    pub prefix: String,
    pub transform: NameTransform,
    /// Never translated; always reported as not found.
    pub exclusions: BTreeSet<String>,
    /// Explicit names that win over the prefix rule.
    pub presets: BTreeMap<String, String>,
}

impl Mapping {
    pub fn new(prefix: &str, transform: NameTransform) -> Mapping {
        Mapping {
            prefix: prefix.to_string(),
            transform,
            ..Mapping::default()
        }
    }

    pub fn translate(&self, r_name: &str) -> Option<String> {
        if self.exclusions.contains(r_name) {
            return None;
        }
        Some(match self.presets.get(r_name) {
            Some(preset) => preset.clone(),
            None => system_name(r_name, &self.prefix, self.transform),
        })
    }

    /// Maps a system name back to an R name. Under the lowercase transform
    /// the original case is recovered from `known` when possible.
    pub fn reverse(&self, system: &str, known: &[String]) -> Option<String> {
        if let Some((r, _)) = self.presets.iter().find(|(_, s)| s.as_str() == system) {
            return Some(r.clone());
        }
        let rest = system.strip_prefix(&self.prefix)?;
        if rest.is_empty() {
            return None;
        }
        Some(match self.transform {
            NameTransform::Identity => rest.to_string(),
            NameTransform::Lowercase => known
                .iter()
                .find(|k| k.to_lowercase() == rest)
                .cloned()
                .unwrap_or_else(|| rest.to_string()),
        })
    }

    /// Layers administrator presets and exclusions over this mapping.
    pub fn with_admin(mut self, admin: &AdminConfig) -> Mapping {
        self.presets.extend(admin.presets.iter().map(|(k, v)| (k.clone(), v.clone())));
        self.exclusions.extend(admin.exclusions.iter().cloned());
        self
    }
}

/// Administrator overrides: `r_name<TAB>system_name` or `r_name<TAB>EXCLUDE`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdminConfig {
    pub presets: BTreeMap<String, String>,
    pub exclusions: BTreeSet<String>,
}

impl AdminConfig {
    pub fn parse(text: &str) -> Result<AdminConfig, BridgeError> {
        let mut cfg = AdminConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let bad = |reason: &str| BridgeError::AdminLine {
                line: idx + 1,
                reason: reason.to_string(),
            };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (r_name, target) = raw.split_once('\t').ok_or_else(|| bad("expected two columns"))?;
            let (r_name, target) = (r_name.trim(), target.trim());
            if r_name.is_empty() || target.is_empty() || target.contains('\t') {
                return Err(bad("expected two non-empty columns"));
            }
            if target == "EXCLUDE" {
                cfg.exclusions.insert(r_name.to_string());
            } else {
                cfg.presets.insert(r_name.to_string(), target.to_string());
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<AdminConfig, BridgeError> {
        AdminConfig::parse(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub prefix: String,
    pub transform: NameTransform,
    /// Probes whose translated name exists in the repository.
    pub coverage: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discovery {
    pub mapping: Mapping,
    /// Every candidate, best first.
    pub candidates: Vec<Candidate>,
}

/// The `probe_count` most depended-upon package names in `db`, plus
/// [`BASE_PROBES`].
pub fn default_probes(db: &[PackageRecord], probe_count: usize) -> Vec<String> {
    let ignore = crate::depgraph::default_ignore();
    let present: BTreeSet<&str> = db.iter().map(|r| r.name.as_str()).collect();
    let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in db {
        for dep in hard_dep_names(rec, BUILD_FIELDS, &ignore) {
            if present.contains(dep) {
                *indegree.entry(dep).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = indegree.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut probes: BTreeSet<String> = BASE_PROBES.iter().map(|s| s.to_string()).collect();
    probes.extend(ranked.into_iter().take(probe_count).map(|(n, _)| n.to_string()));
    probes.into_iter().collect()
}

/// Ranks naming conventions by how many probe names they find in `available`.
///
/// Candidates come from stripping a probe name (as-is or lowercased) off the
/// end of a repository name. Ranking: coverage, then longer prefix, then
/// prefix order, then identity before lowercase.
pub fn discover_in(available: &[String], probes: &[String]) -> Result<Discovery, BridgeError> {
    let repo: BTreeSet<&str> = available.iter().map(String::as_str).collect();
    let mut seen: BTreeSet<(String, bool)> = BTreeSet::new();
    for name in &repo {
        for probe in probes {
            if let Some(prefix) = name.strip_suffix(probe.as_str()) {
                seen.insert((prefix.to_string(), false));
            }
            if let Some(prefix) = name.strip_suffix(probe.to_lowercase().as_str()) {
                seen.insert((prefix.to_string(), true));
            }
        }
    }
    let mut candidates: Vec<Candidate> = seen
        .into_iter()
        .map(|(prefix, lower)| {
            let transform = if lower {
                NameTransform::Lowercase
            } else {
                NameTransform::Identity
            };
            let coverage = probes
                .iter()
                .filter(|p| repo.contains(system_name(p, &prefix, transform).as_str()))
                .count();
            Candidate {
                prefix,
                transform,
                coverage,
            }
        })
        .filter(|c| c.coverage > 0)
        .collect();
    candidates.sort_by(|a, b| {
        b.coverage
            .cmp(&a.coverage)
            .then(b.prefix.len().cmp(&a.prefix.len()))
            .then(a.prefix.cmp(&b.prefix))
            .then((a.transform == NameTransform::Lowercase).cmp(&(b.transform == NameTransform::Lowercase)))
    });
    let best = candidates.first().ok_or(BridgeError::NoMappingFound)?;
    Ok(Discovery {
        mapping: Mapping::new(&best.prefix, best.transform),
        candidates,
    })
}

pub fn discover(backend: &dyn Connector, probes: &[String]) -> Result<Discovery, BridgeError> {
    discover_in(&backend.list_available()?, probes)
}

/// Result of an install or remove: the system packages that changed and
/// the requested R names the system repositories cannot provide.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub packages: Vec<String>,
    pub not_found: Vec<String>,
}

/// The naming convention a bridge reports from `discover`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoverOutcome {
    pub prefix: String,
    pub transform: String,
}

/// Anything that can serve the three calls: a [`Bridge`] in direct mode or
/// a [`Client`] connected to the service.
pub trait BridgeApi {
    fn discover(&mut self) -> Result<DiscoverOutcome, BridgeError>;
    fn install(&mut self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError>;
    fn remove(&mut self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError>;
}

pub enum Executed {
    Discovered(DiscoverOutcome),
    Changed(Outcome),
}

pub struct Bridge {
    backend: Arc<dyn Connector>,
    mapping: Mapping,
    probes: Vec<String>,
}

impl Bridge {
    pub fn new(backend: Arc<dyn Connector>, mapping: Mapping) -> Bridge {
        Bridge {
            backend,
            mapping,
            probes: BASE_PROBES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Builds a bridge whose mapping comes from probing the backend, with
    /// `admin` layered on top.
    pub fn discovering(backend: Arc<dyn Connector>, probes: Vec<String>, admin: &AdminConfig) -> Result<Bridge, BridgeError> {
        let found = discover(backend.as_ref(), &probes)?;
        Ok(Bridge {
            backend,
            mapping: found.mapping.with_admin(admin),
            probes,
        })
    }

    pub fn with_probes(mut self, probes: Vec<String>) -> Bridge {
        self.probes = probes;
        self
    }

    pub fn mapping(&self) -> &Mapping {
        &self.mapping
    }

    pub fn backend(&self) -> &Arc<dyn Connector> {
        &self.backend
    }

    pub fn discover(&self) -> Result<Discovery, BridgeError> {
        discover(self.backend.as_ref(), &self.probes)
    }

    /// Splits `names` into system names present in the repository and R
    /// names that are not. Duplicates are dropped, first occurrence wins.
    fn partition(&self, names: &[String]) -> Result<(Vec<String>, Vec<String>), BridgeError> {
        if names.is_empty() {
            return Err(BridgeError::EmptyRequest);
        }
        let available: BTreeSet<String> = self.backend.list_available()?.into_iter().collect();
        let mut seen = BTreeSet::new();
        let (mut found, mut not_found) = (Vec::new(), Vec::new());
        for name in names.iter().filter(|n| seen.insert(n.as_str())) {
            match self.mapping.translate(name) {
                Some(sys) if available.contains(&sys) => found.push(sys),
                _ => not_found.push(name.clone()),
            }
        }
        Ok((found, not_found))
    }

    pub fn install(&self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        let (found, not_found) = self.partition(names)?;
        let packages = if found.is_empty() {
            Vec::new()
        } else {
            self.backend.install(&found, progress)?
        };
        Ok(Outcome { packages, not_found })
    }

    /// Removes the translated names and lets the backend autoremove orphans.
    pub fn remove(&self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        let (found, not_found) = self.partition(names)?;
        let packages = if found.is_empty() {
            Vec::new()
        } else {
            self.backend.remove(&found, true, progress)?
        };
        Ok(Outcome { packages, not_found })
    }

    pub fn execute(&self, op: Op, args: &[String], progress: &mut dyn FnMut(&str)) -> Result<Executed, BridgeError> {
        match op {
            Op::Discover => {
                let d = self.discover()?;
                Ok(Executed::Discovered(DiscoverOutcome {
                    prefix: d.mapping.prefix,
                    transform: d.mapping.transform.as_str().to_string(),
                }))
            }
            Op::Install => self.install(args, progress).map(Executed::Changed),
            Op::Remove => self.remove(args, progress).map(Executed::Changed),
        }
    }
}

impl BridgeApi for Bridge {
    fn discover(&mut self) -> Result<DiscoverOutcome, BridgeError> {
        match self.execute(Op::Discover, &[], &mut |_| {})? {
            Executed::Discovered(d) => Ok(d),
            Executed::Changed(_) => unreachable!("discover returns a mapping"),
        }
    }

    fn install(&mut self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        Bridge::install(self, names, progress)
    }

    fn remove(&mut self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        Bridge::remove(self, names, progress)
    }
}

/// Runs one call in-process, without the service.
pub fn call_direct(bridge: &mut Bridge, op: Op, names: &[String]) -> Result<Executed, BridgeError> {
    bridge.execute(op, names, &mut |_| {})
}

/// Client-side switch. While disabled, nothing is forwarded and every name
/// comes back as not found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub enabled: bool,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig { enabled: true }
    }
}

impl ClientConfig {
    /// A missing file means enabled.
    pub fn load(path: &Path) -> Result<ClientConfig, BridgeError> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| BridgeError::Protocol(e.to_string())),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(ClientConfig::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), BridgeError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string(self).expect("config serializes") + "\n")?;
        Ok(())
    }

    pub fn set_enabled(path: &Path, enabled: bool) -> Result<ClientConfig, BridgeError> {
        let cfg = ClientConfig { enabled };
        cfg.save(path)?;
        Ok(cfg)
    }
}

/// Wraps an API with the enable/disable switch.
pub struct Gated<A> {
    pub config: ClientConfig,
    pub inner: A,
}

impl<A: BridgeApi> BridgeApi for Gated<A> {
    fn discover(&mut self) -> Result<DiscoverOutcome, BridgeError> {
        self.inner.discover()
    }

    fn install(&mut self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        if !self.config.enabled {
            return Ok(passthrough(names));
        }
        self.inner.install(names, progress)
    }

    fn remove(&mut self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Outcome, BridgeError> {
        if !self.config.enabled {
            return Ok(passthrough(names));
        }
        self.inner.remove(names, progress)
    }
}

/// The disabled-mode answer: nothing changed, everything not found.
pub fn passthrough(names: &[String]) -> Outcome {
    Outcome {
        packages: Vec::new(),
        not_found: names.to_vec(),
    }
}
