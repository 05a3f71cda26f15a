//! The package-manager connector interface and a deterministic in-memory
//! backend that implements it.
//!
//! [`FakePm`] models what matters to the bridge: a closed catalog, installs
//! that pull dependencies first, removals with autoremove of orphans, and an
//! append-only journal whose entries are hash-chained and replayable.

mod shell;

pub use shell::{CommandSet, ShellConnector};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Mutex, MutexGuard};
use std::thread;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConnectorError {
    #[error("unknown package {0}")]
    UnknownPackage(String),
    #[error("another transaction is in progress")]
    Busy,
    #[error("transaction failed: {0}")]
    Failure(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("{package} depends on {missing}, which is not in the catalog")]
    NotClosed { package: String, missing: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("transaction {seq}: {reason}")]
    Mismatch { seq: u64, reason: String },
    #[error("transaction {seq}: {source}")]
    Connector {
        seq: u64,
        #[source]
        source: ConnectorError,
    },
}

/// What a system package manager exposes to the bridge.
///
/// Every call is a single transaction; implementations reject overlapping
/// calls with [`ConnectorError::Busy`].
pub trait Connector: Send + Sync {
    fn list_available(&self) -> Result<Vec<String>, ConnectorError>;

    /// Installs `names` and their dependencies; returns what was newly
    /// installed, dependencies first.
    fn install(&self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Vec<String>, ConnectorError>;

    /// Removes `names` (and anything that needs them); with `autoremove`,
    /// also drops dependencies nothing explicit needs anymore.
    fn remove(
        &self,
        names: &[String],
        autoremove: bool,
        progress: &mut dyn FnMut(&str),
    ) -> Result<Vec<String>, ConnectorError>;

    fn query_installed(&self) -> Result<Vec<InstalledPackage>, ConnectorError>;

    fn transaction_log(&self) -> Result<Vec<Transaction>, ConnectorError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub version: String,
    pub depends: BTreeSet<String>,
}

/// Repository metadata: every available package and its dependencies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    available: BTreeMap<String, CatalogEntry>,
}

impl Catalog {
    pub fn new(available: BTreeMap<String, CatalogEntry>) -> Result<Catalog, CatalogError> {
        for (package, entry) in &available {
            if let Some(missing) = entry.depends.iter().find(|d| !available.contains_key(*d)) {
                return Err(CatalogError::NotClosed {
                    package: package.clone(),
                    missing: missing.clone(),
                });
            }
        }
        Ok(Catalog { available })
    }

    /// Seed file: `name<TAB>version<TAB>dep1,dep2,...` (third column optional).
    pub fn parse(text: &str) -> Result<Catalog, CatalogError> {
        let mut available = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let bad = |reason: &str| CatalogError::MalformedLine {
                line,
                reason: reason.to_string(),
            };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(bad("expected name, version and optional dependency list"));
            }
            let name = cols[0].trim();
            if name.is_empty() {
                return Err(bad("empty package name"));
            }
            let depends = cols
                .get(2)
                .map(|d| {
                    d.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default();
            let entry = CatalogEntry {
                version: cols[1].trim().to_string(),
                depends,
            };
            if available.insert(name.to_string(), entry).is_some() {
                return Err(bad("duplicate package"));
            }
        }
        Catalog::new(available)
    }

    pub fn lookup(&self, name: &str) -> Option<&CatalogEntry> {
        self.available.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.available.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.available.keys()
    }

    pub fn len(&self) -> usize {
        self.available.len()
    }

    pub fn is_empty(&self) -> bool {
        self.available.is_empty()
    }

    /// `names` and everything they depend on, dependencies before dependents.
    /// Within a level, names are visited in sorted order.
    fn dependency_order<'a>(&'a self, names: impl IntoIterator<Item = &'a String>) -> Vec<&'a str> {
        fn visit<'a>(cat: &'a Catalog, name: &'a str, seen: &mut BTreeSet<&'a str>, out: &mut Vec<&'a str>) {
            if !seen.insert(name) {
                return;
            }
            if let Some(entry) = cat.available.get(name) {
                for dep in &entry.depends {
                    visit(cat, dep, seen, out);
                }
            }
            out.push(name);
        }
        let mut roots: Vec<&String> = names.into_iter().collect();
        roots.sort();
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for root in roots {
            visit(self, root, &mut seen, &mut out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstalledPackage {
    pub name: String,
    pub version: String,
    /// Requested by a user rather than pulled in as a dependency.
    pub explicit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxOp {
    Install,
    Remove,
}

impl fmt::Display for TxOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxOp::Install => "install",
            TxOp::Remove => "remove",
        })
    }
}

/// One journal entry. `began`/`ended` are ticks of the backend's logical
/// clock; `hash` covers the previous hash, the operation and the resulting
/// installed set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub seq: u64,
    pub op: TxOp,
    pub requested: Vec<String>,
    pub autoremove: bool,
    pub changed: Vec<String>,
    pub began: u64,
    pub ended: u64,
    pub prev_hash: String,
    pub hash: String,
}

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

fn chain_hash(
    prev: &str,
    op: TxOp,
    requested: &[String],
    changed: &[String],
    installed: &BTreeMap<String, InstalledPackage>,
) -> String {
    let mut h = Sha256::new();
    h.update(prev.as_bytes());
    h.update(format!("\n{op}\n{}\n{}\n", requested.join(","), changed.join(",")).as_bytes());
    for p in installed.values() {
        h.update(format!("{}={}:{}\n", p.name, p.version, p.explicit).as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Checks that every entry links to its predecessor.
pub fn verify_chain(journal: &[Transaction]) -> bool {
    let mut prev = GENESIS_HASH;
    for tx in journal {
        if tx.prev_hash != prev {
            return false;
        }
        prev = &tx.hash;
    }
    true
}

/// True if no two transactions overlap in time.
pub fn is_serial(journal: &[Transaction]) -> bool {
    journal.iter().all(|t| t.began < t.ended)
        && journal.windows(2).all(|w| w[0].ended < w[1].began)
}

/// Text dump: `seq<TAB>op<TAB>requested<TAB>changed<TAB>hash`.
pub fn render_journal(journal: &[Transaction]) -> String {
    journal
        .iter()
        .map(|t| {
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                t.seq,
                t.op,
                t.requested.join(","),
                t.changed.join(","),
                t.hash
            )
        })
        .collect()
}

/// Failure modes that can be injected per package, for tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The transaction fails with [`ConnectorError::Failure`].
    Conflict,
    /// The backend panics mid-transaction.
    Crash,
}

/// Serializable installed set plus journal, for persisting a [`FakePm`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmState {
    pub installed: BTreeMap<String, InstalledPackage>,
    pub journal: Vec<Transaction>,
}

pub struct FakePm {
    catalog: Catalog,
    state: Mutex<PmState>,
    in_flight: AtomicBool,
    clock: AtomicU64,
    latency: Duration,
    faults: BTreeMap<String, Fault>,
}

struct FlightGuard<'a>(&'a AtomicBool);

impl Drop for FlightGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

impl FakePm {
    pub fn new(catalog: Catalog) -> FakePm {
        FakePm {
            catalog,
            state: Mutex::new(PmState::default()),
            in_flight: AtomicBool::new(false),
            clock: AtomicU64::new(1),
            latency: Duration::ZERO,
            faults: BTreeMap::new(),
        }
    }

    /// Restores a previously saved state. The journal chain is not re-checked;
    /// use [`FakePm::replay`] for that.
    pub fn with_state(catalog: Catalog, state: PmState) -> FakePm {
        let next_tick = state.journal.last().map_or(1, |t| t.ended + 1);
        let pm = FakePm::new(catalog);
        pm.clock.store(next_tick, Ordering::SeqCst);
        *pm.state() = state;
        pm
    }

    /// Sleeps this long inside every transaction.
    pub fn with_latency(mut self, latency: Duration) -> FakePm {
        self.latency = latency;
        self
    }

    pub fn with_fault(mut self, package: &str, fault: Fault) -> FakePm {
        self.faults.insert(package.to_string(), fault);
        self
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn catalog_lookup(&self, name: &str) -> Option<&CatalogEntry> {
        self.catalog.lookup(name)
    }

    pub fn snapshot(&self) -> PmState {
        self.state().clone()
    }

    pub fn installed_names(&self) -> BTreeSet<String> {
        self.state().installed.keys().cloned().collect()
    }

    // Faults fire before any mutation, so a poisoned lock still guards a
    // consistent state.
    fn state(&self) -> MutexGuard<'_, PmState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst)
    }

    fn begin(&self) -> Result<FlightGuard<'_>, ConnectorError> {
        self.in_flight
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .map_err(|_| ConnectorError::Busy)?;
        Ok(FlightGuard(&self.in_flight))
    }

    fn check_faults<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Result<(), ConnectorError> {
        for name in names {
            match self.faults.get(name) {
                Some(Fault::Conflict) => {
                    return Err(ConnectorError::Failure(format!("conflict while processing {name}")))
                }
                Some(Fault::Crash) => panic!("simulated backend crash on {name}"),
                None => {}
            }
        }
        Ok(())
    }

    fn known(&self, names: &[String]) -> Result<(), ConnectorError> {
        match names.iter().find(|n| !self.catalog.contains(n)) {
            Some(n) => Err(ConnectorError::UnknownPackage(n.clone())),
            None => Ok(()),
        }
    }

    fn record(
        &self,
        state: &mut PmState,
        op: TxOp,
        requested: &[String],
        autoremove: bool,
        changed: Vec<String>,
        began: u64,
    ) {
        let seq = state.journal.len() as u64 + 1;
        let prev_hash = state
            .journal
            .last()
            .map_or(GENESIS_HASH.to_string(), |t| t.hash.clone());
        let hash = chain_hash(&prev_hash, op, requested, &changed, &state.installed);
        state.journal.push(Transaction {
            seq,
            op,
            requested: requested.to_vec(),
            autoremove,
            changed,
            began,
            ended: self.tick(),
            prev_hash,
            hash,
        });
    }

    pub fn pm_install(&self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Vec<String>, ConnectorError> {
        let _guard = self.begin()?;
        let began = self.tick();
        self.known(names)?;
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }

        let mut state = self.state();
        let before = state.installed.clone();
        let order: Vec<String> = self
            .catalog
            .dependency_order(names)
            .into_iter()
            .filter(|n| !state.installed.contains_key(*n))
            .map(str::to_string)
            .collect();
        self.check_faults(order.iter().map(String::as_str))?;

        let total = order.len();
        for (i, name) in order.iter().enumerate() {
            let version = self.catalog.available[name].version.clone();
            progress(&format!("Installing: {name}-{version} {}/{total}", i + 1));
            state.installed.insert(
                name.clone(),
                InstalledPackage {
                    name: name.clone(),
                    version,
                    explicit: false,
                },
            );
        }
        for name in names {
            state.installed.get_mut(name).expect("just installed").explicit = true;
        }
        if state.installed != before {
            self.record(&mut state, TxOp::Install, names, false, order.clone(), began);
        }
        Ok(order)
    }

    pub fn pm_remove(
        &self,
        names: &[String],
        autoremove: bool,
        progress: &mut dyn FnMut(&str),
    ) -> Result<Vec<String>, ConnectorError> {
        let _guard = self.begin()?;
        let began = self.tick();
        self.known(names)?;
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }

        let mut state = self.state();
        let installed = &state.installed;

        // requested packages and everything installed that needs them
        let mut doomed: BTreeSet<&str> = names
            .iter()
            .map(String::as_str)
            .filter(|n| installed.contains_key(*n))
            .collect();
        loop {
            let more: Vec<&str> = installed
                .keys()
                .map(String::as_str)
                .filter(|n| !doomed.contains(n))
                .filter(|n| self.catalog.available[*n].depends.iter().any(|d| doomed.contains(d.as_str())))
                .collect();
            if more.is_empty() {
                break;
            }
            doomed.extend(more);
        }

        if autoremove {
            let roots: Vec<&String> = installed
                .values()
                .filter(|p| p.explicit && !doomed.contains(p.name.as_str()))
                .map(|p| &p.name)
                .collect();
            let needed: BTreeSet<&str> = self.catalog.dependency_order(roots).into_iter().collect();
            doomed.extend(installed.keys().map(String::as_str).filter(|n| !needed.contains(n)));
        }

        // dependents first; each round takes what no remaining package needs
        let mut order: Vec<String> = Vec::with_capacity(doomed.len());
        let mut left = doomed;
        while !left.is_empty() {
            let needed: BTreeSet<&str> = left
                .iter()
                .flat_map(|n| self.catalog.available[*n].depends.iter().map(String::as_str))
                .collect();
            let mut round: Vec<&str> = left.iter().copied().filter(|n| !needed.contains(n)).collect();
            if round.is_empty() {
                // dependency cycle: take the rest in name order
                round = left.iter().copied().collect();
            }
            for n in &round {
                left.remove(n);
            }
            order.extend(round.into_iter().map(str::to_string));
        }
        self.check_faults(order.iter().map(String::as_str))?;

        let total = order.len();
        for (i, name) in order.iter().enumerate() {
            let pkg = state.installed.remove(name).expect("installed");
            progress(&format!("Erasing: {name}-{} {}/{total}", pkg.version, i + 1));
        }
        if !order.is_empty() {
            self.record(&mut state, TxOp::Remove, names, autoremove, order.clone(), began);
        }
        Ok(order)
    }

    /// Re-executes `journal` on an empty backend, checking every step
    /// reproduces the recorded changes and hashes.
    pub fn replay(catalog: Catalog, journal: &[Transaction]) -> Result<FakePm, ReplayError> {
        let pm = FakePm::new(catalog);
        for tx in journal {
            let mismatch = |reason: String| ReplayError::Mismatch { seq: tx.seq, reason };
            let mut quiet = |_: &str| {};
            let changed = match tx.op {
                TxOp::Install => pm.pm_install(&tx.requested, &mut quiet),
                TxOp::Remove => pm.pm_remove(&tx.requested, tx.autoremove, &mut quiet),
            }
            .map_err(|source| ReplayError::Connector { seq: tx.seq, source })?;
            if changed != tx.changed {
                return Err(mismatch(format!("changed {:?}, journal says {:?}", changed, tx.changed)));
            }
            let state = pm.state();
            let last = state.journal.last().ok_or_else(|| mismatch("no-op on replay".into()))?;
            if last.hash != tx.hash || last.prev_hash != tx.prev_hash {
                return Err(mismatch("hash chain differs".into()));
            }
        }
        Ok(pm)
    }
}

impl Connector for FakePm {
    fn list_available(&self) -> Result<Vec<String>, ConnectorError> {
        Ok(self.catalog.names().cloned().collect())
    }

    fn install(&self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Vec<String>, ConnectorError> {
        self.pm_install(names, progress)
    }

    fn remove(
        &self,
        names: &[String],
        autoremove: bool,
        progress: &mut dyn FnMut(&str),
    ) -> Result<Vec<String>, ConnectorError> {
        self.pm_remove(names, autoremove, progress)
    }

    fn query_installed(&self) -> Result<Vec<InstalledPackage>, ConnectorError> {
        Ok(self.state().installed.values().cloned().collect())
    }

    fn transaction_log(&self) -> Result<Vec<Transaction>, ConnectorError> {
        Ok(self.state().journal.clone())
    }
}
