//! Connector that drives a real package manager through its command-line
//! tools. Not used by the test suite against a live system.

use super::{chain_hash, Connector, ConnectorError, InstalledPackage, Transaction, TxOp, GENESIS_HASH};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

/// argv prefixes for each connector entry point. Package names are appended
/// to `install`, `remove` and `remove_autoremove`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandSet {
    /// Prints one available package name per line.
    pub list_available: Vec<String>,
    pub install: Vec<String>,
    pub remove: Vec<String>,
    pub remove_autoremove: Vec<String>,
    /// Prints `name<TAB>version` per installed package.
    pub query_installed: Vec<String>,
    /// Prints the names of user-requested packages, one per line.
    pub query_explicit: Option<Vec<String>>,
}

fn argv(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

impl CommandSet {
    pub fn dnf() -> CommandSet {
        CommandSet {
            list_available: argv(&["dnf", "-q", "repoquery", "--qf", "%{name}"]),
            install: argv(&["dnf", "-y", "install"]),
            remove: argv(&["dnf", "-y", "--setopt=clean_requirements_on_remove=False", "remove"]),
            remove_autoremove: argv(&["dnf", "-y", "--setopt=clean_requirements_on_remove=True", "remove"]),
            query_installed: argv(&["rpm", "-qa", "--qf", "%{NAME}\\t%{VERSION}-%{RELEASE}\\n"]),
            query_explicit: Some(argv(&["dnf", "-q", "repoquery", "--userinstalled", "--qf", "%{name}"])),
        }
    }

    pub fn apt() -> CommandSet {
        CommandSet {
            list_available: argv(&["apt-cache", "pkgnames"]),
            install: argv(&["apt-get", "-y", "install"]),
            remove: argv(&["apt-get", "-y", "remove"]),
            remove_autoremove: argv(&["apt-get", "-y", "--autoremove", "remove"]),
            query_installed: argv(&["dpkg-query", "-W", "-f=${Package}\\t${Version}\\n"]),
            query_explicit: Some(argv(&["apt-mark", "showmanual"])),
        }
    }
}

pub struct ShellConnector {
    commands: CommandSet,
    in_flight: AtomicBool,
    clock: AtomicU64,
    journal: Mutex<Vec<Transaction>>,
}

impl ShellConnector {
    pub fn new(commands: CommandSet) -> ShellConnector {
        ShellConnector {
            commands,
            in_flight: AtomicBool::new(false),
            clock: AtomicU64::new(1),
            journal: Mutex::new(Vec::new()),
        }
    }

    fn capture(&self, cmd: &[String]) -> Result<String, ConnectorError> {
        let (prog, args) = cmd
            .split_first()
            .ok_or_else(|| ConnectorError::Failure("empty command".into()))?;
        let out = Command::new(prog)
            .args(args)
            .stderr(Stdio::piped())
            .output()
            .map_err(|e| ConnectorError::Failure(format!("{prog}: {e}")))?;
        if !out.status.success() {
            return Err(ConnectorError::Failure(format!(
                "{prog} exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }

    /// Runs `cmd names...`, forwarding stdout line by line.
    fn stream(&self, cmd: &[String], names: &[String], progress: &mut dyn FnMut(&str)) -> Result<(), ConnectorError> {
        let (prog, args) = cmd
            .split_first()
            .ok_or_else(|| ConnectorError::Failure("empty command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .args(names)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ConnectorError::Failure(format!("{prog}: {e}")))?;
        let stdout = child.stdout.take().expect("piped");
        for line in BufReader::new(stdout).lines().map_while(Result::ok) {
            progress(&line);
        }
        let out = child
            .wait_with_output()
            .map_err(|e| ConnectorError::Failure(format!("{prog}: {e}")))?;
        if !out.status.success() {
            return Err(ConnectorError::Failure(format!(
                "{prog} exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(())
    }

    fn installed_map(&self) -> Result<BTreeMap<String, InstalledPackage>, ConnectorError> {
        Ok(self
            .query_installed()?
            .into_iter()
            .map(|p| (p.name.clone(), p))
            .collect())
    }

    fn transaction(
        &self,
        op: TxOp,
        names: &[String],
        autoremove: bool,
        run: impl FnOnce() -> Result<(), ConnectorError>,
    ) -> Result<Vec<String>, ConnectorError> {
        self.in_flight
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .map_err(|_| ConnectorError::Busy)?;
        let result = (|| {
            let began = self.clock.fetch_add(1, Ordering::SeqCst);
            let before = self.installed_map()?;
            run()?;
            let after = self.installed_map()?;
            let changed: Vec<String> = match op {
                TxOp::Install => after.keys().filter(|n| !before.contains_key(*n)).cloned().collect(),
                TxOp::Remove => before.keys().filter(|n| !after.contains_key(*n)).cloned().collect(),
            };
            let mut journal = self.journal.lock().unwrap_or_else(|e| e.into_inner());
            let prev_hash = journal.last().map_or(GENESIS_HASH.to_string(), |t| t.hash.clone());
            let hash = chain_hash(&prev_hash, op, names, &changed, &after);
            let seq = journal.len() as u64 + 1;
            journal.push(Transaction {
                seq,
                op,
                requested: names.to_vec(),
                autoremove,
                changed: changed.clone(),
                began,
                ended: self.clock.fetch_add(1, Ordering::SeqCst),
                prev_hash,
                hash,
            });
            Ok(changed)
        })();
        self.in_flight.store(false, Ordering::SeqCst);
        result
    }
}

impl Connector for ShellConnector {
    fn list_available(&self) -> Result<Vec<String>, ConnectorError> {
        let out = self.capture(&self.commands.list_available)?;
        let names: BTreeSet<String> = out
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Ok(names.into_iter().collect())
    }

    fn install(&self, names: &[String], progress: &mut dyn FnMut(&str)) -> Result<Vec<String>, ConnectorError> {
        let cmd = self.commands.install.clone();
        self.transaction(TxOp::Install, names, false, || self.stream(&cmd, names, progress))
    }

    fn remove(
        &self,
        names: &[String],
        autoremove: bool,
        progress: &mut dyn FnMut(&str),
    ) -> Result<Vec<String>, ConnectorError> {
        let cmd = if autoremove {
            self.commands.remove_autoremove.clone()
        } else {
            self.commands.remove.clone()
        };
        self.transaction(TxOp::Remove, names, autoremove, || self.stream(&cmd, names, progress))
    }

    fn query_installed(&self) -> Result<Vec<InstalledPackage>, ConnectorError> {
        let explicit: Option<BTreeSet<String>> = match &self.commands.query_explicit {
            Some(cmd) => Some(self.capture(cmd)?.lines().map(|l| l.trim().to_string()).collect()),
            None => None,
        };
        let out = self.capture(&self.commands.query_installed)?;
        Ok(out
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .map(|(name, version)| InstalledPackage {
                name: name.trim().to_string(),
                version: version.trim().to_string(),
                explicit: explicit.as_ref().is_none_or(|e| e.contains(name.trim())),
            })
            .collect())
    }

    fn transaction_log(&self) -> Result<Vec<Transaction>, ConnectorError> {
        Ok(self.journal.lock().unwrap_or_else(|e| e.into_inner()).clone())
    }
}
