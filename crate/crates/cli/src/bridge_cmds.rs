use crate::output::{print_json, Format};
use crate::pipeline::load_packages;
use crate::{BackendArgs, ClientArgs, ConfigArgs, NamesArgs, ServeArgs};
use anyhow::{Context, Result};
use clap::ValueEnum;
use pkgbridge_core::bridge::{
    default_probes, AdminConfig, Bridge, BridgeApi, Client, ClientConfig, Gated, Mapping, Server, BASE_PROBES,
};
use pkgbridge_core::fakepm::{Catalog, CommandSet, Connector, FakePm, PmState, ShellConnector};
use pkgbridge_core::recipegen::NameTransform;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShellKind {
    Dnf,
    Apt,
}

#[derive(Debug, Clone, Copy)]
pub enum Change {
    Install,
    Remove,
}

/// The simulator and where to persist it, when one is in use.
struct Simulated {
    pm: Arc<FakePm>,
    state: Option<PathBuf>,
}

impl Simulated {
    fn save(&self) -> Result<()> {
        if let Some(path) = &self.state {
            let text = serde_json::to_string_pretty(&self.pm.snapshot())?;
            fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

fn simulator(catalog: &Path, state: Option<&Path>) -> Result<Simulated> {
    let text = fs::read_to_string(catalog).with_context(|| format!("cannot read {}", catalog.display()))?;
    let catalog = Catalog::parse(&text).with_context(|| format!("in {}", catalog.display()))?;
    let pm = match state.filter(|p| p.exists()) {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            let saved: PmState = serde_json::from_str(&text).with_context(|| format!("in {}", p.display()))?;
            FakePm::with_state(catalog, saved)
        }
        None => FakePm::new(catalog),
    };
    Ok(Simulated {
        pm: Arc::new(pm),
        state: state.map(Path::to_path_buf),
    })
}

fn bridge(backend: Arc<dyn Connector>, args: &BackendArgs) -> Result<Bridge> {
    let admin = match &args.exclude {
        Some(p) => AdminConfig::load(p).with_context(|| format!("in {}", p.display()))?,
        None => AdminConfig::default(),
    };
    if let Some(prefix) = &args.prefix {
        let transform = if args.lowercase {
            NameTransform::Lowercase
        } else {
            NameTransform::Identity
        };
        return Ok(Bridge::new(backend, Mapping::new(prefix, transform).with_admin(&admin)));
    }
    let probes = match &args.probe_packages {
        Some(p) => default_probes(&load_packages(p)?, 10),
        None => BASE_PROBES.iter().map(|s| s.to_string()).collect(),
    };
    Ok(Bridge::discovering(backend, probes, &admin)?)
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let (backend, sim): (Arc<dyn Connector>, Option<Simulated>) = match (args.shell, &args.backend.catalog) {
        (Some(kind), _) => {
            let commands = match kind {
                ShellKind::Dnf => CommandSet::dnf(),
                ShellKind::Apt => CommandSet::apt(),
            };
            (Arc::new(ShellConnector::new(commands)), None)
        }
        (None, Some(catalog)) => {
            let sim = simulator(catalog, args.backend.state.as_deref())?;
            (sim.pm.clone(), Some(sim))
        }
        (None, None) => unreachable!("clap requires a backend"),
    };
    let bridge = bridge(backend, &args.backend)?;
    let mapping = bridge.mapping().clone();
    let server = Server::bind(&args.socket, bridge)?;

    let stop = Arc::new(AtomicBool::new(false));
    for signal in [signal_hook::consts::SIGTERM, signal_hook::consts::SIGINT] {
        signal_hook::flag::register(signal, stop.clone()).context("cannot install signal handler")?;
    }
    eprintln!(
        "listening on {} (prefix {:?}, {})",
        args.socket.display(),
        mapping.prefix,
        mapping.transform.as_str()
    );
    server.run(&stop)?;
    if let Some(sim) = sim {
        sim.save()?;
    }
    eprintln!("stopped");
    Ok(())
}

fn config_path(args: &ConfigArgs) -> PathBuf {
    args.path.clone().unwrap_or_else(|| {
        let home = std::env::var_os("HOME").map_or_else(|| PathBuf::from("."), PathBuf::from);
        home.join(".config/pkgbridge/client.json")
    })
}

pub fn set_enabled(args: &ConfigArgs, enabled: bool) -> Result<()> {
    let path = config_path(args);
    ClientConfig::set_enabled(&path, enabled).with_context(|| format!("cannot write {}", path.display()))?;
    println!("{}", if enabled { "enabled" } else { "disabled" });
    Ok(())
}

/// Runs `f` against either an in-process bridge or the service, behind the
/// enable/disable switch.
fn with_api<T>(args: &ClientArgs, f: impl FnOnce(&mut dyn BridgeApi) -> Result<T>) -> Result<T> {
    let config = ClientConfig::load(&config_path(&args.config))?;
    if args.direct {
        let catalog = args.backend.catalog.as_deref().expect("clap requires --catalog");
        let sim = simulator(catalog, args.backend.state.as_deref())?;
        let mut api = Gated {
            config,
            inner: bridge(sim.pm.clone(), &args.backend)?,
        };
        let out = f(&mut api)?;
        sim.save()?;
        return Ok(out);
    }
    let socket = args.socket.as_deref().expect("clap requires --socket");
    let client = Client::connect(socket).with_context(|| format!("cannot connect to {}", socket.display()))?;
    f(&mut Gated { config, inner: client })
}

pub fn discover(args: &ClientArgs, format: Format) -> Result<()> {
    let found = with_api(args, |api| Ok(api.discover()?))?;
    match format {
        Format::Tsv => println!("{}\t{}", found.prefix, found.transform),
        Format::Json => print_json(&json!({"prefix": found.prefix, "transform": found.transform})),
    }
    Ok(())
}

pub fn change(kind: Change, args: &NamesArgs, format: Format) -> Result<()> {
    let mut progress = |line: &str| eprintln!("{line}");
    let out = with_api(&args.client, |api| {
        Ok(match kind {
            Change::Install => api.install(&args.names, &mut progress)?,
            Change::Remove => api.remove(&args.names, &mut progress)?,
        })
    })?;
    match format {
        Format::Tsv => {
            let tag = match kind {
                Change::Install => "INSTALLED",
                Change::Remove => "REMOVED",
            };
            for name in &out.packages {
                println!("{tag}\t{name}");
            }
            for name in &out.not_found {
                println!("NOT_FOUND\t{name}");
            }
        }
        Format::Json => print_json(&serde_json::to_value(&out)?),
    }
    Ok(())
}
