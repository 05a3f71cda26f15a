//! `pkgbridge`: every pipeline stage and the bridge from one command line.
//!
//! Exit status is 0 on success, 1 when the work itself fails and 2 for
//! usage errors. Data goes to stdout, everything else to stderr.

mod bridge_cmds;
mod output;
mod pipeline;

use clap::{Args, Parser, Subcommand};
use output::Format;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "pkgbridge", version, about = "Binary packaging pipeline and package-manager bridge for R")]
struct Cli {
    /// Output format for machine-readable results
    #[arg(long, value_enum, default_value_t = Format::Tsv, global = true)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Share of packages that need compilation directly or through a dependency
    Stats {
        #[arg(long)]
        packages: PathBuf,
    },
    /// Dependency-ordered build batches
    Batches(BatchesArgs),
    /// Render build recipes
    Recipe(RecipeArgs),
    /// Diff an upstream index against the binary repository
    SyncPlan(SyncArgs),
    /// Draft system-requirement entries from SystemRequirements text
    ScrapeSysreqs(ScrapeArgs),
    /// Run the privileged bridge service
    Serve(ServeArgs),
    /// Report the naming convention of the system repositories
    Discover(ClientArgs),
    /// Install R packages from system repositories
    Install(NamesArgs),
    /// Remove R packages installed from system repositories
    Remove(NamesArgs),
    /// Route install/remove requests through the bridge again
    Enable(ConfigArgs),
    /// Stop routing requests; every name is reported as not found
    Disable(ConfigArgs),
}

#[derive(Args, Debug)]
struct BatchesArgs {
    #[arg(long)]
    packages: PathBuf,
    /// System requirements database; its exclusions seed the plan
    #[arg(long, env = "PKGBRIDGE_SYSREQS")]
    sysreqs: Option<PathBuf>,
    /// Fail on dependency cycles instead of batching them together
    #[arg(long)]
    reject_cycles: bool,
}

#[derive(Args, Debug)]
struct NamingArgs {
    /// System package name prefix
    #[arg(long, default_value = "R-CRAN-")]
    prefix: String,
    /// Lowercase R names after the prefix
    #[arg(long)]
    lowercase: bool,
}

#[derive(Args, Debug)]
struct RecipeArgs {
    #[arg(long)]
    packages: PathBuf,
    /// R packages to render
    #[arg(required_unless_present = "all", conflicts_with = "all")]
    names: Vec<String>,
    /// Render every package that is not excluded
    #[arg(long)]
    all: bool,
    #[arg(long, env = "PKGBRIDGE_SYSREQS")]
    sysreqs: Option<PathBuf>,
    /// Distribution target looked up in the sysreqs database
    #[arg(long, default_value = "fedora")]
    distro: String,
    /// Template with {{placeholders}}; the built-in SPEC template otherwise
    #[arg(long)]
    template: Option<PathBuf>,
    /// Write <name>.spec files here instead of printing
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    release: u32,
    /// Render with this many threads
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
    #[command(flatten)]
    naming: NamingArgs,
}

#[derive(Args, Debug)]
struct SyncArgs {
    /// Current upstream index
    #[arg(long)]
    packages: PathBuf,
    /// Repository state: name, version, release per line
    #[arg(long)]
    repo: PathBuf,
    #[arg(long, env = "PKGBRIDGE_SYSREQS")]
    sysreqs: Option<PathBuf>,
    /// Also rebuild packages that depend on an updated one
    #[arg(long)]
    rebuild_dependents: bool,
    /// Schedule every package instead of only what changed
    #[arg(long, conflicts_with = "rebuild_dependents")]
    mass_rebuild: bool,
}

#[derive(Args, Debug)]
struct ScrapeArgs {
    #[arg(long)]
    packages: PathBuf,
    /// Pattern file mapping requirement phrases to system packages
    #[arg(long)]
    lexicon: PathBuf,
    /// Existing database; packages already curated there are skipped and
    /// the output is the merged database
    #[arg(long, env = "PKGBRIDGE_SYSREQS")]
    sysreqs: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BackendArgs {
    /// Simulated package manager seeded from this catalog
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// JSON file holding the simulated installed set and journal
    #[arg(long, requires = "catalog")]
    state: Option<PathBuf>,
    /// Administrator overrides: r_name<TAB>system_name or r_name<TAB>EXCLUDE
    #[arg(long, env = "PKGBRIDGE_EXCLUDE")]
    exclude: Option<PathBuf>,
    /// Fixed naming convention instead of discovering it
    #[arg(long)]
    prefix: Option<String>,
    #[arg(long, requires = "prefix")]
    lowercase: bool,
    /// Upstream index used to choose discovery probes
    #[arg(long = "probe-packages")]
    probe_packages: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, env = "PKGBRIDGE_SOCKET")]
    socket: PathBuf,
    /// Drive a real package manager instead of the simulator
    #[arg(long, value_enum, conflicts_with = "catalog", required_unless_present = "catalog")]
    shell: Option<bridge_cmds::ShellKind>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args, Debug)]
struct ClientArgs {
    #[arg(long, env = "PKGBRIDGE_SOCKET", required_unless_present = "direct")]
    socket: Option<PathBuf>,
    /// Run in-process against the backend instead of through the service
    #[arg(long, requires = "catalog")]
    direct: bool,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct NamesArgs {
    #[arg(required = true)]
    names: Vec<String>,
    #[command(flatten)]
    client: ClientArgs,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Client settings file [default: ~/.config/pkgbridge/client.json]
    #[arg(long = "config", env = "PKGBRIDGE_CONFIG")]
    path: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let format = cli.format;
    let result = match cli.command {
        Command::Stats { packages } => pipeline::stats(&packages, format),
        Command::Batches(a) => pipeline::batches(&a, format),
        Command::Recipe(a) => pipeline::recipe(&a, format),
        Command::SyncPlan(a) => pipeline::sync_plan(&a, format),
        Command::ScrapeSysreqs(a) => pipeline::scrape_sysreqs(&a, format),
        Command::Serve(a) => bridge_cmds::serve(&a),
        Command::Discover(a) => bridge_cmds::discover(&a, format),
        Command::Install(a) => bridge_cmds::change(bridge_cmds::Change::Install, &a, format),
        Command::Remove(a) => bridge_cmds::change(bridge_cmds::Change::Remove, &a, format),
        Command::Enable(a) => bridge_cmds::set_enabled(&a, true),
        Command::Disable(a) => bridge_cmds::set_enabled(&a, false),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pkgbridge: {e:#}");
            ExitCode::from(1)
        }
    }
}
