//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! Set `PKGBRIDGE_CRAN_SNAPSHOT` to a full PACKAGES file to also run the
//! corpus-wide sanity band in criterion 3. Set `PKGBRIDGE_BLESS=1` to
//! rewrite the recipe golden file.

mod gen;

use pkgbridge_core::bridge::{
    call_direct, discover, discover_in, Bridge, BridgeApi, BridgeError, Client, Executed, Mapping, Op, Outcome, Server,
};
use pkgbridge_core::depgraph::{
    batch_plan, build_graph, compilation_stats, propagate_exclusions, BUILD_FIELDS,
};
use pkgbridge_core::fakepm::{is_serial, verify_chain, Catalog, Connector, FakePm};
use pkgbridge_core::metadata::{compare_versions, parse_dcf, parse_packages_index, render_dcf, Stanza, VersionString};
use pkgbridge_core::recipegen::{generate, write_recipe, NameTransform, RecipeConfig};
use pkgbridge_core::syncer::{plan_sync, SyncOptions};
use pkgbridge_core::sysreqs::{load_db, resolve, save_db, SysreqsDb, SysreqsEntry, TargetReqs};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

type Check = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if let false = $cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn serve(bridge: Bridge) -> (tempfile::TempDir, PathBuf, pkgbridge_core::bridge::ServerHandle) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bridge.sock");
    let handle = Server::bind(&path, bridge).unwrap().spawn();
    (dir, path, handle)
}

fn position(list: &[String], name: &str) -> Option<usize> {
    list.iter().position(|n| n == name)
}

fn demo_replay() -> Check {
    let pm = Arc::new(FakePm::new(Catalog::parse(&fixture("catalog-fedora.tsv")).unwrap()));
    let bridge = Bridge::new(pm.clone(), Mapping::new("R-CRAN-", NameTransform::Identity));
    let (_dir, path, handle) = serve(bridge);
    let mut client = Client::connect(&path).map_err(|e| e.to_string())?;

    let mut progress = Vec::new();
    let out = client
        .install(&names(&["gifski", "units"]), &mut |l| progress.push(l.to_string()))
        .map_err(|e| e.to_string())?;
    ensure!(out.not_found == names(&["gifski"]), "not_found {:?}", out.not_found);
    let installed: BTreeSet<String> = out.packages.iter().cloned().collect();
    let expected: BTreeSet<String> = names(&["R-CRAN-units", "R-CRAN-Rcpp", "udunits2"]).into_iter().collect();
    ensure!(installed == expected && out.packages.len() == 3, "installed {:?}", out.packages);
    let units = position(&out.packages, "R-CRAN-units").unwrap();
    ensure!(
        position(&out.packages, "R-CRAN-Rcpp").unwrap() < units && position(&out.packages, "udunits2").unwrap() < units,
        "install order {:?}",
        out.packages
    );
    ensure!(pm.installed_names() == expected, "backend has {:?}", pm.installed_names());
    ensure!(progress.len() == 3 && progress[2].contains("R-CRAN-units"), "progress {progress:?}");
    let install_order = out.packages.clone();

    let out = client.remove(&names(&["units"]), &mut |_| {}).map_err(|e| e.to_string())?;
    ensure!(out.not_found.is_empty(), "remove not_found {:?}", out.not_found);
    ensure!(out.packages.first().map(String::as_str) == Some("R-CRAN-units"), "erase order {:?}", out.packages);
    let removed: BTreeSet<String> = out.packages.iter().cloned().collect();
    ensure!(removed == expected, "removed {:?}", out.packages);
    ensure!(pm.installed_names().is_empty(), "left behind {:?}", pm.installed_names());
    ensure!(pm.query_installed().unwrap().is_empty(), "query_installed not empty");
    handle.shutdown().map_err(|e| e.to_string())?;
    ensure!(!path.exists(), "socket left behind");
    Ok(format!("installed {install_order:?}, fallback [gifski], erased {:?}", out.packages))
}

fn batch_validity() -> Check {
    let mut rng = StdRng::seed_from_u64(0xba7c4);
    let mut small = 0;
    let mut with_exclusions = 0;
    for case in 0..500 {
        let n = rng.gen_range(1..=40);
        let db = gen::dag_db(&mut rng, n);
        let base = gen::exclusions(&mut rng, &db, 0.08);
        let graph = build_graph(&db, BUILD_FIELDS).map_err(|e| e.to_string())?;
        let excluded = propagate_exclusions(&graph, &base);
        let plan = batch_plan(&graph, &excluded).map_err(|e| e.to_string())?;
        plan.check_validity(&graph)
            .map_err(|(a, b)| format!("case {case}: library check rejects {a} -> {b}"))?;

        let edges = oracle::edges(&db, true);
        let want_excluded = oracle::excluded(&edges, &base.keys().cloned().collect());
        let got_excluded: BTreeSet<String> = excluded.keys().cloned().collect();
        ensure!(want_excluded == got_excluded, "case {case}: excluded {got_excluded:?}, oracle {want_excluded:?}");
        if !got_excluded.is_empty() {
            with_exclusions += 1;
        }

        let mut layer: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, batch) in plan.batches.iter().enumerate() {
            ensure!(!batch.is_empty(), "case {case}: empty batch {}", i + 1);
            for name in batch {
                ensure!(layer.insert(name, i + 1).is_none(), "case {case}: {name} scheduled twice");
            }
        }
        for rec in &db {
            let scheduled = layer.get(rec.name.as_str());
            ensure!(
                scheduled.is_some() != want_excluded.contains(&rec.name),
                "case {case}: {} scheduled={:?}",
                rec.name,
                scheduled
            );
            let Some(&at) = scheduled else { continue };
            for dep in &edges.deps[&rec.name] {
                let dep_at = layer.get(dep.as_str()).copied();
                ensure!(dep_at.is_some_and(|d| d < at), "case {case}: {} (batch {at}) needs {dep} ({dep_at:?})", rec.name);
            }
            if n <= 12 {
                let depth = oracle::longest_path(&edges, &rec.name);
                ensure!(at == depth, "case {case}: {} in batch {at}, longest path {depth}", rec.name);
            }
        }
        if n <= 12 {
            small += 1;
        }
    }
    Ok(format!("500 DAGs, {with_exclusions} with exclusions, {small} checked against longest path"))
}

fn stats_match(label: &str, db: &[pkgbridge_core::metadata::PackageRecord]) -> Result<(), String> {
    let got = compilation_stats(db).map_err(|e| format!("{label}: {e}"))?;
    let (direct, indirect) = oracle::compilation(db);
    ensure!(got.total == db.len(), "{label}: total {}", got.total);
    ensure!(got.direct == direct, "{label}: direct {:?} vs {direct:?}", got.direct);
    ensure!(got.indirect_only == indirect, "{label}: indirect {:?} vs {indirect:?}", got.indirect_only);
    let either: BTreeSet<String> = direct.union(&indirect).cloned().collect();
    ensure!(got.either() == either, "{label}: either differs");
    ensure!(got.direct.is_disjoint(&got.indirect_only), "{label}: parts overlap");
    ensure!(got.either_count() == got.direct.len() + got.indirect_only.len(), "{label}: count identity");
    ensure!(
        got.direct_pct() + got.indirect_only_pct() == got.either_pct(),
        "{label}: {} + {} != {}",
        got.direct_pct(),
        got.indirect_only_pct(),
        got.either_pct()
    );
    ensure!(
        (got.either_pct() - 100.0 * either.len() as f64 / db.len().max(1) as f64).abs() < 1e-9,
        "{label}: either_pct {}",
        got.either_pct()
    );
    Ok(())
}

fn compilation_oracle() -> Check {
    let mut corpora = Vec::new();
    for entry in std::fs::read_dir(fixtures()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "PACKAGES") {
            corpora.push(path);
        }
    }
    corpora.sort();
    let mut summary = Vec::new();
    for path in &corpora {
        let label = path.file_name().unwrap().to_string_lossy().to_string();
        let db = parse_packages_index(&std::fs::read_to_string(path).unwrap()).map_err(|e| format!("{label}: {e}"))?;
        ensure!(db.len() <= 50, "{label} has {} packages", db.len());
        stats_match(&label, &db)?;
        let s = compilation_stats(&db).unwrap();
        summary.push(format!("{label} {}/{}/{}", s.direct.len(), s.indirect_only.len(), s.total));
    }
    let mut rng = StdRng::seed_from_u64(0x57a75);
    for case in 0..200 {
        let n = rng.gen_range(0..=50);
        let db = if case % 2 == 0 {
            gen::cyclic_db(&mut rng, n)
        } else {
            gen::dag_db(&mut rng, n)
        };
        stats_match(&format!("random corpus {case}"), &db)?;
    }
    let snapshot = match std::env::var_os("PKGBRIDGE_CRAN_SNAPSHOT") {
        None => "no snapshot given, sanity band skipped".to_string(),
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| format!("snapshot: {e}"))?;
            let db = parse_packages_index(&text).map_err(|e| format!("snapshot: {e}"))?;
            let s = compilation_stats(&db).map_err(|e| e.to_string())?;
            let (direct, either) = (s.direct_pct(), s.either_pct());
            ensure!(direct > 24.0, "snapshot direct_pct {direct:.1} not above 24");
            ensure!((75.0..=90.0).contains(&either), "snapshot either_pct {either:.1} outside [75, 90]");
            format!("snapshot {direct:.1}% direct, {either:.1}% either")
        }
    };
    Ok(format!("{}; 200 random corpora; {snapshot}", summary.join(", ")))
}

fn discover_heuristic() -> Check {
    let probes = pkgbridge_core::bridge::default_probes(&parse_packages_index(&fixture("demo.PACKAGES")).unwrap(), 5);
    let mut seen = Vec::new();
    for (file, prefix, transform) in [
        ("catalog-fedora.tsv", "R-CRAN-", NameTransform::Identity),
        ("catalog-debian.tsv", "r-cran-", NameTransform::Lowercase),
    ] {
        let pm: Arc<dyn Connector> = Arc::new(FakePm::new(Catalog::parse(&fixture(file)).unwrap()));
        let found = discover(pm.as_ref(), &probes).map_err(|e| format!("{file}: {e}"))?;
        ensure!(
            found.mapping.prefix == prefix && found.mapping.transform == transform,
            "{file}: got {:?}/{:?}",
            found.mapping.prefix,
            found.mapping.transform
        );
        // and over the service
        let bridge = Bridge::new(pm, Mapping::default()).with_probes(probes.clone());
        let (_dir, path, _handle) = serve(bridge);
        let d = Client::connect(&path).and_then(|mut c| c.discover()).map_err(|e| e.to_string())?;
        ensure!(d.prefix == prefix && d.transform == transform.as_str(), "{file} over socket: {d:?}");
        seen.push(format!("{prefix}/{}", transform.as_str()));
    }
    let empty: Arc<dyn Connector> = Arc::new(FakePm::new(Catalog::default()));
    ensure!(
        matches!(discover(empty.as_ref(), &probes), Err(BridgeError::NoMappingFound)),
        "empty catalog did not give NoMappingFound"
    );
    ensure!(matches!(discover_in(&[], &probes), Err(BridgeError::NoMappingFound)), "discover_in on nothing");
    seen.push("empty -> NoMappingFound".into());
    Ok(seen.join(", "))
}

fn outcome_of(result: Result<Executed, BridgeError>) -> Result<Outcome, String> {
    match result {
        Ok(Executed::Changed(out)) => Ok(out),
        Ok(Executed::Discovered(d)) => Ok(Outcome {
            packages: vec![d.prefix, d.transform],
            not_found: Vec::new(),
        }),
        Err(e) => Err(e.to_string()),
    }
}

fn over_socket(client: &mut Client, op: Op, args: &[String]) -> Result<Outcome, String> {
    let result = match op {
        Op::Discover => client.discover().map(|d| Outcome {
            packages: vec![d.prefix, d.transform],
            not_found: Vec::new(),
        }),
        Op::Install => client.install(args, &mut |_| {}),
        Op::Remove => client.remove(args, &mut |_| {}),
    };
    result.map_err(|e| match e {
        BridgeError::Remote(msg) => msg,
        other => format!("transport: {other}"),
    })
}

fn differential() -> Check {
    let mut rng = StdRng::seed_from_u64(0xd1ff);
    let mut requests = 0;
    let mut fallbacks = 0;
    for seq in 0..200 {
        let (catalog, r_names) = gen::catalog(&mut rng);
        let mapping = Mapping::new("R-CRAN-", NameTransform::Identity);
        let direct_pm = Arc::new(FakePm::new(catalog.clone()));
        let served_pm = Arc::new(FakePm::new(catalog));
        let mut direct = Bridge::new(direct_pm.clone(), mapping.clone());
        let (_dir, path, handle) = serve(Bridge::new(served_pm.clone(), mapping));
        let mut client = Client::connect(&path).map_err(|e| e.to_string())?;
        for step in 0..rng.gen_range(1..=12) {
            let op = match rng.gen_range(0..10) {
                0 => Op::Discover,
                1..=5 => Op::Install,
                _ => Op::Remove,
            };
            let args = if op == Op::Discover { Vec::new() } else { gen::request(&mut rng, &r_names) };
            let a = outcome_of(call_direct(&mut direct, op, &args));
            let b = over_socket(&mut client, op, &args);
            ensure!(a == b, "sequence {seq} step {step}: {op} {args:?}: direct {a:?}, socket {b:?}");
            if let Ok(out) = &a {
                fallbacks += out.not_found.len();
            }
            requests += 1;
            ensure!(
                direct_pm.installed_names() == served_pm.installed_names(),
                "sequence {seq} step {step}: installed sets diverge"
            );
        }
        ensure!(direct_pm.snapshot().installed == served_pm.snapshot().installed, "sequence {seq}: final state differs");
        handle.shutdown().map_err(|e| e.to_string())?;
    }
    Ok(format!("200 sequences, {requests} requests, {fallbacks} fallback names"))
}

fn concurrency() -> Check {
    let mut rng = StdRng::seed_from_u64(0xc0c0);
    let (catalog, r_names) = gen::catalog(&mut rng);
    let pm = Arc::new(FakePm::new(catalog.clone()).with_latency(Duration::from_millis(1)));
    let (_dir, path, handle) = serve(Bridge::new(pm.clone(), Mapping::new("R-CRAN-", NameTransform::Identity)));
    let workers: Vec<_> = (0..8u64)
        .map(|w| {
            let path = path.clone();
            let r_names = r_names.clone();
            thread::spawn(move || -> Result<usize, String> {
                let mut rng = StdRng::seed_from_u64(w);
                let mut client = Client::connect(&path).map_err(|e| e.to_string())?;
                for _ in 0..20 {
                    let args = gen::request(&mut rng, &r_names);
                    let op = if rng.gen_bool(0.6) { Op::Install } else { Op::Remove };
                    over_socket(&mut client, op, &args).map_err(|e| format!("client {w}: {e}"))?;
                }
                Ok(20)
            })
        })
        .collect();
    let mut served = 0;
    for w in workers {
        served += w.join().map_err(|_| "client panicked".to_string())??;
    }
    handle.shutdown().map_err(|e| e.to_string())?;
    let journal = pm.transaction_log().map_err(|e| e.to_string())?;
    ensure!(is_serial(&journal), "journal has overlapping transactions");
    ensure!(verify_chain(&journal), "journal hash chain broken");
    let replayed = FakePm::replay(catalog, &journal).map_err(|e| e.to_string())?;
    ensure!(replayed.snapshot().installed == pm.snapshot().installed, "replay disagrees with final state");
    Ok(format!("{served} requests from 8 clients, {} journal entries, replay matches", journal.len()))
}

fn recipe_golden() -> Check {
    let db = parse_packages_index(&fixture("tiny.PACKAGES")).unwrap();
    let units = db.iter().find(|r| r.name == "units").unwrap();
    let sysreqs = load_db(&fixture("sysreqs.tsv")).map_err(|e| e.to_string())?;
    let template = fixture("R-CRAN.spec.in");
    let render = || generate(units, &resolve(&sysreqs, units, "fedora"), &template, &RecipeConfig::default(), 1);
    let first = render().map_err(|e| e.to_string())?;
    let second = render().map_err(|e| e.to_string())?;
    ensure!(first.system_name == "R-CRAN-units", "system_name {}", first.system_name);
    ensure!(first.version == "0.6.7", "version {}", first.version);
    for need in ["R-CRAN-Rcpp", "udunits2"] {
        ensure!(first.requires.contains(need), "requires lacks {need}: {:?}", first.requires);
    }
    ensure!(first.install_prefix == "/usr/local/lib/R/library", "prefix {}", first.install_prefix);
    ensure!(first.body.contains("/usr/local/lib/R/library"), "body lacks install prefix");
    ensure!(first.license == "GPL-2" && first.body.contains("GPL-2"), "license not verbatim");

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let a = write_recipe(dirs[0].path(), &first).map_err(|e| e.to_string())?.0;
    let b = write_recipe(dirs[1].path(), &second).map_err(|e| e.to_string())?.0;
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    ensure!(a == b, "two runs differ");

    let golden = fixtures().join("golden").join(first.file_name());
    if std::env::var_os("PKGBRIDGE_BLESS").is_some() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, &a).unwrap();
    }
    let want = std::fs::read(&golden).map_err(|e| format!("golden {}: {e}", golden.display()))?;
    ensure!(want == a, "differs from golden {}", golden.display());
    Ok(format!("{} matches golden, {} bytes", first.file_name(), a.len()))
}

fn sync_idempotence() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5ec);
    let mut built = 0;
    let mut removed = 0;
    for case in 0..100 {
        let n = rng.gen_range(0..=30);
        let upstream = gen::dag_db(&mut rng, n);
        let repo = gen::repo_for(&mut rng, &upstream);
        let excluded = gen::exclusions(&mut rng, &upstream, 0.1);
        let opts = SyncOptions {
            rebuild_dependents: rng.gen_bool(0.5),
        };
        let plan = plan_sync(&upstream, &repo, &excluded, opts).map_err(|e| e.to_string())?;
        let edges = oracle::edges(&upstream, true);
        let all_excluded = oracle::excluded(&edges, &excluded.keys().cloned().collect());
        let batch: BTreeMap<&str, usize> = plan.builds.iter().map(|b| (b.name.as_str(), b.batch)).collect();
        for item in &plan.builds {
            ensure!(!all_excluded.contains(&item.name), "case {case}: builds excluded {}", item.name);
            ensure!(item.release >= 1, "case {case}: release 0");
            for dep in &edges.deps[&item.name] {
                if let Some(&d) = batch.get(dep.as_str()) {
                    ensure!(d < item.batch, "case {case}: {} built before its dep {dep}", item.name);
                }
            }
        }
        built += plan.builds.len();
        removed += plan.removals.len();
        let next = plan.apply(&repo);
        let again = plan_sync(&upstream, &next, &excluded, opts).map_err(|e| e.to_string())?;
        ensure!(again.is_empty(), "case {case}: second plan not empty:\n{}", again.render());
    }
    Ok(format!("100 snapshot pairs, {built} builds and {removed} removals, all converge in one step"))
}

fn random_word(rng: &mut StdRng) -> String {
    const CHARS: &[u8] = b"abcXYZ019.-()>=,:+_/";
    (0..rng.gen_range(1..8))
        .map(|_| *CHARS.choose(rng).unwrap() as char)
        .collect()
}

fn random_key(rng: &mut StdRng) -> String {
    let mut k: String = (b'A'..=b'Z').map(char::from).collect::<Vec<_>>().choose(rng).unwrap().to_string();
    for _ in 0..rng.gen_range(0..6) {
        k.push(*b"abcdefgh01@-.".choose(rng).unwrap() as char);
    }
    k
}

fn random_stanzas(rng: &mut StdRng) -> Vec<Stanza> {
    (0..rng.gen_range(0..4))
        .map(|_| {
            let mut s = Stanza::new();
            for _ in 0..rng.gen_range(1..6) {
                let words: Vec<String> = (0..rng.gen_range(0..5)).map(|_| random_word(rng)).collect();
                s.insert(random_key(rng), words.join(" "));
            }
            s
        })
        .collect()
}

/// Free-form DCF text with continuation lines, stray indentation and
/// extra blank lines.
fn random_dcf_text(rng: &mut StdRng) -> String {
    let mut out = String::new();
    for _ in 0..rng.gen_range(0..4) {
        let mut keys = BTreeSet::new();
        for _ in 0..rng.gen_range(1..5) {
            let key = random_key(rng);
            if !keys.insert(key.clone()) {
                continue;
            }
            let pad = if rng.gen_bool(0.2) { "   " } else { " " };
            out.push_str(&format!("{key}:{pad}{}\n", random_word(rng)));
            for _ in 0..rng.gen_range(0..3) {
                let indent = if rng.gen_bool(0.5) { "\t" } else { "        " };
                out.push_str(&format!("{indent}{}  {}\n", random_word(rng), random_word(rng)));
            }
        }
        out.push_str(if rng.gen_bool(0.3) { "\n  \n" } else { "\n" });
    }
    out
}

fn random_sysreqs(rng: &mut StdRng) -> SysreqsDb {
    const DISTROS: &[&str] = &["*", "fedora", "debian", "ubuntu-22.04", "opensuse"];
    let set = |rng: &mut StdRng| -> BTreeSet<String> {
        (0..rng.gen_range(0..4)).map(|_| format!("lib{}-devel", rng.gen_range(0..8))).collect()
    };
    let mut db = SysreqsDb {
        version: rng.gen_range(0..1000),
        ..SysreqsDb::default()
    };
    for i in 0..rng.gen_range(0..8) {
        let name = format!("rpkg{i}.x");
        let entry = if rng.gen_bool(0.2) {
            SysreqsEntry::excluded(&name, &format!("needs {} at build", random_word(rng)))
        } else {
            let mut e = SysreqsEntry::new(&name);
            for _ in 0..rng.gen_range(1..4) {
                let target = TargetReqs {
                    build: set(rng),
                    run: set(rng),
                };
                e.targets.insert(DISTROS.choose(rng).unwrap().to_string(), target);
            }
            e
        };
        db.entries.insert(name, entry);
    }
    db
}

/// The same database written the untidy way: one line per phase, shuffled.
fn scatter(rng: &mut StdRng, canonical: &str) -> String {
    let mut lines: Vec<String> = Vec::new();
    for line in canonical.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() == 4 {
            lines.push(format!("{}\t{}\t{}", cols[0], cols[1], cols[2]));
            lines.push(format!("{}\t{}\t{}", cols[0], cols[1], cols[3]));
        } else {
            lines.push(line.to_string());
        }
    }
    lines.shuffle(rng);
    let header = canonical.lines().next().unwrap();
    format!("# comment\n{header}\n\n{}\n", lines.join("\n"))
}

fn random_version(rng: &mut StdRng) -> String {
    let mut s = rng.gen_range(0..3u32).to_string();
    for _ in 0..rng.gen_range(0..4) {
        s.push(if rng.gen_bool(0.5) { '.' } else { '-' });
        s.push_str(&rng.gen_range(0..3u32).to_string());
    }
    s
}

fn hash_of(v: &VersionString) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

fn round_trips() -> Check {
    let mut rng = StdRng::seed_from_u64(0x7219);
    const CASES: usize = 1000;
    for case in 0..CASES {
        let stanzas = random_stanzas(&mut rng);
        let text = render_dcf(&stanzas);
        let parsed = parse_dcf(&text).map_err(|e| format!("dcf case {case}: {e}\n{text}"))?;
        ensure!(parsed == stanzas, "dcf case {case}: parse(render) differs\n{text}");

        let messy = random_dcf_text(&mut rng);
        let once = parse_dcf(&messy).map_err(|e| format!("dcf text case {case}: {e}\n{messy}"))?;
        let twice = parse_dcf(&render_dcf(&once)).map_err(|e| e.to_string())?;
        ensure!(once == twice, "dcf text case {case}: render is not stable\n{messy}");
    }
    for case in 0..CASES {
        let db = random_sysreqs(&mut rng);
        let saved = save_db(&db);
        let loaded = load_db(&saved).map_err(|e| format!("sysreqs case {case}: {e}\n{saved}"))?;
        ensure!(loaded == db, "sysreqs case {case}: load(save) differs\n{saved}");
        ensure!(save_db(&loaded) == saved, "sysreqs case {case}: save not canonical");
        let untidy = scatter(&mut rng, &saved);
        let merged = load_db(&untidy).map_err(|e| format!("sysreqs case {case}: {e}\n{untidy}"))?;
        ensure!(save_db(&merged) == saved, "sysreqs case {case}: scattered lines do not merge back\n{untidy}");
    }
    for case in 0..CASES {
        let raw: Vec<String> = (0..3).map(|_| random_version(&mut rng)).collect();
        let v: Vec<VersionString> = raw.iter().map(|r| VersionString::parse(r).unwrap()).collect();
        for i in 0..3 {
            ensure!(compare_versions(&v[i], &v[i]).is_eq(), "version case {case}: {} not reflexive", raw[i]);
            ensure!(
                VersionString::parse(&v[i].dotted()).unwrap() == v[i],
                "version case {case}: dotted {} != {}",
                v[i].dotted(),
                raw[i]
            );
            for j in 0..3 {
                let ord = compare_versions(&v[i], &v[j]);
                ensure!(ord == compare_versions(&v[j], &v[i]).reverse(), "version case {case}: antisymmetry {} {}", raw[i], raw[j]);
                ensure!(ord == oracle::compare_versions(&raw[i], &raw[j]), "version case {case}: {} vs {} is {ord:?}", raw[i], raw[j]);
                if ord.is_eq() {
                    ensure!(hash_of(&v[i]) == hash_of(&v[j]), "version case {case}: equal but hash differs");
                }
                for k in 0..3 {
                    if v[i] <= v[j] && v[j] <= v[k] {
                        ensure!(v[i] <= v[k], "version case {case}: transitivity {} {} {}", raw[i], raw[j], raw[k]);
                    }
                }
            }
        }
    }
    Ok(format!("{CASES} cases each: DCF (two directions), sysreqs load/save, version order"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("demo replay over the service", Some(Duration::from_secs(1)), demo_replay),
        ("batch plan validity on random DAGs", Some(Duration::from_secs(10)), batch_validity),
        ("compilation statistics against closure oracle", None, compilation_oracle),
        ("discover naming conventions", Some(Duration::from_secs(1)), discover_heuristic),
        ("direct and service paths agree", Some(Duration::from_secs(30)), differential),
        ("serialized journal under concurrent clients", None, concurrency),
        ("units recipe golden file", None, recipe_golden),
        ("sync plan idempotence", None, sync_idempotence),
        ("randomized round-trips", None, round_trips),
    ];
    let mut failed = 0;
    for (i, (title, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(limit)) if took > *limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {} {title} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {title} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
