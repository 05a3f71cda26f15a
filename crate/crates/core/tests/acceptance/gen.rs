//! Seeded random inputs.

use pkgbridge_core::depgraph::{ExclusionKind, ExclusionReason, Exclusions};
use pkgbridge_core::fakepm::{Catalog, CatalogEntry};
use pkgbridge_core::metadata::{DepSpec, PackageRecord};
use pkgbridge_core::syncer::{RepoEntry, RepoState};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};

pub fn version(rng: &mut StdRng) -> String {
    let parts = rng.gen_range(1..=4);
    let mut out = String::new();
    for i in 0..parts {
        if i > 0 {
            out.push(if rng.gen_bool(0.3) { '-' } else { '.' });
        }
        out.push_str(&rng.gen_range(0..12u32).to_string());
    }
    out
}

fn push_dep(rng: &mut StdRng, rec: &mut PackageRecord, dep: &str) {
    let spec = DepSpec::parse(dep).unwrap();
    match rng.gen_range(0..3) {
        0 => rec.depends.push(spec),
        1 => rec.imports.push(spec),
        _ => rec.linking_to.push(spec),
    }
}

/// A random acyclic database of `n` packages with shuffled names. Edges
/// only point from later to earlier positions in a hidden order. Some
/// records also depend on R, on base packages, or on names absent from the
/// database.
pub fn dag_db(rng: &mut StdRng, n: usize) -> Vec<PackageRecord> {
    let mut names: Vec<String> = (0..n).map(|i| format!("pkg{i}")).collect();
    names.shuffle(rng);
    let density = rng.gen_range(0.05..0.35);
    let mut db = Vec::with_capacity(n);
    for i in 0..n {
        let mut rec = PackageRecord::new(&names[i], &version(rng)).unwrap();
        rec.needs_compilation = rng.gen_bool(0.3);
        for name in names.iter().take(i) {
            if rng.gen_bool(density) {
                push_dep(rng, &mut rec, name);
            }
        }
        if rng.gen_bool(0.3) {
            rec.depends.push(DepSpec::parse("R (>= 3.5.0)").unwrap());
        }
        if rng.gen_bool(0.2) {
            rec.imports.push(DepSpec::parse("methods").unwrap());
        }
        if rng.gen_bool(0.04) {
            let absent = format!("absent{}", rng.gen_range(0..3));
            push_dep(rng, &mut rec, &absent);
        }
        db.push(rec);
    }
    db.shuffle(rng);
    db
}

/// Like [`dag_db`] but edges may point anywhere, so cycles are common.
/// Only Depends and Imports are used.
pub fn cyclic_db(rng: &mut StdRng, n: usize) -> Vec<PackageRecord> {
    let density = rng.gen_range(0.02..0.2);
    (0..n)
        .map(|i| {
            let mut rec = PackageRecord::new(&format!("q{i}"), "1.0").unwrap();
            rec.needs_compilation = rng.gen_bool(0.25);
            for j in (0..n).filter(|&j| j != i) {
                if rng.gen_bool(density) {
                    let spec = DepSpec::parse(&format!("q{j}")).unwrap();
                    if rng.gen_bool(0.5) {
                        rec.depends.push(spec);
                    } else {
                        rec.imports.push(spec);
                    }
                }
            }
            // ignored by the statistics
            if n > 1 && rng.gen_bool(0.2) {
                rec.suggests.push(DepSpec::parse(&format!("q{}", (i + 1) % n)).unwrap());
            }
            rec
        })
        .collect()
}

pub fn exclusions(rng: &mut StdRng, db: &[PackageRecord], p: f64) -> Exclusions {
    db.iter()
        .filter(|_| rng.gen_bool(p))
        .map(|r| {
            (
                r.name.clone(),
                ExclusionReason::new(ExclusionKind::UnsupportedSysreq, "random"),
            )
        })
        .collect()
}

/// A repository that overlaps `db`: some packages at the same, older or
/// newer versions, some missing, plus a few stale names.
pub fn repo_for(rng: &mut StdRng, db: &[PackageRecord]) -> RepoState {
    let mut packages = BTreeMap::new();
    for rec in db {
        if rng.gen_bool(0.3) {
            continue;
        }
        let version = match rng.gen_range(0..3) {
            0 => rec.version.raw().to_string(),
            1 => rec.version.dotted(),
            _ => version(rng),
        };
        packages.insert(
            rec.name.clone(),
            RepoEntry {
                version: version.parse().unwrap(),
                release: rng.gen_range(1..5),
            },
        );
    }
    for i in 0..rng.gen_range(0..3) {
        packages.insert(
            format!("gone{i}"),
            RepoEntry {
                version: "1.0".parse().unwrap(),
                release: 1,
            },
        );
    }
    RepoState { packages }
}

/// A closed catalog using the `R-CRAN-` identity convention. Returns the
/// catalog and the upstream names it covers.
pub fn catalog(rng: &mut StdRng) -> (Catalog, Vec<String>) {
    let n_r = rng.gen_range(2..10);
    let n_sys = rng.gen_range(0..4);
    let r_names: Vec<String> = (0..n_r).map(|i| format!("Pk{i}")).collect();
    let mut order: Vec<String> = (0..n_sys)
        .map(|i| format!("libsys{i}"))
        .chain(r_names.iter().map(|n| format!("R-CRAN-{n}")))
        .collect();
    order.shuffle(rng);
    let mut available = BTreeMap::new();
    for (i, name) in order.iter().enumerate() {
        let depends: BTreeSet<String> = order[..i]
            .iter()
            .filter(|_| rng.gen_bool(0.3))
            .cloned()
            .collect();
        available.insert(
            name.clone(),
            CatalogEntry {
                version: format!("{}-1", version(rng)),
                depends,
            },
        );
    }
    (Catalog::new(available).unwrap(), r_names)
}

/// Request names drawn from `known`, with occasional unknown ones.
pub fn request(rng: &mut StdRng, known: &[String]) -> Vec<String> {
    (0..rng.gen_range(1..=4))
        .map(|_| {
            if rng.gen_bool(0.15) {
                format!("nosuch{}", rng.gen_range(0..3))
            } else {
                known.choose(rng).unwrap().clone()
            }
        })
        .collect()
}
