use crate::output::{exclusions_json, print_json, Format};
use crate::{BatchesArgs, RecipeArgs, ScrapeArgs, SyncArgs};
use anyhow::{bail, Context, Result};
use pkgbridge_core::depgraph::{
    batch_plan_with, build_graph, compilation_stats, propagate_exclusions, CyclePolicy, Exclusions, BUILD_FIELDS,
};
use pkgbridge_core::metadata::{parse_packages_index, PackageRecord};
use pkgbridge_core::recipegen::{generate, write_recipe, NameTransform, Recipe, RecipeConfig, DEFAULT_TEMPLATE};
use pkgbridge_core::syncer::{plan_mass_rebuild, plan_sync, RepoState, SyncOptions};
use pkgbridge_core::sysreqs::{load_db, resolve, save_db, scrape, Lexicon, SysreqsDb, TargetReqs};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::thread;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_packages(path: &Path) -> Result<Vec<PackageRecord>> {
    parse_packages_index(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_sysreqs(path: Option<&Path>) -> Result<SysreqsDb> {
    match path {
        None => Ok(SysreqsDb::default()),
        Some(p) => load_db(&read(p)?).with_context(|| format!("in {}", p.display())),
    }
}

fn excluded_set(db: &[PackageRecord], sysreqs: &SysreqsDb) -> Result<Exclusions> {
    let graph = build_graph(db, BUILD_FIELDS)?;
    Ok(propagate_exclusions(&graph, &sysreqs.exclusions()))
}

pub fn stats(packages: &Path, format: Format) -> Result<()> {
    let s = compilation_stats(&load_packages(packages)?)?;
    match format {
        Format::Tsv => {
            println!("metric\tcount\tpercent");
            println!("direct\t{}\t{:.2}", s.direct.len(), s.direct_pct());
            println!("indirect_only\t{}\t{:.2}", s.indirect_only.len(), s.indirect_only_pct());
            println!("either\t{}\t{:.2}", s.either_count(), s.either_pct());
            println!("total\t{}\t{:.2}", s.total, if s.total == 0 { 0.0 } else { 100.0 });
        }
        Format::Json => print_json(&json!({
            "total": s.total,
            "direct": s.direct,
            "indirect_only": s.indirect_only,
            "direct_pct": s.direct_pct(),
            "indirect_only_pct": s.indirect_only_pct(),
            "either_pct": s.either_pct(),
        })),
    }
    Ok(())
}

pub fn batches(args: &BatchesArgs, format: Format) -> Result<()> {
    let db = load_packages(&args.packages)?;
    let sysreqs = load_sysreqs(args.sysreqs.as_deref())?;
    let graph = build_graph(&db, BUILD_FIELDS)?;
    let excluded = propagate_exclusions(&graph, &sysreqs.exclusions());
    let policy = if args.reject_cycles {
        CyclePolicy::Reject
    } else {
        CyclePolicy::Collapse
    };
    let plan = batch_plan_with(&graph, &excluded, policy)?;
    match format {
        Format::Tsv => print!("{}", plan.render()),
        Format::Json => print_json(&json!({
            "batches": plan.batches,
            "excluded": exclusions_json(&plan.excluded),
        })),
    }
    Ok(())
}

fn recipe_json(r: &Recipe) -> Value {
    json!({
        "system_name": r.system_name,
        "upstream_name": r.upstream_name,
        "version": r.version,
        "release": r.release,
        "license": r.license,
        "build_requires": r.build_requires,
        "requires": r.requires,
        "source_url": r.source_url,
        "install_prefix": r.install_prefix,
        "body": r.body,
    })
}

pub fn recipe(args: &RecipeArgs, format: Format) -> Result<()> {
    let db = load_packages(&args.packages)?;
    let sysreqs = load_sysreqs(args.sysreqs.as_deref())?;
    let template = match &args.template {
        Some(p) => read(p)?,
        None => DEFAULT_TEMPLATE.to_string(),
    };
    let config = RecipeConfig {
        name_prefix: args.naming.prefix.clone(),
        transform: if args.naming.lowercase {
            NameTransform::Lowercase
        } else {
            NameTransform::Identity
        },
        ..RecipeConfig::default()
    };
    let excluded = excluded_set(&db, &sysreqs)?;
    let by_name: BTreeMap<&str, &PackageRecord> = db.iter().map(|r| (r.name.as_str(), r)).collect();

    let mut selected: Vec<&PackageRecord> = Vec::new();
    if args.all {
        for rec in &db {
            match excluded.get(&rec.name) {
                Some(reason) => eprintln!("skipping {}: {} ({})", rec.name, reason.kind, reason.detail),
                None => selected.push(rec),
            }
        }
    } else {
        for name in &args.names {
            let rec = by_name
                .get(name.as_str())
                .with_context(|| format!("{name} is not in {}", args.packages.display()))?;
            if let Some(reason) = excluded.get(name) {
                bail!("{name} is excluded: {} ({})", reason.kind, reason.detail);
            }
            selected.push(rec);
        }
    }

    let render = |rec: &PackageRecord| {
        generate(rec, &resolve(&sysreqs, rec, &args.distro), &template, &config, args.release)
    };
    let jobs = (args.jobs as usize).clamp(1, selected.len().max(1));
    let chunk = selected.len().div_ceil(jobs).max(1);
    let results: Vec<_> = thread::scope(|s| {
        let workers: Vec<_> = selected
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|r| (r.name.clone(), render(r))).collect::<Vec<_>>()))
            .collect();
        workers.into_iter().flat_map(|w| w.join().expect("render thread")).collect()
    });

    let mut failed = 0;
    let mut rendered = Vec::new();
    for (name, result) in results {
        match result {
            Ok(recipe) => rendered.push(recipe),
            Err(e) => {
                failed += 1;
                eprintln!("{name}: {e}");
            }
        }
    }
    match (&args.out_dir, format) {
        (Some(dir), _) => {
            for r in &rendered {
                let (path, written) = write_recipe(dir, r)?;
                println!("{}\t{}", if written { "written" } else { "unchanged" }, path.display());
            }
        }
        (None, Format::Tsv) => {
            for r in &rendered {
                print!("{}", r.body);
            }
        }
        (None, Format::Json) => print_json(&Value::Array(rendered.iter().map(recipe_json).collect())),
    }
    if failed > 0 {
        bail!("{failed} recipe(s) could not be rendered");
    }
    Ok(())
}

pub fn sync_plan(args: &SyncArgs, format: Format) -> Result<()> {
    let upstream = load_packages(&args.packages)?;
    let repo = RepoState::parse(&read(&args.repo)?).with_context(|| format!("in {}", args.repo.display()))?;
    let base = load_sysreqs(args.sysreqs.as_deref())?.exclusions();

    if args.mass_rebuild {
        let mass = plan_mass_rebuild(&upstream, &repo, &base)?;
        match format {
            Format::Tsv => print!("{}", mass.render()),
            Format::Json => print_json(&json!({
                "batches": mass.plan.batches,
                "releases": mass.releases,
                "excluded": exclusions_json(&mass.plan.excluded),
            })),
        }
        return Ok(());
    }

    let opts = SyncOptions {
        rebuild_dependents: args.rebuild_dependents,
    };
    let plan = plan_sync(&upstream, &repo, &base, opts)?;
    match format {
        Format::Tsv => print!("{}", plan.render()),
        Format::Json => print_json(&json!({
            "remove": plan.removals,
            "build": plan.builds.iter().map(|b| json!({
                "name": b.name,
                "batch": b.batch,
                "reason": b.reason.to_string(),
                "version": b.version.raw(),
                "release": b.release,
            })).collect::<Vec<_>>(),
            "unchanged": plan.unchanged,
        })),
    }
    eprintln!(
        "{} to remove, {} to build, {} unchanged",
        plan.removals.len(),
        plan.builds.len(),
        plan.unchanged
    );
    Ok(())
}

fn targets_json(targets: &BTreeMap<String, TargetReqs>) -> Value {
    targets
        .iter()
        .map(|(d, t)| (d.clone(), json!({"build": t.build, "run": t.run})))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

pub fn scrape_sysreqs(args: &ScrapeArgs, format: Format) -> Result<()> {
    let db = load_packages(&args.packages)?;
    let lexicon = Lexicon::parse(&read(&args.lexicon)?).with_context(|| format!("in {}", args.lexicon.display()))?;
    let mut out = load_sysreqs(args.sysreqs.as_deref())?;
    let mut report = Vec::new();

    for rec in &db {
        let Some(raw) = &rec.system_requirements else { continue };
        if out.entries.contains_key(&rec.name) {
            continue;
        }
        let result = scrape(raw, &lexicon);
        for token in &result.unmatched_tokens {
            eprintln!("unmatched\t{}\t{token}", rec.name);
        }
        let entry = result.to_entry(&rec.name);
        report.push(json!({
            "package": rec.name,
            "targets": targets_json(&entry.targets),
            "matched": result.matched_tokens.iter().map(|(t, p)| json!({"token": t, "pattern": p})).collect::<Vec<_>>(),
            "unmatched": result.unmatched_tokens,
        }));
        if entry.targets.is_empty() {
            eprintln!("needs curation\t{}", rec.name);
        } else {
            out = out.with_entry(entry);
        }
    }
    match format {
        Format::Tsv => print!("{}", save_db(&out)),
        Format::Json => print_json(&Value::Array(report)),
    }
    Ok(())
}
