//! Build recipe (RPM SPEC style) rendering from a template, a package record
//! and its resolved system requirements.

use crate::depgraph::{default_ignore, hard_dep_names, ExclusionReason, BUILD_FIELDS, RUNTIME_FIELDS};
use crate::metadata::PackageRecord;
use crate::sysreqs::Resolution;
use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_INSTALL_PREFIX: &str = "/usr/local/lib/R/library";
pub const DEFAULT_SOURCE_URL: &str = "https://cran.r-project.org/src/contrib/{name}_{version}.tar.gz";

/// Template shipped with the crate.
pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/R-CRAN.spec.in");

/// Placeholders a template may use.
pub const PLACEHOLDERS: &[&str] = &[
    "name",
    "upstream",
    "version",
    "release",
    "license",
    "buildrequires",
    "requires",
    "source",
    "prefix",
];

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("unresolved template placeholder {{{{{0}}}}}")]
    UnresolvedPlaceholder(String),
    #[error("package {name} is excluded: {}", .reason.detail)]
    ExcludedPackage { name: String, reason: ExclusionReason },
    #[error("package {0} declares SystemRequirements with no curated entry")]
    NeedsCuration(String),
    #[error("release must be positive")]
    ZeroRelease,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NameTransform {
    #[default]
    Identity,
    Lowercase,
}

impl NameTransform {
    pub fn apply(self, name: &str) -> String {
        match self {
            NameTransform::Identity => name.to_string(),
            NameTransform::Lowercase => name.to_lowercase(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NameTransform::Identity => "identity",
            NameTransform::Lowercase => "lowercase",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(NameTransform::Identity),
            "lowercase" => Some(NameTransform::Lowercase),
            _ => None,
        }
    }
}

pub fn system_name(r_name: &str, prefix: &str, transform: NameTransform) -> String {
    format!("{prefix}{}", transform.apply(r_name))
}

/// Knobs that stay the same across every package of a repository.
#[derive(Debug, Clone)]
pub struct RecipeConfig {
    pub name_prefix: String,
    pub transform: NameTransform,
    pub install_prefix: String,
    pub source_url_template: String,
    /// Added to every BuildRequires list.
    pub build_runtime: String,
    /// Added to every Requires list.
    pub run_runtime: String,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        RecipeConfig {
            name_prefix: "R-CRAN-".to_string(),
            transform: NameTransform::Identity,
            install_prefix: DEFAULT_INSTALL_PREFIX.to_string(),
            source_url_template: DEFAULT_SOURCE_URL.to_string(),
            build_runtime: "R-devel".to_string(),
            run_runtime: "R-core".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recipe {
    pub system_name: String,
    pub upstream_name: String,
    /// Upstream version with `-` rendered as `.`.
    pub version: String,
    pub release: u32,
    pub license: String,
    pub build_requires: BTreeSet<String>,
    pub requires: BTreeSet<String>,
    pub source_url: String,
    pub install_prefix: String,
    pub body: String,
}

impl Recipe {
    pub fn file_name(&self) -> String {
        format!("{}.spec", self.system_name)
    }
}

fn tagged_lines(tag: &str, names: &BTreeSet<String>) -> String {
    names
        .iter()
        .map(|n| format!("{tag} {n}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Substitutes `{{key}}` placeholders. Unknown keys are an error; a `{{`
/// without a closing `}}` is copied through.
pub fn render_template(template: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, RecipeError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else {
            break;
        };
        out.push_str(&rest[..start]);
        let key = rest[start + 2..start + 2 + len].trim();
        let value = lookup(key).ok_or_else(|| RecipeError::UnresolvedPlaceholder(key.to_string()))?;
        out.push_str(&value);
        rest = &rest[start + 2 + len + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn generate(
    record: &PackageRecord,
    sysreqs: &Resolution,
    template: &str,
    config: &RecipeConfig,
    release: u32,
) -> Result<Recipe, RecipeError> {
    let reqs = match sysreqs {
        Resolution::Resolved(reqs) => reqs,
        Resolution::Excluded(reason) => {
            return Err(RecipeError::ExcludedPackage {
                name: record.name.clone(),
                reason: reason.clone(),
            })
        }
        Resolution::NeedsCuration => return Err(RecipeError::NeedsCuration(record.name.clone())),
    };
    if release == 0 {
        return Err(RecipeError::ZeroRelease);
    }

    let ignore = default_ignore();
    let sys = |n: &str| system_name(n, &config.name_prefix, config.transform);
    let mut build_requires: BTreeSet<String> = hard_dep_names(record, BUILD_FIELDS, &ignore)
        .into_iter()
        .map(sys)
        .collect();
    build_requires.extend(reqs.build.iter().cloned());
    build_requires.insert(config.build_runtime.clone());

    let mut requires: BTreeSet<String> = hard_dep_names(record, RUNTIME_FIELDS, &ignore)
        .into_iter()
        .map(sys)
        .collect();
    requires.extend(reqs.run.iter().cloned());
    requires.insert(config.run_runtime.clone());

    let system_name = sys(&record.name);
    let version = record.version.dotted();
    let source_url = config
        .source_url_template
        .replace("{name}", &record.name)
        .replace("{version}", record.version.raw());

    let body = render_template(template, |key| {
        Some(match key {
            "name" => system_name.clone(),
            "upstream" => record.name.clone(),
            "version" => version.clone(),
            "release" => release.to_string(),
            "license" => record.license.clone(),
            "buildrequires" => tagged_lines("BuildRequires:", &build_requires),
            "requires" => tagged_lines("Requires:", &requires),
            "source" => source_url.clone(),
            "prefix" => config.install_prefix.clone(),
            _ => return None,
        })
    })?;

    Ok(Recipe {
        system_name,
        upstream_name: record.name.clone(),
        version,
        release,
        license: record.license.clone(),
        build_requires,
        requires,
        source_url,
        install_prefix: config.install_prefix.clone(),
        body,
    })
}

/// Writes `<system_name>.spec` into `dir`, leaving the file alone when its
/// content is already identical. Returns the path and whether it was written.
pub fn write_recipe(dir: &Path, recipe: &Recipe) -> Result<(PathBuf, bool), RecipeError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(recipe.file_name());
    if fs::read_to_string(&path).is_ok_and(|old| old == recipe.body) {
        return Ok((path, false));
    }
    fs::write(&path, &recipe.body)?;
    Ok((path, true))
}
