//! Curated map from R packages to the system packages they need at build
//! and run time, plus a scraper that bootstraps entries from the free-text
//! SystemRequirements field.
//!
//! Database lines are tab separated:
//!
//! ```text
//! #version<TAB>3
//! units<TAB>fedora<TAB>build:udunits2-devel<TAB>run:udunits2
//! gifski<TAB>*<TAB>EXCLUDED:needs network at build
//! ```

use crate::depgraph::{ExclusionKind, ExclusionReason};
use crate::metadata::PackageRecord;
use regex::Regex;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use thiserror::Error;

/// Distro id that applies to every target.
pub const ANY_DISTRO: &str = "*";

/// Compilers and build tools assumed in every build root.
pub const TOOLCHAIN: &[&str] = &[
    "make",
    "gcc",
    "gcc-c++",
    "gcc-gfortran",
    "g++",
    "gfortran",
    "clang",
    "build-essential",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SysreqsError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("lexicon pattern {0:?} is invalid")]
    BadPattern(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Build,
    Run,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TargetReqs {
    pub build: BTreeSet<String>,
    pub run: BTreeSet<String>,
}

impl TargetReqs {
    pub fn phase(&self, phase: Phase) -> &BTreeSet<String> {
        match phase {
            Phase::Build => &self.build,
            Phase::Run => &self.run,
        }
    }

    fn merge(&mut self, other: &TargetReqs) {
        self.build.extend(other.build.iter().cloned());
        self.run.extend(other.run.iter().cloned());
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SysreqsEntry {
    pub r_package: String,
    pub targets: BTreeMap<String, TargetReqs>,
    pub excluded: Option<ExclusionReason>,
}

impl SysreqsEntry {
    pub fn new(r_package: &str) -> Self {
        SysreqsEntry {
            r_package: r_package.to_string(),
            targets: BTreeMap::new(),
            excluded: None,
        }
    }

    pub fn excluded(r_package: &str, detail: &str) -> Self {
        SysreqsEntry {
            r_package: r_package.to_string(),
            targets: BTreeMap::new(),
            excluded: Some(ExclusionReason::new(ExclusionKind::UnsupportedSysreq, detail)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SysreqsDb {
    pub entries: BTreeMap<String, SysreqsEntry>,
    pub version: u64,
}

impl SysreqsDb {
    /// Returns a copy with `entry` inserted (replacing any previous one) and
    /// the version bumped.
    pub fn with_entry(&self, entry: SysreqsEntry) -> SysreqsDb {
        let mut next = self.clone();
        next.entries.insert(entry.r_package.clone(), entry);
        next.version += 1;
        next
    }

    /// Exclusion reasons for every excluded entry.
    pub fn exclusions(&self) -> BTreeMap<String, ExclusionReason> {
        self.entries
            .values()
            .filter_map(|e| e.excluded.clone().map(|r| (e.r_package.clone(), r)))
            .collect()
    }
}

fn split_list(list: &str) -> BTreeSet<String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses the tagged columns after the key and distro columns.
fn parse_tags(line: usize, cols: &[&str]) -> Result<Result<TargetReqs, String>, SysreqsError> {
    let malformed = |reason: String| SysreqsError::MalformedLine { line, reason };
    if cols.is_empty() {
        return Err(malformed("expected build:, run: or EXCLUDED: column".into()));
    }
    if let Some(detail) = cols[0].strip_prefix("EXCLUDED:") {
        if cols.len() > 1 {
            return Err(malformed("EXCLUDED: must be the only tagged column".into()));
        }
        return Ok(Err(detail.trim().to_string()));
    }
    let mut reqs = TargetReqs::default();
    for col in cols {
        if let Some(list) = col.strip_prefix("build:") {
            reqs.build.extend(split_list(list));
        } else if let Some(list) = col.strip_prefix("run:") {
            reqs.run.extend(split_list(list));
        } else if col.starts_with("EXCLUDED:") {
            return Err(malformed("EXCLUDED: cannot be combined with build:/run:".into()));
        } else {
            return Err(malformed(format!("unknown column {col:?}")));
        }
    }
    Ok(Ok(reqs))
}

/// Parses the database. Lines for the same (package, distro) are merged.
pub fn load_db(text: &str) -> Result<SysreqsDb, SysreqsError> {
    let mut db = SysreqsDb::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let malformed = |reason: &str| SysreqsError::MalformedLine {
            line,
            reason: reason.to_string(),
        };
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(comment) = raw.strip_prefix('#') {
            if let Some(v) = comment.strip_prefix("version\t") {
                db.version = v.trim().parse().map_err(|_| malformed("bad version"))?;
            }
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() < 3 {
            return Err(malformed("expected at least 3 tab-separated columns"));
        }
        let (pkg, distro) = (cols[0].trim(), cols[1].trim());
        if pkg.is_empty() || distro.is_empty() {
            return Err(malformed("empty package or distro column"));
        }
        let entry = db
            .entries
            .entry(pkg.to_string())
            .or_insert_with(|| SysreqsEntry::new(pkg));
        match parse_tags(line, &cols[2..])? {
            Ok(reqs) => {
                if entry.excluded.is_some() {
                    return Err(malformed("package is already excluded"));
                }
                entry.targets.entry(distro.to_string()).or_default().merge(&reqs);
            }
            Err(detail) => {
                if !entry.targets.is_empty() {
                    return Err(malformed("excluded package also has requirements"));
                }
                entry.excluded = Some(ExclusionReason::new(ExclusionKind::UnsupportedSysreq, detail));
            }
        }
    }
    Ok(db)
}

fn join(set: &BTreeSet<String>) -> String {
    set.iter().map(String::as_str).collect::<Vec<_>>().join(",")
}

/// Renders the database in canonical form: sorted, merged, both phase tags
/// always present, exclusions under `*`.
pub fn save_db(db: &SysreqsDb) -> String {
    let mut out = format!("#version\t{}\n", db.version);
    for entry in db.entries.values() {
        if let Some(reason) = &entry.excluded {
            let detail = reason.detail.replace(['\t', '\n', '\r'], " ");
            out.push_str(&format!("{}\t{ANY_DISTRO}\tEXCLUDED:{}\n", entry.r_package, detail));
            continue;
        }
        for (distro, reqs) in &entry.targets {
            out.push_str(&format!(
                "{}\t{}\tbuild:{}\trun:{}\n",
                entry.r_package,
                distro,
                join(&reqs.build),
                join(&reqs.run)
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Requirement {
    Packages(BTreeSet<String>),
    Excluded(ExclusionReason),
    Unknown,
}

/// Looks up what `r_package` needs on `distro` in `phase`.
///
/// The `*` target is merged into the exact one. A package without an entry,
/// or whose entry covers neither `distro` nor `*`, is `Unknown`.
pub fn requires_for(db: &SysreqsDb, r_package: &str, distro: &str, phase: Phase) -> Requirement {
    let Some(entry) = db.entries.get(r_package) else {
        return Requirement::Unknown;
    };
    if let Some(reason) = &entry.excluded {
        return Requirement::Excluded(reason.clone());
    }
    let exact = entry.targets.get(distro);
    let wildcard = entry.targets.get(ANY_DISTRO);
    if exact.is_none() && wildcard.is_none() {
        return Requirement::Unknown;
    }
    let packages = exact
        .into_iter()
        .chain(wildcard)
        .flat_map(|t| t.phase(phase).iter().cloned())
        .collect();
    Requirement::Packages(packages)
}

/// What a record needs on one distro, after applying the curation policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Resolved(TargetReqs),
    Excluded(ExclusionReason),
    /// The record declares SystemRequirements but the database has nothing
    /// for it on this distro.
    NeedsCuration,
}

pub fn resolve(db: &SysreqsDb, record: &PackageRecord, distro: &str) -> Resolution {
    let build = requires_for(db, &record.name, distro, Phase::Build);
    let run = requires_for(db, &record.name, distro, Phase::Run);
    match (build, run) {
        (Requirement::Excluded(r), _) | (_, Requirement::Excluded(r)) => Resolution::Excluded(r),
        (Requirement::Packages(build), Requirement::Packages(run)) => {
            Resolution::Resolved(TargetReqs { build, run })
        }
        _ if record.system_requirements.is_none() => Resolution::Resolved(TargetReqs::default()),
        _ => Resolution::NeedsCuration,
    }
}

/// One lexicon rule: a case-insensitive glob (`*`, `?`) and the packages a
/// match maps to, per distro.
#[derive(Debug, Clone)]
pub struct LexiconRule {
    pub pattern: String,
    matcher: Regex,
    pub targets: BTreeMap<String, TargetReqs>,
}

impl LexiconRule {
    pub fn new(pattern: &str, targets: BTreeMap<String, TargetReqs>) -> Result<Self, SysreqsError> {
        let mut re = String::from("(?i)^");
        for ch in pattern.trim().chars() {
            match ch {
                '*' => re.push_str(".*"),
                '?' => re.push('.'),
                c if c.is_whitespace() => re.push_str(r"\s+"),
                c => re.push_str(&regex::escape(&c.to_string())),
            }
        }
        re.push('$');
        let matcher = Regex::new(&re).map_err(|_| SysreqsError::BadPattern(pattern.to_string()))?;
        Ok(LexiconRule {
            pattern: pattern.to_string(),
            matcher,
            targets,
        })
    }

    /// True if the pattern matches the whole token or any run of
    /// consecutive words in it.
    fn matches(&self, token: &str) -> bool {
        if self.matcher.is_match(token) {
            return true;
        }
        let words: Vec<&str> = token.split_whitespace().collect();
        (0..words.len()).any(|start| {
            (start + 1..=words.len()).any(|end| self.matcher.is_match(&words[start..end].join(" ")))
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    pub rules: Vec<LexiconRule>,
}

impl Lexicon {
    /// Same layout as the database, with a pattern in the first column.
    /// Rules are tried in file order.
    pub fn parse(text: &str) -> Result<Lexicon, SysreqsError> {
        let mut rules: Vec<LexiconRule> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() < 3 {
                return Err(SysreqsError::MalformedLine {
                    line,
                    reason: "expected pattern, distro and tagged columns".into(),
                });
            }
            let reqs = parse_tags(line, &cols[2..])?.map_err(|_| SysreqsError::MalformedLine {
                line,
                reason: "EXCLUDED: is not valid in a lexicon".into(),
            })?;
            let (pattern, distro) = (cols[0].trim(), cols[1].trim().to_string());
            match rules.iter_mut().find(|r| r.pattern == pattern) {
                Some(rule) => rule.targets.entry(distro).or_default().merge(&reqs),
                None => rules.push(LexiconRule::new(pattern, [(distro, reqs)].into())?),
            }
        }
        Ok(Lexicon { rules })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScrapeResult {
    pub matched: BTreeMap<String, TargetReqs>,
    /// (token, pattern) for every matched token, in input order
    pub matched_tokens: Vec<(String, String)>,
    pub unmatched_tokens: Vec<String>,
}

impl ScrapeResult {
    /// Turns the match into a database entry, leaving out toolchain packages.
    pub fn to_entry(&self, r_package: &str) -> SysreqsEntry {
        let strip = |set: &BTreeSet<String>| -> BTreeSet<String> {
            set.iter()
                .filter(|p| !TOOLCHAIN.contains(&p.as_str()))
                .cloned()
                .collect()
        };
        let targets = self
            .matched
            .iter()
            .map(|(d, t)| {
                (
                    d.clone(),
                    TargetReqs {
                        build: strip(&t.build),
                        run: strip(&t.run),
                    },
                )
            })
            .collect();
        SysreqsEntry {
            r_package: r_package.to_string(),
            targets,
            excluded: None,
        }
    }
}

fn qualifier_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(>=|<=|==|>|<|=)\s*v?[0-9][0-9A-Za-z.\-]*").unwrap())
}

/// Splits a SystemRequirements string into tokens: comma, semicolon and
/// newline separated phrases with parentheticals and version qualifiers
/// removed and whitespace collapsed.
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut without_parens = String::with_capacity(raw.len());
    let mut depth = 0usize;
    for ch in raw.chars() {
        match ch {
            '(' | '[' => {
                depth += 1;
                without_parens.push(' ');
            }
            ')' | ']' if depth > 0 => depth -= 1,
            _ if depth > 0 => {}
            c => without_parens.push(c),
        }
    }
    without_parens
        .split([',', ';', '\n'])
        .map(|phrase| {
            let phrase = qualifier_re().replace_all(phrase, " ");
            phrase
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ")
                .trim_end_matches('.')
                .trim()
                .to_string()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Matches every token against the lexicon; first matching rule wins.
pub fn scrape(raw: &str, lexicon: &Lexicon) -> ScrapeResult {
    let mut result = ScrapeResult::default();
    for token in tokenize(raw) {
        match lexicon.rules.iter().find(|r| r.matches(&token)) {
            Some(rule) => {
                for (distro, reqs) in &rule.targets {
                    result.matched.entry(distro.clone()).or_default().merge(reqs);
                }
                result.matched_tokens.push((token, rule.pattern.clone()));
            }
            None => result.unmatched_tokens.push(token),
        }
    }
    result
}
