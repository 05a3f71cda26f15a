//! DCF metadata: DESCRIPTION files, PACKAGES indices and R-style versions.

use indexmap::IndexMap;
use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use thiserror::Error;

/// One DCF paragraph, fields kept in file order.
pub type Stanza = IndexMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DcfError {
    #[error("line {line}: malformed field (no ':' and not a continuation)")]
    MalformedField { line: usize },
    #[error("line {line}: duplicate field {field:?} in stanza")]
    DuplicateField { line: usize, field: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("missing required field {0}")]
    MissingField(&'static str),
    #[error("invalid package name {0:?}")]
    InvalidName(String),
    #[error("invalid version {0:?}")]
    InvalidVersion(String),
    #[error("bad dependency constraint {0:?}")]
    BadConstraint(String),
    #[error("package {0} lists itself as a dependency")]
    SelfDependency(String),
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Dcf(#[from] DcfError),
    #[error("stanza {index}: {source}")]
    Record {
        index: usize,
        #[source]
        source: RecordError,
    },
}

/// Parses DCF text into stanzas.
///
/// Stanzas are separated by blank (or whitespace-only) lines. A line that
/// starts with whitespace continues the previous field and is appended with a
/// single space.
pub fn parse_dcf(text: &str) -> Result<Vec<Stanza>, DcfError> {
    let mut stanzas = Vec::new();
    let mut current = Stanza::new();
    let mut last_key: Option<String> = None;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            if !current.is_empty() {
                stanzas.push(std::mem::take(&mut current));
            }
            last_key = None;
            continue;
        }
        if line.starts_with(' ') || line.starts_with('\t') {
            let key = last_key
                .as_ref()
                .ok_or(DcfError::MalformedField { line: lineno })?;
            let value = current.get_mut(key).expect("last key is present");
            let extra = line.trim();
            if value.is_empty() {
                value.push_str(extra);
            } else {
                value.push(' ');
                value.push_str(extra);
            }
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or(DcfError::MalformedField { line: lineno })?;
        let key = key.trim_end();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(DcfError::MalformedField { line: lineno });
        }
        if current.contains_key(key) {
            return Err(DcfError::DuplicateField {
                line: lineno,
                field: key.to_string(),
            });
        }
        current.insert(key.to_string(), value.trim().to_string());
        last_key = Some(key.to_string());
    }
    if !current.is_empty() {
        stanzas.push(current);
    }
    Ok(stanzas)
}

/// Renders stanzas back to DCF, one field per line.
pub fn render_dcf(stanzas: &[Stanza]) -> String {
    let mut out = String::new();
    for (i, stanza) in stanzas.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (key, value) in stanza {
            if value.is_empty() {
                out.push_str(&format!("{key}:\n"));
            } else {
                out.push_str(&format!("{key}: {value}\n"));
            }
        }
    }
    out
}

/// A version such as `0.6-7` or `1.0.5`.
///
/// `-` and `.` are both component separators, so `0.6-7 == 0.6.7`, and
/// missing trailing components compare as zero.
#[derive(Debug, Clone)]
pub struct VersionString {
    raw: String,
    components: Vec<u64>,
}

impl VersionString {
    pub fn parse(raw: &str) -> Result<Self, RecordError> {
        let raw = raw.trim();
        let components = raw
            .split(['.', '-'])
            .map(|part| {
                if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                    return None;
                }
                part.parse::<u64>().ok()
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| RecordError::InvalidVersion(raw.to_string()))?;
        Ok(VersionString {
            raw: raw.to_string(),
            components,
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn components(&self) -> &[u64] {
        &self.components
    }

    /// The raw string with every `-` replaced by `.`.
    pub fn dotted(&self) -> String {
        self.raw.replace('-', ".")
    }

    fn significant(&self) -> &[u64] {
        let end = self
            .components
            .iter()
            .rposition(|&c| c != 0)
            .map_or(0, |i| i + 1);
        &self.components[..end]
    }
}

pub fn compare_versions(a: &VersionString, b: &VersionString) -> Ordering {
    let len = a.components.len().max(b.components.len());
    (0..len)
        .map(|i| {
            let x = a.components.get(i).copied().unwrap_or(0);
            let y = b.components.get(i).copied().unwrap_or(0);
            x.cmp(&y)
        })
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl PartialEq for VersionString {
    fn eq(&self, other: &Self) -> bool {
        compare_versions(self, other) == Ordering::Equal
    }
}

impl Eq for VersionString {}

impl PartialOrd for VersionString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VersionString {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_versions(self, other)
    }
}

impl Hash for VersionString {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.significant().hash(state);
    }
}

impl fmt::Display for VersionString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl FromStr for VersionString {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VersionString::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Ge,
    Gt,
    Eq,
    Le,
    Lt,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Ge => ">=",
            Relation::Gt => ">",
            Relation::Eq => "==",
            Relation::Le => "<=",
            Relation::Lt => "<",
        }
    }

    pub fn holds(self, have: &VersionString, want: &VersionString) -> bool {
        let ord = compare_versions(have, want);
        match self {
            Relation::Ge => ord.is_ge(),
            Relation::Gt => ord.is_gt(),
            Relation::Eq => ord.is_eq(),
            Relation::Le => ord.is_le(),
            Relation::Lt => ord.is_lt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub relation: Relation,
    pub version: VersionString,
}

/// One entry of a Depends/Imports/LinkingTo/Suggests list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepSpec {
    pub name: String,
    pub constraint: Option<Constraint>,
}

impl DepSpec {
    pub fn parse(entry: &str) -> Result<DepSpec, RecordError> {
        let entry = entry.trim();
        let bad = || RecordError::BadConstraint(entry.to_string());
        let (name, constraint) = match entry.split_once('(') {
            None => (entry, None),
            Some((name, rest)) => {
                let inner = rest.trim_end().strip_suffix(')').ok_or_else(bad)?.trim();
                let (relation, version) = [
                    (">=", Relation::Ge),
                    ("<=", Relation::Le),
                    ("==", Relation::Eq),
                    (">", Relation::Gt),
                    ("<", Relation::Lt),
                ]
                .iter()
                .find_map(|(op, rel)| inner.strip_prefix(op).map(|v| (*rel, v.trim())))
                .ok_or_else(bad)?;
                if version.is_empty() {
                    return Err(bad());
                }
                let version = VersionString::parse(version).map_err(|_| bad())?;
                (name.trim(), Some(Constraint { relation, version }))
            }
        };
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(bad());
        }
        Ok(DepSpec {
            name: name.to_string(),
            constraint,
        })
    }
}

impl fmt::Display for DepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.constraint {
            None => f.write_str(&self.name),
            Some(c) => write!(f, "{} ({} {})", self.name, c.relation.as_str(), c.version),
        }
    }
}

/// Typed view of one package's DESCRIPTION (or PACKAGES stanza).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackageRecord {
    pub name: String,
    pub version: VersionString,
    pub license: String,
    pub depends: Vec<DepSpec>,
    pub imports: Vec<DepSpec>,
    pub linking_to: Vec<DepSpec>,
    pub suggests: Vec<DepSpec>,
    pub needs_compilation: bool,
    pub system_requirements: Option<String>,
}

impl PackageRecord {
    /// A record with no dependencies; handy for building databases in code.
    pub fn new(name: &str, version: &str) -> Result<Self, RecordError> {
        validate_name(name)?;
        Ok(PackageRecord {
            name: name.to_string(),
            version: VersionString::parse(version)?,
            license: String::new(),
            depends: Vec::new(),
            imports: Vec::new(),
            linking_to: Vec::new(),
            suggests: Vec::new(),
            needs_compilation: false,
            system_requirements: None,
        })
    }
}

fn validate_name(name: &str) -> Result<(), RecordError> {
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(RecordError::InvalidName(name.to_string()));
    }
    Ok(())
}

fn parse_dep_list(field: Option<&String>) -> Result<Vec<DepSpec>, RecordError> {
    match field {
        None => Ok(Vec::new()),
        Some(text) => text
            .split(',')
            .filter(|e| !e.trim().is_empty())
            .map(DepSpec::parse)
            .collect(),
    }
}

pub fn parse_record(stanza: &Stanza) -> Result<PackageRecord, RecordError> {
    let name = stanza
        .get("Package")
        .ok_or(RecordError::MissingField("Package"))?
        .trim();
    validate_name(name)?;
    let version = stanza
        .get("Version")
        .ok_or(RecordError::MissingField("Version"))?;
    let version = VersionString::parse(version)?;

    let record = PackageRecord {
        name: name.to_string(),
        version,
        license: stanza.get("License").cloned().unwrap_or_default(),
        depends: parse_dep_list(stanza.get("Depends"))?,
        imports: parse_dep_list(stanza.get("Imports"))?,
        linking_to: parse_dep_list(stanza.get("LinkingTo"))?,
        suggests: parse_dep_list(stanza.get("Suggests"))?,
        needs_compilation: stanza
            .get("NeedsCompilation")
            .is_some_and(|v| v.trim() == "yes"),
        system_requirements: stanza
            .get("SystemRequirements")
            .filter(|s| !s.trim().is_empty())
            .cloned(),
    };
    let lists = [
        &record.depends,
        &record.imports,
        &record.linking_to,
        &record.suggests,
    ];
    if lists.iter().any(|l| l.iter().any(|d| d.name == record.name)) {
        return Err(RecordError::SelfDependency(record.name));
    }
    Ok(record)
}

/// Parses a multi-stanza PACKAGES index.
pub fn parse_packages_index(text: &str) -> Result<Vec<PackageRecord>, IndexError> {
    parse_dcf(text)?
        .iter()
        .enumerate()
        .map(|(index, stanza)| {
            parse_record(stanza).map_err(|source| IndexError::Record {
                index: index + 1,
                source,
            })
        })
        .collect()
}
