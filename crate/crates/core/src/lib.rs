//! Building blocks for publishing R packages as Linux binaries and for
//! installing them through the system package manager.
//!
//! * [`metadata`]: DCF parsing, package records, version ordering
//! * [`depgraph`]: dependency graph, compilation statistics, batch plans
//! * [`sysreqs`]: system requirements database and scraper
//! * [`recipegen`]: SPEC recipe rendering
//! * [`syncer`]: daily sync and mass rebuild planning
//! * [`fakepm`]: package-manager connector trait and an in-memory backend
//! * [`bridge`]: the discover/install/remove service, client and direct mode

pub mod bridge;
pub mod depgraph;
pub mod fakepm;
pub mod metadata;
pub mod recipegen;
pub mod syncer;
pub mod sysreqs;
