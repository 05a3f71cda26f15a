//! Wire format: one JSON object per line.
//!
//! ```text
//! {"kind":"Request","request_id":1,"op":"install","args":["gifski","units"]}
//! {"kind":"Progress","request_id":1,"text":"Installing: udunits2-2.2.26-6 2/3"}
//! {"kind":"Response","request_id":1,"op":"install","args":["udunits2",...],"status":"Ok","not_found":["gifski"]}
//! ```
//!
//! In a Response, `args` carries the result: the system packages installed
//! or removed, or `[prefix, transform]` for discover.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    Request,
    Progress,
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Discover,
    Install,
    Remove,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Discover => "discover",
            Op::Install => "install",
            Op::Remove => "remove",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "discover" => Ok(Op::Discover),
            "install" => Ok(Op::Install),
            "remove" => Ok(Op::Remove),
            other => Err(format!("unknown operation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeMessage {
    pub kind: Kind,
    pub request_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<Op>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_found: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BridgeMessage {
    fn bare(kind: Kind, request_id: u64) -> Self {
        BridgeMessage {
            kind,
            request_id,
            op: None,
            args: None,
            text: None,
            status: None,
            not_found: None,
            error: None,
        }
    }

    pub fn request(request_id: u64, op: Op, args: Vec<String>) -> Self {
        BridgeMessage {
            op: Some(op),
            args: Some(args),
            ..Self::bare(Kind::Request, request_id)
        }
    }

    pub fn progress(request_id: u64, text: &str) -> Self {
        BridgeMessage {
            text: Some(text.to_string()),
            ..Self::bare(Kind::Progress, request_id)
        }
    }

    /// Successful response. `not_found` is only attached for install/remove.
    pub fn ok(request_id: u64, op: Op, args: Vec<String>, not_found: Vec<String>) -> Self {
        BridgeMessage {
            op: Some(op),
            args: Some(args),
            status: Some(Status::Ok),
            not_found: (op != Op::Discover).then_some(not_found),
            ..Self::bare(Kind::Response, request_id)
        }
    }

    pub fn failure(request_id: u64, op: Option<Op>, error: &str) -> Self {
        BridgeMessage {
            op,
            status: Some(Status::Error),
            error: Some(error.to_string()),
            ..Self::bare(Kind::Response, request_id)
        }
    }

    /// Serializes to a single line, without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("message serializes")
    }

    pub fn decode(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    /// Decodes a line that must be a well-formed request.
    pub fn decode_request(line: &str) -> Result<(u64, Op, Vec<String>), MalformedRequest> {
        let fallback_id = serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("request_id").and_then(|id| id.as_u64()))
            .unwrap_or(0);
        let malformed = || MalformedRequest { request_id: fallback_id };
        let msg = Self::decode(line).map_err(|_| malformed())?;
        match msg {
            BridgeMessage {
                kind: Kind::Request,
                request_id,
                op: Some(op),
                args,
                text: None,
                status: None,
                not_found: None,
                error: None,
            } => Ok((request_id, op, args.unwrap_or_default())),
            _ => Err(malformed()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MalformedRequest {
    pub request_id: u64,
}
