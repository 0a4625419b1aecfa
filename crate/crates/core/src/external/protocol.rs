//! Wire protocol v1.
//!
//! The framework writes one JSON object on a single line to the child's
//! standard input and reads one JSON object line back from its standard
//! output. Image and map payloads travel as files: an 8-bit RGB PNG in, an
//! f32raw raster out. Unknown fields are ignored in both directions.
//!
//! ```text
//! -> {"protocol_version":1,"image_path":"/tmp/w/input.png","params":{...},"output_path":"/tmp/w/output.f32raw"}
//! <- {"status":"ok","map_path":"/tmp/w/output.f32raw","model_version":"1.2"}
//! <- {"status":"error","error_message":"weights not found"}
//! ```
//!
//! A child must exit with status 0 after an `ok` response; any other exit
//! status is treated as a failure whatever was printed.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::params::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationRequest {
    pub protocol_version: u32,
    pub image_path: PathBuf,
    pub params: BTreeMap<String, Scalar>,
    pub output_path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationResponse {
    pub status: ResponseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_version: Option<String>,
}

impl InvocationResponse {
    pub fn ok(map_path: impl Into<PathBuf>) -> Self {
        InvocationResponse {
            status: ResponseStatus::Ok,
            map_path: Some(map_path.into()),
            error_message: None,
            model_version: None,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        InvocationResponse {
            status: ResponseStatus::Error,
            map_path: None,
            error_message: Some(message.into()),
            model_version: None,
        }
    }
}

/// Serialises a record as one line, newline included.
pub fn encode_line<T: Serialize>(record: &T) -> String {
    let mut line = serde_json::to_string(record).expect("protocol records always serialise");
    line.push('\n');
    line
}

/// Parses the first non-blank line of `output`.
pub fn decode_first_line<T: for<'de> Deserialize<'de>>(output: &str) -> Result<T, String> {
    let line = output.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| "no response line".to_string())?;
    serde_json::from_str(line.trim()).map_err(|e| format!("malformed response {:?}: {e}", truncate(line, 120)))
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_ignored() {
        let resp: InvocationResponse =
            decode_first_line("\n{\"status\":\"ok\",\"map_path\":\"/x\",\"gpu\":\"none\"}\n").unwrap();
        assert_eq!(resp, InvocationResponse::ok("/x"));
    }

    #[test]
    fn request_is_a_single_line() {
        let req = InvocationRequest {
            protocol_version: 1,
            image_path: "/a b/in.png".into(),
            params: [("smooth_size".to_string(), Scalar::Int(9))].into(),
            output_path: "/a b/out.f32raw".into(),
        };
        let line = encode_line(&req);
        assert_eq!(line.matches('\n').count(), 1);
        assert_eq!(decode_first_line::<InvocationRequest>(&line).unwrap(), req);
    }

    #[test]
    fn garbage_is_reported() {
        assert!(decode_first_line::<InvocationResponse>("hello world").is_err());
        assert!(decode_first_line::<InvocationResponse>("").is_err());
        assert!(decode_first_line::<InvocationResponse>("{\"status\":\"maybe\"}").is_err());
    }
}
