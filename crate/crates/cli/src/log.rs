//! Newline-delimited JSON events on stderr, enabled by `--verbose`.

use std::io::Write;
use std::time::Instant;

use serde_json::{json, Value};

use crate::error::CliError;

pub struct Log {
    enabled: bool,
    start: Instant,
}

/// JSON has no infinities; non-finite values become the strings
/// `"inf"`, `"-inf"` and `"nan"`.
pub fn number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

impl Log {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            start: Instant::now(),
        }
    }

    /// Writes `{"event": name, "t": seconds, ..fields}` as one line.
    pub fn event(&self, name: &str, fields: Value) {
        if !self.enabled {
            return;
        }
        let mut obj = json!({ "event": name, "t": self.start.elapsed().as_secs_f64() });
        if let (Some(o), Value::Object(extra)) = (obj.as_object_mut(), fields) {
            o.extend(extra);
        }
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "{obj}");
    }

    pub fn error(&self, e: &CliError) {
        self.event(
            "error",
            json!({ "kind": e.kind(), "code": e.exit_code(), "message": e.to_string() }),
        );
    }
}
