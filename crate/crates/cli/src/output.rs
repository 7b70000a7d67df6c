//! Rounded JSON and CSV writers shared by the subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;

use gradops::format::sig10;
use gradops::Error;
use serde::Serialize;
use serde_json::{Number, Value};

/// Serializes `value` with every float rounded to 10 significant digits.
pub fn rounded<T: Serialize>(value: &T) -> Result<Value, Error> {
    let v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    Ok(round_value(v))
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = sig10(n.as_f64().unwrap_or(0.0));
            let x = if x == 0.0 { 0.0 } else { x };
            Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_value).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, round_value(v))).collect())
        }
        other => other,
    }
}

/// Prints the resolved configuration of a run to stderr as one JSON line.
pub fn echo_config<T: Serialize>(command: &str, config: &T) -> Result<(), Error> {
    let mut v = rounded(config)?;
    if let Value::Object(map) = &mut v {
        map.insert("command".into(), Value::String(command.into()));
    }
    eprintln!("config: {v}");
    Ok(())
}

pub fn json_text(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values always serialize");
    s.push('\n');
    s
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Quotes a CSV field when it contains a delimiter or quote.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
