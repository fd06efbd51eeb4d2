//! `key = value` config files, spliced into argv ahead of the real flags so
//! that anything given on the command line wins.

use std::ffi::OsString;
use std::fs;

use crate::UsageError;

fn config_args(text: &str) -> Result<Vec<OsString>, UsageError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(UsageError(format!("config line {}: invalid key", i + 1)));
        }
        match value.trim() {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.trim_matches('"').into());
            }
        }
    }
    Ok(out)
}

/// Removes `--config FILE` from `argv` and inserts the file's flags right
/// after the subcommand words.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, UsageError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = Some(it.next().ok_or_else(|| UsageError("--config needs a file".into()))?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(p.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path)
        .map_err(|e| UsageError(format!("config {}: {e}", path.to_string_lossy())))?;
    let extra = config_args(&text)?;
    let at = 1 + rest
        .iter()
        .skip(1)
        .take_while(|a| !a.to_string_lossy().starts_with('-'))
        .count();
    rest.splice(at..at, extra);
    Ok(rest)
}
