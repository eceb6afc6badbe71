use std::path::Path;

use anyhow::{Context, Result};
use clap::ArgMatches;

/// Bumped whenever a CSV layout or report key changes meaning.
pub const FORMAT_VERSION: u32 = 1;

/// `key,value` lines: format version, command, every resolved flag (defaults
/// included, thread count excluded), then command-specific results.
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str, matches: &ArgMatches) -> Self {
        let mut r = Report { lines: Vec::new() };
        r.push("format_version", FORMAT_VERSION);
        r.push("command", command);
        let mut ids: Vec<&str> = matches.ids().map(|id| id.as_str()).collect();
        ids.sort_unstable();
        for id in ids {
            // derive names argument groups after their struct; skip those
            if matches!(id, "threads" | "report" | "config") || id.starts_with(|c: char| c.is_ascii_uppercase()) {
                continue;
            }
            let Ok(Some(raw)) = matches.try_get_raw(id) else { continue };
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            r.push(id, vals.join(";"));
        }
        r
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        for (k, v) in &self.lines {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).with_context(|| format!("writing report {}", path.display()))
    }
}
