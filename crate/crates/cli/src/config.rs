//! `--config` files: one `key=value` per line, `#` comments. Entries become
//! flags placed ahead of the user's own, so that with `args_override_self`
//! the command line wins.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Command;

const GLOBAL_VALUE_FLAGS: [&str; 4] = ["--seed", "--threads", "--config", "--report"];

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    let mut found = None;
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            found = it.next().map(PathBuf::from);
        } else if let Some(v) = s.strip_prefix("--config=") {
            found = Some(PathBuf::from(v));
        }
    }
    found
}

/// Index of the subcommand token, skipping leading global options.
fn subcommand_index(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if GLOBAL_VALUE_FLAGS.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn user_gave(argv: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    argv.iter().skip(1).any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&format!("{flag}="))
    })
}

/// Returns `argv` with the config file's entries spliced in.
pub fn expand(argv: Vec<OsString>, cmd: &Command) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let Some(sub_at) = subcommand_index(&argv) else {
        return Ok(argv);
    };
    let sub_name = argv[sub_at].to_string_lossy().into_owned();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(argv);
    };
    let (mut global, mut local) = (Vec::new(), Vec::new());
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), no + 1);
        };
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        if key == "config" {
            bail!("{}:{}: config files cannot include other config files", path.display(), no + 1);
        }
        let (arg, is_global) = match cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())) {
            Some(a) => (a, true),
            None => match sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) {
                Some(a) => (a, false),
                None => bail!("{}:{}: unknown key '{key}' for '{sub_name}'", path.display(), no + 1),
            },
        };
        // list flags append rather than override, so a flag the user gave
        // suppresses the config entry outright
        if user_gave(&argv, &key) {
            continue;
        }
        let target = if is_global { &mut global } else { &mut local };
        if arg.get_action().takes_values() {
            target.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value {
                "true" => target.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => bail!("{}:{}: '{key}' is a switch; use true or false", path.display(), no + 1),
            }
        }
    }
    let mut out = Vec::with_capacity(argv.len() + global.len() + local.len());
    out.push(argv[0].clone());
    out.extend(global);
    out.extend_from_slice(&argv[1..=sub_at]);
    out.extend(local);
    out.extend_from_slice(&argv[sub_at + 1..]);
    Ok(out)
}
