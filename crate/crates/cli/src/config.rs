//! `--config FILE` support.
//!
//! The file is TOML with one table per subcommand whose keys are flag names
//! without the leading dashes:
//!
//! ```toml
//! [pretrain]
//! epochs = 20
//! lr = 0.02
//!
//! [run-cl]
//! data = ["runs/s1", "runs/s2"]
//! psnr-th = -inf
//! ```
//!
//! File values are spliced into the argument list right after the
//! subcommand, skipping any flag the user also passed explicitly, so flags on
//! the command line win over the file and the file wins over defaults.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::{CliError, Result};

fn config_path(argv: &[OsString]) -> Option<(PathBuf, usize, usize)> {
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy();
        if arg == "--config" {
            return argv.get(i + 1).map(|v| (PathBuf::from(v), i, 2));
        }
        if let Some(v) = arg.strip_prefix("--config=") {
            return Some((PathBuf::from(v), i, 1));
        }
        i += 1;
    }
    None
}

fn to_args(flag: &str, value: &toml::Value, out: &mut Vec<OsString>) -> Result<()> {
    let mut push = |s: String| {
        out.push(flag.into());
        out.push(s.into());
    };
    match value {
        toml::Value::String(s) => push(s.clone()),
        toml::Value::Integer(i) => push(i.to_string()),
        toml::Value::Float(f) => push(f.to_string()),
        toml::Value::Boolean(true) => out.push(flag.into()),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            for item in items {
                to_args(flag, item, out)?;
            }
        }
        other => return Err(CliError::Config(format!("unsupported value for {flag}: {other}"))),
    }
    Ok(())
}

fn user_gave(user: &[OsString], flag: &str) -> bool {
    let with_eq = format!("{flag}=");
    user.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&with_eq)
    })
}

/// Returns `argv` with values from the `--config` file merged in.
pub fn merge_config_args(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some((path, cfg_at, cfg_len)) = config_path(&argv) else {
        return Ok(argv);
    };
    let table = load(&path)?;

    // The subcommand is the first bare word that is not the config value.
    let sub_at = (1..argv.len()).find(|&i| {
        !(cfg_at..cfg_at + cfg_len).contains(&i) && !argv[i].to_string_lossy().starts_with('-')
    });
    let Some(sub_at) = sub_at else {
        return Ok(argv);
    };
    let name = argv[sub_at].to_string_lossy().into_owned();
    let Some(section) = table.get(&name) else {
        return Ok(argv);
    };
    let section = section
        .as_table()
        .ok_or_else(|| CliError::Config(format!("{}: [{name}] must be a table", path.display())))?;

    let user = &argv[sub_at + 1..];
    let mut injected = Vec::new();
    for (key, value) in section {
        let flag = format!("--{}", key.replace('_', "-"));
        if key == "config" || user_gave(user, &flag) {
            continue;
        }
        to_args(&flag, value, &mut injected)?;
    }
    let mut merged = argv[..=sub_at].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(user);
    Ok(merged)
}

fn load(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
