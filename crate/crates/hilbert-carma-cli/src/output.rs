//! Deterministic file output: decimal float formatting and atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::CliError;

/// Format with 17 significant digits in plain decimal notation; enough for
/// an exact `f64` round trip, and byte-stable across runs.
pub fn fmt_sig17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    // The exponent from scientific notation is exact; 17 significant digits
    // means 16 - exponent decimals.
    let sci = format!("{x:e}");
    let exp: i32 = sci
        .split('e')
        .nth(1)
        .expect("scientific notation has an exponent")
        .parse()
        .expect("exponent is an integer");
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Write a file by creating a temporary sibling and renaming it into place,
/// so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |op: &str, e: std::io::Error| {
        CliError::Validation(format!("{op} {}: {e}", path.display()))
    };
    if let Some(parent) = path.parent()
        && !parent.as_os_str().is_empty()
    {
        fs::create_dir_all(parent).map_err(|e| io_err("creating directory for", e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    {
        let mut file = fs::File::create(&tmp).map_err(|e| io_err("creating", e))?;
        file.write_all(bytes).map_err(|e| io_err("writing", e))?;
        file.sync_all().map_err(|e| io_err("syncing", e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err("renaming into", e))
}
