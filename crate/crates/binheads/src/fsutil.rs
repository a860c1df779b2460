//! Crate-internal file helpers.

use std::fs;
use std::io;
use std::path::Path;

/// Write `contents` to `path` via a sibling temp file and rename, so a
/// crash mid-write never leaves a truncated artifact behind.
pub(crate) fn atomic_write(path: &Path, contents: &[u8]) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp_path = path.with_file_name(tmp_name);
    fs::write(&tmp_path, contents)?;
    fs::rename(&tmp_path, path)?;
    Ok(())
}
