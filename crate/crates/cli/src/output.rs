use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

/// Writes every `(file name, contents)` pair into `dir`, or none of them.
///
/// Contents are staged in temporary files next to their targets and renamed
/// only once all of them were written; a failed rename removes the files
/// already moved into place.
pub fn write_all_or_nothing(dir: &Path, files: Vec<(String, Vec<u8>)>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("staging {name}"))?;
        tmp.write_all(&bytes)
            .with_context(|| format!("writing {name}"))?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    let mut done = Vec::with_capacity(staged.len());
    for (tmp, path) in staged {
        if let Err(e) = tmp.persist(&path) {
            for p in &done {
                let _ = fs::remove_file(p);
            }
            return Err(e.error).with_context(|| format!("moving output to {}", path.display()));
        }
        done.push(path);
    }
    Ok(done)
}
