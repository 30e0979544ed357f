pub mod eval;
pub mod pair_train;
pub mod report;
pub mod synth;
pub mod train;

use fer_core::error::{Error, Result};
use std::path::{Path, PathBuf};

/// Create the output directory and return it.
pub fn ensure_out_dir(out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::config(format!("cannot create output directory {}: {e}", out.display())))?;
    Ok(out.to_path_buf())
}

/// Check an input path exists before doing any work.
pub fn require_input(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::config(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}
