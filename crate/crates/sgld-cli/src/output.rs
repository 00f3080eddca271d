use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::CliError;

/// Output directory; files appear only once fully written.
pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    /// Writes to a temporary file in the same directory, then renames it into place.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut tmp = NamedTempFile::new_in(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
        // temporary files are created owner-only
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o644)).map_err(|e| CliError::io(tmp.path(), e))?;
        }
        tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
        Ok(path)
    }

    /// Renders with `f` into memory and writes atomically.
    pub fn write_with(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| CliError::io(self.dir.join(name), e))?;
        self.write(name, &buf)
    }

    /// Writes a header and rows with the csv crate.
    pub fn write_table(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io_err = |e: csv::Error| CliError::io(self.dir.join(name), std::io::Error::other(e));
        w.write_record(header).map_err(io_err)?;
        for row in rows {
            w.write_record(row).map_err(io_err)?;
        }
        let buf = w.into_inner().map_err(|e| CliError::io(self.dir.join(name), std::io::Error::other(e.to_string())))?;
        self.write(name, &buf)
    }
}
