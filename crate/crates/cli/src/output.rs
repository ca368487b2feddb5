//! Output files that only appear under their final name once complete.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use salbfgs_core::{Error, Result};

pub struct AtomicFile {
    path: PathBuf,
    tmp: PathBuf,
    out: Option<BufWriter<File>>,
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

impl AtomicFile {
    pub fn create(path: &Path) -> Result<Self> {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".tmp");
        let tmp = path.with_file_name(name);
        let file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            tmp,
            out: Some(BufWriter::new(file)),
        })
    }

    /// Writes one line and flushes it, so the temporary file can be tailed.
    pub fn line(&mut self, text: &str) -> Result<()> {
        let out = self.out.as_mut().expect("file already committed");
        writeln!(out, "{text}")
            .and_then(|_| out.flush())
            .map_err(|e| io_err(&self.tmp, e))
    }

    pub fn commit(mut self) -> Result<()> {
        let out = self.out.take().expect("file already committed");
        out.into_inner()
            .map_err(|e| io_err(&self.tmp, e.into_error()))?
            .sync_all()
            .map_err(|e| io_err(&self.tmp, e))?;
        fs::rename(&self.tmp, &self.path).map_err(|e| io_err(&self.path, e))
    }
}

impl Drop for AtomicFile {
    fn drop(&mut self) {
        if self.out.take().is_some() {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}

/// Writes `lines` to `path` atomically.
pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = AtomicFile::create(path)?;
    for l in lines {
        f.line(l)?;
    }
    f.commit()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropped_file_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        {
            let mut f = AtomicFile::create(&path).unwrap();
            f.line("partial").unwrap();
            let tmp = dir.path().join("out.txt.tmp");
            assert_eq!(fs::read_to_string(tmp).unwrap(), "partial\n");
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        write_lines(&path, &["a".into(), "b".into()]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a\nb\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
