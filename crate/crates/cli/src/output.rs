//! Crash-safe artifact writing: everything lands under a `.partial` name
//! and is renamed into place on completion.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub struct AtomicFile {
    final_path: PathBuf,
    partial_path: PathBuf,
    file: Option<fs::File>,
}

impl AtomicFile {
    pub fn create(path: &Path) -> io::Result<AtomicFile> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let partial = path.with_extension(match path.extension() {
            Some(ext) => format!("{}.partial", ext.to_string_lossy()),
            None => "partial".to_string(),
        });
        let file = fs::File::create(&partial)?;
        Ok(AtomicFile { final_path: path.to_path_buf(), partial_path: partial, file: Some(file) })
    }

    pub fn writer(&mut self) -> &mut fs::File {
        self.file.as_mut().expect("file still open")
    }

    pub fn commit(mut self) -> io::Result<()> {
        if let Some(f) = self.file.take() {
            f.sync_all()?;
        }
        fs::rename(&self.partial_path, &self.final_path)
    }
}

/// Writes `content` atomically.
pub fn write_atomic(path: &Path, content: &[u8]) -> io::Result<()> {
    let mut f = AtomicFile::create(path)?;
    f.writer().write_all(content)?;
    f.commit()
}

/// Renders a CSV table with a fixed header; floats use the shortest
/// round-trip representation so files are byte-stable.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
