use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::Result;

fn part_path(path: &Path) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(".part");
    PathBuf::from(s)
}

/// Renders into memory, writes `<path>.part`, then renames over `path`.
pub(crate) fn atomic_write(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf)?;
    let tmp = part_path(path);
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn atomic_write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    atomic_write(path, |b| {
        b.extend_from_slice(bytes);
        Ok(())
    })
}

/// CSV rendered in memory and written atomically.
pub(crate) fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    atomic_write(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    })
}
