//! File formats, dataset ingestion, the pretraining driver, evaluation and
//! the command-line interface around `swis-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
mod error;
pub mod evaluate;
pub mod plot;
pub mod pretrain;
pub mod selfcheck;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use error::{Error, IoContext, Result};

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes).context(|| format!("writing {}", tmp.display()))?;
    f.sync_all().context(|| format!("syncing {}", tmp.display()))?;
    drop(f);
    fs::rename(&tmp, path).context(|| format!("renaming {} to {}", tmp.display(), path.display()))
}

/// `SWIS_DETERMINISTIC=1` requests bit-reproducible runs.
pub fn deterministic_mode() -> bool {
    std::env::var("SWIS_DETERMINISTIC").is_ok_and(|v| v.trim() == "1")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
