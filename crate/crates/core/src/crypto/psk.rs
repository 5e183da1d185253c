//! Pre-shared key files: exactly 32 raw bytes, owner-only permissions,
//! conventionally named `psk-<switch_id>.key`.

use std::fs::OpenOptions;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::rngs::OsRng;
use rand::RngCore;
use thiserror::Error;

use super::keys::{PreSharedKey, PSK_LEN};

#[derive(Debug, Error)]
pub enum PskFileError {
    #[error("refusing to overwrite existing key file {0}")]
    Exists(PathBuf),
    #[error("key file {path} holds {len} bytes, expected {PSK_LEN}")]
    Length { path: PathBuf, len: usize },
    #[error("key file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Conventional file name for the key shared with `switch_id`.
pub fn psk_file_name(switch_id: &str) -> String {
    format!("psk-{switch_id}.key")
}

impl PreSharedKey {
    /// Draws a fresh key from the operating system's CSPRNG.
    pub fn generate() -> PreSharedKey {
        let mut bytes = [0u8; PSK_LEN];
        OsRng.fill_bytes(&mut bytes);
        PreSharedKey::new(bytes)
    }
}

/// Writes `psk` to a new file. Existing files are never overwritten.
pub fn write_psk_file(path: &Path, psk: &PreSharedKey) -> Result<(), PskFileError> {
    let mut opts = OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut file = opts.open(path).map_err(|e| match e.kind() {
        io::ErrorKind::AlreadyExists => PskFileError::Exists(path.to_path_buf()),
        _ => PskFileError::Io { path: path.to_path_buf(), source: e },
    })?;
    file.write_all(psk.as_bytes())
        .and_then(|_| file.sync_all())
        .map_err(|source| PskFileError::Io { path: path.to_path_buf(), source })
}

pub fn read_psk_file(path: &Path) -> Result<PreSharedKey, PskFileError> {
    let io_err = |source| PskFileError::Io { path: path.to_path_buf(), source };
    let mut buf = Vec::with_capacity(PSK_LEN + 1);
    std::fs::File::open(path)
        .map_err(io_err)?
        // one extra byte is enough to detect oversize files
        .take(PSK_LEN as u64 + 1)
        .read_to_end(&mut buf)
        .map_err(io_err)?;
    let psk = PreSharedKey::from_slice(&buf)
        .map_err(|_| PskFileError::Length { path: path.to_path_buf(), len: buf.len() });
    zeroize::Zeroize::zeroize(&mut buf);
    psk
}
