use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::model::Context;
use crate::tooling::ToolError;

/// Context metadata key holding the read registry.
pub const READ_REGISTRY_KEY: &str = "read_registry";

#[derive(Debug, thiserror::Error)]
pub enum FsError {
    #[error("path {0} resolves outside the workspace")]
    SandboxEscape(String),
    #[error("{0} does not exist")]
    NotFound(String),
    #[error("{0} is not valid UTF-8 or UTF-16 text")]
    NotUtf8AfterDetection(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl FsError {
    pub(crate) fn io(path: &str, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            FsError::NotFound(path.to_string())
        } else {
            FsError::Io {
                path: path.to_string(),
                source,
            }
        }
    }
}

impl From<FsError> for ToolError {
    fn from(e: FsError) -> Self {
        match &e {
            FsError::SandboxEscape(p) => ToolError::new("Sandbox Escape", "The path is outside the workspace")
                .context(format!("Path: {p}"))
                .guidance("Use a path relative to the workspace root"),
            FsError::NotFound(p) => ToolError::new("File Not Found", "The path does not exist")
                .context(format!("Path: {p}"))
                .guidance("Use list_directory to see which files exist"),
            FsError::NotUtf8AfterDetection(p) => {
                ToolError::new("Unsupported Encoding", "The file is not UTF-8 or UTF-16 text")
                    .context(format!("Path: {p}"))
            }
            FsError::Io { path, source } => {
                ToolError::new("IO Error", source.to_string()).context(format!("Path: {path}"))
            }
        }
    }
}

/// One entry of the read registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadRecord {
    /// Hex SHA-256 of the bytes seen at read time.
    pub hash: String,
    pub read_at: DateTime<Utc>,
}

/// Filesystem sandbox rooted at a canonical directory. The read registry is
/// kept in the conversation's metadata so forks inherit it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl AsRef<Path>) -> io::Result<Self> {
        let root = fs::canonicalize(root)?;
        if !root.is_dir() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "workspace root is not a directory",
            ));
        }
        Ok(Workspace { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Canonical absolute path for `user_path`. Existing components are
    /// resolved through the filesystem (following symlink chains); the
    /// missing tail is normalized lexically.
    pub fn resolve(&self, user_path: &str) -> Result<PathBuf, FsError> {
        resolve_in_workspace(self, user_path)
    }

    /// Path shown to the model, relative to the root.
    pub fn display(&self, path: &Path) -> String {
        match path.strip_prefix(&self.root) {
            Ok(rel) if rel.as_os_str().is_empty() => ".".into(),
            Ok(rel) => rel.display().to_string(),
            Err(_) => path.display().to_string(),
        }
    }

    pub fn registry_entry(&self, ctx: &Context, path: &Path) -> Option<ReadRecord> {
        let key = path.to_string_lossy();
        let entry = ctx.metadata().get(READ_REGISTRY_KEY)?.get(key.as_ref())?;
        serde_json::from_value(entry.clone()).ok()
    }

    pub fn record_read(&self, ctx: &mut Context, path: &Path, bytes: &[u8]) {
        let record = ReadRecord {
            hash: digest_hex(bytes),
            read_at: Utc::now(),
        };
        let registry = ctx
            .metadata_mut()
            .entry(READ_REGISTRY_KEY)
            .or_insert_with(|| Value::Object(Default::default()));
        if !registry.is_object() {
            *registry = Value::Object(Default::default());
        }
        if let Value::Object(map) = registry {
            map.insert(
                path.to_string_lossy().into_owned(),
                serde_json::to_value(record).expect("record serializes"),
            );
        }
    }
}

pub fn resolve_in_workspace(ws: &Workspace, user_path: &str) -> Result<PathBuf, FsError> {
    let escape = || FsError::SandboxEscape(user_path.to_string());
    if user_path.contains('\0') {
        return Err(escape());
    }
    let joined = ws.root.join(user_path);
    let mut cur = PathBuf::new();
    for comp in joined.components() {
        match comp {
            Component::Prefix(p) => cur.push(p.as_os_str()),
            Component::RootDir => cur.push(Component::RootDir),
            Component::CurDir => {}
            Component::ParentDir => {
                cur.pop();
            }
            Component::Normal(name) => {
                let next = cur.join(name);
                // `..` can lead from a missing tail back onto disk, so every
                // component is checked
                if fs::symlink_metadata(&next).is_ok() {
                    // a dangling or looping link cannot be shown to stay inside
                    cur = fs::canonicalize(&next).map_err(|_| escape())?;
                } else {
                    cur = next;
                }
            }
        }
    }
    if cur.starts_with(&ws.root) {
        Ok(cur)
    } else {
        Err(escape())
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Decodes text with BOM sniffing: UTF-8 (BOM optional), UTF-16 LE/BE with BOM.
pub fn decode_text(bytes: &[u8]) -> Option<String> {
    if let Some(rest) = bytes.strip_prefix(&[0xEF, 0xBB, 0xBF]) {
        return String::from_utf8(rest.to_vec()).ok();
    }
    let utf16 = |rest: &[u8], le: bool| -> Option<String> {
        if !rest.len().is_multiple_of(2) {
            return None;
        }
        let units: Vec<u16> = rest
            .chunks_exact(2)
            .map(|c| {
                if le {
                    u16::from_le_bytes([c[0], c[1]])
                } else {
                    u16::from_be_bytes([c[0], c[1]])
                }
            })
            .collect();
        String::from_utf16(&units).ok()
    };
    if let Some(rest) = bytes.strip_prefix(&[0xFF, 0xFE]) {
        return utf16(rest, true);
    }
    if let Some(rest) = bytes.strip_prefix(&[0xFE, 0xFF]) {
        return utf16(rest, false);
    }
    std::str::from_utf8(bytes).ok().map(str::to_owned)
}
