use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use glob::{MatchOptions, Pattern};
use regex::Regex;
use serde_json::{json, Map, Value};
use walkdir::WalkDir;

use super::workspace::{decode_text, digest_hex, FsError, Workspace};
use crate::tooling::{ParamKind, ParamSpec, Tool, ToolContext, ToolError, ToolSpec};

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
const MAX_LISTING: usize = 1000;
const MAX_MATCHES: usize = 200;
const SEARCH_CONTEXT: usize = 2;

fn str_arg<'a>(args: &'a Map<String, Value>, name: &str) -> &'a str {
    args.get(name).and_then(Value::as_str).unwrap_or_default()
}

fn opt_str<'a>(args: &'a Map<String, Value>, name: &str) -> Option<&'a str> {
    args.get(name).and_then(Value::as_str)
}

fn opt_int(args: &Map<String, Value>, name: &str) -> Option<i64> {
    args.get(name).and_then(Value::as_i64)
}

fn read_bytes(path: &Path, shown: &str) -> Result<Vec<u8>, FsError> {
    if path.is_dir() {
        return Err(FsError::Io {
            path: shown.to_string(),
            source: std::io::Error::other("is a directory"),
        });
    }
    fs::read(path).map_err(|e| FsError::io(shown, e))
}

pub struct ReadFile {
    ws: Workspace,
    spec: ToolSpec,
}

impl ReadFile {
    pub fn new(ws: Workspace) -> Self {
        let spec = ToolSpec::new(
            "read_file",
            "Read a text file from the workspace, optionally a 1-based inclusive line range.",
            vec![
                ParamSpec::required("path", ParamKind::String).describe("File path relative to the workspace"),
                ParamSpec::optional("start_line", ParamKind::Integer, None).describe("First line to return"),
                ParamSpec::optional("end_line", ParamKind::Integer, None).describe("Last line to return"),
            ],
        )
        .expect("valid spec");
        ReadFile { ws, spec }
    }
}

impl Tool for ReadFile {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let shown = str_arg(args, "path");
        let path = self.ws.resolve(shown)?;
        let bytes = read_bytes(&path, shown)?;
        let text = decode_text(&bytes).ok_or_else(|| FsError::NotUtf8AfterDetection(shown.to_string()))?;
        self.ws.record_read(cx.context, &path, &bytes);

        let start = opt_int(args, "start_line");
        let end = opt_int(args, "end_line");
        if start.is_none() && end.is_none() {
            return Ok(text);
        }
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        let first = start.unwrap_or(1);
        let last = end.unwrap_or(lines.len() as i64).min(lines.len() as i64);
        if first < 1 || first > last {
            return Err(ToolError::new(
                "Invalid Line Range",
                format!("Lines {first}..{last} are not in the file"),
            )
            .context(format!("Path: {shown}"))
            .context(format!("Line count: {}", lines.len()))
            .guidance("Use 1-based line numbers with start_line <= end_line"));
        }
        Ok(lines[(first - 1) as usize..last as usize].concat())
    }
}

pub struct WriteFile {
    ws: Workspace,
    spec: ToolSpec,
}

impl WriteFile {
    pub fn new(ws: Workspace) -> Self {
        let spec = ToolSpec::new(
            "write_file",
            "Write a file, creating parent directories. An existing file is backed up to <name>.bak first.",
            vec![
                ParamSpec::required("path", ParamKind::String).describe("File path relative to the workspace"),
                ParamSpec::required("content", ParamKind::String).describe("Full new content"),
            ],
        )
        .expect("valid spec");
        WriteFile { ws, spec }
    }
}

pub fn backup_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".bak");
    path.with_file_name(name)
}

impl Tool for WriteFile {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let shown = str_arg(args, "path");
        let content = str_arg(args, "content");
        let path = self.ws.resolve(shown)?;
        if path == self.ws.root() || path.is_dir() {
            return Err(FsError::Io {
                path: shown.to_string(),
                source: std::io::Error::other("is a directory"),
            }
            .into());
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| FsError::io(shown, e))?;
        }
        let mut note = String::new();
        if path.exists() {
            let backup = backup_path(&path);
            fs::copy(&path, &backup).map_err(|e| FsError::io(shown, e))?;
            note = format!(" (previous content saved to {})", self.ws.display(&backup));
        }
        fs::write(&path, content).map_err(|e| FsError::io(shown, e))?;
        self.ws.record_read(cx.context, &path, content.as_bytes());
        Ok(format!(
            "Wrote {} bytes to {}{note}",
            content.len(),
            self.ws.display(&path)
        ))
    }
}

pub struct EditFile {
    ws: Workspace,
    spec: ToolSpec,
}

impl EditFile {
    pub fn new(ws: Workspace) -> Self {
        let spec = ToolSpec::new(
            "edit_file",
            "Replace one exact occurrence of old_string with new_string in a file you have read.",
            vec![
                ParamSpec::required("path", ParamKind::String).describe("File path relative to the workspace"),
                ParamSpec::required("old_string", ParamKind::String).describe("Exact text to replace; must occur once"),
                ParamSpec::required("new_string", ParamKind::String).describe("Replacement text"),
            ],
        )
        .expect("valid spec");
        EditFile { ws, spec }
    }
}

pub fn file_not_read(shown: &str) -> ToolError {
    ToolError::new("File Not Read", "You must read the file before editing it")
        .context(format!("Path: {shown}"))
        .guidance(
            "Use read_file to see the current content first, then copy the exact text you want to change into old_string",
        )
}

pub fn file_modified_since_read(shown: &str, read_at: DateTime<Utc>, modified: DateTime<Utc>) -> ToolError {
    ToolError::new(
        "File Modified Since Read",
        "The file has been modified since you last read it",
    )
    .context(format!("Path: {shown}"))
    .context(format!("Last Read: {}", read_at.format(TIME_FORMAT)))
    .context(format!("Modified: {}", modified.format(TIME_FORMAT)))
    .guidance("Use read_file again to see the current content, then retry your edit with the updated content")
}

impl Tool for EditFile {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let shown = str_arg(args, "path");
        let old = str_arg(args, "old_string");
        let new = str_arg(args, "new_string");
        let path = self.ws.resolve(shown)?;
        let Some(record) = self.ws.registry_entry(cx.context, &path) else {
            return Err(file_not_read(shown));
        };
        let bytes = read_bytes(&path, shown)?;
        if digest_hex(&bytes) != record.hash {
            let modified = fs::metadata(&path)
                .and_then(|m| m.modified())
                .map(DateTime::<Utc>::from)
                .unwrap_or_else(|_| Utc::now());
            return Err(file_modified_since_read(shown, record.read_at, modified));
        }
        let text = decode_text(&bytes).ok_or_else(|| FsError::NotUtf8AfterDetection(shown.to_string()))?;
        match text.matches(old).count() {
            0 => {
                return Err(
                    ToolError::new("Old String Not Found", "old_string does not occur in the file")
                        .context(format!("Path: {shown}"))
                        .guidance(
                            "Use read_file to see the current content and copy the text exactly, including whitespace",
                        ),
                )
            }
            1 => {}
            n => {
                return Err(ToolError::new(
                    "Old String Ambiguous",
                    format!("old_string occurs {n} times in the file"),
                )
                .context(format!("Path: {shown}"))
                .guidance("Include more surrounding text in old_string so it matches exactly one place"))
            }
        }
        let updated = text.replacen(old, new, 1);
        fs::write(&path, &updated).map_err(|e| FsError::io(shown, e))?;
        self.ws.record_read(cx.context, &path, updated.as_bytes());
        Ok(format!("Edited {}", self.ws.display(&path)))
    }
}

fn glob_options() -> MatchOptions {
    MatchOptions {
        case_sensitive: true,
        require_literal_separator: false,
        require_literal_leading_dot: false,
    }
}

fn compile_glob(pattern: Option<&str>) -> Result<Option<Pattern>, ToolError> {
    pattern
        .map(|p| {
            Pattern::new(p)
                .map_err(|e| ToolError::new("Invalid Pattern", e.to_string()).context(format!("Pattern: {p}")))
        })
        .transpose()
}

/// Walks `dir` without following symlinks, yielding paths relative to it.
fn walk(dir: &Path, recursive: bool) -> impl Iterator<Item = (PathBuf, bool)> + '_ {
    WalkDir::new(dir)
        .min_depth(1)
        .max_depth(if recursive { usize::MAX } else { 1 })
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .map(move |e| {
            let rel = e.path().strip_prefix(dir).unwrap_or(e.path()).to_path_buf();
            (rel, e.file_type().is_dir())
        })
}

/// Output: one path per line relative to the listed directory, directories
/// with a trailing `/`, sorted by name.
pub struct ListDirectory {
    ws: Workspace,
    spec: ToolSpec,
}

impl ListDirectory {
    pub fn new(ws: Workspace) -> Self {
        let spec = ToolSpec::new(
            "list_directory",
            "List files under a workspace directory, optionally filtered by a glob pattern.",
            vec![
                ParamSpec::optional("path", ParamKind::String, Some(json!("."))).describe("Directory to list"),
                ParamSpec::optional("pattern", ParamKind::String, None).describe("Glob such as *.rs or src/**/*.toml"),
                ParamSpec::optional("recursive", ParamKind::Boolean, Some(json!(true)))
                    .describe("Descend into subdirectories"),
            ],
        )
        .expect("valid spec");
        ListDirectory { ws, spec }
    }
}

impl Tool for ListDirectory {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, _cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let shown = opt_str(args, "path").unwrap_or(".");
        let dir = self.ws.resolve(shown)?;
        if !dir.is_dir() {
            return Err(FsError::NotFound(shown.to_string()).into());
        }
        let pattern = compile_glob(opt_str(args, "pattern"))?;
        let recursive = args.get("recursive").and_then(Value::as_bool).unwrap_or(true);
        let mut out = String::new();
        let mut count = 0;
        for (rel, is_dir) in walk(&dir, recursive) {
            if let Some(p) = &pattern {
                if is_dir || !p.matches_path_with(&rel, glob_options()) {
                    continue;
                }
            }
            count += 1;
            if count > MAX_LISTING {
                let _ = writeln!(out, "... (listing truncated at {MAX_LISTING} entries)");
                break;
            }
            let _ = writeln!(out, "{}{}", rel.display(), if is_dir { "/" } else { "" });
        }
        if count == 0 {
            return Ok("(no entries)".into());
        }
        Ok(out.trim_end().to_string())
    }
}

/// Regex search over text files. Matching lines print as `path:N:text`,
/// context lines as `path-N-text`, and non-adjacent groups are separated by
/// `--`.
pub struct FileSearch {
    ws: Workspace,
    spec: ToolSpec,
}

impl FileSearch {
    pub fn new(ws: Workspace) -> Self {
        let spec = ToolSpec::new(
            "file_search",
            "Search file contents with a regular expression, showing two lines of context.",
            vec![
                ParamSpec::required("pattern", ParamKind::String).describe("Regular expression"),
                ParamSpec::optional("path", ParamKind::String, Some(json!("."))).describe("Directory to search"),
                ParamSpec::optional("glob", ParamKind::String, None).describe("Only search files matching this glob"),
            ],
        )
        .expect("valid spec");
        FileSearch { ws, spec }
    }
}

impl Tool for FileSearch {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, _cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let raw = str_arg(args, "pattern");
        let re = Regex::new(raw)
            .map_err(|e| ToolError::new("Invalid Pattern", e.to_string()).context(format!("Pattern: {raw}")))?;
        let shown = opt_str(args, "path").unwrap_or(".");
        let dir = self.ws.resolve(shown)?;
        if !dir.is_dir() {
            return Err(FsError::NotFound(shown.to_string()).into());
        }
        let filter = compile_glob(opt_str(args, "glob"))?;
        let mut out = String::new();
        let mut matches = 0;
        'files: for (rel, is_dir) in walk(&dir, true) {
            if is_dir
                || filter
                    .as_ref()
                    .is_some_and(|p| !p.matches_path_with(&rel, glob_options()))
            {
                continue;
            }
            let full = dir.join(&rel);
            if fs::symlink_metadata(&full)
                .map(|m| m.file_type().is_symlink())
                .unwrap_or(true)
            {
                continue;
            }
            let Some(text) = fs::read(&full).ok().and_then(|b| decode_text(&b)) else {
                continue;
            };
            let lines: Vec<&str> = text.lines().collect();
            let hits: Vec<usize> = (0..lines.len()).filter(|&i| re.is_match(lines[i])).collect();
            let mut printed_until: Option<usize> = None;
            for &hit in &hits {
                matches += 1;
                if matches > MAX_MATCHES {
                    let _ = writeln!(out, "... (stopped after {MAX_MATCHES} matches)");
                    break 'files;
                }
                let from = hit.saturating_sub(SEARCH_CONTEXT);
                let to = (hit + SEARCH_CONTEXT).min(lines.len() - 1);
                let from = match printed_until {
                    Some(p) if from <= p + 1 => p + 1,
                    _ => {
                        if !out.is_empty() {
                            out.push_str("--\n");
                        }
                        from
                    }
                };
                for i in from..=to {
                    let sep = if re.is_match(lines[i]) { ':' } else { '-' };
                    let _ = writeln!(out, "{}{sep}{}{sep}{}", rel.display(), i + 1, lines[i]);
                }
                printed_until = Some(to.max(printed_until.unwrap_or(0)));
            }
        }
        if matches == 0 {
            return Ok("No matches".into());
        }
        Ok(out.trim_end().to_string())
    }
}
