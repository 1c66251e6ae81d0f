use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};

use crate::tooling::{ParamKind, ParamSpec, Tool, ToolContext, ToolError, ToolSpec};

pub const DEFAULT_COMMAND_TIMEOUT: Duration = Duration::from_secs(60);

/// Variables the shell maintains itself; never captured as overrides.
const SHELL_MANAGED: &[&str] = &["PWD", "OLDPWD", "SHLVL", "_"];

#[derive(Debug, thiserror::Error)]
pub enum ShellError {
    #[error("command must not be empty")]
    EmptyCommand,
    #[error("could not start the shell: {0}")]
    SpawnFailure(String),
    #[error("command timed out after {timeout:?}")]
    Timeout { timeout: Duration, partial_output: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    /// Interleaved stdout and stderr.
    pub output: String,
    pub exit_code: Option<i32>,
    /// Notes about state changes that were refused.
    pub notes: Vec<String>,
}

/// Shell state carried between otherwise independent shell processes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShellSession {
    working_dir: PathBuf,
    env_overrides: BTreeMap<String, String>,
    history: Vec<String>,
    allowed_roots: Vec<PathBuf>,
    timeout: Duration,
}

impl ShellSession {
    /// Starts in `working_dir`, which also becomes the first allowed root.
    pub fn new(working_dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let working_dir = std::fs::canonicalize(working_dir)?;
        Ok(ShellSession {
            allowed_roots: vec![working_dir.clone()],
            working_dir,
            env_overrides: BTreeMap::new(),
            history: Vec::new(),
            timeout: DEFAULT_COMMAND_TIMEOUT,
        })
    }

    pub fn allow_root(mut self, root: impl AsRef<Path>) -> std::io::Result<Self> {
        self.allowed_roots.push(std::fs::canonicalize(root)?);
        Ok(self)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn working_dir(&self) -> &Path {
        &self.working_dir
    }

    pub fn env_overrides(&self) -> &BTreeMap<String, String> {
        &self.env_overrides
    }

    pub fn history(&self) -> &[String] {
        &self.history
    }

    pub fn allowed_roots(&self) -> &[PathBuf] {
        &self.allowed_roots
    }

    fn is_allowed(&self, dir: &Path) -> bool {
        self.allowed_roots.iter().any(|r| dir.starts_with(r))
    }

    /// Runs `command` with bash in the session's directory and environment.
    /// With `persist`, the final directory and exported variables are kept.
    pub fn run(&mut self, command: &str, persist: bool) -> Result<CommandOutput, ShellError> {
        if command.trim().is_empty() {
            return Err(ShellError::EmptyCommand);
        }
        self.history.push(command.to_string());
        let sentinel = sentinel();
        let script =
            format!("exec 2>&1\n{command}\n__status=$?\nprintf '\\n%s\\n' '{sentinel}'\npwd\nenv -0\nexit $__status\n");
        let mut cmd = Command::new("bash");
        cmd.arg("--noprofile")
            .arg("--norc")
            .arg("-c")
            .arg(script)
            .current_dir(&self.working_dir)
            .envs(&self.env_overrides)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let mut child = cmd.spawn().map_err(|e| ShellError::SpawnFailure(e.to_string()))?;

        let buffer = Arc::new(Mutex::new(Vec::new()));
        let mut stdout = child.stdout.take().expect("piped stdout");
        let sink = Arc::clone(&buffer);
        let reader = thread::spawn(move || {
            let mut chunk = [0u8; 8192];
            loop {
                match stdout.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => sink.lock().unwrap().extend_from_slice(&chunk[..n]),
                }
            }
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => break None,
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(ShellError::SpawnFailure(e.to_string())),
            }
        };
        let Some(status) = status else {
            kill_group(&mut child);
            let _ = child.wait();
            join_briefly(reader);
            let raw = buffer.lock().unwrap().clone();
            let text = String::from_utf8_lossy(&raw);
            let partial = text.split(&sentinel).next().unwrap_or_default().to_string();
            return Err(ShellError::Timeout {
                timeout: self.timeout,
                partial_output: partial,
            });
        };
        join_briefly(reader);
        let raw = buffer.lock().unwrap().clone();
        let (output, trailer) = split_trailer(&raw, &sentinel);
        let mut notes = Vec::new();
        if persist {
            if let Some((dir, env)) = trailer {
                self.absorb(dir, env, &mut notes);
            }
        }
        Ok(CommandOutput {
            output,
            exit_code: status.code(),
            notes,
        })
    }

    fn absorb(&mut self, dir: PathBuf, env: BTreeMap<String, String>, notes: &mut Vec<String>) {
        if dir != self.working_dir {
            if self.is_allowed(&dir) && dir.is_dir() {
                self.working_dir = dir;
            } else {
                notes.push(format!(
                    "working directory {} is outside the allowed roots; staying in {}",
                    dir.display(),
                    self.working_dir.display()
                ));
            }
        }
        for (k, v) in env {
            if SHELL_MANAGED.contains(&k.as_str()) {
                continue;
            }
            let baseline = self.env_overrides.get(&k).cloned().or_else(|| std::env::var(&k).ok());
            if baseline.as_deref() != Some(v.as_str()) {
                self.env_overrides.insert(k, v);
            }
        }
    }
}

fn sentinel() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    format!("__SHELL_STATE_{}_{n}__", std::process::id())
}

/// Splits captured bytes into the command's own output and the parsed
/// `(pwd, env)` trailer. Without a sentinel (the command exited the shell
/// early) there is no trailer.
fn split_trailer(raw: &[u8], sentinel: &str) -> (String, Option<(PathBuf, BTreeMap<String, String>)>) {
    let marker = format!("\n{sentinel}\n");
    let Some(pos) = find(raw, marker.as_bytes()) else {
        return (String::from_utf8_lossy(raw).into_owned(), None);
    };
    let output = String::from_utf8_lossy(&raw[..pos]).into_owned();
    let rest = &raw[pos + marker.len()..];
    let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
        return (output, None);
    };
    let dir = PathBuf::from(String::from_utf8_lossy(&rest[..nl]).into_owned());
    let env = rest[nl + 1..]
        .split(|&b| b == 0)
        .filter_map(|entry| {
            let entry = String::from_utf8_lossy(entry);
            let (k, v) = entry.split_once('=')?;
            Some((k.to_string(), v.to_string()))
        })
        .collect();
    (output, Some((dir, env)))
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).rposition(|w| w == needle)
}

fn kill_group(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        let pid = child.id() as libc::pid_t;
        // SAFETY: signals the process group created for this child only
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

fn join_briefly(handle: thread::JoinHandle<()>) {
    // a detached grandchild may keep the pipe open; do not wait for it forever
    let deadline = Instant::now() + Duration::from_millis(500);
    while !handle.is_finished() && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(2));
    }
    if handle.is_finished() {
        let _ = handle.join();
    }
}

pub struct RunCommand {
    session: ShellSession,
    spec: ToolSpec,
}

impl RunCommand {
    pub fn new(session: ShellSession) -> Self {
        let spec = ToolSpec::new(
            "run_command",
            "Run a shell command. The working directory and exported variables carry over to later calls.",
            vec![
                ParamSpec::required("command", ParamKind::String).describe("Command line for bash"),
                ParamSpec::optional("persist", ParamKind::Boolean, Some(json!(true)))
                    .describe("Keep directory and environment changes for later commands"),
            ],
        )
        .expect("valid spec");
        RunCommand { session, spec }
    }

    pub fn session(&self) -> &ShellSession {
        &self.session
    }
}

impl Tool for RunCommand {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, _cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let command = args.get("command").and_then(Value::as_str).unwrap_or_default();
        let persist = args.get("persist").and_then(Value::as_bool).unwrap_or(true);
        match self.session.run(command, persist) {
            Ok(out) => {
                let mut text = out.output;
                if !text.is_empty() && !text.ends_with('\n') {
                    text.push('\n');
                }
                for note in &out.notes {
                    text.push_str(&format!("[note: {note}]\n"));
                }
                match out.exit_code {
                    Some(code) => text.push_str(&format!("[exit status: {code}]")),
                    None => text.push_str("[exit status: killed by signal]"),
                }
                Ok(text)
            }
            Err(ShellError::Timeout {
                timeout,
                partial_output,
            }) => {
                let mut err = ToolError::new(
                    "Command Timed Out",
                    format!("The command did not finish within {}s", timeout.as_secs_f64()),
                )
                .context(format!("Command: {command}"));
                if !partial_output.is_empty() {
                    err = err.context(format!("Partial output:\n{partial_output}"));
                }
                Err(err.guidance("Run long tasks in the background or split them into smaller steps"))
            }
            Err(e) => Err(ToolError::new("Command Failed", e.to_string()).context(format!("Command: {command}"))),
        }
    }
}
