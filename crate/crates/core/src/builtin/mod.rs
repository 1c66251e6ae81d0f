//! Sandboxed filesystem tools, a persistent shell and todo tracking.

mod files;
mod shell;
mod todo;
mod workspace;

pub use files::{
    backup_path, file_modified_since_read, file_not_read, EditFile, FileSearch, ListDirectory, ReadFile, WriteFile,
};
pub use shell::{CommandOutput, RunCommand, ShellError, ShellSession, DEFAULT_COMMAND_TIMEOUT};
pub use todo::{render_todos, todos, TodoItem, TodoRead, TodoWrite, TODOS_KEY};
pub use workspace::{decode_text, digest_hex, resolve_in_workspace, FsError, ReadRecord, Workspace, READ_REGISTRY_KEY};

use crate::tooling::Tool;

/// File tools bound to `ws`.
pub fn filesystem_tools(ws: &Workspace) -> Vec<Box<dyn Tool>> {
    vec![
        Box::new(ReadFile::new(ws.clone())),
        Box::new(WriteFile::new(ws.clone())),
        Box::new(EditFile::new(ws.clone())),
        Box::new(ListDirectory::new(ws.clone())),
        Box::new(FileSearch::new(ws.clone())),
    ]
}

/// File tools, a shell starting in the workspace root, and todos.
pub fn standard_tools(ws: &Workspace, shell: ShellSession) -> Vec<Box<dyn Tool>> {
    let mut tools = filesystem_tools(ws);
    tools.push(Box::new(RunCommand::new(shell)));
    tools.push(Box::new(TodoRead::new()));
    tools.push(Box::new(TodoWrite::new()));
    tools
}
