use super::Console;
use crate::agent::{result_status, Agent, AgentEvent, RunStatus};
use crate::hooks::{ApprovalRequest, ApprovalResponder, ApprovalVerdict};
use crate::latex::export_conversation;
use crate::model::Context;

const HELP: &str = "Commands:
  /cost          total cost of the conversation
  /undo          remove the last exchange
  /save PATH     write the conversation to PATH
  /load PATH     replace the conversation with the one in PATH
  /export [PATH] LaTeX of the conversation, printed or written to PATH
  /help          this text
  /quit          leave";

/// Asks on the console. Anything but `y`/`yes` denies; end of input counts
/// as no answer.
pub struct StdinApprover {
    console: Console,
}

impl StdinApprover {
    pub fn new(console: Console) -> Self {
        StdinApprover { console }
    }
}

impl ApprovalResponder for StdinApprover {
    fn decide(&mut self, request: &ApprovalRequest) -> Option<ApprovalVerdict> {
        self.console.print(&format!(
            "\nApprove {} {} [{}]? [y/N] ",
            request.tool_name,
            request.rendered_args(),
            request.tier
        ));
        let answer = self.console.read_line()?;
        Some(match answer.trim().to_ascii_lowercase().as_str() {
            "y" | "yes" => ApprovalVerdict::allow(),
            _ => ApprovalVerdict::deny(),
        })
    }
}

pub struct Repl {
    agent: Agent,
    console: Console,
    streaming: bool,
}

impl Repl {
    pub fn new(agent: Agent, console: Console) -> Self {
        let printer = console.clone();
        let agent = agent.with_observer(move |ev| match ev {
            AgentEvent::TextDelta(t) => printer.print(t),
            AgentEvent::ToolCall(c) => printer.println(&format!(
                "\n[{}] {}",
                c.name,
                serde_json::Value::Object(c.arguments.clone())
            )),
            AgentEvent::ToolResult(m) => {
                let first = m.text.lines().next().unwrap_or("");
                printer.println(&format!(
                    "[{} {}] {first}",
                    m.tool_name.as_deref().unwrap_or("tool"),
                    result_status(m).unwrap_or("done")
                ));
            }
            _ => {}
        });
        let streaming = agent.is_streaming();
        Repl {
            agent,
            console,
            streaming,
        }
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    /// Reads until end of input or `/quit`.
    pub fn run(&mut self) {
        loop {
            self.console.print("> ");
            let Some(line) = self.console.read_line() else {
                self.console.println("");
                break;
            };
            if !self.handle_line(&line) {
                break;
            }
        }
    }

    /// Returns `false` when the session should end.
    pub fn handle_line(&mut self, line: &str) -> bool {
        let line = line.trim();
        if line.is_empty() {
            return true;
        }
        if let Some(cmd) = line.strip_prefix('/') {
            return self.command(cmd);
        }
        match self.agent.run(line) {
            Ok(result) => {
                if self.streaming {
                    self.console.println("");
                } else {
                    self.console.println(result.text());
                }
                match result.status {
                    RunStatus::Completed => {}
                    RunStatus::MaxIterationsReached => self.console.println("[stopped: iteration limit reached]"),
                    RunStatus::Interrupted => self.console.println("[interrupted]"),
                }
            }
            Err(e) => self.console.println(&format!("error: {e}")),
        }
        true
    }

    fn command(&mut self, cmd: &str) -> bool {
        let (name, arg) = match cmd.split_once(char::is_whitespace) {
            Some((n, a)) => (n, a.trim()),
            None => (cmd, ""),
        };
        match name {
            "quit" | "exit" => return false,
            "help" => self.console.println(HELP),
            "cost" => self
                .console
                .println(&format!("Total cost: ${:.6}", self.agent.context().total_cost())),
            "undo" => match self.agent.context_mut().undo() {
                Ok(()) => self
                    .console
                    .println(&format!("Undone. {} messages remain.", self.agent.context().len())),
                Err(e) => self.console.println(&format!("error: {e}")),
            },
            "save" if !arg.is_empty() => match self.agent.context().save(arg) {
                Ok(()) => self.console.println(&format!("Saved to {arg}")),
                Err(e) => self.console.println(&format!("error: {e}")),
            },
            "load" if !arg.is_empty() => match Context::load(arg) {
                Ok(ctx) => {
                    let n = ctx.len();
                    self.agent.replace_context(ctx);
                    self.console.println(&format!("Loaded {n} messages from {arg}"));
                }
                Err(e) => self.console.println(&format!("error: {e}")),
            },
            "export" => match export_conversation(self.agent.context(), None) {
                Ok(tex) if arg.is_empty() => self.console.println(&tex),
                Ok(tex) => match std::fs::write(arg, tex) {
                    Ok(()) => self.console.println(&format!("Exported to {arg}")),
                    Err(e) => self.console.println(&format!("error: {e}")),
                },
                Err(e) => self.console.println(&format!("error: {e}")),
            },
            "save" | "load" => self.console.println(&format!("usage: /{name} PATH")),
            _ => self.console.println(&format!("Unknown command /{name}. Try /help.")),
        }
        true
    }
}
