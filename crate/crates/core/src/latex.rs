//! LaTeX export using four message environments defined by
//! `assets/orchestral.tex`.
//!
//! User messages become `orchestralusermessage`. An assistant turn, together
//! with the tool results and follow-up assistant messages up to the next user
//! message, becomes one `orchestralagentmessage` with the tool boxes nested in
//! order. System messages are not exported.

use std::ops::Range;

use serde_json::Value;

use crate::agent::META_ERROR;
use crate::model::{Context, Message, Role, ToolCall};
use crate::tooling::ToolError;

pub const PREAMBLE: &str = include_str!("../assets/orchestral.tex");

pub const USER_ENV: &str = "orchestralusermessage";
pub const AGENT_ENV: &str = "orchestralagentmessage";
pub const TOOL_ENV: &str = "orchestraltoolmessage";
pub const TOOL_ERROR_ENV: &str = "orchestraltoolerrormessage";

const TITLE_ARGS_MAX: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatexError {
    #[error("range {from}..{to} is outside the conversation of {len} messages")]
    RangeOutOfBounds { from: usize, to: usize, len: usize },
}

/// Content of the preamble file.
pub fn emit_preamble() -> &'static str {
    PREAMBLE
}

/// Escapes the ten LaTeX special characters. Input is taken as raw text.
pub fn escape_latex(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\textbackslash{}"),
            '{' => out.push_str("\\{"),
            '}' => out.push_str("\\}"),
            '$' => out.push_str("\\$"),
            '&' => out.push_str("\\&"),
            '#' => out.push_str("\\#"),
            '^' => out.push_str("\\textasciicircum{}"),
            '_' => out.push_str("\\_"),
            '%' => out.push_str("\\%"),
            '~' => out.push_str("\\textasciitilde{}"),
            c => out.push(c),
        }
    }
    out
}

/// `read_file` → `ReadFile`; names that are already capitalized are kept.
pub fn display_name(tool_name: &str) -> String {
    tool_name
        .split(['_', '-'])
        .filter(|p| !p.is_empty())
        .map(|p| {
            let mut cs = p.chars();
            match cs.next() {
                Some(f) => f.to_uppercase().chain(cs).collect::<String>(),
                None => String::new(),
            }
        })
        .collect()
}

fn render_arg(v: &Value) -> String {
    match v {
        Value::String(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

/// `Name( k = "v", n = 2 )` with the argument list cut at 60 characters.
pub fn tool_title(tool_name: &str, call: Option<&ToolCall>) -> String {
    let name = display_name(tool_name);
    let args = call
        .map(|c| {
            c.arguments
                .iter()
                .map(|(k, v)| format!("{k} = {}", render_arg(v)))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .unwrap_or_default();
    if args.is_empty() {
        return format!("{}()", escape_latex(&name));
    }
    let shown = if args.chars().count() > TITLE_ARGS_MAX {
        let cut: String = args.chars().take(TITLE_ARGS_MAX).collect();
        format!("{}\\ldots{{}}", escape_latex(&cut))
    } else {
        escape_latex(&args)
    };
    format!("{}( {shown} )", escape_latex(&name))
}

/// `Name: first-argument` for failed calls.
pub fn error_title(tool_name: &str, call: Option<&ToolCall>) -> String {
    let name = display_name(tool_name);
    let first = call.and_then(|c| c.arguments.values().next()).map(|v| match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    });
    match first {
        Some(v) => {
            let v: String = if v.chars().count() > TITLE_ARGS_MAX {
                v.chars().take(TITLE_ARGS_MAX).collect::<String>() + "..."
            } else {
                v
            };
            escape_latex(&format!("{name}: {v}"))
        }
        None => escape_latex(&name),
    }
}

fn env(name: &str, arg: Option<&str>, body: &str) -> String {
    let arg = arg.map(|a| format!("{{{a}}}")).unwrap_or_default();
    format!("\\begin{{{name}}}{arg}\n{body}\n\\end{{{name}}}")
}

fn error_body(e: &ToolError) -> String {
    let mut parts = vec![
        format!("\\textbf{{Error:}} {}", escape_latex(&e.title)),
        format!("\\textbf{{Reason:}} {}", escape_latex(&e.reason)),
    ];
    let mut lines = e.context_lines.iter();
    if let Some(first) = lines.next() {
        parts.push(format!("\\textbf{{Context:}} {}", escape_latex(first)));
        parts.extend(lines.map(|l| escape_latex(l)));
    }
    if !e.guidance.is_empty() {
        parts.push(escape_latex(&e.guidance));
    }
    parts.join("\n\n")
}

fn is_failure(m: &Message) -> bool {
    m.meta.get("status").and_then(Value::as_str) == Some("failure")
}

/// One block for `message`. `call` supplies the arguments shown in a tool
/// result's title.
pub fn export_message(message: &Message, call: Option<&ToolCall>) -> String {
    match message.role {
        Role::System => String::new(),
        Role::User => env(USER_ENV, None, &escape_latex(&message.text)),
        Role::Assistant => env(AGENT_ENV, None, &escape_latex(&message.text)),
        Role::ToolResult => tool_block(message, call),
    }
}

fn tool_block(message: &Message, call: Option<&ToolCall>) -> String {
    let name = message
        .tool_name
        .as_deref()
        .or(call.map(|c| c.name.as_str()))
        .unwrap_or("Tool");
    if is_failure(message) {
        let body = message
            .meta
            .get(META_ERROR)
            .and_then(|v| serde_json::from_value::<ToolError>(v.clone()).ok())
            .map(|e| error_body(&e))
            .unwrap_or_else(|| escape_latex(&message.text));
        env(TOOL_ERROR_ENV, Some(&error_title(name, call)), &body)
    } else {
        env(TOOL_ENV, Some(&tool_title(name, call)), &escape_latex(&message.text))
    }
}

fn find_call<'a>(messages: &'a [Message], upto: usize, id: &str) -> Option<&'a ToolCall> {
    messages[..upto]
        .iter()
        .rev()
        .filter(|m| m.role == Role::Assistant)
        .flat_map(|m| m.tool_calls.iter())
        .find(|c| c.id == id)
}

/// Exports `range` (all messages when `None`) as a document fragment.
pub fn export_conversation(context: &Context, range: Option<Range<usize>>) -> Result<String, LatexError> {
    let messages = context.messages();
    let range = range.unwrap_or(0..messages.len());
    if range.start > range.end || range.end > messages.len() {
        return Err(LatexError::RangeOutOfBounds {
            from: range.start,
            to: range.end,
            len: messages.len(),
        });
    }
    let mut blocks: Vec<String> = Vec::new();
    let mut group: Option<Vec<String>> = None;
    let close = |group: &mut Option<Vec<String>>, blocks: &mut Vec<String>| {
        if let Some(parts) = group.take() {
            blocks.push(env(AGENT_ENV, None, &parts.join("\n\n")));
        }
    };
    for i in range {
        let m = &messages[i];
        match m.role {
            Role::System => {}
            Role::User => {
                close(&mut group, &mut blocks);
                blocks.push(export_message(m, None));
            }
            Role::Assistant => {
                if !m.text.is_empty() {
                    group.get_or_insert_with(Vec::new).push(escape_latex(&m.text));
                } else {
                    group.get_or_insert_with(Vec::new);
                }
            }
            Role::ToolResult => {
                let call = m.tool_call_id.as_deref().and_then(|id| find_call(messages, i, id));
                group.get_or_insert_with(Vec::new).push(tool_block(m, call));
            }
        }
    }
    close(&mut group, &mut blocks);
    Ok(blocks.join("\n\n"))
}

/// Checks that every `\begin{env}` is closed in order.
pub fn environments_balanced(latex: &str) -> bool {
    let re = regex::Regex::new(r"\\(begin|end)\{([a-zA-Z*]+)\}").expect("valid regex");
    let mut stack = Vec::new();
    for cap in re.captures_iter(latex) {
        let name = cap[2].to_string();
        if &cap[1] == "begin" {
            stack.push(name);
        } else if stack.pop().as_deref() != Some(name.as_str()) {
            return false;
        }
    }
    stack.is_empty()
}
