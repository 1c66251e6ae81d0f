use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::Context;
use crate::tooling::{ParamKind, ParamSpec, Tool, ToolContext, ToolError, ToolSpec};

/// Context metadata key holding the todo list.
pub const TODOS_KEY: &str = "todos";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TodoItem {
    pub text: String,
    #[serde(default)]
    pub done: bool,
}

pub fn todos(ctx: &Context) -> Vec<TodoItem> {
    ctx.metadata()
        .get(TODOS_KEY)
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

pub fn render_todos(items: &[TodoItem]) -> String {
    if items.is_empty() {
        return "No todos".into();
    }
    items
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. [{}] {}", i + 1, if t.done { "x" } else { " " }, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub struct TodoRead {
    spec: ToolSpec,
}

impl TodoRead {
    pub fn new() -> Self {
        let spec = ToolSpec::new("todo_read", "Show the current todo list.", vec![]).expect("valid spec");
        TodoRead { spec }
    }
}

impl Default for TodoRead {
    fn default() -> Self {
        Self::new()
    }
}

impl Tool for TodoRead {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, _args: &Map<String, Value>, cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        Ok(render_todos(&todos(cx.context)))
    }
}

pub struct TodoWrite {
    spec: ToolSpec,
}

impl TodoWrite {
    pub fn new() -> Self {
        let spec = ToolSpec::new(
            "todo_write",
            "Replace the todo list. Items are strings (pending) or objects {\"text\": ..., \"done\": bool}.",
            vec![ParamSpec::required("items", ParamKind::Array).describe("The complete new list")],
        )
        .expect("valid spec");
        TodoWrite { spec }
    }
}

impl Default for TodoWrite {
    fn default() -> Self {
        Self::new()
    }
}

fn parse_item(v: &Value) -> Option<TodoItem> {
    match v {
        Value::String(s) => Some(TodoItem {
            text: s.clone(),
            done: false,
        }),
        Value::Object(_) => serde_json::from_value(v.clone()).ok(),
        _ => None,
    }
}

impl Tool for TodoWrite {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let raw = args.get("items").and_then(Value::as_array).cloned().unwrap_or_default();
        let mut items = Vec::with_capacity(raw.len());
        for (i, v) in raw.iter().enumerate() {
            let item = parse_item(v).ok_or_else(|| {
                ToolError::new(
                    "Invalid Todo Item",
                    format!("Item {} is neither a string nor {{text, done}}", i + 1),
                )
                .context(format!("Item: {v}"))
            })?;
            items.push(item);
        }
        cx.context
            .metadata_mut()
            .insert(TODOS_KEY.into(), serde_json::to_value(&items).expect("todos serialize"));
        Ok(render_todos(&items))
    }
}
