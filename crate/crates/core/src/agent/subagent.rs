use serde_json::{Map, Value};

use super::{Agent, RunStatus};
use crate::tooling::{ParamKind, ParamSpec, SpecError, Tool, ToolContext, ToolError, ToolSpec};

pub const DEFAULT_MAX_DEPTH: usize = 3;

type Factory = dyn Fn() -> Agent + Send;

/// A tool that hands its task to a fresh inner agent and returns only that
/// agent's final text. The inner conversation stays private; its cost is
/// charged to the calling conversation.
pub struct SubagentTool {
    spec: ToolSpec,
    build: Box<Factory>,
    max_depth: usize,
}

impl SubagentTool {
    /// `build` is called once per invocation and must return an agent with a
    /// fresh context.
    pub fn new(name: &str, description: &str, build: impl Fn() -> Agent + Send + 'static) -> Result<Self, SpecError> {
        let spec = ToolSpec::new(
            name,
            description,
            vec![ParamSpec::required("task", ParamKind::String).describe("What the subagent should do")],
        )?;
        Ok(SubagentTool {
            spec,
            build: Box::new(build),
            max_depth: DEFAULT_MAX_DEPTH,
        })
    }

    /// Extra params are appended to the task as `name: value` lines.
    pub fn with_params(mut self, params: Vec<ParamSpec>) -> Result<Self, SpecError> {
        self.spec.params.extend(params);
        self.spec.check()?;
        Ok(self)
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }

    fn first_message(&self, args: &Map<String, Value>) -> String {
        let mut text = args.get("task").and_then(Value::as_str).unwrap_or_default().to_string();
        for p in self.spec.runtime_params().filter(|p| p.name != "task") {
            if let Some(v) = args.get(&p.name) {
                let v = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                text.push_str(&format!("\n{}: {v}", p.name));
            }
        }
        text
    }
}

impl Tool for SubagentTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn run(&mut self, args: &Map<String, Value>, cx: &mut ToolContext<'_>) -> Result<String, ToolError> {
        let depth = cx.depth + 1;
        if depth > self.max_depth {
            return Err(ToolError::new(
                "Subagent Depth Exceeded",
                format!("Nesting level {depth} is beyond the limit of {}", self.max_depth),
            )
            .guidance("Solve this step directly instead of delegating it"));
        }
        let mut agent = (self.build)().at_depth(depth);
        if let Some(flag) = &cx.interrupt {
            agent = agent.with_interrupt_flag(flag.clone());
        }
        let result = agent.run(&self.first_message(args));
        cx.charge(agent.context().total_cost());
        let result = result.map_err(|e| ToolError::new("Subagent Failed", e.to_string()))?;
        match result.status {
            RunStatus::Completed => Ok(result.text().to_string()),
            RunStatus::MaxIterationsReached => Err(ToolError::new(
                "Subagent Incomplete",
                format!(
                    "The subagent used all {} iterations without finishing",
                    agent.max_iterations()
                ),
            )
            .context(format!("Last reply: {}", result.text()))),
            RunStatus::Interrupted => {
                // the inner run consumed the shared flag; the caller must stop too
                if let Some(flag) = &cx.interrupt {
                    flag.set();
                }
                Err(ToolError::new("Subagent Interrupted", "The run was stopped"))
            }
        }
    }
}
