//! Declarative tool definitions, schema generation, argument validation and
//! exception-safe execution.

mod spec;
mod tool;
mod validate;

pub use spec::{json_kind_name, ParamKind, ParamSpec, SpecError, ToolSpec};
pub(crate) use tool::panic_message;
pub use tool::{
    execute_tool, format_error_block, format_float, FunctionTool, OutcomeStatus, RegistryError, Tool, ToolContext,
    ToolError, ToolOutcome, ToolRegistry,
};
pub use validate::{validate_args, ArgError};

/// Draft-07 JSON Schema for the model-visible params of `spec`.
pub fn generate_json_schema(spec: &ToolSpec) -> serde_json::Value {
    spec.json_schema()
}
