//! Interception around tool execution. Pre-hooks approve or reject a pending
//! call; post-hooks rewrite its output.

mod budget;
mod output;
mod security;

use std::panic::{catch_unwind, AssertUnwindSafe};

use serde_json::{Map, Value};

use crate::model::Context;
use crate::tooling::panic_message;

pub use budget::BudgetControlHook;
pub use output::{truncate_output, SummarizeOutputHook, TruncateOutputHook, DEFAULT_MAX_CHARS};
pub use security::{
    default_dangerous_patterns, ApprovalRequest, ApprovalResponder, ApprovalTier, ApprovalVerdict,
    DangerousCommandHook, SafeguardHook, TierRule, TierTable, UserApprovalHook,
};

pub type HookError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HookDecision {
    pub approved: bool,
    pub message: String,
    pub should_interrupt: bool,
    pub replacement_output: Option<String>,
}

impl HookDecision {
    pub fn approve() -> Self {
        HookDecision {
            approved: true,
            ..Default::default()
        }
    }

    pub fn reject(message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.is_empty() {
            message = "rejected".into();
        }
        HookDecision {
            approved: false,
            message,
            ..Default::default()
        }
    }

    /// Rejects and asks the agent loop to stop after recording the result.
    pub fn interrupt(message: impl Into<String>) -> Self {
        HookDecision {
            should_interrupt: true,
            ..Self::reject(message)
        }
    }
}

pub trait PreHook: Send {
    fn name(&self) -> &str;

    fn before_call(
        &mut self,
        tool_name: &str,
        args: &Map<String, Value>,
        context: &Context,
    ) -> Result<HookDecision, HookError>;
}

pub trait PostHook: Send {
    fn name(&self) -> &str;

    /// Returns a decision whose `replacement_output`, when set, replaces the
    /// output for the remaining hooks.
    fn after_call(&mut self, tool_name: &str, output: &str) -> Result<HookDecision, HookError>;
}

/// Evaluates `hooks` in order and returns the first rejection. A hook that
/// errors or panics counts as a rejection.
pub fn run_pre_chain(
    hooks: &mut [Box<dyn PreHook>],
    tool_name: &str,
    args: &Map<String, Value>,
    context: &Context,
) -> HookDecision {
    for hook in hooks.iter_mut() {
        let result = catch_unwind(AssertUnwindSafe(|| hook.before_call(tool_name, args, context)));
        let decision = match result {
            Ok(Ok(d)) => d,
            Ok(Err(e)) => HookDecision::reject(format!("{} failed: {e}", hook.name())),
            Err(panic) => HookDecision::reject(format!("{} failed: {}", hook.name(), panic_message(&panic))),
        };
        if !decision.approved {
            return HookDecision {
                message: if decision.message.is_empty() {
                    format!("rejected by {}", hook.name())
                } else {
                    decision.message
                },
                ..decision
            };
        }
    }
    HookDecision::approve()
}

/// Threads `output` through `hooks`. A failing hook is skipped and a warning
/// line is appended.
pub fn run_post_chain(hooks: &mut [Box<dyn PostHook>], tool_name: &str, output: String) -> String {
    let mut current = output;
    let mut warnings = Vec::new();
    for hook in hooks.iter_mut() {
        let result = catch_unwind(AssertUnwindSafe(|| hook.after_call(tool_name, &current)));
        match result {
            Ok(Ok(d)) => {
                if let Some(replacement) = d.replacement_output {
                    current = replacement;
                }
            }
            Ok(Err(e)) => warnings.push(format!("[warning: {} failed: {e}]", hook.name())),
            Err(panic) => warnings.push(format!("[warning: {} failed: {}]", hook.name(), panic_message(&panic))),
        }
    }
    for w in warnings {
        current.push('\n');
        current.push_str(&w);
    }
    current
}

/// All string leaves of `value`, depth first.
pub(crate) fn string_leaves(value: &Value, out: &mut Vec<String>) {
    match value {
        Value::String(s) => out.push(s.clone()),
        Value::Array(items) => items.iter().for_each(|v| string_leaves(v, out)),
        Value::Object(map) => map.values().for_each(|v| string_leaves(v, out)),
        _ => {}
    }
}
