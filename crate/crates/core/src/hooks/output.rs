use std::sync::Arc;

use super::{HookDecision, HookError, PostHook};
use crate::model::{Context, Message};
use crate::providers::Provider;

pub const DEFAULT_MAX_CHARS: usize = 5000;

/// Keeps the first `max_chars` characters and reports how many were dropped.
pub fn truncate_output(max_chars: usize, output: &str) -> String {
    let total = output.chars().count();
    if total <= max_chars {
        return output.to_string();
    }
    let cut = output.char_indices().nth(max_chars).map_or(output.len(), |(i, _)| i);
    format!("{}\n…[truncated {} chars]", &output[..cut], total - max_chars)
}

pub struct TruncateOutputHook {
    max_chars: usize,
}

impl TruncateOutputHook {
    pub fn new(max_chars: usize) -> Self {
        assert!(max_chars > 0, "max_chars must be positive");
        TruncateOutputHook { max_chars }
    }

    pub fn max_chars(&self) -> usize {
        self.max_chars
    }
}

impl Default for TruncateOutputHook {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_CHARS)
    }
}

impl PostHook for TruncateOutputHook {
    fn name(&self) -> &str {
        "TruncateOutputHook"
    }

    fn after_call(&mut self, _tool_name: &str, output: &str) -> Result<HookDecision, HookError> {
        Ok(HookDecision {
            replacement_output: Some(truncate_output(self.max_chars, output)),
            ..HookDecision::approve()
        })
    }
}

const SUMMARY_PROMPT: &str = "You condense tool output for another assistant. Keep file names, numbers, \
errors and anything needed to continue the task. Reply with the summary only.";

/// Replaces long outputs by a model-written summary. When the model call
/// fails the output is truncated to the threshold instead.
pub struct SummarizeOutputHook {
    provider: Arc<dyn Provider>,
    threshold_chars: usize,
}

impl SummarizeOutputHook {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        SummarizeOutputHook {
            provider,
            threshold_chars: DEFAULT_MAX_CHARS,
        }
    }

    pub fn with_threshold(mut self, threshold_chars: usize) -> Self {
        self.threshold_chars = threshold_chars.max(1);
        self
    }
}

impl PostHook for SummarizeOutputHook {
    fn name(&self) -> &str {
        "SummarizeOutputHook"
    }

    fn after_call(&mut self, tool_name: &str, output: &str) -> Result<HookDecision, HookError> {
        if output.chars().count() <= self.threshold_chars {
            return Ok(HookDecision::approve());
        }
        let mut ctx = Context::new();
        ctx.add_message(Message::system(SUMMARY_PROMPT))?;
        ctx.add_message(Message::user(format!("Output of {tool_name}:\n\n{output}")))?;
        let replacement = match self.provider.complete(&ctx, &[]) {
            Ok(r) => format!("[summarized] {}", r.text().trim()),
            Err(e) => {
                log::warn!("summarizing {tool_name} output failed: {e}");
                truncate_output(self.threshold_chars, output)
            }
        };
        Ok(HookDecision {
            replacement_output: Some(replacement),
            ..HookDecision::approve()
        })
    }
}
