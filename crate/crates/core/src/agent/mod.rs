//! The tool-calling loop.

mod stream;
mod subagent;

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};

use crate::hooks::{run_post_chain, run_pre_chain, PostHook, PreHook};
use crate::model::{Context, Message, ModelError, Role, ToolCall, Usage, META_EXTRA_COST};
use crate::providers::{Provider, ProviderError, Response, StreamAggregator, StreamEvent};
use crate::tooling::{
    execute_tool, OutcomeStatus, RegistryError, Tool, ToolContext, ToolError, ToolOutcome, ToolRegistry,
};

pub use stream::TextStream;
pub use subagent::{SubagentTool, DEFAULT_MAX_DEPTH};

pub const DEFAULT_MAX_ITERATIONS: usize = 8;

/// Tool result meta keys.
pub const META_STATUS: &str = "status";
pub const META_ERROR: &str = "error";
pub const META_OUTCOME: &str = "outcome";

const INTERRUPTED_TEXT: &str = "Tool call interrupted before execution";

/// Cross-thread stop request, checked before every provider call and every
/// tool execution.
#[derive(Debug, Clone, Default)]
pub struct InterruptFlag(Arc<AtomicBool>);

impl InterruptFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn clear(&self) {
        self.0.store(false, Ordering::SeqCst);
    }

    pub fn is_set(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentEvent {
    TextDelta(String),
    /// Emitted before hooks run.
    ToolCall(ToolCall),
    /// The result message just appended to the context.
    ToolResult(Message),
    /// After each provider response.
    Usage {
        usage: Usage,
        total_cost: f64,
    },
    Done(RunStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The last response still requested tools when the budget ran out.
    MaxIterationsReached,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub status: RunStatus,
    /// Last provider response of the run, if any was received.
    pub response: Option<Response>,
    pub provider_calls: usize,
    pub tool_executions: usize,
}

impl RunResult {
    pub fn text(&self) -> &str {
        self.response.as_ref().map_or("", |r| r.text())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("max_iterations must be at least 1")]
    ZeroIterations,
}

type Observer = Box<dyn FnMut(&AgentEvent) + Send>;

pub struct Agent {
    provider: Arc<dyn Provider>,
    tools: ToolRegistry,
    context: Context,
    system_prompt: Option<String>,
    pre_hooks: Vec<Box<dyn PreHook>>,
    post_hooks: Vec<Box<dyn PostHook>>,
    max_iterations: usize,
    interrupt: InterruptFlag,
    observer: Option<Observer>,
    streaming: bool,
    depth: usize,
}

impl Agent {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        Agent {
            provider,
            tools: ToolRegistry::new(),
            context: Context::new(),
            system_prompt: None,
            pre_hooks: Vec::new(),
            post_hooks: Vec::new(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            interrupt: InterruptFlag::new(),
            observer: None,
            streaming: false,
            depth: 0,
        }
    }

    pub fn with_tools(mut self, tools: ToolRegistry) -> Self {
        self.tools = tools;
        self
    }

    pub fn with_tool(mut self, tool: Box<dyn Tool>) -> Result<Self, RegistryError> {
        self.tools.add(tool)?;
        Ok(self)
    }

    pub fn with_system_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.system_prompt = Some(prompt.into());
        self
    }

    pub fn with_context(mut self, context: Context) -> Self {
        self.context = context;
        self
    }

    pub fn with_pre_hook(mut self, hook: Box<dyn PreHook>) -> Self {
        self.pre_hooks.push(hook);
        self
    }

    pub fn with_post_hook(mut self, hook: Box<dyn PostHook>) -> Self {
        self.post_hooks.push(hook);
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Result<Self, AgentError> {
        if n == 0 {
            return Err(AgentError::ZeroIterations);
        }
        self.max_iterations = n;
        Ok(self)
    }

    pub fn with_interrupt_flag(mut self, flag: InterruptFlag) -> Self {
        self.interrupt = flag;
        self
    }

    /// Receives text deltas, tool activity and usage as they happen.
    pub fn with_observer(mut self, observer: impl FnMut(&AgentEvent) + Send + 'static) -> Self {
        self.observer = Some(Box::new(observer));
        self
    }

    /// Uses the provider's streaming endpoint inside `run`.
    pub fn streaming(mut self, on: bool) -> Self {
        self.streaming = on;
        self
    }

    pub fn set_system_prompt(&mut self, prompt: Option<String>) {
        self.system_prompt = prompt;
    }

    pub fn add_pre_hook(&mut self, hook: Box<dyn PreHook>) {
        self.pre_hooks.push(hook);
    }

    pub fn add_post_hook(&mut self, hook: Box<dyn PostHook>) {
        self.post_hooks.push(hook);
    }

    pub fn is_streaming(&self) -> bool {
        self.streaming
    }

    pub(crate) fn at_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn context(&self) -> &Context {
        &self.context
    }

    pub fn context_mut(&mut self) -> &mut Context {
        &mut self.context
    }

    pub fn replace_context(&mut self, context: Context) -> Context {
        std::mem::replace(&mut self.context, context)
    }

    pub fn provider(&self) -> &Arc<dyn Provider> {
        &self.provider
    }

    pub fn set_provider(&mut self, provider: Arc<dyn Provider>) {
        self.provider = provider;
    }

    pub fn tools(&self) -> &ToolRegistry {
        &self.tools
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    pub fn set_max_iterations(&mut self, n: usize) -> Result<(), AgentError> {
        if n == 0 {
            return Err(AgentError::ZeroIterations);
        }
        self.max_iterations = n;
        Ok(())
    }

    pub fn interrupt_flag(&self) -> InterruptFlag {
        self.interrupt.clone()
    }

    pub fn interrupt(&self) {
        self.interrupt.set();
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn emit(&mut self, event: AgentEvent) {
        if let Some(obs) = self.observer.as_mut() {
            obs(&event);
        }
    }

    fn prepare(&mut self) -> Result<(), AgentError> {
        repair(&mut self.context, self.system_prompt.as_deref())
    }

    /// Appends `text` as a user message and makes exactly one provider call.
    /// Tool calls in the reply are not executed.
    pub fn send_text_message(&mut self, text: &str) -> Result<Response, AgentError> {
        self.prepare()?;
        self.context.add_message(Message::user(text))?;
        let response = self.call_provider(false)?;
        Ok(response)
    }

    /// Streams the reply to `text`. The user and assistant messages are added
    /// to the context only when the stream completes.
    pub fn stream_text_message(&mut self, text: &str) -> Result<TextStream<'_>, AgentError> {
        TextStream::start(self, text)
    }

    /// Runs the loop with the configured iteration budget.
    pub fn run(&mut self, text: &str) -> Result<RunResult, AgentError> {
        self.run_with_limit(text, self.max_iterations)
    }

    pub fn run_with_limit(&mut self, text: &str, max_iterations: usize) -> Result<RunResult, AgentError> {
        if max_iterations == 0 {
            return Err(AgentError::ZeroIterations);
        }
        self.prepare()?;
        self.context.add_message(Message::user(text))?;
        let mut result = RunResult {
            status: RunStatus::Completed,
            response: None,
            provider_calls: 0,
            tool_executions: 0,
        };
        loop {
            if self.interrupt.is_set() {
                self.interrupt.clear();
                result.status = RunStatus::Interrupted;
                break;
            }
            if result.provider_calls == max_iterations {
                result.status = RunStatus::MaxIterationsReached;
                break;
            }
            let response = self.call_provider(self.streaming)?;
            result.provider_calls += 1;
            let calls = response.message.tool_calls.clone();
            result.response = Some(response);
            if calls.is_empty() {
                result.status = RunStatus::Completed;
                break;
            }
            let (executed, halted) = self.execute_calls(&calls)?;
            result.tool_executions += executed;
            if halted {
                self.interrupt.clear();
                result.status = RunStatus::Interrupted;
                break;
            }
        }
        self.emit(AgentEvent::Done(result.status));
        Ok(result)
    }

    fn call_provider(&mut self, stream: bool) -> Result<Response, AgentError> {
        let specs = self.tools.specs();
        let response = if stream {
            let events = self.provider.stream(&self.context, &specs)?;
            let mut agg = StreamAggregator::new(self.provider.model().dialect);
            for ev in events {
                let ev = ev?;
                if let StreamEvent::TextDelta { text } = &ev {
                    self.emit(AgentEvent::TextDelta(text.clone()));
                }
                agg.push(&ev);
            }
            agg.finish(self.provider.model(), self.provider.pricing())?
        } else {
            self.provider.complete(&self.context, &specs)?
        };
        self.context.add_message(response.message.clone())?;
        let total_cost = self.context.total_cost();
        self.emit(AgentEvent::Usage {
            usage: response.usage,
            total_cost,
        });
        Ok(response)
    }

    /// Runs each call through hooks and tools, appending one result per call.
    /// Returns the number of tools executed and whether the run must stop.
    fn execute_calls(&mut self, calls: &[ToolCall]) -> Result<(usize, bool), AgentError> {
        let mut executed = 0;
        let mut halted = false;
        for call in calls {
            if halted || self.interrupt.is_set() {
                halted = true;
                let msg = interrupted_result(call);
                self.push_result(msg)?;
                continue;
            }
            self.emit(AgentEvent::ToolCall(call.clone()));
            let decision = run_pre_chain(&mut self.pre_hooks, &call.name, &call.arguments, &self.context);
            if !decision.approved {
                let error = ToolError::new("Tool Call Rejected", decision.message.clone());
                let msg = Message::tool_result(call.id.clone(), call.name.clone(), decision.message)
                    .with_meta(META_STATUS, json!("failure"))
                    .with_meta(META_OUTCOME, json!("rejected"))
                    .with_meta(META_ERROR, serde_json::to_value(&error).expect("error serializes"));
                self.push_result(msg)?;
                halted = decision.should_interrupt;
                continue;
            }
            let (outcome, charged) = match self.tools.get_mut(&call.name) {
                None => (
                    ToolOutcome::failure(
                        ToolError::new("Unknown Tool", format!("No tool named {} is available", call.name))
                            .guidance("Call one of the tools listed in the request"),
                    ),
                    0.0,
                ),
                Some(tool) => {
                    let mut cx = ToolContext::new(&mut self.context, self.depth).with_interrupt(self.interrupt.clone());
                    let outcome = execute_tool(tool, &call.arguments, &mut cx);
                    (outcome, cx.charged())
                }
            };
            executed += 1;
            let mut msg = match outcome.status {
                OutcomeStatus::Success => {
                    let content = run_post_chain(&mut self.post_hooks, &call.name, outcome.content);
                    Message::tool_result(call.id.clone(), call.name.clone(), content)
                        .with_meta(META_STATUS, json!("success"))
                }
                OutcomeStatus::Failure => {
                    let mut m = Message::tool_result(call.id.clone(), call.name.clone(), outcome.content)
                        .with_meta(META_STATUS, json!("failure"));
                    if let Some(e) = &outcome.error {
                        m = m.with_meta(META_ERROR, serde_json::to_value(e).expect("error serializes"));
                    }
                    m
                }
            };
            if charged > 0.0 {
                msg = msg.with_meta(META_EXTRA_COST, json!(charged));
            }
            self.push_result(msg)?;
            if charged > 0.0 {
                let total_cost = self.context.total_cost();
                self.emit(AgentEvent::Usage {
                    usage: Usage::new(0, 0, charged),
                    total_cost,
                });
            }
        }
        Ok((executed, halted))
    }

    fn push_result(&mut self, msg: Message) -> Result<(), AgentError> {
        self.context.add_message(msg.clone())?;
        self.emit(AgentEvent::ToolResult(msg));
        Ok(())
    }
}

/// Repairs a history before new turns: seeds the system prompt into an empty
/// context, drops orphaned results, fills missing call ids and answers calls
/// left without results.
pub(crate) fn repair(context: &mut Context, system_prompt: Option<&str>) -> Result<(), AgentError> {
    if let Some(p) = system_prompt {
        if context.is_empty() {
            context.add_message(Message::system(p))?;
        }
    }
    context.remove_orphaned_tool_results();
    context.assign_missing_tool_call_ids();
    for call in unanswered_calls(context) {
        context.add_message(interrupted_result(&call))?;
    }
    Ok(())
}

/// Calls of the final assistant turn that have no result yet.
fn unanswered_calls(context: &Context) -> Vec<ToolCall> {
    let msgs = context.messages();
    let Some(pos) = msgs.iter().rposition(|m| m.role != Role::ToolResult) else {
        return Vec::new();
    };
    let anchor = &msgs[pos];
    if anchor.role != Role::Assistant {
        return Vec::new();
    }
    let answered: HashSet<&str> = msgs[pos + 1..]
        .iter()
        .filter_map(|m| m.tool_call_id.as_deref())
        .collect();
    anchor
        .tool_calls
        .iter()
        .filter(|c| !answered.contains(c.id.as_str()))
        .cloned()
        .collect()
}

fn interrupted_result(call: &ToolCall) -> Message {
    Message::tool_result(call.id.clone(), call.name.clone(), INTERRUPTED_TEXT)
        .with_meta(META_STATUS, json!("failure"))
        .with_meta(META_OUTCOME, json!("interrupted"))
}

/// `"success"`, `"failure"` or absent.
pub fn result_status(message: &Message) -> Option<&str> {
    message.meta.get(META_STATUS).and_then(Value::as_str)
}
