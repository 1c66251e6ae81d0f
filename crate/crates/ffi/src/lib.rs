//! C interface to the agent runtime.
//!
//! Every fallible function returns an [`EnsembleStatus`]; on anything but
//! `ENSEMBLE_STATUS_OK` a description is available from
//! [`ensemble_last_error`] on the same thread. Strings handed out by the
//! library are freed with [`ensemble_string_free`], handles with their own
//! `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use ensemble::agent::{Agent, InterruptFlag};
use ensemble::builtin::{standard_tools, ShellSession, Workspace};
use ensemble::hooks::{BudgetControlHook, DangerousCommandHook, TruncateOutputHook};
use ensemble::latex::{escape_latex, export_conversation};
use ensemble::model::Context;
use ensemble::providers::{HttpProvider, MockProvider, ModelRef, PricingTable, Provider, Transcript};
use ensemble::tooling::ToolRegistry;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Provider = 4,
    Io = 5,
    Conflict = 6,
    Panic = 99,
}

/// Opaque agent handle.
pub struct EnsembleAgent {
    agent: Agent,
}

/// Opaque handle that stops a run from another thread.
pub struct EnsembleInterrupt {
    flag: InterruptFlag,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EnsembleStatus, String);

impl Failure {
    fn new(status: EnsembleStatus, message: impl ToString) -> Self {
        Failure(status, message.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EnsembleStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EnsembleStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            EnsembleStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(EnsembleStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(EnsembleStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(EnsembleStatus::NullArgument, format!("{what} is NULL")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(EnsembleStatus::NullArgument, "out is NULL"));
    }
    let c = CString::new(s).map_err(|_| Failure::new(EnsembleStatus::InvalidArgument, "result contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

fn build(provider: Arc<dyn Provider>, workspace: Option<&str>) -> Result<EnsembleAgent, Failure> {
    let mut agent = Agent::new(provider)
        .with_pre_hook(Box::new(DangerousCommandHook::new()))
        .with_post_hook(Box::new(TruncateOutputHook::default()));
    if let Some(dir) = workspace {
        let ws = Workspace::new(dir).map_err(|e| Failure::new(EnsembleStatus::Io, format!("{dir}: {e}")))?;
        let shell = ShellSession::new(ws.root()).map_err(|e| Failure::new(EnsembleStatus::Io, e))?;
        let tools = ToolRegistry::with_tools(standard_tools(&ws, shell))
            .map_err(|e| Failure::new(EnsembleStatus::InvalidArgument, e))?;
        agent = agent.with_tools(tools);
    }
    Ok(EnsembleAgent { agent })
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

/// Library version; the pointer is static and must not be freed.
#[no_mangle]
pub extern "C" fn ensemble_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn ensemble_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Agent replaying a transcript fixture (JSON text). `workspace` may be
/// NULL for an agent without tools.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_new_scripted(
    transcript_json: *const c_char,
    workspace: *const c_char,
    out: *mut *mut EnsembleAgent,
) -> EnsembleStatus {
    guard(|| {
        let json = text(transcript_json, "transcript_json")?;
        let workspace = optional_text(workspace, "workspace")?;
        if out.is_null() {
            return Err(Failure::new(EnsembleStatus::NullArgument, "out is NULL"));
        }
        let transcript = Transcript::from_json(json).map_err(|e| Failure::new(EnsembleStatus::InvalidArgument, e))?;
        let agent = build(Arc::new(MockProvider::from_transcript(transcript)), workspace)?;
        *out = Box::into_raw(Box::new(agent));
        Ok(())
    })
}

/// Agent for `provider/name`, credentials taken from the environment.
/// `base_url` and `workspace` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_new(
    model: *const c_char,
    base_url: *const c_char,
    workspace: *const c_char,
    out: *mut *mut EnsembleAgent,
) -> EnsembleStatus {
    guard(|| {
        let spec = text(model, "model")?;
        let base_url = optional_text(base_url, "base_url")?;
        let workspace = optional_text(workspace, "workspace")?;
        if out.is_null() {
            return Err(Failure::new(EnsembleStatus::NullArgument, "out is NULL"));
        }
        let mut model = ModelRef::parse(spec).map_err(|e| Failure::new(EnsembleStatus::InvalidArgument, e))?;
        if let Some(url) = base_url {
            model = model
                .with_base_url(url)
                .map_err(|e| Failure::new(EnsembleStatus::InvalidArgument, e))?;
        }
        let provider =
            HttpProvider::new(model, PricingTable::bundled()).map_err(|e| Failure::new(EnsembleStatus::Provider, e))?;
        let agent = build(Arc::new(provider), workspace)?;
        *out = Box::into_raw(Box::new(agent));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_free(agent: *mut EnsembleAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_set_system_prompt(
    agent: *mut EnsembleAgent,
    prompt: *const c_char,
) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        let prompt = text(prompt, "prompt")?.to_string();
        a.agent.set_system_prompt(Some(prompt));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_set_max_iterations(agent: *mut EnsembleAgent, n: usize) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        a.agent
            .set_max_iterations(n)
            .map_err(|e| Failure::new(EnsembleStatus::InvalidArgument, e))
    })
}

/// Stops runs once the conversation cost exceeds `max_cost` dollars.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_set_budget(agent: *mut EnsembleAgent, max_cost: f64) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        if !max_cost.is_finite() || max_cost < 0.0 {
            return Err(Failure::new(
                EnsembleStatus::InvalidArgument,
                "max_cost must be a non-negative number",
            ));
        }
        a.agent.add_pre_hook(Box::new(BudgetControlHook::new(max_cost)));
        Ok(())
    })
}

/// Runs the tool loop for `message`. `out_text` receives the final reply
/// and `out_status` (nullable) 0 completed, 1 iteration limit, 2 interrupted.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_run(
    agent: *mut EnsembleAgent,
    message: *const c_char,
    out_text: *mut *mut c_char,
    out_status: *mut i32,
) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        let message = text(message, "message")?;
        if out_text.is_null() {
            return Err(Failure::new(EnsembleStatus::NullArgument, "out_text is NULL"));
        }
        let result = a
            .agent
            .run(message)
            .map_err(|e| Failure::new(EnsembleStatus::Provider, e))?;
        if !out_status.is_null() {
            *out_status = match result.status {
                ensemble::agent::RunStatus::Completed => 0,
                ensemble::agent::RunStatus::MaxIterationsReached => 1,
                ensemble::agent::RunStatus::Interrupted => 2,
            };
        }
        put_string(out_text, result.text().to_string())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_total_cost(agent: *const EnsembleAgent, out: *mut f64) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent.cast_mut(), "agent")?;
        let out = handle(out, "out")?;
        *out = a.agent.context().total_cost();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_message_count(agent: *const EnsembleAgent, out: *mut usize) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent.cast_mut(), "agent")?;
        let out = handle(out, "out")?;
        *out = a.agent.context().len();
        Ok(())
    })
}

/// Removes the last user message and everything after it.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_undo(agent: *mut EnsembleAgent) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        a.agent
            .context_mut()
            .undo()
            .map_err(|e| Failure::new(EnsembleStatus::Conflict, e))
    })
}

/// The conversation in its persisted JSON form.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_context_json(
    agent: *const EnsembleAgent,
    out: *mut *mut c_char,
) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent.cast_mut(), "agent")?;
        let json = String::from_utf8(a.agent.context().to_json())
            .map_err(|e| Failure::new(EnsembleStatus::InvalidArgument, e))?;
        put_string(out, json)
    })
}

/// Replaces the conversation with a persisted one.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_load_context_json(
    agent: *mut EnsembleAgent,
    json: *const c_char,
) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        let json = text(json, "json")?;
        let ctx = Context::from_json(json.as_bytes()).map_err(|e| Failure::new(EnsembleStatus::InvalidArgument, e))?;
        a.agent.replace_context(ctx);
        Ok(())
    })
}

/// LaTeX fragment of the whole conversation.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_export_latex(
    agent: *const EnsembleAgent,
    out: *mut *mut c_char,
) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent.cast_mut(), "agent")?;
        let tex = export_conversation(a.agent.context(), None)
            .map_err(|e| Failure::new(EnsembleStatus::InvalidArgument, e))?;
        put_string(out, tex)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_escape_latex(input: *const c_char, out: *mut *mut c_char) -> EnsembleStatus {
    guard(|| {
        let input = text(input, "input")?;
        put_string(out, escape_latex(input))
    })
}

/// Handle that may be used from any thread while a run is in progress.
#[no_mangle]
pub unsafe extern "C" fn ensemble_agent_interrupt_handle(
    agent: *const EnsembleAgent,
    out: *mut *mut EnsembleInterrupt,
) -> EnsembleStatus {
    guard(|| {
        let a = handle(agent.cast_mut(), "agent")?;
        if out.is_null() {
            return Err(Failure::new(EnsembleStatus::NullArgument, "out is NULL"));
        }
        *out = Box::into_raw(Box::new(EnsembleInterrupt {
            flag: a.agent.interrupt_flag(),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_interrupt_trigger(handle: *const EnsembleInterrupt) -> EnsembleStatus {
    guard(|| {
        let h = handle
            .as_ref()
            .ok_or_else(|| Failure::new(EnsembleStatus::NullArgument, "handle is NULL"))?;
        h.flag.set();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ensemble_interrupt_free(handle: *mut EnsembleInterrupt) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}
