//! One function per acceptance criterion. Each returns a short summary on
//! success and the first counterexample on failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use ensemble::agent::{result_status, Agent, RunStatus, META_OUTCOME};
use ensemble::builtin::{
    file_modified_since_read, file_not_read, EditFile, ReadFile, RunCommand, ShellSession, Workspace, WriteFile,
};
use ensemble::hooks::{BudgetControlHook, DangerousCommandHook, PreHook};
use ensemble::latex::{self, environments_balanced, export_conversation};
use ensemble::model::{Context, Message, ToolCall};
use ensemble::providers::{
    aggregate_stream, decode_response, encode_request, parse_stream, MockProvider, ModelRef, PricingTable, Provider,
    Response, ScriptedTurn, StopReason, WireDialect,
};
use ensemble::tooling::{execute_tool, validate_args, FunctionTool, ParamKind, ParamSpec, Tool, ToolContext, ToolSpec};

use super::*;

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const DIALECTS: [WireDialect; 2] = [WireDialect::OpenAiChat, WireDialect::AnthropicMessages];

fn user_context(text: &str) -> Context {
    let mut c = Context::new();
    c.add_message(Message::user(text)).unwrap();
    c
}

fn mock_pricing() -> PricingTable {
    PricingTable::new().with("mock", "*", 3.0, 15.0)
}

pub fn obj(v: Value) -> Map<String, Value> {
    v.as_object().cloned().expect("object literal")
}

// ---------------------------------------------------------------- streaming

pub fn streaming_equivalence(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = user_context("go");
    let mut serial = 0;
    let mut interlaced = 0;
    let mut compared = 0;
    for i in 0..200 {
        let mut turn = scripted_turn(&mut rng, 3, &mut serial);
        if i % 3 == 0 {
            turn.tool_calls = (0..3)
                .map(|_| {
                    serial += 1;
                    tool_call(&mut rng, format!("call_{serial}"))
                })
                .collect();
        }
        if rng.gen_bool(0.1) {
            turn.stop_reason = Some(StopReason::MaxTokens);
        }
        for dialect in DIALECTS {
            let blocking = MockProvider::new(vec![turn.clone()])
                .with_dialect(dialect)
                .with_pricing(mock_pricing());
            let expected = blocking.complete(&ctx, &[]).map_err(|e| format!("turn {i}: {e}"))?;

            let mut oracle = turn.response();
            oracle.price(blocking.model(), blocking.pricing());
            ensure!(
                same_response(&oracle, &expected),
                "turn {i} {dialect:?}: blocking path altered the turn"
            );

            for chunk in [1, 2, 3, 5, 8, rng.gen_range(1..40), 10_000] {
                let stream_seed = rng.gen();
                let streaming = MockProvider::new(vec![turn.clone()])
                    .with_dialect(dialect)
                    .with_pricing(mock_pricing())
                    .with_chunk_size(chunk)
                    .with_seed(stream_seed);
                if turn.tool_calls.len() == 3 && dialect == WireDialect::OpenAiChat {
                    let frags = ensemble::providers::plan_fragments(
                        &turn.response(),
                        chunk,
                        &mut rand::rngs::StdRng::seed_from_u64(stream_seed),
                    );
                    if is_interlaced(&frags) {
                        interlaced += 1;
                    }
                }
                let events = streaming
                    .stream(&ctx, &[])
                    .and_then(|s| s.collect::<Result<Vec<_>, _>>())
                    .map_err(|e| format!("turn {i}: {e}"))?;
                let got = aggregate_stream(events, streaming.pricing(), streaming.model())
                    .map_err(|e| format!("turn {i} {dialect:?} chunk {chunk}: {e}"))?;
                ensure!(
                    same_response(&expected, &got),
                    "turn {i} {dialect:?} chunk {chunk}: streamed {got:?} != blocking {expected:?}"
                );
                compared += 1;
            }
        }
    }
    ensure!(interlaced > 0, "no interlaced three-call stream was generated");
    Ok(format!(
        "{compared} stream/blocking pairs equal, {interlaced} interlaced 3-call streams"
    ))
}

fn is_interlaced(frags: &[ensemble::providers::Fragment]) -> bool {
    let indices: Vec<usize> = frags
        .iter()
        .filter_map(|f| match f {
            ensemble::providers::Fragment::Call { index, .. } => Some(*index),
            _ => None,
        })
        .collect();
    let mut finished = std::collections::HashSet::new();
    for w in indices.windows(2) {
        if w[0] != w[1] {
            if finished.contains(&w[1]) {
                return true;
            }
            finished.insert(w[0]);
        }
    }
    false
}

// ---------------------------------------------------------------- context

pub fn context_integrity(seed: u64, n: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..n {
        let ctx = history(&mut rng);
        let msgs = ctx.messages();
        ensure!(
            (ctx.total_cost() - cost_sum(msgs)).abs() <= 1e-9,
            "case {case}: total_cost {} vs sum {}",
            ctx.total_cost(),
            cost_sum(msgs)
        );

        let expected = brute_force_orphans(msgs);
        ensure!(
            ctx.orphaned_tool_results() == expected,
            "case {case}: orphan sets differ"
        );
        let mut cleaned = ctx.clone();
        let removed = cleaned.remove_orphaned_tool_results();
        ensure!(
            removed == expected.len(),
            "case {case}: removed {removed}, expected {}",
            expected.len()
        );
        ensure!(
            brute_force_orphans(cleaned.messages()).is_empty(),
            "case {case}: orphans survive cleaning"
        );
        ensure!(
            (cleaned.total_cost() - cost_sum(cleaned.messages())).abs() <= 1e-9,
            "case {case}: cost drift after cleaning"
        );

        let mut ided = ctx.clone();
        ided.assign_missing_tool_call_ids();
        let ids: Vec<&str> = ided
            .messages()
            .iter()
            .flat_map(|m| m.tool_calls.iter().map(|c| c.id.as_str()))
            .collect();
        ensure!(ids.iter().all(|id| !id.is_empty()), "case {case}: id left empty");
        let unique: std::collections::HashSet<&&str> = ids.iter().collect();
        ensure!(unique.len() == ids.len(), "case {case}: duplicate call ids {ids:?}");
        let mut again = ided.clone();
        again.assign_missing_tool_call_ids();
        ensure!(again == ided, "case {case}: id assignment not idempotent");

        let bytes = ctx.to_json();
        let back = Context::from_json(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(back == ctx, "case {case}: JSON round trip changed the context");
        if case % 50 == 0 {
            let path = dir.path().join(format!("c{case}.json"));
            ctx.save(&path).map_err(|e| e.to_string())?;
            let loaded = Context::load(&path).map_err(|e| e.to_string())?;
            ensure!(loaded == ctx, "case {case}: file round trip changed the context");
        }

        let mut grown = ctx.clone();
        grown.add_message(Message::user("one more")).unwrap();
        ensure!(
            (grown.total_cost() - cost_sum(grown.messages())).abs() <= 1e-9,
            "case {case}: cost drift after add"
        );
        grown.undo().map_err(|e| format!("case {case}: {e}"))?;
        ensure!(
            grown.messages() == ctx.messages(),
            "case {case}: undo after add is not identity"
        );
        ensure!(
            (grown.total_cost() - ctx.total_cost()).abs() <= 1e-9,
            "case {case}: cost drift after undo"
        );

        let mut cut = ctx.clone();
        cut.truncate(rng.gen_range(0..=ctx.len()));
        ensure!(
            (cut.total_cost() - cost_sum(cut.messages())).abs() <= 1e-9,
            "case {case}: cost drift after truncate"
        );
    }
    Ok(format!("{n} histories"))
}

// ---------------------------------------------------------------- schema

pub fn schema_equivalence(seed: u64, specs: usize, args_per_spec: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    let mut rejected = 0;
    for s in 0..specs {
        let spec = tool_spec(&mut rng);
        let schema = spec.json_schema();
        let props = schema["properties"].as_object().cloned().unwrap_or_default();
        for p in spec.state_params() {
            ensure!(
                !props.contains_key(&p.name),
                "spec {s}: state field {} in schema",
                p.name
            );
            ensure!(
                !schema["required"].as_array().unwrap().contains(&json!(p.name)),
                "spec {s}: state field {} required",
                p.name
            );
        }
        let compiled = jsonschema::JSONSchema::options()
            .with_draft(jsonschema::Draft::Draft7)
            .compile(&schema)
            .map_err(|e| format!("spec {s}: schema does not compile: {e}"))?;
        for _ in 0..args_per_spec {
            let args = args_for(&mut rng, &spec);
            let ours = validate_args(&spec, &args).is_ok();
            let theirs = compiled.is_valid(&Value::Object(args.clone()));
            ensure!(
                ours == theirs,
                "spec {s} {schema}: args {} accepted by validate_args={ours}, by JSON Schema={theirs}",
                Value::Object(args)
            );
            if ours {
                accepted += 1;
            } else {
                rejected += 1;
            }
        }
    }
    Ok(format!(
        "{specs} specs, {accepted} accepted / {rejected} rejected argument sets agree"
    ))
}

// ---------------------------------------------------------------- agent loop

fn echo_tool() -> Box<dyn Tool> {
    let spec = ToolSpec::new(
        "echo",
        "Echo the text back.",
        vec![ParamSpec::optional("text", ParamKind::String, Some(json!("")))],
    )
    .unwrap();
    Box::new(FunctionTool::new(spec, |args, _| Ok(args["text"].clone())))
}

fn echo_call<R: Rng>(rng: &mut R, serial: &mut usize) -> ToolCall {
    *serial += 1;
    ToolCall::new(format!("call_{serial}"), "echo", obj(json!({"text": text(rng, 6)})))
}

fn echo_turn<R: Rng>(rng: &mut R, calls: usize, serial: &mut usize) -> ScriptedTurn {
    let mut t = ScriptedTurn::text(text(rng, 10)).with_usage(rng.gen_range(1..500), rng.gen_range(1..200));
    t.tool_calls = (0..calls).map(|_| echo_call(rng, serial)).collect();
    t
}

fn agent_with(mock: MockProvider) -> (Agent, Arc<MockProvider>) {
    let mock = Arc::new(mock);
    let agent = Agent::new(mock.clone()).with_tool(echo_tool()).unwrap();
    (agent, mock)
}

fn context_is_valid(ctx: &Context) -> Result<(), String> {
    let orphans = brute_force_orphans(ctx.messages());
    ensure!(orphans.is_empty(), "orphaned results at {orphans:?}");
    let open = unanswered(ctx.messages());
    ensure!(open.is_empty(), "calls without results: {open:?}");
    Ok(())
}

pub fn agent_loop_laws(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut serial = 0;

    for trial in 0..150 {
        let max = rng.gen_range(1..=5);
        let turns: Vec<ScriptedTurn> = (0..=max)
            .map(|_| {
                let calls = if rng.gen_bool(0.7) { rng.gen_range(1..=3) } else { 0 };
                echo_turn(&mut rng, calls, &mut serial)
            })
            .collect();
        let (mut agent, mock) = agent_with(
            MockProvider::new(turns.clone())
                .with_dialect(DIALECTS[trial % 2])
                .with_seed(trial as u64),
        );
        agent = agent.streaming(rng.gen()).with_max_iterations(max).unwrap();
        let r = agent.run("go").map_err(|e| format!("trial {trial}: {e}"))?;
        ensure!(
            r.provider_calls <= max,
            "trial {trial}: {} calls > max {max}",
            r.provider_calls
        );
        ensure!(
            mock.call_count() == r.provider_calls,
            "trial {trial}: mock saw {} calls",
            mock.call_count()
        );
        let first_plain = turns.iter().position(|t| t.tool_calls.is_empty());
        let all_called = first_plain.is_none_or(|p| p >= max);
        ensure!(
            (r.status == RunStatus::MaxIterationsReached) == all_called,
            "trial {trial}: status {:?} with first tool-free turn {first_plain:?}, max {max}",
            r.status
        );
        ensure!(
            r.provider_calls == first_plain.map_or(max, |p| (p + 1).min(max)),
            "trial {trial}: {} provider calls",
            r.provider_calls
        );
        context_is_valid(agent.context()).map_err(|e| format!("trial {trial}: {e}"))?;
    }

    let always: Vec<ScriptedTurn> = (0..10).map(|_| echo_turn(&mut rng, 2, &mut serial)).collect();
    let (agent, _) = agent_with(MockProvider::new(always));
    let mut agent = agent.with_max_iterations(3).unwrap();
    let r = agent.run("loop forever").map_err(|e| e.to_string())?;
    ensure!(
        r.provider_calls == 3 && r.status == RunStatus::MaxIterationsReached,
        "always-calling script: {} calls, {:?}",
        r.provider_calls,
        r.status
    );
    context_is_valid(agent.context())?;

    rejected_calls_are_paired()?;
    interrupt_mid_batch()?;
    deterministic_persistence(seed)?;
    Ok("call-count law over 150 scripts, max=3 equality, rejection pairing, mid-batch interrupt, determinism".into())
}

fn rejected_calls_are_paired() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let shell = ShellSession::new(dir.path()).map_err(|e| e.to_string())?;
    let turns = vec![
        ScriptedTurn::calls(vec![
            ToolCall::new("call_rm", "run_command", obj(json!({"command": "rm -rf /"}))),
            ToolCall::new("call_ok", "run_command", obj(json!({"command": "echo ok"}))),
            ToolCall::new("call_ghost", "no_such_tool", Map::new()),
        ]),
        ScriptedTurn::text("done"),
    ];
    let mut agent = Agent::new(Arc::new(MockProvider::new(turns)))
        .with_tool(Box::new(RunCommand::new(shell)))
        .unwrap()
        .with_pre_hook(Box::new(DangerousCommandHook::new()));
    let r = agent.run("clean up").map_err(|e| e.to_string())?;
    ensure!(r.status == RunStatus::Completed, "status {:?}", r.status);
    let results: Vec<&Message> = agent
        .context()
        .messages()
        .iter()
        .filter(|m| m.role == ensemble::model::Role::ToolResult)
        .collect();
    ensure!(results.len() == 3, "{} results for 3 calls", results.len());
    let rm = results[0];
    ensure!(
        rm.tool_call_id.as_deref() == Some("call_rm"),
        "first result answers {:?}",
        rm.tool_call_id
    );
    ensure!(
        rm.meta.get(META_OUTCOME) == Some(&json!("rejected")),
        "rm -rf / was not rejected: {rm:?}"
    );
    ensure!(
        rm.meta["error"]["title"] == json!("Tool Call Rejected"),
        "rejection error {:?}",
        rm.meta.get("error")
    );
    ensure!(
        results[1].text.starts_with("ok\n"),
        "echo ok produced {:?}",
        results[1].text
    );
    ensure!(
        result_status(results[2]) == Some("failure"),
        "unknown tool did not fail"
    );
    context_is_valid(agent.context())
}

fn interrupt_mid_batch() -> Result<(), String> {
    let turns = vec![
        ScriptedTurn::calls(
            (1..=3)
                .map(|i| ToolCall::new(format!("call_{i}"), "step", obj(json!({"n": i}))))
                .collect(),
        ),
        ScriptedTurn::text("never reached"),
        ScriptedTurn::text("after resume"),
    ];
    let mock = Arc::new(MockProvider::new(turns));
    let mut agent = Agent::new(mock.clone());
    let flag = agent.interrupt_flag();
    let spec = ToolSpec::new("step", "One step.", vec![ParamSpec::required("n", ParamKind::Integer)]).unwrap();
    agent = agent
        .with_tool(Box::new(FunctionTool::new(spec, move |args, _| {
            if args["n"] == json!(2) {
                flag.set();
            }
            Ok(json!(format!("step {}", args["n"])))
        })))
        .unwrap();
    let r = agent.run("work").map_err(|e| e.to_string())?;
    ensure!(r.status == RunStatus::Interrupted, "status {:?}", r.status);
    ensure!(r.tool_executions == 2 && r.provider_calls == 1, "{r:?}");
    context_is_valid(agent.context())?;
    let last = agent.context().last().unwrap();
    ensure!(
        last.tool_call_id.as_deref() == Some("call_3") && last.meta.get(META_OUTCOME) == Some(&json!("interrupted")),
        "third call not closed as interrupted: {last:?}"
    );
    let encoded = encode_request(agent.context(), &[], mock.model(), false);
    ensure!(encoded.is_ok(), "interrupted context does not encode: {encoded:?}");
    let r2 = agent.run("resume").map_err(|e| e.to_string())?;
    ensure!(r2.status == RunStatus::Completed, "resume status {:?}", r2.status);
    context_is_valid(agent.context())
}

fn scripted_session(turns: Vec<ScriptedTurn>, streaming: bool, dir: &Path) -> Result<Vec<u8>, String> {
    let ws = Workspace::new(dir).map_err(|e| e.to_string())?;
    let mut agent = Agent::new(Arc::new(MockProvider::new(turns).with_pricing(mock_pricing())))
        .with_tool(echo_tool())
        .unwrap()
        .with_tool(Box::new(ReadFile::new(ws)))
        .unwrap()
        .with_system_prompt("You are terse.")
        .streaming(streaming);
    agent.run("first").map_err(|e| e.to_string())?;
    agent.run("second").map_err(|e| e.to_string())?;
    Ok(agent.context().to_json())
}

fn deterministic_persistence(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut serial = 0;
    let mut turns = vec![echo_turn(&mut rng, 3, &mut serial)];
    turns.push(ScriptedTurn::call(
        "call_read",
        "read_file",
        json!({"path": "notes.txt"}),
    ));
    turns.push(echo_turn(&mut rng, 0, &mut serial));
    turns.push(echo_turn(&mut rng, 1, &mut serial));
    turns.push(echo_turn(&mut rng, 0, &mut serial));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    fs::write(dir.path().join("notes.txt"), "alpha\nbeta\n").map_err(|e| e.to_string())?;
    for streaming in [false, true] {
        let a = scripted_session(turns.clone(), streaming, dir.path())?;
        let b = scripted_session(turns.clone(), streaming, dir.path())?;
        ensure!(
            mask_persisted(&a) == mask_persisted(&b),
            "two identical runs differ (streaming={streaming})"
        );
    }
    let blocking = scripted_session(turns.clone(), false, dir.path())?;
    let streamed = scripted_session(turns, true, dir.path())?;
    ensure!(
        mask_persisted(&blocking) == mask_persisted(&streamed),
        "streaming and blocking runs persist different contexts"
    );
    Ok(())
}

// ---------------------------------------------------------------- security

pub const FILE_NOT_READ_BLOCK: &str = "Error: File Not Read

Reason: You must read the file before editing it

Context: Path: example.txt

Use read_file to see the current content first, then copy the exact text you want to change into old_string";

pub const FILE_MODIFIED_BLOCK: &str = "Error: File Modified Since Read

Reason: The file has been modified since you last read it

Context: Path: example.txt

Last Read: 2024-04-08 14:27:12

Modified: 2024-04-08 15:35:23

Use read_file again to see the current content, then retry your edit with the updated content";

fn run_tool(tool: &mut dyn Tool, ctx: &mut Context, args: Value) -> ensemble::tooling::ToolOutcome {
    let mut cx = ToolContext::new(ctx, 0);
    execute_tool(tool, &obj(args), &mut cx)
}

pub fn security_layers() -> Outcome {
    let mut hook = DangerousCommandHook::new();
    let d = hook
        .before_call("run_command", &obj(json!({"command": "rm -rf /"})), &Context::new())
        .map_err(|e| e.to_string())?;
    ensure!(!d.approved, "rm -rf / approved by the pattern hook");
    let d = hook
        .before_call("run_command", &obj(json!({"command": "ls -la"})), &Context::new())
        .map_err(|e| e.to_string())?;
    ensure!(d.approved, "ls -la rejected: {}", d.message);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ws = Workspace::new(dir.path()).map_err(|e| e.to_string())?;
    let file = dir.path().join("example.txt");
    fs::write(&file, "colour = red\n").map_err(|e| e.to_string())?;
    let mut ctx = Context::new();
    let mut edit = EditFile::new(ws.clone());
    let edit_args = json!({"path": "example.txt", "old_string": "red", "new_string": "blue"});

    let out = run_tool(&mut edit, &mut ctx, edit_args.clone());
    ensure!(!out.is_success(), "edit without read succeeded");
    ensure!(
        out.content == FILE_NOT_READ_BLOCK,
        "File Not Read block differs:\n{}",
        out.content
    );
    ensure!(
        file_not_read("example.txt").render() == FILE_NOT_READ_BLOCK,
        "file_not_read render differs"
    );
    ensure!(
        fs::read_to_string(&file).unwrap() == "colour = red\n",
        "file changed by a refused edit"
    );

    let read_at = chrono::NaiveDate::from_ymd_opt(2024, 4, 8)
        .unwrap()
        .and_hms_opt(14, 27, 12)
        .unwrap()
        .and_utc();
    let modified_at = chrono::NaiveDate::from_ymd_opt(2024, 4, 8)
        .unwrap()
        .and_hms_opt(15, 35, 23)
        .unwrap()
        .and_utc();
    ensure!(
        file_modified_since_read("example.txt", read_at, modified_at).render() == FILE_MODIFIED_BLOCK,
        "File Modified Since Read block differs"
    );

    let mut read = ReadFile::new(ws.clone());
    let r = run_tool(&mut read, &mut ctx, json!({"path": "example.txt"}));
    ensure!(r.is_success(), "read failed: {}", r.content);
    fs::write(&file, "colour = green\n").map_err(|e| e.to_string())?;
    let record = ws
        .registry_entry(&ctx, &ws.resolve("example.txt").unwrap())
        .ok_or("no read record")?;
    let out = run_tool(&mut edit, &mut ctx, edit_args.clone());
    let modified: chrono::DateTime<chrono::Utc> = fs::metadata(&file).unwrap().modified().unwrap().into();
    let expected = format!(
        "Error: File Modified Since Read\n\nReason: The file has been modified since you last read it\n\nContext: Path: example.txt\n\nLast Read: {}\n\nModified: {}\n\nUse read_file again to see the current content, then retry your edit with the updated content",
        record.read_at.format("%Y-%m-%d %H:%M:%S"),
        modified.format("%Y-%m-%d %H:%M:%S")
    );
    ensure!(
        out.content == expected,
        "modified block differs:\n{}\n---\n{expected}",
        out.content
    );
    ensure!(
        fs::read_to_string(&file).unwrap() == "colour = green\n",
        "stale edit was applied"
    );

    run_tool(&mut read, &mut ctx, json!({"path": "example.txt"}));
    let out = run_tool(
        &mut edit,
        &mut ctx,
        json!({"path": "example.txt", "old_string": "green", "new_string": "blue"}),
    );
    ensure!(out.is_success(), "edit after re-read failed: {}", out.content);

    let budget = BudgetControlHook::new(10.0);
    ensure!(budget.check(0.0).approved, "budget rejected at 0");
    ensure!(budget.check(10.0).approved, "budget rejected at total == max");
    let over = budget.check(10.000001);
    ensure!(!over.approved && over.should_interrupt, "budget over max: {over:?}");
    budget_halts_agent()?;
    Ok("pattern hook, File Not Read, File Modified Since Read, strict budget".into())
}

fn budget_halts_agent() -> Result<(), String> {
    let turns = vec![
        ScriptedTurn::calls(vec![
            ToolCall::new("call_a", "echo", obj(json!({"text": "a"}))),
            ToolCall::new("call_b", "echo", obj(json!({"text": "b"}))),
        ])
        .with_usage(1_000_000, 0),
        ScriptedTurn::text("unreachable"),
    ];
    let pricing = PricingTable::new().with("mock", "*", 2.5, 0.0);
    let (agent, mock) = agent_with(MockProvider::new(turns).with_pricing(pricing));
    let mut agent = agent.with_pre_hook(Box::new(BudgetControlHook::new(2.0)));
    let r = agent.run("spend").map_err(|e| e.to_string())?;
    ensure!(
        r.status == RunStatus::Interrupted,
        "budget did not halt: {:?}",
        r.status
    );
    ensure!(r.tool_executions == 0 && mock.call_count() == 1, "{r:?}");
    let last = agent.context().last().unwrap();
    ensure!(
        last.meta.get(META_OUTCOME) == Some(&json!("interrupted")),
        "second call not closed"
    );
    context_is_valid(agent.context())
}

// ---------------------------------------------------------------- sandbox

pub const SECRET: &str = "SECRET-OUTSIDE-THE-WORKSPACE";

pub struct Layout {
    _tmp: tempfile::TempDir,
    pub base: PathBuf,
    pub root: PathBuf,
    pub outside: PathBuf,
}

pub fn sandbox_layout() -> std::io::Result<Layout> {
    use std::os::unix::fs::symlink;
    let tmp = tempfile::tempdir()?;
    let base = fs::canonicalize(tmp.path())?;
    let root = base.join("root");
    let outside = base.join("outside");
    fs::create_dir_all(root.join("sub/deep"))?;
    fs::create_dir_all(&outside)?;
    fs::write(outside.join("secret.txt"), SECRET)?;
    fs::write(base.join("secret.txt"), SECRET)?;
    fs::write(root.join("inside.txt"), "inside")?;
    fs::write(root.join("sub/deep/note.txt"), "note")?;
    symlink("../outside", root.join("link_out"))?;
    symlink(&outside, root.join("link_out_abs"))?;
    symlink("sub", root.join("link_in"))?;
    symlink("../..", root.join("sub/up"))?;
    symlink("..", root.join("sub/back"))?;
    symlink("loop_b", root.join("loop_a"))?;
    symlink("loop_a", root.join("loop_b"))?;
    symlink("chain2", root.join("chain1"))?;
    symlink("link_out", root.join("chain2"))?;
    symlink("does_not_exist", root.join("dangling"))?;
    symlink(outside.join("planted.txt"), root.join("dangling_out"))?;
    symlink(".", root.join("self"))?;
    symlink("../../outside/secret.txt", root.join("sub/file_link"))?;
    symlink("../inside.txt", root.join("sub/inside_link"))?;
    Ok(Layout {
        _tmp: tmp,
        base,
        root,
        outside,
    })
}

pub fn adversarial_path<R: Rng>(rng: &mut R, layout: &Layout) -> String {
    const PIECES: &[&str] = &[
        "..",
        "..",
        ".",
        "",
        "sub",
        "deep",
        "link_out",
        "link_out_abs",
        "link_in",
        "up",
        "back",
        "loop_a",
        "chain1",
        "dangling",
        "dangling_out",
        "self",
        "file_link",
        "inside_link",
        "secret.txt",
        "inside.txt",
        "note.txt",
        "new_dir",
        "outside",
        "root",
        "...",
        "a b",
        "%2e%2e",
        "~",
        "..\\..",
        "planted.txt",
    ];
    let mut s = match rng.gen_range(0..8) {
        0 => "/".to_string(),
        1 => format!("{}/", layout.root.display()),
        2 => format!("{}/", layout.outside.display()),
        3 => format!("{}/", layout.base.display()),
        4 => "./".to_string(),
        _ => String::new(),
    };
    let n = rng.gen_range(1..=8);
    for i in 0..n {
        if i > 0 {
            s.push_str(if rng.gen_bool(0.1) { "//" } else { "/" });
        }
        s.push_str(PIECES[rng.gen_range(0..PIECES.len())]);
    }
    if rng.gen_bool(0.1) {
        s.push('/');
    }
    s
}

/// Independent containment check: every prefix of `p` that exists on disk
/// must canonicalize inside `root`.
pub fn contained(p: &Path, root: &Path) -> Result<(), String> {
    ensure!(p.is_absolute(), "{} is relative", p.display());
    ensure!(
        !p.components()
            .any(|c| matches!(c, Component::ParentDir | Component::CurDir)),
        "{} is not normalized",
        p.display()
    );
    ensure!(p.starts_with(root), "{} is outside", p.display());
    let mut prefix = PathBuf::new();
    for c in p.components() {
        prefix.push(c);
        if fs::symlink_metadata(&prefix).is_ok() {
            let real = fs::canonicalize(&prefix).map_err(|e| format!("{}: {e}", prefix.display()))?;
            if prefix.starts_with(root) && prefix != *root {
                ensure!(
                    real.starts_with(root),
                    "{} really is {}",
                    prefix.display(),
                    real.display()
                );
            }
        }
    }
    Ok(())
}

pub fn snapshot(dir: &Path, skip: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.path() != skip)
        .filter_map(Result::ok)
        .map(|e| {
            let bytes = if e.file_type().is_file() {
                fs::read(e.path()).unwrap_or_default()
            } else {
                Vec::new()
            };
            (e.path().to_path_buf(), bytes)
        })
        .collect()
}

pub fn sandbox_fuzz(seed: u64, n: usize) -> Outcome {
    let layout = sandbox_layout().map_err(|e| e.to_string())?;
    let before = snapshot(&layout.base, &layout.root);
    let ws = Workspace::new(&layout.root).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ctx = Context::new();
    let mut read = ReadFile::new(ws.clone());
    let mut write = WriteFile::new(ws.clone());
    let (mut ok, mut refused) = (0, 0);
    for i in 0..n {
        let path = adversarial_path(&mut rng, &layout);
        match ws.resolve(&path) {
            Ok(p) => {
                ok += 1;
                contained(&p, &layout.root).map_err(|e| format!("path #{i} {path:?}: {e}"))?;
            }
            Err(_) => refused += 1,
        }
        let r = run_tool(&mut read, &mut ctx, json!({"path": path}));
        ensure!(!r.content.contains(SECRET), "path #{i} {path:?} read the secret");
        if i % 10 == 0 {
            run_tool(&mut write, &mut ctx, json!({"path": path, "content": "fuzz"}));
        }
    }
    let after = snapshot(&layout.base, &layout.root);
    ensure!(before == after, "files outside the workspace changed");
    Ok(format!(
        "{n} paths: {ok} resolved inside, {refused} refused, zero escapes"
    ))
}

// ---------------------------------------------------------------- shell

pub fn persistent_shell(seed: u64, sequences: usize) -> Outcome {
    fs::create_dir_all("/data/experiment1").map_err(|e| format!("cannot create /data/experiment1: {e}"))?;
    let ws = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut session = ShellSession::new(ws.path())
        .and_then(|s| s.allow_root("/data"))
        .map_err(|e| e.to_string())?;
    session.run("cd /data && ls", true).map_err(|e| e.to_string())?;
    let pwd = session.run("pwd", true).map_err(|e| e.to_string())?;
    ensure!(pwd.output == "/data\n", "pwd printed {:?}", pwd.output);
    session
        .run("export DATA_PATH=/data/experiment1", true)
        .map_err(|e| e.to_string())?;
    let echo = session.run("echo $DATA_PATH", true).map_err(|e| e.to_string())?;
    ensure!(echo.output == "/data/experiment1\n", "echo printed {:?}", echo.output);

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = fs::canonicalize(tmp.path()).map_err(|e| e.to_string())?;
    let root = base.join("ws");
    for d in ["a/b", "c/d", "e"] {
        fs::create_dir_all(root.join(d)).map_err(|e| e.to_string())?;
    }
    fs::create_dir_all(base.join("elsewhere")).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<String> = vec![
        "a".into(),
        "a/b".into(),
        "b".into(),
        "..".into(),
        "../..".into(),
        "c/d".into(),
        "d".into(),
        ".".into(),
        "nope".into(),
        "../e".into(),
        root.display().to_string(),
        root.join("c").display().to_string(),
        base.join("elsewhere").display().to_string(),
        "/".into(),
    ];
    let mut commands = 0;
    for s in 0..sequences {
        let mut real = ShellSession::new(&root).map_err(|e| e.to_string())?;
        let mut model = RefShell::new(&root);
        for _ in 0..rng.gen_range(3..10) {
            let cmd = if rng.gen_bool(0.6) {
                format!("cd {}", targets[rng.gen_range(0..targets.len())])
            } else {
                let name = ["ALPHA", "BETA", "GAMMA_1"][rng.gen_range(0..3)];
                let value: String = (0..rng.gen_range(1..8))
                    .map(|_| (b'a' + rng.gen_range(0..26)) as char)
                    .collect();
                format!("export {name}={value}")
            };
            real.run(&cmd, true).map_err(|e| format!("{cmd}: {e}"))?;
            model.apply(&cmd);
            commands += 1;
            ensure!(
                real.working_dir() == model.cwd,
                "sequence {s} after {cmd:?}: cwd {} vs reference {}",
                real.working_dir().display(),
                model.cwd.display()
            );
            ensure!(
                *real.env_overrides() == model.env,
                "sequence {s} after {cmd:?}: env {:?} vs reference {:?}",
                real.env_overrides(),
                model.env
            );
        }
    }
    Ok(format!(
        "both transcripts verbatim, {commands} commands match the reference interpreter"
    ))
}

// ---------------------------------------------------------------- cross dialect

pub fn cross_dialect(seed: u64, n: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut serial = 0;
    for case in 0..n {
        let a = DIALECTS[case % 2];
        let b = DIALECTS[(case + 1) % 2];
        let mut first: Vec<ScriptedTurn> = (0..rng.gen_range(0..4))
            .map(|_| {
                let k = rng.gen_range(1..=3);
                echo_turn(&mut rng, k, &mut serial)
            })
            .collect();
        first.push(echo_turn(&mut rng, 0, &mut serial));
        let mut agent = Agent::new(Arc::new(
            MockProvider::new(first).with_dialect(a).with_seed(case as u64),
        ))
        .with_tool(echo_tool())
        .unwrap()
        .streaming(rng.gen());
        if rng.gen_bool(0.5) {
            agent.set_system_prompt(Some(text(&mut rng, 10)));
        }
        let r = agent
            .run(&text(&mut rng, 10))
            .map_err(|e| format!("case {case} under {a:?}: {e}"))?;
        ensure!(
            r.status == RunStatus::Completed,
            "case {case}: first run {:?}",
            r.status
        );

        let mut second: Vec<ScriptedTurn> = (0..rng.gen_range(0..3))
            .map(|_| {
                let k = rng.gen_range(1..=3);
                echo_turn(&mut rng, k, &mut serial)
            })
            .collect();
        second.push(echo_turn(&mut rng, 0, &mut serial));
        let mock_b = Arc::new(MockProvider::new(second).with_dialect(b).with_seed(case as u64));
        let before = agent.context().clone();
        agent.set_provider(mock_b.clone());
        let r = agent
            .run(&text(&mut rng, 10))
            .map_err(|e| format!("case {case} under {b:?}: {e}"))?;
        ensure!(
            r.status == RunStatus::Completed,
            "case {case}: second run {:?}",
            r.status
        );
        let body = mock_b.requests()[0].to_string();
        for call in before.messages().iter().flat_map(|m| m.tool_calls.iter()) {
            ensure!(
                body.contains(&call.id),
                "case {case}: call {} missing from the {b:?} request",
                call.id
            );
        }
        for d in DIALECTS {
            let model = ModelRef::new("x", "y", "http://x.invalid/", "", d).unwrap();
            encode_request(agent.context(), &[], &model, false).map_err(|e| format!("case {case} {d:?}: {e}"))?;
        }
        context_is_valid(agent.context()).map_err(|e| format!("case {case}: {e}"))?;
    }
    Ok(format!(
        "{n} conversations continued across dialects, zero encode errors"
    ))
}

// ---------------------------------------------------------------- wire fixtures

pub fn fixture(rel: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/wire")
        .join(rel);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn fixture_json(rel: &str) -> Value {
    serde_json::from_str(&fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn weather_spec() -> ToolSpec {
    ToolSpec::new(
        "get_weather",
        "Get the current weather for a location.",
        vec![
            ParamSpec::required("location", ParamKind::String).describe("City and country, e.g. Paris, France"),
            ParamSpec::optional("unit", ParamKind::String, Some(json!("celsius"))).describe("celsius or fahrenheit"),
        ],
    )
    .unwrap()
}

pub struct Dialect {
    pub dir: &'static str,
    pub model: ModelRef,
    pub pricing: PricingTable,
    pub ids: [&'static str; 3],
    pub tools_text: &'static str,
    pub usage_tools: (u64, u64),
    pub usage_text: (u64, u64),
}

pub fn dialects() -> [Dialect; 2] {
    [
        Dialect {
            dir: "openai",
            model: ModelRef::parse("openai/gpt-4o-mini").unwrap(),
            pricing: PricingTable::new().with("openai", "gpt-4o-mini", 0.15, 0.6),
            ids: [
                "call_3Jd9pLwQ2vXk7TfR1sNb8HcY",
                "call_Vb6nEo2KzQ8mWx4LpT9rJs1A",
                "call_Hq1cYt7UaZ3fNe5GkD0wLm8P",
            ],
            tools_text: "",
            usage_tools: (112, 61),
            usage_text: (236, 38),
        },
        Dialect {
            dir: "anthropic",
            model: ModelRef::parse("anthropic/claude-3-5-haiku-20241022").unwrap(),
            pricing: PricingTable::new().with("anthropic", "claude-3-5-haiku-20241022", 0.8, 4.0),
            ids: [
                "toolu_01T1x1fJ34qAmUBnB6D2w9Xc",
                "toolu_01Hk5cZ7pW2qLr9sYb3NeD4m",
                "toolu_01Mv8tQa6Ry1Kf3GhJ5nXw2e",
            ],
            tools_text: "I'll check the current weather in all three cities.",
            usage_tools: (431, 148),
            usage_text: (642, 41),
        },
    ]
}

pub const FINAL_TEXT: &str = "Tokyo is the warmest at 27°C and clear. Paris is 18°C with light rain. The New York lookup timed out, so I can retry it if you like.";
const TIMEOUT_RESULT: &str = "Error: Upstream Timeout\n\nReason: The weather service did not answer within 10 seconds";

fn decode_blocking(d: &Dialect, name: &str) -> Result<Response, String> {
    let mut r = decode_response(&fixture_json(&format!("{}/{name}", d.dir)), d.model.dialect)
        .map_err(|e| format!("{}/{name}: {e}", d.dir))?;
    r.price(&d.model, &d.pricing);
    Ok(r)
}

fn decode_streamed(d: &Dialect, name: &str) -> Result<Response, String> {
    let text = fixture(&format!("{}/{name}", d.dir));
    let events = parse_stream(std::io::Cursor::new(text.into_bytes()), d.model.dialect)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("{}/{name}: {e}", d.dir))?;
    aggregate_stream(events, &d.pricing, &d.model).map_err(|e| format!("{}/{name}: {e}", d.dir))
}

fn expected_cost(d: &Dialect, usage: (u64, u64)) -> f64 {
    let p = d.pricing.get(&d.model.provider_id, &d.model.model_name).unwrap();
    usage.0 as f64 * p.input / 1e6 + usage.1 as f64 * p.output / 1e6
}

pub fn wire_dialect(d: &Dialect) -> Result<(), String> {
    let tools = [weather_spec()];
    let mut ctx = Context::new();
    ctx.add_message(Message::system("You are a concise weather assistant."))
        .unwrap();
    ctx.add_message(Message::user(
        "Compare the weather in Paris, Tokyo and New York right now.",
    ))
    .unwrap();

    let body = encode_request(&ctx, &tools, &d.model, true).map_err(|e| e.to_string())?;
    let golden = fixture_json(&format!("{}/request_first_stream.json", d.dir));
    ensure!(
        body == golden,
        "{}: first request\n{body:#}\n!= golden\n{golden:#}",
        d.dir
    );

    let blocking = decode_blocking(d, "response_tools.json")?;
    let locations = ["Paris, France", "Tokyo, Japan", "New York, USA"];
    ensure!(blocking.text() == d.tools_text, "{}: text {:?}", d.dir, blocking.text());
    ensure!(
        blocking.stop_reason == StopReason::ToolUse,
        "{}: stop {:?}",
        d.dir,
        blocking.stop_reason
    );
    ensure!(
        blocking.message.tool_calls.len() == 3,
        "{}: {} calls",
        d.dir,
        blocking.message.tool_calls.len()
    );
    for (i, call) in blocking.message.tool_calls.iter().enumerate() {
        ensure!(
            call.id == d.ids[i] && call.name == "get_weather",
            "{}: call {i} {call:?}",
            d.dir
        );
        ensure!(
            call.arguments["location"] == json!(locations[i]),
            "{}: call {i} args {:?}",
            d.dir,
            call.arguments
        );
    }
    ensure!(
        blocking.message.tool_calls[2].arguments.get("unit") == Some(&json!("fahrenheit")),
        "{}: third call lost its unit",
        d.dir
    );
    ensure!(
        (blocking.usage.input_tokens, blocking.usage.output_tokens) == d.usage_tools,
        "{}: usage {:?}",
        d.dir,
        blocking.usage
    );
    ensure!(
        (blocking.usage.cost - expected_cost(d, d.usage_tools)).abs() < 1e-12,
        "{}: cost {}",
        d.dir,
        blocking.usage.cost
    );
    let streamed = decode_streamed(d, "stream_tools.txt")?;
    ensure!(
        same_response(&blocking, &streamed),
        "{}: tool stream {streamed:?} != {blocking:?}",
        d.dir
    );

    ctx.add_message(blocking.message.clone()).unwrap();
    let results = ["18°C, light rain", "27°C, clear sky", TIMEOUT_RESULT];
    for (i, text) in results.iter().enumerate() {
        let mut m = Message::tool_result(d.ids[i], "get_weather", *text);
        m = m.with_meta("status", json!(if i == 2 { "failure" } else { "success" }));
        ctx.add_message(m).unwrap();
    }
    let body = encode_request(&ctx, &tools, &d.model, false).map_err(|e| e.to_string())?;
    let golden = fixture_json(&format!("{}/request_followup.json", d.dir));
    ensure!(
        body == golden,
        "{}: follow-up request\n{body:#}\n!= golden\n{golden:#}",
        d.dir
    );

    let final_blocking = decode_blocking(d, "response_text.json")?;
    ensure!(
        final_blocking.text() == FINAL_TEXT,
        "{}: final text {:?}",
        d.dir,
        final_blocking.text()
    );
    ensure!(
        final_blocking.stop_reason == StopReason::EndTurn,
        "{}: final stop",
        d.dir
    );
    ensure!(
        final_blocking.message.tool_calls.is_empty(),
        "{}: final turn has calls",
        d.dir
    );
    ensure!(
        (final_blocking.usage.input_tokens, final_blocking.usage.output_tokens) == d.usage_text,
        "{}: final usage {:?}",
        d.dir,
        final_blocking.usage
    );
    let final_streamed = decode_streamed(d, "stream_text.txt")?;
    ensure!(
        same_response(&final_blocking, &final_streamed),
        "{}: text stream differs",
        d.dir
    );

    let rendered = match d.model.dialect {
        WireDialect::OpenAiChat => ensemble::providers::openai::response_body(&blocking, &d.model.model_name),
        WireDialect::AnthropicMessages => ensemble::providers::anthropic::response_body(&blocking, &d.model.model_name),
    };
    let mut again = decode_response(&rendered, d.model.dialect).map_err(|e| e.to_string())?;
    again.price(&d.model, &d.pricing);
    ensure!(
        same_response(&blocking, &again),
        "{}: response body does not round trip",
        d.dir
    );
    Ok(())
}

pub fn wire_fixtures() -> Outcome {
    for d in dialects() {
        wire_dialect(&d)?;
    }
    Ok("2 dialects × (2 requests, 2 responses, 2 streams incl. 3 parallel calls)".into())
}

// ---------------------------------------------------------------- latex

pub fn paris_context() -> Context {
    let mut ctx = Context::new();
    let call = ToolCall::new("call_weather", "get_weather", obj(json!({"location": "Paris, France"})));
    for m in [
        Message::user("I just arrived in Paris, do I need my coat?"),
        Message::assistant_with_calls("", vec![call]),
        Message::tool_result("call_weather", "get_weather", "Temperature: 26°C, Clear Skies, Wind: 10 km/h")
            .with_meta("status", json!("success")),
        Message::assistant(
            "The current weather in Paris is 26°C with clear skies, and there's a light breeze at 10 km/h.\n\nYou probably won't need your coat!",
        ),
    ] {
        ctx.add_message(m).unwrap();
    }
    ctx
}

pub fn latex_paris() -> Outcome {
    let out = export_conversation(&paris_context(), None).map_err(|e| e.to_string())?;
    ensure!(environments_balanced(&out), "unbalanced export:\n{out}");
    ensure!(
        out.starts_with("\\begin{orchestralusermessage}\nI just arrived in Paris"),
        "export starts {out:?}"
    );
    ensure!(
        out.contains("\\begin{orchestraltoolmessage}{GetWeather( location = \"Paris, France\" )}"),
        "tool title missing:\n{out}"
    );
    for env in [
        "orchestralusermessage",
        "orchestralagentmessage",
        "orchestraltoolmessage",
    ] {
        ensure!(out.contains(&format!("\\begin{{{env}}}")), "{env} not used");
    }
    let preamble = latex::emit_preamble();
    for env in [
        latex::USER_ENV,
        latex::AGENT_ENV,
        latex::TOOL_ENV,
        latex::TOOL_ERROR_ENV,
    ] {
        ensure!(
            preamble.contains(&format!("{{{env}}}")),
            "preamble does not define {env}"
        );
    }
    ensure!(
        [
            latex::USER_ENV,
            latex::AGENT_ENV,
            latex::TOOL_ENV,
            latex::TOOL_ERROR_ENV
        ] == [
            "orchestralusermessage",
            "orchestralagentmessage",
            "orchestraltoolmessage",
            "orchestraltoolerrormessage"
        ],
        "environment names changed"
    );
    let mut failing = paris_context();
    failing.truncate(2);
    let err = file_not_read("example.txt");
    failing
        .add_message(
            Message::tool_result("call_weather", "get_weather", err.render())
                .with_meta("status", json!("failure"))
                .with_meta("error", serde_json::to_value(&err).unwrap()),
        )
        .unwrap();
    let out = export_conversation(&failing, None).map_err(|e| e.to_string())?;
    ensure!(
        out.contains("\\begin{orchestraltoolerrormessage}") && environments_balanced(&out),
        "error export:\n{out}"
    );
    let compiled = match latex_engine() {
        Some(engine) => {
            compile(&engine, &export_conversation(&paris_context(), None).unwrap())?;
            format!("compiled with {engine}")
        }
        None => "no LaTeX engine installed, compile smoke test skipped".into(),
    };
    Ok(format!("balanced, four environments; {compiled}"))
}

pub fn latex_engine() -> Option<String> {
    ["pdflatex", "lualatex", "xelatex"]
        .into_iter()
        .find(|e| {
            std::process::Command::new(e)
                .arg("--version")
                .output()
                .map(|o| o.status.success())
                .unwrap_or(false)
        })
        .map(str::to_string)
}

fn compile(engine: &str, body: &str) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    fs::write(dir.path().join("orchestral.tex"), latex::emit_preamble()).map_err(|e| e.to_string())?;
    let doc = format!(
        "\\documentclass{{article}}\n\\usepackage[utf8]{{inputenc}}\n\\usepackage{{textcomp}}\n\\input{{orchestral.tex}}\n\\begin{{document}}\n{body}\n\\end{{document}}\n"
    );
    fs::write(dir.path().join("doc.tex"), doc).map_err(|e| e.to_string())?;
    let out = std::process::Command::new(engine)
        .args(["-interaction=nonstopmode", "-halt-on-error", "doc.tex"])
        .current_dir(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "{engine} failed:\n{}",
        String::from_utf8_lossy(&out.stdout)
    );
    Ok(())
}
