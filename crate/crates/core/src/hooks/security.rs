use std::fmt;
use std::sync::Arc;

use glob::Pattern;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{string_leaves, HookDecision, HookError, PreHook};
use crate::model::{Context, Message};
use crate::providers::Provider;

/// `(description, regex)` pairs blocked by default.
pub fn default_dangerous_patterns() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "rm -rf",
            r"\brm\s+(?:-\S+\s+)*-[a-zA-Z]*(?:[rR][a-zA-Z]*f|f[a-zA-Z]*[rR])",
        ),
        (
            "rm -rf",
            r"\brm\s+(?:-\S+\s+)*(?:--recursive\s+(?:-\S+\s+)*--force|--force\s+(?:-\S+\s+)*--recursive)\b",
        ),
        ("eval()", r"\beval\s*\("),
        ("exec()", r"\bexec\s*\("),
        ("mkfs", r"\bmkfs(?:\.\w+)?\b"),
        ("write to block device", r">\s*/dev/sd[a-z]"),
        ("fork bomb", r":\s*\(\s*\)\s*\{\s*:\s*\|\s*:\s*&\s*\}\s*;\s*:"),
    ]
}

fn compile(patterns: &[(&str, &str)]) -> Vec<(String, Regex)> {
    patterns
        .iter()
        .map(|(d, p)| (d.to_string(), Regex::new(p).expect("valid pattern")))
        .collect()
}

fn first_match<'a>(patterns: &'a [(String, Regex)], args: &Map<String, Value>) -> Option<&'a str> {
    let mut leaves = Vec::new();
    for v in args.values() {
        string_leaves(v, &mut leaves);
    }
    patterns
        .iter()
        .find(|(_, re)| leaves.iter().any(|s| re.is_match(s)))
        .map(|(d, _)| d.as_str())
}

/// Rejects calls of execution tools whose string arguments match a blocked
/// pattern.
pub struct DangerousCommandHook {
    patterns: Vec<(String, Regex)>,
    tools: Vec<String>,
}

impl DangerousCommandHook {
    pub fn new() -> Self {
        DangerousCommandHook {
            patterns: compile(&default_dangerous_patterns()),
            tools: vec!["run_command".into()],
        }
    }

    pub fn with_pattern(mut self, description: &str, regex: &str) -> Result<Self, regex::Error> {
        self.patterns.push((description.to_string(), Regex::new(regex)?));
        Ok(self)
    }

    /// Tool names the hook inspects.
    pub fn scoped_to(mut self, tools: &[&str]) -> Self {
        self.tools = tools.iter().map(|t| t.to_string()).collect();
        self
    }
}

impl Default for DangerousCommandHook {
    fn default() -> Self {
        Self::new()
    }
}

impl PreHook for DangerousCommandHook {
    fn name(&self) -> &str {
        "DangerousCommandHook"
    }

    fn before_call(
        &mut self,
        tool_name: &str,
        args: &Map<String, Value>,
        _: &Context,
    ) -> Result<HookDecision, HookError> {
        if !self.tools.iter().any(|t| t == tool_name) {
            return Ok(HookDecision::approve());
        }
        Ok(match first_match(&self.patterns, args) {
            Some(what) => HookDecision::reject(format!("Blocked dangerous command ({what})")),
            None => HookDecision::approve(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ApprovalTier {
    Safe,
    Approve,
    Unsafe,
}

impl fmt::Display for ApprovalTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApprovalTier::Safe => "SAFE",
            ApprovalTier::Approve => "APPROVE",
            ApprovalTier::Unsafe => "UNSAFE",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TierRule {
    pub tool: Pattern,
    /// Matched against every string argument; `None` matches any call.
    pub args: Option<Regex>,
    pub tier: ApprovalTier,
}

impl TierRule {
    pub fn new(tool_glob: &str, args_regex: Option<&str>, tier: ApprovalTier) -> Result<Self, HookError> {
        Ok(TierRule {
            tool: Pattern::new(tool_glob)?,
            args: args_regex.map(Regex::new).transpose()?,
            tier,
        })
    }

    fn matches(&self, tool_name: &str, leaves: &[String]) -> bool {
        self.tool.matches(tool_name)
            && self
                .args
                .as_ref()
                .is_none_or(|re| leaves.iter().any(|s| re.is_match(s)))
    }
}

/// Ordered classification rules; the first matching rule decides and
/// unmatched calls need approval.
#[derive(Debug, Clone)]
pub struct TierTable {
    rules: Vec<TierRule>,
}

impl TierTable {
    pub fn empty() -> Self {
        TierTable { rules: Vec::new() }
    }

    pub fn push(&mut self, rule: TierRule) {
        self.rules.push(rule);
    }

    /// Puts `rule` ahead of all existing rules.
    pub fn prepend(&mut self, rule: TierRule) {
        self.rules.insert(0, rule);
    }

    pub fn classify(&self, tool_name: &str, args: &Map<String, Value>) -> ApprovalTier {
        let mut leaves = Vec::new();
        for v in args.values() {
            string_leaves(v, &mut leaves);
        }
        self.rules
            .iter()
            .find(|r| r.matches(tool_name, &leaves))
            .map_or(ApprovalTier::Approve, |r| r.tier)
    }
}

impl Default for TierTable {
    fn default() -> Self {
        let mut t = TierTable::empty();
        for (_, re) in default_dangerous_patterns() {
            t.push(TierRule::new("*", Some(re), ApprovalTier::Unsafe).expect("valid rule"));
        }
        for tool in ["read_file", "list_directory", "file_search", "todo_read", "todo_write"] {
            t.push(TierRule::new(tool, None, ApprovalTier::Safe).expect("valid rule"));
        }
        for tool in ["edit_file", "write_file", "run_command"] {
            t.push(TierRule::new(tool, None, ApprovalTier::Approve).expect("valid rule"));
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalRequest {
    pub tool_name: String,
    pub arguments: Map<String, Value>,
    pub tier: ApprovalTier,
}

impl ApprovalRequest {
    pub fn rendered_args(&self) -> String {
        Value::Object(self.arguments.clone()).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalVerdict {
    pub allow: bool,
    #[serde(default)]
    pub note: Option<String>,
}

impl ApprovalVerdict {
    pub fn allow() -> Self {
        ApprovalVerdict {
            allow: true,
            note: None,
        }
    }

    pub fn deny() -> Self {
        ApprovalVerdict {
            allow: false,
            note: None,
        }
    }
}

/// Asks a human. `None` means no answer arrived (timeout or the responder
/// went away) and is treated as a denial.
pub trait ApprovalResponder: Send {
    fn decide(&mut self, request: &ApprovalRequest) -> Option<ApprovalVerdict>;
}

impl<F> ApprovalResponder for F
where
    F: FnMut(&ApprovalRequest) -> Option<ApprovalVerdict> + Send,
{
    fn decide(&mut self, request: &ApprovalRequest) -> Option<ApprovalVerdict> {
        self(request)
    }
}

pub struct UserApprovalHook {
    table: TierTable,
    responder: Box<dyn ApprovalResponder>,
}

impl UserApprovalHook {
    pub fn new(responder: Box<dyn ApprovalResponder>) -> Self {
        UserApprovalHook {
            table: TierTable::default(),
            responder,
        }
    }

    pub fn with_table(mut self, table: TierTable) -> Self {
        self.table = table;
        self
    }

    pub fn table(&self) -> &TierTable {
        &self.table
    }
}

impl PreHook for UserApprovalHook {
    fn name(&self) -> &str {
        "UserApprovalHook"
    }

    fn before_call(
        &mut self,
        tool_name: &str,
        args: &Map<String, Value>,
        _: &Context,
    ) -> Result<HookDecision, HookError> {
        let tier = self.table.classify(tool_name, args);
        match tier {
            ApprovalTier::Safe => Ok(HookDecision::approve()),
            ApprovalTier::Unsafe => Ok(HookDecision::reject(format!(
                "{tool_name} is classified UNSAFE and was not run"
            ))),
            ApprovalTier::Approve => {
                let request = ApprovalRequest {
                    tool_name: tool_name.to_string(),
                    arguments: args.clone(),
                    tier,
                };
                Ok(match self.responder.decide(&request) {
                    Some(v) if v.allow => HookDecision::approve(),
                    Some(v) => HookDecision::reject(match v.note {
                        Some(note) if !note.is_empty() => format!("The user denied this call: {note}"),
                        _ => "The user denied this call".to_string(),
                    }),
                    None => HookDecision::reject("No approval received for this call"),
                })
            }
        }
    }
}

const JUDGE_PROMPT: &str = "You review tool calls made by an autonomous assistant on a researcher's machine. \
Decide whether running the call could destroy data, leak secrets or damage the system.\n\
Answer with exactly one line: SAFE, or UNSAFE: <short reason>.";

/// Asks a separate model to judge each call. Anything other than a clear
/// `SAFE` verdict rejects.
pub struct SafeguardHook {
    provider: Arc<dyn Provider>,
    tools: Option<Vec<String>>,
}

impl SafeguardHook {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        SafeguardHook { provider, tools: None }
    }

    /// Restricts judging to these tools; others pass unexamined.
    pub fn scoped_to(mut self, tools: &[&str]) -> Self {
        self.tools = Some(tools.iter().map(|t| t.to_string()).collect());
        self
    }

    pub fn prompt(tool_name: &str, args: &Map<String, Value>) -> Context {
        let mut ctx = Context::new();
        ctx.add_message(Message::system(JUDGE_PROMPT)).expect("valid message");
        ctx.add_message(Message::user(format!(
            "Tool: {tool_name}\nArguments: {}",
            Value::Object(args.clone())
        )))
        .expect("valid message");
        ctx
    }
}

/// Parses the first non-empty line of a judge reply.
pub(crate) fn parse_verdict(reply: &str) -> HookDecision {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    if line == "SAFE" {
        return HookDecision::approve();
    }
    if let Some(reason) = line.strip_prefix("UNSAFE:") {
        let reason = reason.trim();
        return HookDecision::reject(if reason.is_empty() {
            "Safety review rejected this call".to_string()
        } else {
            format!("Safety review rejected this call: {reason}")
        });
    }
    HookDecision::reject(format!("Safety review gave no usable verdict: {line:?}"))
}

impl PreHook for SafeguardHook {
    fn name(&self) -> &str {
        "SafeguardHook"
    }

    fn before_call(
        &mut self,
        tool_name: &str,
        args: &Map<String, Value>,
        _: &Context,
    ) -> Result<HookDecision, HookError> {
        if self.tools.as_ref().is_some_and(|t| !t.iter().any(|n| n == tool_name)) {
            return Ok(HookDecision::approve());
        }
        let ctx = Self::prompt(tool_name, args);
        Ok(match self.provider.complete(&ctx, &[]) {
            Ok(r) => parse_verdict(r.text()),
            Err(e) => HookDecision::reject(format!("Safety review unavailable: {e}")),
        })
    }
}
