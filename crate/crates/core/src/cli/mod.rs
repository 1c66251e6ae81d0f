//! Command-line front end: flag parsing, agent assembly and the REPL.

mod args;
mod repl;

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::Parser;

pub use args::{Cli, Command, DEFAULT_BIND};
pub use repl::{Repl, StdinApprover};

use crate::agent::Agent;
use crate::builtin::{standard_tools, ShellSession, Workspace};
use crate::hooks::{ApprovalResponder, BudgetControlHook, DangerousCommandHook, TruncateOutputHook, UserApprovalHook};
use crate::model::Context;
use crate::providers::{
    known_provider, route_cheapest, HttpProvider, MockProvider, ModelRef, PricingTable, Provider, Transcript,
};
use crate::server::{ServerOptions, UiServer};
use crate::tooling::ToolRegistry;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CliError(pub String);

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError(e.to_string())
}

/// Input and output shared between the REPL, the approval prompt and the
/// streaming printer.
#[derive(Clone)]
pub struct Console {
    input: Arc<Mutex<Box<dyn BufRead + Send>>>,
    output: Arc<Mutex<Box<dyn Write + Send>>>,
}

impl Console {
    pub fn new(input: impl BufRead + Send + 'static, output: impl Write + Send + 'static) -> Self {
        Console {
            input: Arc::new(Mutex::new(Box::new(input))),
            output: Arc::new(Mutex::new(Box::new(output))),
        }
    }

    pub fn stdio() -> Self {
        Self::new(io::BufReader::new(io::stdin()), io::stdout())
    }

    /// `None` at end of input.
    pub fn read_line(&self) -> Option<String> {
        let mut line = String::new();
        match self.input.lock().expect("console input").read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line.trim_end_matches(['\n', '\r']).to_string()),
        }
    }

    pub fn print(&self, text: &str) {
        let mut out = self.output.lock().expect("console output");
        let _ = out.write_all(text.as_bytes());
        let _ = out.flush();
    }

    pub fn println(&self, text: &str) {
        self.print(&format!("{text}\n"));
    }
}

/// A cloneable in-memory writer, handy for capturing REPL output.
#[derive(Clone, Default)]
pub struct SharedBuffer(pub Arc<Mutex<Vec<u8>>>);

impl SharedBuffer {
    pub fn contents(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().expect("buffer")).into_owned()
    }
}

impl Write for SharedBuffer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().expect("buffer").extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub fn load_pricing(cli: &Cli) -> Result<PricingTable, CliError> {
    match &cli.pricing {
        Some(p) => PricingTable::load(p).map_err(fail),
        None => Ok(PricingTable::bundled()),
    }
}

/// Every non-wildcard model in `pricing` whose provider is in the catalog.
pub fn default_candidates(pricing: &PricingTable) -> Vec<ModelRef> {
    pricing
        .models()
        .filter_map(|(provider, model)| {
            let k = known_provider(provider)?;
            ModelRef::new(provider, model, k.base_url, k.api_key_env, k.dialect).ok()
        })
        .collect()
}

/// `--scripted`, then `--model`, then the cheapest available model.
pub fn select_provider(cli: &Cli) -> Result<Arc<dyn Provider>, CliError> {
    let pricing = load_pricing(cli)?;
    if let Some(path) = &cli.scripted {
        let mut mock = MockProvider::from_transcript(Transcript::load(path).map_err(fail)?);
        if cli.pricing.is_some() {
            mock = mock.with_pricing(pricing);
        }
        return Ok(Arc::new(mock));
    }
    let mut model = match &cli.model {
        Some(spec) => ModelRef::parse(spec).map_err(fail)?,
        None => route_cheapest(&default_candidates(&pricing), &pricing, |var| {
            std::env::var(var).is_ok_and(|v| !v.is_empty())
        })
        .map_err(|e| CliError(format!("{e}; pass --model or set a provider API key")))?,
    };
    if let Some(url) = &cli.base_url {
        model = model.with_base_url(url).map_err(fail)?;
    }
    Ok(Arc::new(HttpProvider::new(model, pricing).map_err(fail)?))
}

fn system_prompt(spec: &str) -> Result<String, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| CliError(format!("{spec}: {e}")))
    } else {
        Ok(spec.to_string())
    }
}

/// Builds the agent described by the flags. `approver` is ignored under
/// `--approve-all`.
pub fn build_agent(
    cli: &Cli,
    provider: Arc<dyn Provider>,
    approver: Option<Box<dyn ApprovalResponder>>,
) -> Result<Agent, CliError> {
    let workspace =
        Workspace::new(&cli.workspace).map_err(|e| CliError(format!("{}: {e}", cli.workspace.display())))?;
    let mut shell = ShellSession::new(workspace.root()).map_err(fail)?;
    for dir in &cli.allow_dirs {
        shell = shell
            .allow_root(dir)
            .map_err(|e| CliError(format!("{}: {e}", dir.display())))?;
    }
    let tools = ToolRegistry::with_tools(standard_tools(&workspace, shell)).map_err(fail)?;
    let mut agent = Agent::new(provider)
        .with_tools(tools)
        .with_max_iterations(cli.max_iterations)
        .map_err(fail)?
        .streaming(!cli.no_stream)
        .with_pre_hook(Box::new(DangerousCommandHook::new()));
    if let Some(max) = cli.max_cost {
        agent = agent.with_pre_hook(Box::new(BudgetControlHook::new(max)));
    }
    if !cli.approve_all {
        if let Some(responder) = approver {
            agent = agent.with_pre_hook(Box::new(UserApprovalHook::new(responder)));
        }
    }
    agent = agent.with_post_hook(Box::new(TruncateOutputHook::default()));
    if let Some(p) = &cli.system_prompt {
        agent = agent.with_system_prompt(system_prompt(p)?);
    }
    if let Some(path) = &cli.load {
        agent = agent.with_context(Context::load(path).map_err(|e| CliError(format!("{}: {e}", path.display())))?);
    }
    Ok(agent)
}

fn save_on_exit(path: Option<&PathBuf>, context: &Context, console: &Console) -> i32 {
    match path {
        Some(p) => match context.save(p) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                console.println(&format!("error: cannot save {}: {e}", p.display()));
                EXIT_FAILURE
            }
        },
        None => EXIT_OK,
    }
}

/// Runs the program for `argv` with the given console; returns the exit code.
pub fn run(argv: impl IntoIterator<Item = String>, console: Console) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match start(&cli, console.clone()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn start(cli: &Cli, console: Console) -> Result<i32, CliError> {
    let provider = select_provider(cli)?;
    match &cli.command {
        None => {
            let approver = Box::new(StdinApprover::new(console.clone()));
            let agent = build_agent(cli, provider, Some(approver))?;
            let mut repl = Repl::new(agent, console.clone());
            repl.run();
            Ok(save_on_exit(cli.save.as_ref(), repl.agent().context(), &console))
        }
        Some(Command::Serve {
            bind,
            ui_dir,
            approval_timeout,
        }) => {
            let agent = build_agent(cli, provider, None)?;
            let options = ServerOptions {
                approvals: !cli.approve_all,
                approval_timeout: approval_timeout.map(Duration::from_secs),
                ui_dir: ui_dir.clone(),
            };
            let server =
                UiServer::start(agent, bind, options).map_err(|e| CliError(format!("cannot bind {bind}: {e}")))?;
            console.println(&format!("Serving on http://{}", server.addr()));
            server.wait();
            Ok(EXIT_OK)
        }
    }
}
