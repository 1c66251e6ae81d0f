use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub const DEFAULT_BIND: &str = "127.0.0.1:8642";

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(
    name = "ensemble",
    version,
    about = "Tool-using LLM agent in the terminal or a local web UI"
)]
pub struct Cli {
    /// Model as provider/name, e.g. openai/gpt-4o-mini. Without it the
    /// cheapest priced model with a credential is chosen.
    #[arg(long, global = true, value_name = "PROVIDER/NAME")]
    pub model: Option<String>,

    /// Override the provider's API endpoint.
    #[arg(long, global = true, value_name = "URL")]
    pub base_url: Option<String>,

    /// Directory the file and shell tools are confined to.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub workspace: PathBuf,

    /// System prompt text, or a file containing it.
    #[arg(long, global = true, value_name = "FILE|STRING")]
    pub system_prompt: Option<String>,

    #[arg(long, global = true, value_name = "N", default_value_t = crate::agent::DEFAULT_MAX_ITERATIONS,
          value_parser = clap::value_parser!(usize))]
    pub max_iterations: usize,

    /// Stop the run once the conversation has cost more than this many dollars.
    #[arg(long, global = true, value_name = "USD")]
    pub max_cost: Option<f64>,

    /// Run every tool call without asking.
    #[arg(long, global = true)]
    pub approve_all: bool,

    /// Replay a transcript fixture instead of calling a real provider.
    #[arg(long, global = true, value_name = "FILE")]
    pub scripted: Option<PathBuf>,

    /// Write the conversation here on exit.
    #[arg(long, global = true, value_name = "PATH")]
    pub save: Option<PathBuf>,

    /// Start from a saved conversation.
    #[arg(long, global = true, value_name = "PATH")]
    pub load: Option<PathBuf>,

    /// Print replies only when complete.
    #[arg(long, global = true)]
    pub no_stream: bool,

    /// Pricing table JSON replacing the bundled one.
    #[arg(long, global = true, value_name = "FILE")]
    pub pricing: Option<PathBuf>,

    /// Extra directory the shell may `cd` into.
    #[arg(long = "allow-dir", global = true, value_name = "DIR")]
    pub allow_dirs: Vec<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Serve the web UI and its HTTP API.
    Serve {
        #[arg(long, default_value = DEFAULT_BIND)]
        bind: String,
        /// Directory with a built frontend to serve instead of the bundled page.
        #[arg(long, value_name = "DIR")]
        ui_dir: Option<PathBuf>,
        /// Seconds to wait for an approval before treating it as denied.
        #[arg(long, value_name = "SECS")]
        approval_timeout: Option<u64>,
    },
}
