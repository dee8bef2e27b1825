//! Command-line companion to the tracking core: binary file formats, run
//! configuration, and the subcommand implementations behind the `pcst`
//! binary (generate, train, track, eval, ablate, plot).
//!
//! The library exposes everything the binary does so tests can drive the
//! same code paths in-process; the binary itself is a thin exit-code shim.

pub mod cli;
pub mod commands;
pub mod config;
pub mod convert;
pub mod formats;
pub mod svg;

use clap::Parser as _;

use commands::CmdFailure;
use config::RunConfig;

/// Process exit code for configuration and usage errors.
pub const EXIT_USAGE: i32 = 2;
/// Process exit code for runtime failures.
pub const EXIT_RUNTIME: i32 = 1;

/// Parse arguments, run the chosen command, and map the outcome to an exit
/// code: 0 success, 1 runtime failure, 2 usage or configuration error.
pub fn run() -> i32 {
    // Log level comes from the PCST_LOG environment variable (off when unset).
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("PCST_LOG")).try_init();

    let parsed = match cli::Cli::try_parse() {
        Ok(p) => p,
        Err(e) => {
            // clap routes --help/--version through here too; its exit code
            // is 0 for those and 2 for genuine usage errors.
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(parsed) {
        Ok(()) => 0,
        Err(CmdFailure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            EXIT_USAGE
        }
        Err(CmdFailure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

/// Resolve the configuration and dispatch to the subcommand.
pub fn execute(parsed: cli::Cli) -> commands::CmdResult {
    let mut cfg = match &parsed.config {
        Some(path) => RunConfig::load(path).map_err(|e| CmdFailure::Config(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = parsed.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = parsed.threads {
        cfg.threads = threads;
    }
    if let Some(precision) = parsed.precision {
        cfg.precision = precision.into();
    }
    cfg.resolve();
    if cfg.threads == 0 {
        return Err(CmdFailure::config("threads must be at least 1"));
    }
    // First initialization wins; later calls (e.g. several commands in one
    // test process) keep the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();

    match &parsed.command {
        cli::Command::Generate(args) => commands::generate::run(&cfg, args),
        cli::Command::Train(args) => commands::train::run(&cfg, args),
        cli::Command::Track(args) => commands::track::run(&cfg, args),
        cli::Command::Eval(args) => commands::eval::run(&cfg, args),
        cli::Command::Ablate(args) => commands::ablate::run(&cfg, args),
        cli::Command::Plot(args) => commands::plot::run(&cfg, args),
    }
}
