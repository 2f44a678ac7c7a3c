//! `osched` — batch experiments for truthful online scheduling: generate
//! instances, run mechanisms and combiners, measure regret, and verify
//! truthfulness. Exit codes: 0 clean, 1 violations or runtime failure,
//! 2 usage errors.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "osched", version, about = "Truthful online scheduling testbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen(commands::GenArgs),
    /// Run a single mechanism over an instance and report its welfare.
    Run(commands::RunArgs),
    /// Run a combiner over seeded instances and write a regret CSV.
    Regret(commands::RegretArgs),
    /// Hunt for profitable misreports and order-respecting violations.
    Truthcheck(commands::TruthcheckArgs),
    /// Verify the lower-bound constructions' per-round values.
    LbVerify(commands::LbVerifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Run(args) => commands::run(args),
        Command::Regret(args) => commands::regret(args),
        Command::Truthcheck(args) => commands::truthcheck(args),
        Command::LbVerify(args) => commands::lb_verify(args),
    };
    match outcome {
        Ok(clean) => {
            if clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
