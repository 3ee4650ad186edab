use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config_file;

#[derive(Parser)]
#[command(
    name = "dprf",
    about = "Differentiable point-based radiance fields: train, render, evaluate",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a static scene and write a checkpoint plus a metrics log.
    Train(commands::train::TrainArgs),
    /// Render one view from a checkpoint.
    Render(commands::render::RenderArgs),
    /// Evaluate a checkpoint against a dataset split.
    Eval(commands::eval::EvalArgs),
    /// Train a frame sequence with warm starts; one checkpoint per frame.
    Video(commands::video::VideoArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Render(args) => commands::render::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Video(args) => commands::video::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
