mod args;
mod commands;
mod config;
mod error;
mod output;

use clap::Parser;

use crate::args::Cli;
use crate::error::{classify, EXIT_OK};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = cli.command.name();
    let code = match commands::run(cli.command) {
        Ok(files) => {
            let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            println!("{}", serde_json::json!({ "command": command, "outputs": files }));
            EXIT_OK
        }
        Err(e) => {
            let report = classify(&e);
            eprintln!("{}", serde_json::json!({ "error": report }));
            report.exit_code
        }
    };
    std::process::exit(code);
}
