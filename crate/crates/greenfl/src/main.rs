use std::io::Write;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use greenfl::cli::{resolve_model, run, Cli, Command};
use greenfl::server::{serve, AppState};
use greenfl::{exit_code, EXIT_OK};

fn serve_cmd(cli: &Cli) -> Result<()> {
    let Command::Serve(args) = &cli.command else { unreachable!() };
    let model = match resolve_model(args.model.model.as_deref(), None, &cli.data_dir) {
        Ok(m) => Some(m),
        Err(e) if args.model.model.is_some() => return Err(e),
        Err(e) => {
            log::warn!("no default reducer model ({e}); scenarios must name their own");
            None
        }
    };
    let state = AppState::open(&cli.data_dir, model, args.workers)?;
    tokio::runtime::Runtime::new()?.block_on(serve(&args.addr, state))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(_) => serve_cmd(&cli).map(|_| String::new()),
        _ => run(&cli),
    };
    match result {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(3);
            }
            ExitCode::from(EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
