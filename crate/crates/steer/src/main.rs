use std::net::TcpListener;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use kinon_steer::{serve, SessionManager, PROTOCOL_VERSION};

/// Steering service for live kinon simulations.
#[derive(Debug, Parser)]
#[command(name = "kinon-steer", version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let listener = match TcpListener::bind(&args.listen) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot listen on {}: {e}", args.listen);
            return ExitCode::from(1);
        }
    };
    let addr = listener.local_addr().map(|a| a.to_string()).unwrap_or(args.listen);
    eprintln!("kinon-steer protocol v{PROTOCOL_VERSION} listening on {addr}");
    match serve(listener, Arc::new(SessionManager::new())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
