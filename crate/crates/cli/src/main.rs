use clap::Parser;

use sdgame_cli::{emit, run, RunConfig};

fn main() {
    let cfg = RunConfig::parse();
    let code = match run(&cfg).and_then(|outcome| emit(&outcome, &cfg).map(|_| outcome.exit)) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    };
    std::process::exit(code);
}
