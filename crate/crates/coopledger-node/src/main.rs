use clap::Parser;
use coopledger_node::cli::{self, Cli};
use coopledger_node::{NodeError, StoreError};

/// Exit codes: 0 success, 1 domain or usage error, 2 store corruption.
fn main() {
    let cli = Cli::parse();
    match cli::run(cli) {
        Ok(()) => {}
        Err(NodeError::Store(
            e @ (StoreError::CorruptChain { .. } | StoreError::CorruptAudit { .. }),
        )) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
