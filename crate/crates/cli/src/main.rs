//! Command-line surface for the causal fairness toolkit: scenario simulation,
//! oracle queries, decomposition, estimation, the fairness cookbook, fair
//! fitting, sequential-transport pre-processing, predictor audits, the
//! compliance experiment, and temporal tracking.

mod commands;

use clap::Parser;

use causalfair::Error;
use commands::Cli;

fn main() {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_)
                | Error::ModelSpec(_)
                | Error::Data(_)
                | Error::Projection(_) => 2,
                _ => 3,
            };
            std::process::exit(code);
        }
    }
}
