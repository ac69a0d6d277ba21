mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use spatialemb_core::perf::alloc::CountingAlloc;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error class={} message={:?}", e.class(), e.to_string());
            ExitCode::from(e.exit_code())
        }
    }
}
