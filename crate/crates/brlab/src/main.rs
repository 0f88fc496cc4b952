//! `brlab` command-line entry point.

fn main() {
    std::process::exit(brlab::cli::main_with_args(std::env::args_os()));
}
