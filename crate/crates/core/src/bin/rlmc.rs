//! Command-line entry point; see [`rlmc::cli`].

fn main() {
    std::process::exit(rlmc::cli::main_with_args(std::env::args_os()));
}
