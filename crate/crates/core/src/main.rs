fn main() {
    std::process::exit(trace_core::cli::run_cli(std::env::args_os()));
}
