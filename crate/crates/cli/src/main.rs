fn main() {
    std::process::exit(lobbench_cli::run_cli(std::env::args_os()));
}
