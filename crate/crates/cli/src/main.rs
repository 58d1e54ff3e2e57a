fn main() {
    std::process::exit(causal_match_cli::main_with_args(std::env::args_os()));
}
