fn main() {
    std::process::exit(delay_consensus::cli::main_with_args(std::env::args_os()));
}
