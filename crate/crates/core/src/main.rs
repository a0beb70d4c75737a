fn main() {
    std::process::exit(pivotal::cli::main_with_args(std::env::args_os()));
}
