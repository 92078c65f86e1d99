fn main() {
    std::process::exit(locpar::cli::main_with_args(std::env::args_os()));
}
