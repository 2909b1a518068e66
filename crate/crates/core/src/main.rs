fn main() {
    std::process::exit(exlab::cli::main_with_args(std::env::args_os()));
}
