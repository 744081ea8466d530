fn main() {
    std::process::exit(vrpl::cli::main_with_args(std::env::args_os()));
}
