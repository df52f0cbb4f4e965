fn main() {
    std::process::exit(rarts::cli::main_with_args(std::env::args_os()));
}
