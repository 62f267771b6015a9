fn main() {
    std::process::exit(gapdecomp::cli::main_with_args(std::env::args_os()));
}
