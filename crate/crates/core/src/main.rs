fn main() {
    std::process::exit(aniflow::cli::main_with_args(std::env::args_os()));
}
