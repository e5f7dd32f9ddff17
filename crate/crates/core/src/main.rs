fn main() {
    std::process::exit(depthvox::cli::main_with_args(std::env::args_os()));
}
