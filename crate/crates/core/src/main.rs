fn main() {
    std::process::exit(trajbench::cli::main_with_args(std::env::args_os()));
}
