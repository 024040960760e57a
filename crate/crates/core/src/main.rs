fn main() {
    std::process::exit(queue_design::cli::main_with_args(std::env::args_os()));
}
