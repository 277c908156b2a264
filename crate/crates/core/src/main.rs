fn main() {
    std::process::exit(hemojoint::cli::main_with_args(std::env::args_os()));
}
