fn main() {
    std::process::exit(qc6::cli::main_with_args(std::env::args_os()));
}
