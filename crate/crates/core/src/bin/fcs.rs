fn main() {
    std::process::exit(fcs_core::cli::main_with_args(std::env::args_os()));
}
