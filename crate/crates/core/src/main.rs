fn main() {
    std::process::exit(dimlift::cli::main_with_args(std::env::args_os()));
}
