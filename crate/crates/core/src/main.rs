fn main() {
    std::process::exit(stochreg::cli::main_with_args(std::env::args_os()));
}
