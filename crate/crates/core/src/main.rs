fn main() {
    std::process::exit(cmalab::cli::main_with(std::env::args_os()));
}
