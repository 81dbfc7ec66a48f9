fn main() {
    std::process::exit(ambidoa::cli::run(std::env::args_os()));
}
