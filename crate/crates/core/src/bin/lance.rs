fn main() {
    std::process::exit(lance_core::cli::run(std::env::args_os()));
}
