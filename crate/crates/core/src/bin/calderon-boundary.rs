fn main() {
    std::process::exit(calderon_boundary::cli::run(std::env::args_os()));
}
