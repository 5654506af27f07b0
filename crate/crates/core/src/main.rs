fn main() {
    std::process::exit(approxdiag::cli::run(std::env::args_os()));
}
