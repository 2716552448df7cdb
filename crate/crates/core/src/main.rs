fn main() {
    std::process::exit(ihdm::cli::run_from_args(std::env::args_os()));
}
