fn main() {
    std::process::exit(usnid::cli::run_cli(std::env::args_os()));
}
