fn main() {
    std::process::exit(resatlas::cli::run_cli(std::env::args_os()));
}
