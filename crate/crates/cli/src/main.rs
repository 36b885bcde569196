fn main() {
    std::process::exit(recyclegym_cli::run_cli(std::env::args_os()));
}
