fn main() {
    std::process::exit(onsager_cli::run_from_args(std::env::args_os()));
}
