fn main() {
    std::process::exit(smd_cli::run_cli(std::env::args_os()));
}
