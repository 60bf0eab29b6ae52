fn main() {
    std::process::exit(platycosm_cli::run(std::env::args_os()));
}
