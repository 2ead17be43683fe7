fn main() {
    std::process::exit(cmeta_cli::run(std::env::args_os()));
}
