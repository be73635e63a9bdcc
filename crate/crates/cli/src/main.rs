fn main() {
    std::process::exit(qeme_cli::run(std::env::args_os()));
}
