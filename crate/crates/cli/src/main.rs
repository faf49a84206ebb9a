fn main() {
    std::process::exit(octo_cli::run(std::env::args_os()));
}
