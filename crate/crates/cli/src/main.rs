fn main() {
    std::process::exit(irisforge_cli::run(std::env::args_os()));
}
