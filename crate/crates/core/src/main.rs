fn main() {
    std::process::exit(flatport::cli::run(std::env::args_os()));
}
