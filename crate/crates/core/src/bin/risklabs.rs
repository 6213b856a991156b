fn main() {
    std::process::exit(risklabs::cli::run(std::env::args_os()));
}
