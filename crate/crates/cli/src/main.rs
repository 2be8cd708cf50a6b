fn main() {
    std::process::exit(excloud_cli::run(std::env::args().skip(1)));
}
