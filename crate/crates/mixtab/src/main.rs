fn main() {
    std::process::exit(mixtab::cli::run(std::env::args().skip(1)));
}
