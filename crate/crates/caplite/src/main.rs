fn main() {
    std::process::exit(caplite::harness::cli::run());
}
