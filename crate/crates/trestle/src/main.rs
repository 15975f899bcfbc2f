fn main() {
    std::process::exit(trestle::cli::run());
}
