fn main() {
    std::process::exit(dtic_core::cli::run());
}
