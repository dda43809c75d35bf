fn main() {
    std::process::exit(raceway_cli::run());
}
