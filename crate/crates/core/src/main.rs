fn main() {
    std::process::exit(bifbm::cli::main());
}
