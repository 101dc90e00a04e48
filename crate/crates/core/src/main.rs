fn main() {
    std::process::exit(kernbound::cli::main());
}
