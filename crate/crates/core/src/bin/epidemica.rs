fn main() {
    std::process::exit(epidemica::cli::main());
}
