fn main() {
    std::process::exit(gpme::cli::main());
}
