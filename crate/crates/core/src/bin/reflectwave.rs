fn main() {
    std::process::exit(reflectwave::cli::main());
}
