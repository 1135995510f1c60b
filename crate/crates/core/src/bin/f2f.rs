fn main() {
    std::process::exit(f2f::cli::main());
}
