fn main() {
    std::process::exit(glmdebias::cli::main());
}
