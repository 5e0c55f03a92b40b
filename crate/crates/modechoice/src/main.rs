fn main() {
    std::process::exit(modechoice::cli::main());
}
