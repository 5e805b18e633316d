fn main() {
    std::process::exit(swis::cli::main());
}
