fn main() {
    std::process::exit(jsdmp::cli::run());
}
