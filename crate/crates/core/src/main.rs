fn main() {
    std::process::exit(curvesmith::cli::main());
}
