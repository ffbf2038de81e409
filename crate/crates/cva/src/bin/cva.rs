fn main() {
    std::process::exit(cva::cli::run());
}
