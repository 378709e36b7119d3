fn main() {
    std::process::exit(blockid::cli::run(std::env::args_os()));
}
