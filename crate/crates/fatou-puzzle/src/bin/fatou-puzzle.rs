fn main() {
    std::process::exit(fatou_puzzle::cli::run(std::env::args_os()));
}
