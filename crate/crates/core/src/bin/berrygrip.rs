fn main() {
    std::process::exit(berrygrip::harness::cli::main_with_args(std::env::args_os()));
}
