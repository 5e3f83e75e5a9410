fn main() {
    std::process::exit(speckle_cli::run(std::env::args_os()));
}
