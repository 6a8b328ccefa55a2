fn main() {
    std::process::exit(noiselock::cli::main_with_args(std::env::args_os()));
}
