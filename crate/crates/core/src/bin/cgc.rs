fn main() {
    std::process::exit(colorguide::cli::run(std::env::args_os()));
}
