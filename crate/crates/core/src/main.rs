fn main() {
    std::process::exit(glyphspot::cli::run(std::env::args_os()));
}
