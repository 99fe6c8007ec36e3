fn main() {
    std::process::exit(nnkit::cli::run(std::env::args_os()));
}
