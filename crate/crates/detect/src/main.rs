fn main() {
    std::process::exit(gme_detect::cli::run(std::env::args_os()));
}
