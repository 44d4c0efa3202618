fn main() {
    std::process::exit(adrrec::cli::run(std::env::args_os()));
}
