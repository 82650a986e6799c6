fn main() {
    std::process::exit(quasr::cli::run(std::env::args_os()));
}
