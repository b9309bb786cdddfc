fn main() {
    std::process::exit(isoflow::cli::run(std::env::args_os()));
}
