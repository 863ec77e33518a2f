fn main() {
    std::process::exit(kahler_radial::cli::run(std::env::args_os()));
}
