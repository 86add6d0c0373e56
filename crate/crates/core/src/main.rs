fn main() {
    std::process::exit(polyfit::cli::run(std::env::args_os()));
}
